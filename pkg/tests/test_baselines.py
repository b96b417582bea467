import numpy as np
import pytest

import jointdiff.baselines as bl
from jointdiff.baselines import (
    conditional_generate,
    gibbs_sample,
    gradient_guided_sample,
    projection_guided_sample,
    sequential_sample,
)
from jointdiff.donut import DonutSpec, donut_prior
from jointdiff.gmm import CleanEstimateConfig, reverse_chain
from jointdiff.potentials import InteractionPotential, PotentialEvaluationError, uniform_box_prior
from jointdiff.sampler import JM2DConfig, SamplerTrace, jm2d_sample
from jointdiff.schedules import StochasticityPolicy, make_schedule


def _shape(k, x):
    return np.broadcast_shapes(np.shape(k)[:-1], np.shape(x)[:-1])


def _const_g_potential(gval):
    return InteractionPotential(
        objective=lambda k, x: np.zeros(_shape(k, x)),
        constraint=lambda k, x: np.broadcast_to(gval, _shape(k, x)),
    )


def _separable_potential():
    # both factors bounded so no candidate weight can underflow to zero
    def jx(x):
        return 0.25 * np.sum(np.asarray(x) ** 2, axis=-1)

    def jk(k):
        return 1.0 - np.exp(-0.5 * np.sum(np.asarray(k) ** 2, axis=-1))

    pot = InteractionPotential(
        objective=lambda k, x: jx(x) + jk(k),
        constraint=lambda k, x: -np.ones(_shape(k, x)),
    )
    return pot, jx, jk


def _cfg(steps=12, n_x=8, n_k=8, eta=1.0):
    return JM2DConfig(
        schedule_x=make_schedule("cosine", steps),
        schedule_k=make_schedule("linear", steps),
        n_x=n_x,
        n_k=n_k,
        clean=CleanEstimateConfig("full"),
        sigma=StochasticityPolicy(eta),
    )


def test_sequential_feasibility_flags():
    model = donut_prior(DonutSpec())
    prior = uniform_box_prior([-1.0, -1.0], [1.0, 1.0])
    cfg = _cfg(steps=6, n_x=4)
    for seed in range(4):
        rng = np.random.default_rng(seed)
        assert sequential_sample(model, _const_g_potential(-1.0), prior,
                                 cfg, rng).feasible
    for seed in range(4):
        rng = np.random.default_rng(seed)
        assert not sequential_sample(model, _const_g_potential(1.0), prior,
                                     cfg, rng).feasible


def test_gibbs_is_sequential_plus_refresh(monkeypatch):
    """rounds = 1 unrolls to one k-draw and one x-refresh after the prior chain."""
    calls = {"k": 0, "x": 0}
    real_k = bl._sample_k_given_x
    real_cg = bl.conditional_generate

    def spy_k(*a, **kw):
        calls["k"] += 1
        return real_k(*a, **kw)

    def spy_cg(*a, **kw):
        calls["x"] += 1
        return real_cg(*a, **kw)

    monkeypatch.setattr(bl, "_sample_k_given_x", spy_k)
    monkeypatch.setattr(bl, "conditional_generate", spy_cg)
    model = donut_prior(DonutSpec())
    prior = uniform_box_prior([-2.0, -2.0], [2.0, 2.0])
    pot, _, _ = _separable_potential()
    res = gibbs_sample(model, pot, prior, _cfg(steps=6, n_x=4), 1,
                       np.random.default_rng(0))
    assert calls == {"k": 1, "x": 1}
    assert res.iterations == 1
    with pytest.raises(ValueError):
        gibbs_sample(model, pot, prior, _cfg(steps=6), 0,
                     np.random.default_rng(0))


def test_gibbs_separable_is_stationary_after_round_one():
    """With separable V the conditionals decouple, so extra rounds leave the
    output distribution unchanged: permutation energy test on (x, k)."""
    model = donut_prior(DonutSpec())
    prior = uniform_box_prior([-2.0, -2.0], [2.0, 2.0])
    pot, _, _ = _separable_potential()
    cfg = _cfg(steps=10, n_x=8)
    n = 96
    one = np.array([np.concatenate(
        (lambda r: (r.x, r.k))(gibbs_sample(model, pot, prior, cfg, 1,
                                            np.random.default_rng(i))))
        for i in range(n)])
    three = np.array([np.concatenate(
        (lambda r: (r.x, r.k))(gibbs_sample(model, pot, prior, cfg, 3,
                                            np.random.default_rng(10_000 + i))))
        for i in range(n)])

    def cross(u, v):
        return np.mean(np.linalg.norm(u[:, None, :] - v[None, :, :], axis=-1))

    def energy(a, b):
        return 2.0 * cross(a, b) - cross(a, a) - cross(b, b)

    observed = energy(one, three)
    pooled = np.vstack([one, three])
    rng = np.random.default_rng(99)
    null = []
    for _ in range(59):
        perm = rng.permutation(2 * n)
        null.append(energy(pooled[perm[:n]], pooled[perm[n:]]))
    assert observed < np.quantile(null, 0.95)


def test_conditional_generate_uniform_matches_flat_joint():
    """Uniform weights reduce conditional generation to the prior chain,
    and the flat-potential joint sampler to the same x stream."""
    model = donut_prior(DonutSpec())
    prior = uniform_box_prior([-1e4, -1e4], [1e4, 1e4])
    cfg = _cfg(steps=12, n_x=8, n_k=4)
    tr_joint = SamplerTrace()
    x_joint, _, _ = jm2d_sample(model, _const_g_potential(-1.0), prior, cfg,
                                np.random.default_rng(5), trace=tr_joint)
    tr_cond = SamplerTrace()
    x_cond = conditional_generate(model, lambda X: np.ones(X.shape[0]), cfg,
                                  np.random.default_rng(5), trace=tr_cond)
    for sj, sc in zip(tr_joint.scores_x, tr_cond.scores_x):
        assert np.allclose(sj, sc, atol=1e-9)
    assert np.allclose(x_joint, x_cond, atol=1e-9)


def test_conditional_generate_zero_weights_follow_prior():
    model = donut_prior(DonutSpec())
    cfg = _cfg(steps=8, n_x=6)
    x_zero = conditional_generate(model, lambda X: np.zeros(X.shape[0]), cfg,
                                  np.random.default_rng(3))
    x_unif = conditional_generate(model, lambda X: np.ones(X.shape[0]), cfg,
                                  np.random.default_rng(3))
    assert np.allclose(x_zero, x_unif, atol=1e-9)


def test_projection_half_plane_example():
    def project(x):
        out = np.array(x, dtype=float)
        out[0] = min(out[0], 0.0)
        return out

    assert np.allclose(project(np.array([1.0, 2.0])), [0.0, 2.0])
    model = donut_prior(DonutSpec())
    out = projection_guided_sample(model, project, _cfg(steps=10, n_x=2),
                                   np.random.default_rng(0))
    assert out[0] <= 0.0


def test_projection_applied_after_final_step():
    target = np.array([9.0, 9.0])

    def project(x):
        return target.copy()

    model = donut_prior(DonutSpec())
    out = projection_guided_sample(model, project, _cfg(steps=5, n_x=2),
                                   np.random.default_rng(1))
    assert np.array_equal(out, target)


def test_gradient_zero_weight_matches_unconditioned_chain():
    model = donut_prior(DonutSpec())
    cfg = _cfg(steps=10, n_x=2)

    def cost(x):
        return float(np.sum(x * x)), 2.0 * x

    out = gradient_guided_sample(model, cost, 0.0, cfg,
                                 np.random.default_rng(11))
    rng_x = np.random.default_rng(11).spawn(2)[0]
    start = rng_x.standard_normal(model.dim)
    ref = reverse_chain(model, cfg.schedule_x, cfg.steps, start, cfg.sigma,
                        rng_x)
    assert np.array_equal(out, ref)


def test_gradient_guidance_pulls_toward_target():
    model = donut_prior(DonutSpec())
    cfg = _cfg(steps=15, n_x=2, eta=0.0)
    target = np.array([2.0, 0.0])

    def cost(x):
        diff = x - target
        return float(np.sum(diff * diff)), 2.0 * diff

    base = np.array([gradient_guided_sample(model, cost, 0.0, cfg,
                                            np.random.default_rng(i))
                     for i in range(32)])
    pulled = np.array([gradient_guided_sample(model, cost, 2.0, cfg,
                                              np.random.default_rng(i))
                       for i in range(32)])
    d_base = np.linalg.norm(base - target, axis=1).mean()
    d_pulled = np.linalg.norm(pulled - target, axis=1).mean()
    assert d_pulled < d_base


def test_gradient_nonfinite_rejected():
    model = donut_prior(DonutSpec())

    def cost(x):
        return np.nan, np.full_like(x, np.nan)

    with pytest.raises(PotentialEvaluationError):
        gradient_guided_sample(model, cost, 0.5, _cfg(steps=4, n_x=2),
                               np.random.default_rng(0))
