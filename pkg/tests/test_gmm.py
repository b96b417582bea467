import math

import numpy as np
import pytest

import jointdiff.gmm as gmm_mod
from jointdiff.donut import DonutSpec, chamfer_distance, donut_prior
from jointdiff.gmm import (
    CleanEstimateConfig,
    GaussianMixtureScoreModel,
    estimate_clean,
    fit_kde,
    gmm_noisy_logpdf,
    gmm_noisy_score,
    load_model,
    reverse_chain,
    save_model,
)
from jointdiff.schedules import StochasticityPolicy, forward_perturb, make_schedule, tweedie_score


def _three_component():
    return GaussianMixtureScoreModel(
        weights=np.array([0.2, 0.5, 0.3]),
        means=np.array([[1.0, -0.5], [-1.2, 0.3], [0.4, 1.8]]),
        variances=np.array([[0.3, 0.6], [0.5, 0.2], [0.4, 0.4]]),
    )


def _fd_score(model, x, alpha, eps=1e-5):
    """Central finite differences of the closed-form noisy log density."""
    out = np.zeros_like(x)
    for d in range(x.shape[0]):
        hi = x.copy(); hi[d] += eps
        lo = x.copy(); lo[d] -= eps
        out[d] = (gmm_noisy_logpdf(model, hi, alpha)
                  - gmm_noisy_logpdf(model, lo, alpha)) / (2 * eps)
    return out


def test_standard_normal_score():
    model = GaussianMixtureScoreModel(np.array([1.0]), np.zeros((1, 2)),
                                      np.ones((1, 2)))
    rng = np.random.default_rng(0)
    for alpha in (0.1, 0.5, 1.0):
        xi = rng.standard_normal(2)
        assert np.allclose(gmm_noisy_score(model, xi, alpha), -xi, atol=1e-12)


def test_symmetric_components_zero_at_origin():
    model = GaussianMixtureScoreModel(
        np.array([0.5, 0.5]), np.array([[1.5, 0.7], [-1.5, -0.7]]),
        np.full((2, 2), 0.4))
    assert np.allclose(gmm_noisy_score(model, np.zeros(2), 0.6), 0.0, atol=1e-12)


def test_score_matches_finite_differences():
    model = _three_component()
    rng = np.random.default_rng(1)
    for _ in range(10):
        xi = rng.standard_normal(2) * 2.0
        ref = _fd_score(model, xi, 0.5)
        got = gmm_noisy_score(model, xi, 0.5)
        assert np.allclose(got, ref, rtol=1e-5, atol=1e-7)


def test_score_density_consistency_property():
    # 100 random points, both evaluation paths (shared isotropic + general)
    rng = np.random.default_rng(2)
    iso = fit_kde(rng.standard_normal((6, 3)), bandwidth=0.7)
    aniso = _three_component()
    for model, dim in ((iso, 3), (aniso, 2)):
        for _ in range(50):
            xi = rng.standard_normal(dim) * 1.5
            alpha = rng.uniform(0.05, 0.95)
            ref = _fd_score(model, xi, alpha)
            got = gmm_noisy_score(model, xi, alpha)
            scale = max(np.linalg.norm(ref), 1.0)
            assert np.linalg.norm(got - ref) / scale < 1e-4


def test_fit_kde_construction():
    single = fit_kde(np.zeros((1, 2)), bandwidth=1.0)
    assert single.n_components == 1
    assert np.allclose(single.means, 0.0)
    assert np.allclose(single.variances, 1.0)

    two = fit_kde(np.array([[-1.0], [1.0]]), bandwidth=0.1)
    assert np.allclose(two.weights, 0.5)
    assert np.allclose(sorted(two.means.ravel()), [-1.0, 1.0])
    with pytest.raises(ValueError):
        fit_kde(np.zeros((0, 2)), 0.1)
    with pytest.raises(ValueError):
        fit_kde(np.zeros((3, 2)), 0.0)


def test_kde_ring_self_consistency():
    rng = np.random.default_rng(3)
    angles = rng.uniform(0, 2 * np.pi, 1000)
    ring = 2.0 * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    model = fit_kde(ring, bandwidth=0.05)
    draws = model.sample(1000, rng)
    assert chamfer_distance(draws, ring) < 0.1


def test_mixture_invariants():
    with pytest.raises(ValueError):
        GaussianMixtureScoreModel(np.array([0.7, 0.2]), np.zeros((2, 2)),
                                  np.ones((2, 2)))
    with pytest.raises(ValueError):
        GaussianMixtureScoreModel(np.array([0.5, 0.5]), np.zeros((2, 2)),
                                  np.array([[1.0, 0.0], [1.0, 1.0]]))


def test_reverse_chain_standard_normal_mean():
    model = GaussianMixtureScoreModel(np.array([1.0]), np.zeros((1, 2)),
                                      np.ones((1, 2)))
    sched = make_schedule("cosine", 64)
    rng = np.random.default_rng(4)
    start = rng.standard_normal((10_000, 2))
    out = reverse_chain(model, sched, sched.steps, start,
                        StochasticityPolicy(1.0), rng)
    assert np.all(np.abs(out.mean(axis=0)) < 0.05)


def test_reverse_chain_one_step_pulls_to_mode():
    model = _three_component()
    sched = make_schedule("cosine", 25)
    rng = np.random.default_rng(5)
    mode = model.means[1]
    xi = math.sqrt(sched.alphas[1]) * (mode + 0.05 * rng.standard_normal(2))
    out = reverse_chain(model, sched, 1, xi, StochasticityPolicy(0.0), rng)
    radius = 3.0 * math.sqrt(model.variances[1].max())
    assert np.linalg.norm(out - mode) < radius


def test_reverse_chain_single_level_count(monkeypatch):
    calls = {"n": 0}
    real = gmm_mod.reverse_step

    def counting(*args, **kwargs):
        calls["n"] += 1
        return real(*args, **kwargs)

    monkeypatch.setattr(gmm_mod, "reverse_step", counting)
    model = _three_component()
    sched = make_schedule("linear", 1)
    reverse_chain(model, sched, 1, np.zeros(2), StochasticityPolicy(0.0),
                  np.random.default_rng(0))
    assert calls["n"] == 1


def test_estimate_clean_modes():
    model = GaussianMixtureScoreModel(np.array([1.0]), np.zeros((1, 2)),
                                      np.ones((1, 2)))
    sched = make_schedule("linear", 4)  # alpha_bar_2 = 0.5
    rng = np.random.default_rng(6)
    xi = np.array([1.0, 0.0])

    noisy = estimate_clean(model, sched, 2, xi, CleanEstimateConfig("noisy"),
                           rng, n=3)
    assert np.array_equal(noisy, np.broadcast_to(xi, (3, 2)))

    # N(0, I) prior at alpha = 0.5: score = -x, estimate = x * sqrt(alpha)
    tw = estimate_clean(model, sched, 2, xi,
                        CleanEstimateConfig("tweedie_only"), rng, n=1)
    assert tw[0] == pytest.approx([math.sqrt(0.5), 0.0])

    full_rng = np.random.default_rng(42)
    chain_rng = np.random.default_rng(42)
    full = estimate_clean(model, sched, 3, xi, CleanEstimateConfig("full"),
                          full_rng, n=2)
    ref = reverse_chain(model, sched, 3, np.broadcast_to(xi, (2, 2)).copy(),
                        StochasticityPolicy(1.0), chain_rng)
    assert np.array_equal(full, ref)

    with pytest.raises(ValueError):
        CleanEstimateConfig("u_step", u=0)
    with pytest.raises(ValueError):
        CleanEstimateConfig("bogus")


def test_estimate_clean_u_step_caps_at_level():
    model = _three_component()
    sched = make_schedule("cosine", 10)
    rng = np.random.default_rng(7)
    xi = np.array([0.4, -0.2])
    # u larger than the level: runs exactly i steps and returns clean rows
    out = estimate_clean(model, sched, 2, xi, CleanEstimateConfig("u_step", u=9),
                         rng, n=4)
    assert out.shape == (4, 2)
    assert np.all(np.isfinite(out))


def test_marginal_preservation_identity():
    """Posterior-weighted average of kernel scores equals the mixture score.

    Importance sampling with prior draws: weights are the forward-kernel
    likelihoods, so the self-normalized average of tweedie_score(x0, xi)
    estimates the noisy-marginal score at xi.
    """
    model = _three_component()
    rng = np.random.default_rng(8)
    n = 4096
    for alpha in (0.3, 0.7):
        x0 = model.sample(1, rng)[0]
        xi = forward_perturb(x0, alpha, rng)
        draws = model.sample(n, rng)
        log_w = -np.sum((xi - math.sqrt(alpha) * draws) ** 2, axis=1) \
            / (2.0 * (1.0 - alpha))
        w = np.exp(log_w - log_w.max())
        w /= w.sum()
        scores = tweedie_score(draws, xi[None, :], alpha)
        est = w @ scores
        se = np.sqrt(w @ (scores - est) ** 2 * (w @ w))
        ref = gmm_noisy_score(model, xi, alpha)
        assert np.all(np.abs(est - ref) <= 3.0 * se + 1e-9)


def test_clean_estimate_ordering_on_donut():
    """Distance to the model support shrinks with better clean estimates.

    Checked in the mid-noise regime: at very high levels the Tweedie
    posterior mean collapses toward the mixture centroid (worse than the
    noisy sample itself), and at low levels it over-contracts below the
    spread of genuine draws; both ends are the degenerate behaviour the
    u-step ablation quantifies.
    """
    spec = DonutSpec()
    model = donut_prior(spec)
    sched = make_schedule("cosine", 25)
    level = 16
    dists = {}
    for mode, cfg in (
        ("noisy", CleanEstimateConfig("noisy")),
        ("tweedie_only", CleanEstimateConfig("tweedie_only")),
        ("u_step", CleanEstimateConfig("u_step", u=5)),
        ("full", CleanEstimateConfig("full")),
    ):
        batch = []
        mode_rng = np.random.default_rng(9)
        for _ in range(64):
            x0 = model.sample(1, mode_rng)[0]
            xi = forward_perturb(x0, sched.alphas[level], mode_rng)
            est = estimate_clean(model, sched, level, xi, cfg, mode_rng, n=1)[0]
            batch.append(np.min(np.linalg.norm(model.means - est, axis=1)))
        dists[mode] = float(np.mean(batch))
    assert dists["noisy"] >= dists["tweedie_only"] >= dists["u_step"] \
        >= dists["full"]


def test_save_load_roundtrip(tmp_path):
    model = _three_component()
    path = tmp_path / "model.txt"
    save_model(model, path)
    back = load_model(path)
    assert np.array_equal(back.weights, model.weights)
    assert np.array_equal(back.means, model.means)
    assert np.array_equal(back.variances, model.variances)
