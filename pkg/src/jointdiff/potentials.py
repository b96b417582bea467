"""Interaction potentials, model-based priors, and the postprocess optimizer.

A potential scores the compatibility of a generative sample x with a
model-based output k:

    V(x, k) = exp(-J(k | x) / lambda) * 1(g(k | x) <= 0)

J is the optimization objective, g the constraint (feasible iff <= 0), and
lambda a temperature. Both callables must broadcast over matching leading
batch dimensions of k and x; environments may additionally provide a
``product_eval`` fast path evaluating the full X-by-K product set.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np


class PotentialEvaluationError(RuntimeError):
    """Raised when J or g returns a non-finite value (environment bug)."""


@dataclass(frozen=True)
class InteractionPotential:
    """Objective J(k, x), constraint g(k, x), temperature lambda.

    objective/constraint take (k, x) with k shaped (..., dk) and x shaped
    (..., dx) under mutual broadcasting and return an array of the
    broadcast batch shape. ``product_eval(X, K) -> (J, g)``, when given,
    evaluates the (N, M) product set directly and is preferred by the
    samplers for efficiency; it must agree with the pointwise callables.
    """

    objective: Callable[[np.ndarray, np.ndarray], np.ndarray]
    constraint: Callable[[np.ndarray, np.ndarray], np.ndarray]
    temperature: float = 1.0
    product_eval: Optional[Callable[[np.ndarray, np.ndarray], tuple]] = None

    def __post_init__(self):
        if self.temperature <= 0.0:
            raise ValueError("temperature must be positive")


def _check_finite(name, value, x0, k0):
    if not np.all(np.isfinite(value)):
        raise PotentialEvaluationError(
            f"non-finite {name} at x = {np.asarray(x0)!r}, k = {np.asarray(k0)!r}"
        )


def evaluate_potential(pot: InteractionPotential, x0: np.ndarray, k0: np.ndarray) -> float:
    """V(x0, k0) = exp(-J / lambda) * 1(g <= 0) for a single pair."""
    x0 = np.asarray(x0, dtype=float)
    k0 = np.asarray(k0, dtype=float)
    jval = np.asarray(pot.objective(k0, x0), dtype=float)
    gval = np.asarray(pot.constraint(k0, x0), dtype=float)
    _check_finite("objective", jval, x0, k0)
    _check_finite("constraint", gval, x0, k0)
    if gval > 0.0:
        return 0.0
    return float(np.exp(-jval / pot.temperature))


def potential_matrix(pot: InteractionPotential, X: np.ndarray, K: np.ndarray):
    """Evaluate J, g, V over the product set of X rows and K rows.

    X: (N, dx), K: (M, dk). Returns (V, J, g), each (N, M).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if pot.product_eval is not None:
        jmat, gmat = pot.product_eval(X, K)
        jmat = np.asarray(jmat, dtype=float)
        gmat = np.asarray(gmat, dtype=float)
    else:
        xb = X[:, None, :]
        kb = K[None, :, :]
        jmat = np.asarray(pot.objective(kb, xb), dtype=float)
        gmat = np.asarray(pot.constraint(kb, xb), dtype=float)
    jmat = np.broadcast_to(jmat, (X.shape[0], K.shape[0]))
    gmat = np.broadcast_to(gmat, (X.shape[0], K.shape[0]))
    _check_finite("objective", jmat, "<batch>", "<batch>")
    _check_finite("constraint", gmat, "<batch>", "<batch>")
    feasible = gmat <= 0.0
    # evaluate exp only on the feasible entries; infeasible J may be huge
    # (e.g. objectives of far-out proposal draws) and would overflow
    vmat = np.where(feasible, np.exp(-np.where(feasible, jmat, 0.0)
                                     / pot.temperature), 0.0)
    return vmat, jmat, gmat


@dataclass(frozen=True)
class ModelBasedPrior:
    """Prior p(k) over the model-based variable.

    kind "uniform_box": constant density on [lower, upper], zero outside.
    kind "gaussian": independent N(mean, var) per dimension.
    """

    kind: str
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    mean: np.ndarray | None = None
    var: np.ndarray | None = None

    def __post_init__(self):
        if self.kind == "uniform_box":
            lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
            hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
            if lo.shape != hi.shape or np.any(lo >= hi):
                raise ValueError("uniform_box needs lower < upper per dimension")
            object.__setattr__(self, "lower", lo)
            object.__setattr__(self, "upper", hi)
        elif self.kind == "gaussian":
            mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
            var = np.atleast_1d(np.asarray(self.var, dtype=float))
            if mean.shape != var.shape or np.any(var <= 0.0):
                raise ValueError("gaussian prior needs positive variances")
            object.__setattr__(self, "mean", mean)
            object.__setattr__(self, "var", var)
        else:
            raise ValueError(f"unknown prior kind: {self.kind!r}")

    @property
    def dim(self) -> int:
        ref = self.lower if self.kind == "uniform_box" else self.mean
        return ref.shape[0]

    def density(self, k: np.ndarray) -> np.ndarray:
        """p(k); broadcasts over leading batch dimensions."""
        k = np.asarray(k, dtype=float)
        if self.kind == "uniform_box":
            vol = float(np.prod(self.upper - self.lower))
            inside = np.all((k >= self.lower) & (k <= self.upper), axis=-1)
            return np.where(inside, 1.0 / vol, 0.0)
        z2 = np.sum((k - self.mean) ** 2 / self.var, axis=-1)
        norm = np.prod(2.0 * np.pi * self.var) ** 0.5
        return np.exp(-0.5 * z2) / norm

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "uniform_box":
            return rng.uniform(self.lower, self.upper, size=(n, self.dim))
        return self.mean + np.sqrt(self.var) * rng.standard_normal((n, self.dim))


def uniform_box_prior(lower, upper) -> ModelBasedPrior:
    return ModelBasedPrior(kind="uniform_box", lower=lower, upper=upper)


def gaussian_prior(mean, var) -> ModelBasedPrior:
    return ModelBasedPrior(kind="gaussian", mean=mean, var=var)


def postprocess_optimize(
    pot: InteractionPotential,
    prior: ModelBasedPrior,
    x0: np.ndarray,
    rng: np.random.Generator,
    budget: int = 256,
):
    """Budgeted random search for k: argmin J over feasible prior draws.

    Returns (k, feasible). When no drawn candidate is feasible, the
    best-effort argmin of g is returned with feasible = False.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    x0 = np.asarray(x0, dtype=float)
    cands = prior.sample(budget, rng)
    vmat, jmat, gmat = potential_matrix(pot, x0[None, :], cands)
    jrow, grow = jmat[0], gmat[0]
    feasible_mask = grow <= 0.0
    if np.any(feasible_mask):
        jmasked = np.where(feasible_mask, jrow, np.inf)
        return cands[int(np.argmin(jmasked))], True
    return cands[int(np.argmin(grow))], False
