"""Noise schedules and the elementary diffusion steps.

Conventions used throughout the package:

- A schedule stores cumulative noise levels ``alpha_bar[0..I]`` with index 0
  the clean data (``alpha_bar[0] = 1``) and index I the noisiest level.
  Levels are strictly decreasing and floored at ``ALPHA_FLOOR`` so that
  ``1 / alpha_bar`` and ``1 / (1 - alpha_bar)`` stay finite.
- The forward kernel is ``x_i = sqrt(a) x_0 + sqrt(1 - a) z`` with
  ``a = alpha_bar[i]`` and ``z ~ N(0, I)``.
- The reverse update is the DDIM form parameterised by the score
  ``s = grad log p_i(x_i)``; stochasticity is controlled per step by
  ``sigma_i`` (0 = deterministic, DDPM-like for eta = 1).

All functions are pure given an explicit ``numpy.random.Generator``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

ALPHA_FLOOR = 1e-5

SCHEDULE_KINDS = ("cosine", "linear")


@dataclass(frozen=True)
class NoiseSchedule:
    """Cumulative noise levels for one diffusion channel.

    ``alphas`` has length ``steps + 1``; entry i is the cumulative level
    alpha_bar_i. Construction validates the invariants (alpha_bar_0 = 1,
    strict decrease, floor).
    """

    kind: str
    steps: int
    alphas: np.ndarray

    def __post_init__(self):
        alphas = np.asarray(self.alphas, dtype=float)
        object.__setattr__(self, "alphas", alphas)
        if self.steps < 1:
            raise ValueError("schedule needs at least one step")
        if alphas.shape != (self.steps + 1,):
            raise ValueError("alphas must have length steps + 1")
        if alphas[0] != 1.0:
            raise ValueError("alpha_bar_0 must be exactly 1")
        if np.any(np.diff(alphas) >= 0):
            raise ValueError("alpha_bar must be strictly decreasing")
        if alphas[-1] < ALPHA_FLOOR:
            raise ValueError(f"alpha_bar_I must stay >= {ALPHA_FLOOR}")

    def alpha(self, i: int) -> float:
        """Cumulative level alpha_bar_i."""
        return float(self.alphas[i])


def make_schedule(kind: str, steps: int) -> NoiseSchedule:
    """Build a noise schedule of the given kind.

    linear: alpha_bar_i = max(1 - i/I, floor)
    cosine: alpha_bar_i = cos^2((i/I) * pi/2), clipped to [floor, 1] and
    renormalised so alpha_bar_0 = 1.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    i = np.arange(steps + 1, dtype=float)
    if kind == "linear":
        alphas = np.maximum(1.0 - i / steps, ALPHA_FLOOR)
    elif kind == "cosine":
        alphas = np.cos((i / steps) * (math.pi / 2.0)) ** 2
        alphas = np.clip(alphas, ALPHA_FLOOR, 1.0)
        alphas = alphas / alphas[0]
    else:
        raise ValueError(f"unknown schedule kind: {kind!r}")
    alphas[0] = 1.0
    return NoiseSchedule(kind=kind, steps=steps, alphas=alphas)


@dataclass(frozen=True)
class StochasticityPolicy:
    """Per-step reverse noise scale.

    sigma_i = eta * sqrt((1 - a_{i-1}) / (1 - a_i)) * sqrt(1 - a_i / a_{i-1})

    eta = 0 gives the deterministic DDIM chain; eta = 1 the DDPM-like
    ancestral variance. The formula satisfies sigma_i^2 <= 1 - a_{i-1}
    for every step (so the reverse-step radicand stays non-negative), and
    sigma_1 = 0 because a_0 = 1.
    """

    eta: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")

    def sigma(self, schedule: NoiseSchedule, i: int) -> float:
        """Noise scale for the step from level i to i - 1 (i >= 1)."""
        if self.eta == 0.0:
            return 0.0
        a_i = schedule.alphas[i]
        a_prev = schedule.alphas[i - 1]
        return float(
            self.eta
            * math.sqrt((1.0 - a_prev) / (1.0 - a_i))
            * math.sqrt(1.0 - a_i / a_prev)
        )

    def sigmas(self, schedule: NoiseSchedule) -> np.ndarray:
        """All sigma_i for i = 1..I, indexed as result[i - 1]."""
        return np.array(
            [self.sigma(schedule, i) for i in range(1, schedule.steps + 1)]
        )


def forward_perturb(x0: np.ndarray, alpha: float, rng: np.random.Generator) -> np.ndarray:
    """Draw from the forward kernel N(sqrt(alpha) x0, (1 - alpha) I)."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    x0 = np.asarray(x0, dtype=float)
    if alpha == 1.0:
        return x0.copy()
    z = rng.standard_normal(x0.shape)
    return math.sqrt(alpha) * x0 + math.sqrt(1.0 - alpha) * z


def tweedie_score(x0: np.ndarray, xi: np.ndarray, alpha: float) -> np.ndarray:
    """Score of the forward kernel: -(xi - sqrt(alpha) x0) / (1 - alpha).

    Broadcasts over leading batch dimensions of ``x0`` and ``xi``.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("tweedie_score needs alpha in (0, 1); the clean "
                         "endpoint alpha = 1 is singular")
    x0 = np.asarray(x0, dtype=float)
    xi = np.asarray(xi, dtype=float)
    return -(xi - math.sqrt(alpha) * x0) / (1.0 - alpha)


def reverse_step(
    xi: np.ndarray,
    score: np.ndarray,
    alpha_i: float,
    alpha_prev: float,
    sigma: float = 0.0,
    rng: np.random.Generator | None = None,
    mbd_style: bool = False,
) -> np.ndarray:
    """One reverse denoising step from level i to i - 1.

    Standard form (used for the model-free channel):

        sqrt(a_prev) * (xi + (1 - a_i) s) / sqrt(a_i)
          - sqrt(1 - a_prev - sigma^2) * sqrt(1 - a_i) * s + sigma z

    With ``mbd_style=True`` the correction and noise terms are dropped
    (the model-based channel update):

        sqrt(a_prev / a_i) * (xi + (1 - a_i) s)
    """
    if not 0.0 < alpha_i < 1.0:
        raise ValueError("alpha_i must lie in (0, 1)")
    xi = np.asarray(xi, dtype=float)
    score = np.asarray(score, dtype=float)
    base = math.sqrt(alpha_prev / alpha_i) * (xi + (1.0 - alpha_i) * score)
    if mbd_style:
        return base
    radicand = 1.0 - alpha_prev - sigma * sigma
    if radicand < -1e-12:
        raise ValueError("invalid step: 1 - alpha_prev - sigma^2 is negative")
    out = base - math.sqrt(max(radicand, 0.0) * (1.0 - alpha_i)) * score
    if sigma > 0.0:
        if rng is None:
            raise ValueError("sigma > 0 requires an rng")
        out = out + sigma * rng.standard_normal(xi.shape)
    return out
