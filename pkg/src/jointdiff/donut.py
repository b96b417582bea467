"""Ring-shaped toy domains for joint sampling and constrained generation.

Two tasks share the annular data distribution:

- Joint toy: x is a (start, goal) pair drawn from the ring, k is a single
  waypoint, and the model-based objective asks for the longest two-segment
  path start -> k -> goal that clears a set of disc obstacles and stays in
  a bounding box.
- Constrained generation: x alone must land in a small feasible region
  made of two discs, one overlapping the ring (in distribution) and one
  inside the hole (out of distribution).

Metrics: constraint alignment (fraction feasible), band fraction (radial
membership in the annulus) and symmetric Chamfer distance to a reference
sample cloud.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .gmm import GaussianMixtureScoreModel
from .potentials import InteractionPotential, uniform_box_prior


@dataclass(frozen=True)
class DonutSpec:
    center: np.ndarray = field(default_factory=lambda: np.zeros(2))
    r_inner: float = 1.5
    r_outer: float = 2.5
    ring_components: int = 16
    band_tolerance: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if not 0.0 < self.r_inner < self.r_outer:
            raise ValueError("need 0 < r_inner < r_outer")
        if self.ring_components < 8:
            raise ValueError("ring needs at least 8 mixture components")
        if self.band_tolerance is None:
            object.__setattr__(self, "band_tolerance",
                               (self.r_outer - self.r_inner) / 2.0)
        if self.band_tolerance <= 0.0:
            raise ValueError("band tolerance must be positive")

    @property
    def r_mid(self) -> float:
        return 0.5 * (self.r_inner + self.r_outer)

    @property
    def ring_sigma(self) -> float:
        return (self.r_outer - self.r_inner) / 4.0


def donut_prior(spec: DonutSpec) -> GaussianMixtureScoreModel:
    """Equal-weight ring mixture: components spaced on the mid circle."""
    m = spec.ring_components
    angles = 2.0 * np.pi * np.arange(m) / m
    means = spec.center + spec.r_mid * np.stack(
        [np.cos(angles), np.sin(angles)], axis=1
    )
    return GaussianMixtureScoreModel(
        weights=np.full(m, 1.0 / m),
        means=means,
        variances=np.full((m, 2), spec.ring_sigma**2),
    )


def joint_donut_prior(spec: DonutSpec) -> GaussianMixtureScoreModel:
    """Product ring mixture over (start, goal) in R^4, m^2 components."""
    ring = donut_prior(spec)
    m = ring.n_components
    idx_a, idx_b = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
    means = np.concatenate(
        [ring.means[idx_a.ravel()], ring.means[idx_b.ravel()]], axis=1
    )
    return GaussianMixtureScoreModel(
        weights=np.full(m * m, 1.0 / (m * m)),
        means=means,
        variances=np.full((m * m, 4), spec.ring_sigma**2),
    )


def _point_segment_distance(a, b, p):
    """Distance from point p to segment [a, b]; broadcasts leading dims."""
    ab = b - a
    denom = np.maximum(np.sum(ab * ab, axis=-1), 1e-30)
    t = np.clip(np.sum((p - a) * ab, axis=-1) / denom, 0.0, 1.0)
    closest = a + t[..., None] * ab
    return np.linalg.norm(p - closest, axis=-1)


@dataclass(frozen=True)
class JointToySpec:
    """Start-goal pairs on the ring, one waypoint, disc obstacles.

    The default layout places four discs on the ring at the axes: enough
    ring mass is blocked that many (start, goal) pairs admit no feasible
    waypoint at all, which is the regime where decoupled and alternating
    samplers waste draws.
    """

    donut: DonutSpec
    obstacles: tuple = (((2.0, 0.0), 0.7), ((-2.0, 0.0), 0.7),
                        ((0.0, 2.0), 0.7), ((0.0, -2.0), 0.7))
    k_lower: np.ndarray = field(default_factory=lambda: np.array([-3.5, -3.5]))
    k_upper: np.ndarray = field(default_factory=lambda: np.array([3.5, 3.5]))

    def __post_init__(self):
        lo = np.asarray(self.k_lower, dtype=float)
        hi = np.asarray(self.k_upper, dtype=float)
        object.__setattr__(self, "k_lower", lo)
        object.__setattr__(self, "k_upper", hi)
        reach = self.donut.r_outer
        if np.any(lo > self.donut.center - reach) or np.any(hi < self.donut.center + reach):
            raise ValueError("waypoint bounds must contain the donut")

    def k_prior(self):
        return uniform_box_prior(self.k_lower, self.k_upper)


def joint_toy_potential(spec: JointToySpec, temperature: float = 1.0) -> InteractionPotential:
    """Longest collision-free start -> k -> goal path.

    J(k | x) = -(|start - k| + |k - goal|), so minimizing J maximizes path
    length; the compact waypoint box keeps it bounded. g is the worst disc
    penetration over both segments, plus the waypoint's box violation.
    """
    obstacles = [(np.asarray(c, dtype=float), float(r)) for c, r in spec.obstacles]
    lo, hi = spec.k_lower, spec.k_upper

    def objective(k, x):
        start, goal = x[..., :2], x[..., 2:]
        return -(np.linalg.norm(start - k, axis=-1)
                 + np.linalg.norm(k - goal, axis=-1))

    def constraint(k, x):
        start, goal = x[..., :2], x[..., 2:]
        box = np.max(np.maximum(lo - k, k - hi), axis=-1)
        worst = box
        for c, r in obstacles:
            d1 = _point_segment_distance(start, k, c)
            d2 = _point_segment_distance(k, goal, c)
            worst = np.maximum(worst, r - np.minimum(d1, d2))
        return worst

    return InteractionPotential(objective, constraint, temperature)


@dataclass(frozen=True)
class CGToySpec:
    donut: DonutSpec
    ring_disc_center: np.ndarray = field(default_factory=lambda: np.array([2.0, 0.0]))
    ring_disc_radius: float = 0.35
    hole_disc_center: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0]))
    hole_disc_radius: float = 0.35

    def __post_init__(self):
        rc = np.asarray(self.ring_disc_center, dtype=float)
        hc = np.asarray(self.hole_disc_center, dtype=float)
        object.__setattr__(self, "ring_disc_center", rc)
        object.__setattr__(self, "hole_disc_center", hc)
        lo = self.donut.r_inner - self.donut.band_tolerance
        hi = self.donut.r_outer + self.donut.band_tolerance
        rc_rad = np.linalg.norm(rc - self.donut.center)
        if not lo <= rc_rad <= hi:
            raise ValueError("ring disc must intersect the annulus band")
        hc_rad = np.linalg.norm(hc - self.donut.center)
        if hc_rad + self.hole_disc_radius >= lo:
            raise ValueError("hole disc must stay out of the annulus band")

    @property
    def discs(self):
        return (
            (self.ring_disc_center, self.ring_disc_radius),
            (self.hole_disc_center, self.hole_disc_radius),
        )


def cg_constraint(spec: CGToySpec, x: np.ndarray) -> np.ndarray:
    """Signed distance to the two-disc feasible set (<= 0 inside either disc)."""
    x = np.asarray(x, dtype=float)
    vals = [np.linalg.norm(x - c, axis=-1) - r for c, r in spec.discs]
    return np.minimum(vals[0], vals[1])


def cg_projection(spec: CGToySpec, x: np.ndarray) -> np.ndarray:
    """Closest point of the two-disc set (identity for feasible input).

    Exterior points land a hair inside the boundary rather than on it, so
    the projected point satisfies the constraint strictly even after
    floating-point roundoff.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    dists = np.stack(
        [np.linalg.norm(pts - c, axis=-1) - r for c, r in spec.discs], axis=1
    )
    nearest = np.argmin(dists, axis=1)
    out = pts.copy()
    for j, (c, r) in enumerate(spec.discs):
        sel = (nearest == j) & (dists[:, j] > 0.0)
        if np.any(sel):
            diff = pts[sel] - c
            radius = r * (1.0 - 1e-9)
            out[sel] = c + radius * diff / np.linalg.norm(diff, axis=-1,
                                                          keepdims=True)
    return out[0] if single else out


def cg_cost(spec: CGToySpec):
    """Hinge on the signed distance, with its (almost-everywhere) gradient."""

    def cost(x):
        x = np.asarray(x, dtype=float)
        dists = np.array([np.linalg.norm(x - c) - r for c, r in spec.discs])
        j = int(np.argmin(dists))
        g = dists[j]
        if g <= 0.0:
            return 0.0, np.zeros_like(x)
        c, _ = spec.discs[j]
        diff = x - c
        return g, diff / np.linalg.norm(diff)

    return cost


def constraint_alignment(samples: np.ndarray, g) -> float:
    """Fraction of samples with g(sample) <= 0."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.shape[0] < 1:
        raise ValueError("need at least one sample")
    vals = np.asarray(g(samples), dtype=float)
    return float(np.mean(vals <= 0.0))


def band_fraction(samples: np.ndarray, spec: DonutSpec) -> float:
    """Fraction of samples whose radius lies in the tolerant annulus band."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    radii = np.linalg.norm(samples - spec.center, axis=-1)
    lo = spec.r_inner - spec.band_tolerance
    hi = spec.r_outer + spec.band_tolerance
    return float(np.mean((radii >= lo) & (radii <= hi)))


def chamfer_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Symmetric mean nearest-neighbour distance between two point sets."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    d_ab = cKDTree(b).query(a)[0]
    d_ba = cKDTree(a).query(b)[0]
    return float(0.5 * (d_ab.mean() + d_ba.mean()))


def data_fidelity(samples: np.ndarray, spec: DonutSpec, reference: np.ndarray):
    """(band_fraction, chamfer distance to the reference cloud)."""
    reference = np.atleast_2d(np.asarray(reference, dtype=float))
    if reference.shape[0] < 1:
        raise ValueError("reference set must be non-empty")
    return band_fraction(samples, spec), chamfer_distance(samples, reference)


@dataclass
class GenerationMetrics:
    ca: float
    band_fraction: float
    chamfer: float
    feasible_in_band: float


def generation_metrics(samples, spec: DonutSpec, g, reference) -> GenerationMetrics:
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    gvals = np.asarray(g(samples), dtype=float)
    radii = np.linalg.norm(samples - spec.center, axis=-1)
    lo = spec.r_inner - spec.band_tolerance
    hi = spec.r_outer + spec.band_tolerance
    in_band = (radii >= lo) & (radii <= hi)
    feasible = gvals <= 0.0
    bf, ch = data_fidelity(samples, spec, reference)
    return GenerationMetrics(
        ca=float(np.mean(feasible)),
        band_fraction=bf,
        chamfer=ch,
        feasible_in_band=float(np.mean(feasible & in_band)),
    )
