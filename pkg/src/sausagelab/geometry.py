"""Potential-theoretic kernels and the indexed union-of-balls set in R^4.

Points are plain numpy float64 arrays of shape (4,), batches are (n, 4).
All lengths are in units of the unit sausage radius.  The closed forms
implemented here are specific to dimension four:

    G(x)            = 1 / (2 pi^2 ||x||^2)          (Green kernel)
    P_z(hit B(0,r)) = r^2 / ||z||^2                 (exterior ball hitting)
    Cap(B(0,r))     = 2 pi^2 r^2
    |B(0,r)|        = (pi^2 / 2) r^4
    G*(rho)         = 1/2 - rho^2/4   (rho <= 1),   1/(4 rho^2)  (rho > 1)

G* is the Green kernel averaged over a unit ball around the target.  The
exterior branch is (pi^2/2) G by the mean value property; the interior
branch solves the radial Poisson problem (Laplacian = -2 inside the unit
ball, continuous value and flux at rho = 1) and is certified against a
Monte Carlo quadrature oracle in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .rng import RngStream

TWO_PI_SQ = 2.0 * np.pi ** 2
GREEN_COEFF = 1.0 / TWO_PI_SQ

#: Number of centers below which brute-force distance scans beat the tree.
_BRUTE_THRESHOLD = 48


def ball4_volume(r: float) -> float:
    """Lebesgue volume of a ball of radius r in R^4: (pi^2/2) r^4."""
    return 0.5 * np.pi ** 2 * r ** 4


def ball4_capacity(r: float) -> float:
    """Newtonian capacity of a ball of radius r in R^4: 2 pi^2 r^2."""
    return TWO_PI_SQ * r * r


def green_g(x) -> float | np.ndarray:
    """Green kernel 1/(2 pi^2 ||x||^2); domain error at the pole x = 0."""
    x = np.asarray(x, dtype=float)
    nsq = np.einsum("...i,...i->...", x, x)
    if np.any(nsq == 0.0):
        raise ValueError("green_g is singular at the origin")
    return GREEN_COEFF / nsq


def gstar(rho) -> float | np.ndarray:
    """Unit-ball-averaged Green kernel as a function of center distance.

    Piecewise radial: 1/2 - rho^2/4 inside, 1/(4 rho^2) outside, C^1 at
    rho = 1.  Bounded by 1/2, so time integrals of gstar along a path of
    length t never exceed t/2.
    """
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise ValueError("gstar expects a nonnegative radial distance")
    inner = 0.5 - 0.25 * rho * rho
    with np.errstate(divide="ignore"):
        outer = 0.25 / (rho * rho)
    out = np.where(rho <= 1.0, inner, outer)
    return float(out) if out.ndim == 0 else out


def ball_hit_prob(z, r: float) -> float | np.ndarray:
    """P_z(Brownian motion ever hits B(0, r)): 1 inside, r^2/||z||^2 outside."""
    if r <= 0:
        raise ValueError("ball radius must be positive")
    z = np.asarray(z, dtype=float)
    nsq = np.einsum("...i,...i->...", z, z)
    with np.errstate(divide="ignore"):
        p = np.minimum(1.0, (r * r) / nsq)
    return float(p) if p.ndim == 0 else p


def cond_hit_bound(cap_value: float, dist: float) -> float:
    """Upper bound Cap(A)/(2 pi^2 d(x,A)^2) on the hit probability from x.

    Used both to prune hopeless walkers a priori and as a statistical
    invariant on estimated hit frequencies.
    """
    if dist <= 0:
        raise ValueError("cond_hit_bound needs a positive exterior distance")
    if cap_value < 0:
        raise ValueError("capacity bound must be nonnegative")
    return cap_value / (TWO_PI_SQ * dist * dist)


def sphere_sample(rng: RngStream | np.random.Generator, center, rho: float,
                  n: int | None = None) -> np.ndarray:
    """Uniform points on the sphere of radius rho around center.

    Isotropic Gaussian directions normalized to exact radius rho; returns
    shape (4,) for n=None, else (n, 4).
    """
    if rho <= 0:
        raise ValueError("sphere radius must be positive")
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    m = 1 if n is None else int(n)
    v = gen.standard_normal((m, 4))
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    # Resample the (measure-zero) degenerate draws rather than dividing by 0.
    bad = norms[:, 0] < 1e-300
    while np.any(bad):
        v[bad] = gen.standard_normal((int(bad.sum()), 4))
        norms = np.linalg.norm(v, axis=1, keepdims=True)
        bad = norms[:, 0] < 1e-300
    pts = np.asarray(center, dtype=float) + (rho / norms) * v
    return pts[0] if n is None else pts


def ball_sample(rng: RngStream | np.random.Generator, center, rho: float,
                n: int) -> np.ndarray:
    """Uniform points in the open ball of radius rho around center."""
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    dirs = sphere_sample(gen, np.zeros(4), 1.0, n)
    radii = rho * gen.random(n) ** 0.25
    return np.asarray(center, dtype=float) + radii[:, None] * dirs


@dataclass(frozen=True)
class Ball:
    """A ball B(center, radius) in R^4."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if self.radius <= 0:
            raise ValueError("ball radius must be positive")


class BallUnion:
    """A finite union of equal-radius balls with exact nearest-center queries.

    The index is an accelerator, never an approximator: distances returned
    by `distances` equal the brute-force minimum over all centers exactly
    (the nearest index comes from a k-d tree, the distance is recomputed
    from coordinates).  Immutable after construction; safe to share across
    worker threads.
    """

    def __init__(self, centers, radius: float):
        centers = np.atleast_2d(np.asarray(centers, dtype=float))
        if centers.size == 0:
            centers = centers.reshape(0, 4)
        if centers.shape[1] != 4:
            raise ValueError("centers must have shape (n, 4)")
        if radius <= 0:
            raise ValueError("union ball radius must be positive")
        self.centers = centers
        self.radius = float(radius)
        self._tree = None

    # -- basic properties ---------------------------------------------------

    def __len__(self) -> int:
        return self.centers.shape[0]

    @property
    def is_empty(self) -> bool:
        return self.centers.shape[0] == 0

    @property
    def bounding_radius(self) -> float:
        """Radius of the origin-centered ball containing the union."""
        if self.is_empty:
            return 0.0
        return float(np.linalg.norm(self.centers, axis=1).max() + self.radius)

    @property
    def centroid(self) -> np.ndarray:
        if self.is_empty:
            return np.zeros(4)
        return self.centers.mean(axis=0)

    @property
    def circumradius(self) -> float:
        """Radius of the centroid-centered ball containing the union."""
        if self.is_empty:
            return 0.0
        d = np.linalg.norm(self.centers - self.centroid, axis=1).max()
        return float(d + self.radius)

    def translated(self, shift) -> "BallUnion":
        if self.is_empty:
            return BallUnion(np.zeros((0, 4)), self.radius)
        return BallUnion(self.centers + np.asarray(shift, dtype=float),
                         self.radius)

    # -- distance queries ---------------------------------------------------

    def _ensure_tree(self):
        if self._tree is None:
            self._tree = cKDTree(self.centers, balanced_tree=False,
                                 compact_nodes=False)
        return self._tree

    def distances(self, points) -> np.ndarray:
        """Signed distance to the union for each query point.

        Negative inside, zero on the boundary, +inf for an empty union.
        Exactly min_i ||p - c_i|| - radius.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.is_empty:
            return np.full(points.shape[0], np.inf)
        if len(self) <= _BRUTE_THRESHOLD:
            diff = points[:, None, :] - self.centers[None, :, :]
            d = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff)).min(axis=1)
        else:
            _, idx = self._ensure_tree().query(points, workers=-1)
            diff = points - self.centers[idx]
            d = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        return d - self.radius

    def distance(self, point) -> float:
        return float(self.distances(np.asarray(point, dtype=float)[None, :])[0])

    def contains(self, points) -> np.ndarray:
        return self.distances(points) <= 0.0

    def brute_force_distances(self, points) -> np.ndarray:
        """Index-free reference scan; the oracle for the indexed path."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.is_empty:
            return np.full(points.shape[0], np.inf)
        out = np.empty(points.shape[0])
        # Chunked so the oracle stays usable on large unions.
        step = max(1, int(4e6 // max(len(self), 1)))
        for i in range(0, points.shape[0], step):
            diff = points[i:i + step, None, :] - self.centers[None, :, :]
            out[i:i + step] = np.sqrt(
                np.einsum("ijk,ijk->ij", diff, diff)).min(axis=1)
        return out - self.radius


def dist_to_union(p, u: BallUnion) -> float:
    """Signed distance from p to the union (+inf sentinel when empty)."""
    return u.distance(p)


def shared_ball_union(a: BallUnion, b: BallUnion) -> BallUnion:
    """The intersection of two unions, when it is itself a union of balls.

    Covers the two cases used by the experiment batteries: balls present in
    both unions (same radius, coincident centers) and balls of the
    smaller-radius union wholly inside a single ball of the other.  Raises
    if the intersection is not representable this way.
    """
    if a.is_empty or b.is_empty:
        return BallUnion(np.zeros((0, 4)), max(a.radius, b.radius, 1.0))
    small, big = (a, b) if a.radius <= b.radius else (b, a)
    kept = []
    for c in small.centers:
        d = np.linalg.norm(big.centers - c, axis=1)
        if small.radius == big.radius and np.any(d < 1e-12):
            kept.append(c)
        elif np.any(d <= big.radius - small.radius + 1e-12):
            kept.append(c)
        elif np.any(d < small.radius + big.radius):
            raise ValueError(
                "intersection is a partial-ball overlap, not a ball union")
    if not kept:
        return BallUnion(np.zeros((0, 4)), small.radius)
    return BallUnion(np.asarray(kept), small.radius)
