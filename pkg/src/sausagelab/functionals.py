"""Potential functionals along Brownian paths and their oracles.

D_x[0,t] integrates the unit-ball-averaged Green kernel centered at x
along a path over [0, t]; its skeleton counterpart weights the kernel at
skeleton points by the exit-time gaps.  R[0,t] counts (in product
Lebesgue measure) the pairs of times at which two independent paths come
within distance 1.

Time integrals use a hybrid grid: uniform steps of h up to 10 time units,
then geometrically growing steps (relative step h).  The integrand's
expectation profile decays like 1/s, so a uniform step at large horizons
would either blow the budget (t/h evaluations) or, with h ~ t, put an
O(h) mass error on the first steps where the integrand peaks; the hybrid
grid keeps the quadrature error uniformly small with O(log t / h)
evaluations.  Trapezoid weights sum exactly to t, so D samples keep the
t/2 bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.spatial import cKDTree
from scipy.stats import ncx2

from .geometry import green_g, gstar
from .rng import RngStream

_UNIFORM_HORIZON = 10.0


@dataclass(frozen=True)
class FunctionalSample:
    """One sampled functional value with its discretization metadata."""

    value: float
    t: float
    step: float
    seed: int


def time_grid(t: float, h: float) -> np.ndarray:
    """Hybrid uniform-then-geometric grid on [0, t] (includes endpoints)."""
    if h <= 0 or h > t:
        raise ValueError("step must satisfy 0 < h <= t")
    t_lin = min(t, _UNIFORM_HORIZON)
    grid = [np.linspace(0.0, t_lin, int(np.ceil(t_lin / h)) + 1)]
    if t > t_lin:
        n_geo = int(np.ceil(np.log(t / t_lin) / np.log1p(h)))
        geo = t_lin * (1.0 + h) ** np.arange(1, n_geo + 1)
        geo[-1] = t
        grid.append(geo)
    return np.concatenate(grid)


def _trapezoid_weights(grid: np.ndarray) -> np.ndarray:
    w = np.zeros_like(grid)
    d = np.diff(grid)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return w


def _paths_on_grid(gen: np.random.Generator, n: int, grid: np.ndarray,
                   start=None) -> np.ndarray:
    """n Brownian paths evaluated on the grid; shape (n, len(grid), 4)."""
    dv = np.diff(grid)
    steps = gen.standard_normal((n, dv.size, 4)) * np.sqrt(dv)[None, :, None]
    pos = np.zeros((n, grid.size, 4))
    np.cumsum(steps, axis=1, out=steps)
    pos[:, 1:, :] = steps
    if start is not None:
        pos += np.asarray(start, dtype=float)
    return pos


def d0_functional_batch(rng: RngStream, n: int, x, t: float, h: float,
                        batch: int = 256) -> tuple[np.ndarray, np.ndarray]:
    """n independent samples of D_x[0,t] plus the companion zeta integral.

    zeta accumulates 1/(||beta_s||^3 v 1) on the same grid and weights; it
    is the path functional that controls the x-Lipschitz modulus of D_x.
    Returns (values, zetas).
    """
    x = np.asarray(x, dtype=float)
    grid = time_grid(t, h)
    w = _trapezoid_weights(grid)
    values = np.empty(n)
    zetas = np.empty(n)
    for i in range(0, n, batch):
        m = min(batch, n - i)
        gen = rng.block(i // batch).generator()
        pos = _paths_on_grid(gen, m, grid)
        diff = x[None, None, :] - pos
        rho = np.sqrt(np.einsum("nkj,nkj->nk", diff, diff))
        values[i:i + m] = (gstar(rho) * w).sum(axis=1)
        nrm = np.sqrt(np.einsum("nkj,nkj->nk", pos, pos))
        zetas[i:i + m] = (w / np.maximum(nrm, 1.0) ** 3).sum(axis=1)
    return values, zetas


def d0_functional(rng: RngStream, x, t: float, h: float) -> FunctionalSample:
    """One sample of D_x[0,t] = integral of gstar(||x - beta_s||) ds."""
    if t == 0:
        return FunctionalSample(0.0, 0.0, h, rng.seed)
    v, _ = d0_functional_batch(rng, 1, x, t, h)
    return FunctionalSample(float(v[0]), t, h, rng.seed)


def dx_delta_functional(skeleton, x) -> FunctionalSample:
    """Skeleton version: sum of gap-weighted gstar values at the Z_i.

    Exact given the skeleton; the only discretization is the skeleton
    itself.
    """
    if len(skeleton) == 0:
        raise ValueError("skeleton must be nonempty")
    x = np.asarray(x, dtype=float)
    w = skeleton.horizon_weights()
    rho = np.linalg.norm(skeleton.points - x, axis=1)
    val = float((w * gstar(rho)).sum())
    return FunctionalSample(val, skeleton.horizon, skeleton.delta, 0)


def d0_concentration(rng: RngStream, t: float, n: int,
                     h: float = 0.01) -> dict:
    """Empirical concentration summary of D_0[0,t] across n paths.

    Reports the mean, quantiles of value/mean, and the fraction of
    samples within 25 percent of the mean (the quantity whose growth in t
    expresses concentration).
    """
    if n < 1000:
        raise ValueError("concentration summaries need n >= 1000")
    values, _ = d0_functional_batch(rng, n, np.zeros(4), t, h)
    mean = float(values.mean())
    ratio = values / mean
    qs = np.quantile(ratio, [0.05, 0.25, 0.5, 0.75, 0.95])
    return {
        "t": t,
        "n": n,
        "mean": mean,
        "std": float(values.std(ddof=1)),
        "ratio_quantiles": {p: float(q) for p, q in
                            zip((5, 25, 50, 75, 95), qs)},
        "frac_within_25pct": float((np.abs(ratio - 1.0) <= 0.25).mean()),
    }


# ---------------------------------------------------------------------------
# pair functional R[0, t]
# ---------------------------------------------------------------------------

def r_pair_functional(rng: RngStream, z, t: float, t_tilde: float,
                      h: float) -> FunctionalSample:
    """One sample of the pair-occupation functional R[0,t].

    Double Riemann sum over a path from the origin (horizon t) and an
    independent path from z (horizon t_tilde, surrogate for the infinite
    horizon), counting grid pairs within distance 1 with weight h * h.
    Midpoint time grids keep the discretization bias O(h^2).
    """
    if h > 1.0 or h <= 0:
        raise ValueError("pair counting step must satisfy 0 < h <= 1")
    if t == 0:
        return FunctionalSample(0.0, 0.0, h, rng.seed)
    v = r_pair_functional_batch(rng, 1, z, t, t_tilde, h)
    return FunctionalSample(float(v[0]), t, h, rng.seed)


def r_pair_functional_batch(rng: RngStream, n: int, z, t: float,
                            t_tilde: float, h: float) -> np.ndarray:
    """n independent samples of R[0,t]; see r_pair_functional.

    The second path is generated in blocks and stopped early once it is
    too far from the first path's occupied ball for the remaining-tail hit
    bound (hitting probability of the enclosing ball) to matter at the
    10^-3 level.
    """
    z = np.asarray(z, dtype=float)
    k1 = int(round(t / h))
    out = np.empty(n)
    block = 20_000
    for i in range(n):
        gen = rng.block(i).generator()
        # midpoint grid for the first path
        grid1 = (np.arange(k1) + 0.5) * h
        steps = gen.standard_normal((k1, 4)) * np.sqrt(np.diff(
            np.concatenate([[0.0], grid1])))[:, None]
        path1 = np.cumsum(steps, axis=0)
        tree = cKDTree(path1)
        center = path1.mean(axis=0)
        reach = float(np.linalg.norm(path1 - center, axis=1).max()) + 1.0
        # tail cut: from distance D the chance of ever touching the occupied
        # ball is (reach/D)^2; stop once that is below 1e-3
        kill_dist = reach * 32.0
        count = 0
        p = z.copy()
        t2 = 0.0
        first = True
        while t2 < t_tilde:
            m = min(block, int(round((t_tilde - t2) / h)))
            if m <= 0:
                break
            dv = np.full(m, h)
            if first:
                dv[0] = 0.5 * h  # midpoint offset of the second grid
                first = False
            seg = np.cumsum(gen.standard_normal((m, 4)) * np.sqrt(dv)[:, None],
                            axis=0) + p
            # a point within 1 of the first path is within reach of its
            # center, so filtering by the center distance is lossless
            d2c = np.linalg.norm(seg - center, axis=1)
            near = d2c <= reach
            if near.any():
                count += int(np.sum(tree.query_ball_point(
                    seg[near], 1.0, return_length=True)))
            p = seg[-1]
            t2 += m * h
            if d2c[-1] > kill_dist and d2c.min() > reach + 2.0:
                break
        out[i] = count * h * h
    return out


def r_pair_conditional_batch(rng: RngStream, n: int, z, t: float,
                             h: float, batch: int = 512) -> np.ndarray:
    """n samples of E[R[0,t] | first path], integrating the second path out.

    The expected occupation time of B(c, 1) by a Brownian motion from z is
    exactly the ball-averaged Green kernel gstar(||z - c||), so
    conditioning on the first path turns R into h * sum_u gstar(||z -
    beta_u||) over the first path's midpoint grid.  Same mean as the
    two-path estimator with an infinite second horizon, with the
    rare-encounter variance and the horizon truncation both removed.
    """
    z = np.asarray(z, dtype=float)
    k1 = int(round(t / h))
    grid = (np.arange(k1) + 0.5) * h
    dv = np.diff(np.concatenate([[0.0], grid]))
    out = np.empty(n)
    for i in range(0, n, batch):
        m = min(batch, n - i)
        gen = rng.block(i // batch).generator()
        steps = gen.standard_normal((m, k1, 4)) * np.sqrt(dv)[None, :, None]
        np.cumsum(steps, axis=1, out=steps)
        diff = z[None, None, :] - steps
        rho = np.sqrt(np.einsum("nkj,nkj->nk", diff, diff))
        out[i:i + m] = h * gstar(rho).sum(axis=1)
    return out


def pair_functional_expectation(z_norm: float, t: float,
                                t_tilde: float = np.inf) -> float:
    """Quadrature oracle for E[R[0,t]] between paths started at 0 and z.

    E R = int_0^t du int_0^t~ ds P(||z + N(0, (u+s) I_4)|| <= 1); the
    probability is a noncentral chi-square tail, and the double integral
    collapses to one dimension in v = u + s with the overlap length
    min(v, t, t~, t + t~ - v) as weight.  Independent of the Monte Carlo
    path in every ingredient.
    """

    def q(v: float) -> float:
        if v <= 0:
            return 0.0
        return float(ncx2.cdf(1.0 / v, df=4, nc=z_norm * z_norm / v))

    if np.isinf(t_tilde):
        def integrand(v):
            return q(v) * min(v, t)
        # the tail q(v) ~ 1/(2 v) * exp(-z^2/2v) -> integrand ~ t/(2v)
        # decays too slowly to truncate crudely; integrate q(v)*t with the
        # substitution w = 1/v on the far tail
        v_split = max(10.0 * z_norm ** 2, 10.0 * t)
        a, _ = quad(integrand, 0.0, t, limit=200)
        b, _ = quad(integrand, t, v_split, limit=200)

        def tail(w):  # v = 1/w, dv = dw/w^2
            return q(1.0 / w) * t / (w * w)

        c, _ = quad(tail, 1e-12, 1.0 / v_split, limit=200)
        return a + b + c
    hi = t + t_tilde

    def integrand(v):
        return q(v) * min(v, t, t_tilde, hi - v)

    pieces = sorted({0.0, min(t, t_tilde), max(t, t_tilde), hi})
    total = 0.0
    for lo, up in zip(pieces[:-1], pieces[1:]):
        val, _ = quad(integrand, lo, up, limit=200)
        total += val
    return total
