"""Walk-on-spheres hitting simulation and capacity estimators.

The hitting probability of a union of balls by Brownian motion is
simulated exactly by walk-on-spheres: from the current point, jump to a
uniform point on the largest sphere that avoids the target (the exit
position of Brownian motion from that ball is uniform by isotropy, and
the path cannot hit the target before exiting).  A walker is absorbed
once it comes within eps_hit of a target, and walkers that drift past an
escape radius either survive a Russian-roulette lottery with the exact
exterior return probability r^2/||x||^2 and restart uniformly on the
launch sphere, or carry that probability as a multiplicative weight.

Capacity, the cross terms chi and epsilon of the two-set decomposition,
and the dyadic blocking decomposition are all built on this engine via
the finite-radius representation

    Cap(A) = 2 pi^2 r^2 * (mean hit probability from the sphere of
             radius r containing A).

Estimators split their walker budget into fixed-size chunks, each chunk
drawing from its own derived stream; partial sums are folded in chunk
order, so results are byte-identical for any worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import TWO_PI_SQ, BallUnion, Ball, sphere_sample
from .rng import RngStream

_CHUNK = 16384           # walkers per work unit; fixed so merges are stable
_WEIGHT_FLOOR = 1e-9     # weighted-mode termination threshold

ESCAPED, HIT_A, HIT_B, HIT_TIE = 0, 1, 2, 3
_KIND_NAMES = {ESCAPED: "escaped", HIT_A: "hit_a", HIT_B: "hit_b",
               HIT_TIE: "hit_tie"}

_EMPTY = BallUnion(np.zeros((0, 4)), 1.0)


@dataclass(frozen=True)
class WosParams:
    """Discretization parameters of the hitting simulation.

    eps_hit is the absorption layer (must stay below the target ball
    radius); r_escape is the roulette radius (None selects 64 times the
    bounding radius of the target); restart_mode is "roulette" or
    "weighted".
    """

    eps_hit: float = 1e-3
    r_escape: float | None = None
    max_steps: int = 100_000
    restart_mode: str = "roulette"

    def __post_init__(self):
        if self.eps_hit <= 0:
            raise ValueError("eps_hit must be positive")
        if self.restart_mode not in ("roulette", "weighted"):
            raise ValueError("restart_mode must be 'roulette' or 'weighted'")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")


@dataclass(frozen=True)
class HitOutcome:
    """Terminal state of one walker."""

    kind: str
    position: np.ndarray
    steps: int
    weight: float


@dataclass(frozen=True)
class Estimate:
    """A Monte Carlo result: mean, standard error of the mean, n, seed."""

    mean: float
    std_error: float
    n: int
    seed: int = 0
    diag: dict = field(default_factory=dict)

    def scaled(self, c: float) -> "Estimate":
        return replace(self, mean=c * self.mean, std_error=abs(c) * self.std_error)

    @staticmethod
    def linear(terms: list[tuple[float, "Estimate"]], seed: int = 0) -> "Estimate":
        """Signed sum of independent estimates, errors in quadrature."""
        mean = sum(c * e.mean for c, e in terms)
        se = math.sqrt(sum((c * e.std_error) ** 2 for c, e in terms))
        n = min(e.n for _, e in terms)
        diag: dict = {}
        for _, e in terms:
            for k, v in e.diag.items():
                diag[k] = diag.get(k, 0) + v
        return Estimate(mean=mean, std_error=se, n=n, seed=seed, diag=diag)


def _resolve_escape(params: WosParams, bounding: float, launch: float) -> float:
    # Auto choice: 64x the target bounding radius, floored at 4x the launch
    # radius so the roulette re-entry approximation stays in its O(r/R) regime
    # even for oversized cross-term launch spheres.
    if params.r_escape is not None:
        r_esc = params.r_escape
    else:
        r_esc = max(64.0 * bounding, 4.0 * launch)
    if r_esc <= launch:
        raise ValueError("escape radius must exceed the launch radius")
    return r_esc


def _unit_directions(gen: np.random.Generator, m: int) -> np.ndarray:
    v = gen.standard_normal((m, 4))
    n = np.linalg.norm(v, axis=1, keepdims=True)
    return v / np.maximum(n, 1e-300)


def _run_wos(gen: np.random.Generator, pos: np.ndarray, a: BallUnion,
             b: BallUnion, launch_radius: float, r_escape: float,
             params: WosParams):
    """Advance a batch of walkers to absorption or escape.

    Returns (kind, position, steps, weight, n_max_step_escapes).  Draw
    order per iteration is fixed (jump directions, roulette uniforms,
    restart directions), so trajectories are a pure function of the
    generator state.
    """
    m = pos.shape[0]
    pos = np.array(pos, dtype=float)
    kind = np.full(m, -1, dtype=np.int8)
    weight = np.ones(m)
    steps = np.zeros(m, dtype=np.int64)
    out_pos = np.array(pos)
    truncated = 0
    eps = params.eps_hit
    weighted = params.restart_mode == "weighted"
    if a.is_empty and b.is_empty:
        return (np.zeros(m, dtype=np.int8), out_pos, steps, weight, 0)
    # Outside twice the bounding radius, ||p|| - R_max is a positive lower
    # bound on the distance to either union; jumping by a lower bound keeps
    # walk-on-spheres exact (the jump sphere stays target-free) and spares
    # the index query on every far-field step.
    r_max = max(a.bounding_radius, b.bounding_radius)
    far_cut = 2.0 * r_max
    alive = np.arange(m)
    while alive.size:
        p = pos[alive]
        nrm = np.sqrt(np.einsum("ij,ij->i", p, p))
        near = nrm <= far_cut
        d = nrm - r_max
        da = np.full(alive.size, np.inf)
        db = np.full(alive.size, np.inf)
        if near.any():
            pn = p[near]
            da[near] = a.distances(pn)
            if not b.is_empty:
                db[near] = b.distances(pn)
            d[near] = np.minimum(da[near], db[near])
        absorbed = d <= eps
        if absorbed.any():
            idx = alive[absorbed]
            na = da[absorbed] <= eps
            nb = db[absorbed] <= eps
            kind[idx] = np.where(na & nb, HIT_TIE, np.where(na, HIT_A, HIT_B))
            out_pos[idx] = p[absorbed]
        live = ~absorbed
        idx = alive[live]
        p = p[live]
        d = d[live]
        nrm = nrm[live]
        esc = nrm > r_escape
        if esc.any():
            ei = np.flatnonzero(esc)
            p_ret = (launch_radius / nrm[ei]) ** 2
            if weighted:
                weight[idx[ei]] *= p_ret
                dead = weight[idx[ei]] < _WEIGHT_FLOOR
                restart = ~dead
            else:
                u = gen.random(ei.size)
                restart = u < p_ret
                dead = ~restart
            if dead.any():
                di = idx[ei[dead]]
                kind[di] = ESCAPED
                out_pos[di] = p[ei[dead]]
            if restart.any():
                ri = ei[restart]
                p[ri] = launch_radius * _unit_directions(gen, int(restart.sum()))
        jump = ~esc
        if jump.any():
            ji = np.flatnonzero(jump)
            p[ji] += d[ji, None] * _unit_directions(gen, ji.size)
        # escaped-dead walkers keep stale p rows; they are dropped below
        pos[idx] = p
        steps[idx] += 1
        over = steps[idx] >= params.max_steps
        if over.any():
            oi = idx[over & (kind[idx] == -1)]
            kind[oi] = ESCAPED
            out_pos[oi] = pos[oi]
            truncated += oi.size
        alive = idx[kind[idx] == -1]
    return kind, out_pos, steps, weight, truncated


def wos_hit(rng: RngStream, z, a: BallUnion, b: BallUnion | None,
            sphere: Ball, params: WosParams | None = None) -> HitOutcome:
    """Hitting outcome of a single walker started at z.

    `sphere` is the origin-centered launch/restart sphere containing both
    unions.  Classifies the first union reached within eps_hit (hit_a,
    hit_b, or hit_tie when both are within eps_hit), or escaped.
    """
    params = params or WosParams()
    b = b if b is not None else _EMPTY
    z = np.asarray(z, dtype=float)
    if (not a.is_empty and a.distance(z) <= 0) or \
       (not b.is_empty and b.distance(z) <= 0):
        raise ValueError("walker must start outside both unions")
    bounding = max(a.bounding_radius, b.bounding_radius, sphere.radius / 2)
    r_escape = _resolve_escape(params, bounding, sphere.radius)
    gen = rng.generator()
    kind, p, steps, w, _ = _run_wos(gen, z[None, :], a, b, sphere.radius,
                                    r_escape, params)
    return HitOutcome(kind=_KIND_NAMES[int(kind[0])], position=p[0],
                      steps=int(steps[0]), weight=float(w[0]))


def _chunked(n: int):
    return [(c, min(_CHUNK, n - c * _CHUNK))
            for c in range((n + _CHUNK - 1) // _CHUNK)]


def _map_chunks(fn, chunks, workers: int):
    """Evaluate fn over chunks, preserving chunk order in the result."""
    if workers <= 1 or len(chunks) <= 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, chunks))


def _mean_se(total: float, total_sq: float, n: int) -> tuple[float, float]:
    mean = total / n
    if n < 2:
        return mean, 0.0
    var = max(total_sq / n - mean * mean, 0.0) * n / (n - 1)
    return mean, math.sqrt(var / n)


def _sphere_average(rng: RngStream, a: BallUnion, b: BallUnion,
                    launch_radius: float, n: int, params: WosParams,
                    workers: int, score_fn) -> Estimate:
    """Average a per-walker score over uniform launches on the sphere.

    score_fn(gen, kind, pos, weight) -> per-walker scores in [0, 1]; the
    returned estimate is 2 pi^2 r^2 times the mean score.
    """
    bounding = max(a.bounding_radius, b.bounding_radius)
    r_escape = _resolve_escape(params, bounding, launch_radius)

    def run(chunk):
        c, m = chunk
        gen = rng.block(c).generator()
        starts = launch_radius * _unit_directions(gen, m)
        kind, pos, steps, w, trunc = _run_wos(gen, starts, a, b,
                                              launch_radius, r_escape, params)
        score = score_fn(gen, kind, pos, w)
        return (float(score.sum()), float((score ** 2).sum()), m, trunc)

    parts = _map_chunks(run, _chunked(n), workers)
    total = sum(p[0] for p in parts)
    total_sq = sum(p[1] for p in parts)
    trunc = sum(p[3] for p in parts)
    mean, se = _mean_se(total, total_sq, n)
    scale = TWO_PI_SQ * launch_radius ** 2
    return Estimate(mean=scale * mean, std_error=scale * se, n=n,
                    seed=rng.seed,
                    diag={"max_step_escapes": trunc, "n_walkers": n})


def hit_probability_from_point(rng: RngStream, a: BallUnion, z, n: int,
                               params: WosParams | None = None) -> tuple[float, int]:
    """Fraction of n walkers from the fixed point z that ever hit the union.

    Estimates P_z(H_A < infinity) exactly (up to the absorption layer and
    roulette re-entry approximation); a start inside the union counts as
    probability one.  Returns (weighted hit fraction, max-step escapes).
    """
    params = params or WosParams()
    if a.is_empty:
        return 0.0, 0
    z = np.asarray(z, dtype=float)
    if a.distance(z) <= params.eps_hit:
        return 1.0, 0
    launch_radius = 2.0 * a.bounding_radius
    r_escape = _resolve_escape(params, max(a.bounding_radius,
                                           float(np.linalg.norm(z)) / 2),
                               launch_radius)
    total, trunc = 0.0, 0
    for c, m in _chunked(n):
        gen = rng.block(c).generator()
        starts = np.broadcast_to(z, (m, 4))
        kind, _, _, w, tr = _run_wos(gen, starts, a, _EMPTY, launch_radius,
                                     r_escape, params)
        total += float((w * (kind != ESCAPED)).sum())
        trunc += tr
    return total / n, trunc


def cap_estimate(rng: RngStream, a: BallUnion, n: int,
                 params: WosParams | None = None, workers: int = 1) -> Estimate:
    """Newtonian capacity of a ball union via sphere-averaged hitting.

    Walkers launch uniformly from the sphere of radius twice the
    circumradius around the union's centroid (capacity is translation
    invariant, so the union is recentered first).  The estimate is
    2 pi^2 r^2 times the weighted hit fraction, with binomial error.
    """
    params = params or WosParams()
    if a.is_empty:
        return Estimate(mean=0.0, std_error=0.0, n=n, seed=rng.seed)
    if n < 1000:
        raise ValueError("capacity estimation needs n >= 1000 walkers")
    if params.eps_hit >= a.radius:
        raise ValueError("eps_hit must be smaller than the ball radius")
    au = a.translated(-a.centroid)
    launch_radius = 2.0 * au.bounding_radius

    def score(gen, kind, pos, w):
        return w * (kind != ESCAPED)

    return _sphere_average(rng, au, _EMPTY, launch_radius, n, params,
                           workers, score)


def cap_union_estimate(rng: RngStream, a: BallUnion, b: BallUnion, n: int,
                       params: WosParams | None = None,
                       workers: int = 1) -> Estimate:
    """Capacity of the union of two ball unions (radii may differ)."""
    params = params or WosParams()
    if a.is_empty:
        return cap_estimate(rng, b, n, params, workers)
    if b.is_empty:
        return cap_estimate(rng, a, n, params, workers)
    centroid = np.concatenate([a.centers, b.centers]).mean(axis=0)
    at = a.translated(-centroid)
    bt = b.translated(-centroid)
    launch_radius = 2.0 * max(at.bounding_radius, bt.bounding_radius)

    def score(gen, kind, pos, w):
        return w * (kind != ESCAPED)

    return _sphere_average(rng, at, bt, launch_radius, n, params,
                           workers, score)


def _ordered_hit_scores(gen, kind, pos, w, first_code, second: BallUnion,
                        launch_radius: float, r_escape: float,
                        params: WosParams) -> np.ndarray:
    """Continue first-hitters of one union against the other.

    Realizes the ordered event {H_first < H_second < infinity}: the walk
    is continued by walk-on-spheres relative to the second union alone
    until it hits or escapes.
    """
    score = np.zeros(kind.shape[0])
    sel = kind == first_code
    if not sel.any():
        return score
    k2, _, _, w2, _ = _run_wos(gen, pos[sel], second, _EMPTY, launch_radius,
                               r_escape, params)
    score[sel] = w[sel] * w2 * (k2 != ESCAPED)
    return score


def chi_estimate(rng: RngStream, a: BallUnion, b: BallUnion, r: float,
                 n: int, params: WosParams | None = None,
                 workers: int = 1) -> Estimate:
    """Ordered-hit cross term chi_r(A, B) of the union decomposition.

    2 pi^2 r^2 times the sphere-averaged probability of hitting one union
    and then the other, summed over both orders.  Zero when either union
    is empty.
    """
    params = params or WosParams()
    if a.is_empty or b.is_empty:
        return Estimate(mean=0.0, std_error=0.0, n=n, seed=rng.seed)
    if max(a.bounding_radius, b.bounding_radius) > r:
        raise ValueError("both unions must lie inside the launch sphere")
    r_escape = _resolve_escape(
        params, max(a.bounding_radius, b.bounding_radius), r)

    def score(gen, kind, pos, w):
        s = _ordered_hit_scores(gen, kind, pos, w, HIT_A, b, r, r_escape,
                                params)
        s += _ordered_hit_scores(gen, kind, pos, w, HIT_B, a, r, r_escape,
                                 params)
        return s

    return _sphere_average(rng, a, b, r, n, params, workers, score)


def eps_estimate(rng: RngStream, a: BallUnion, b: BallUnion, r: float,
                 n: int, params: WosParams | None = None,
                 workers: int = 1) -> Estimate:
    """Simultaneous-hit cross term epsilon_r(A, B).

    A tie is declared when the terminal walker position is within eps_hit
    of both unions; for unions sharing whole balls this consistently
    estimates the capacity contribution of the common part.
    """
    params = params or WosParams()
    if a.is_empty or b.is_empty:
        return Estimate(mean=0.0, std_error=0.0, n=n, seed=rng.seed)
    if max(a.bounding_radius, b.bounding_radius) > r:
        raise ValueError("both unions must lie inside the launch sphere")

    def score(gen, kind, pos, w):
        return w * (kind == HIT_TIE)

    return _sphere_average(rng, a, b, r, n, params, workers, score)


def decomp_residual(rng: RngStream, a: BallUnion, b: BallUnion, n: int,
                    params: WosParams | None = None,
                    workers: int = 1) -> Estimate:
    """Residual Cap(A u B) - Cap(A) - Cap(B) + chi_r + eps_r.

    An identity of the decomposition formula, so the mean is zero up to
    Monte Carlo error; the five terms use independent child streams and
    the errors combine in quadrature.  The cross-term radius is twice the
    bounding radius of the combined union (after recentering both unions
    by their common centroid).
    """
    params = params or WosParams()
    if a.is_empty or b.is_empty:
        raise ValueError("decomposition needs two nonempty unions")
    centroid = np.concatenate([a.centers, b.centers]).mean(axis=0)
    at = a.translated(-centroid)
    bt = b.translated(-centroid)
    r = 2.0 * max(at.bounding_radius, bt.bounding_radius)
    cap_ab = cap_union_estimate(rng.child(0), at, bt, n, params, workers)
    cap_a = cap_estimate(rng.child(1), at, n, params, workers)
    cap_b = cap_estimate(rng.child(2), bt, n, params, workers)
    chi = chi_estimate(rng.child(3), at, bt, r, n, params, workers)
    eps = eps_estimate(rng.child(4), at, bt, r, n, params, workers)
    return Estimate.linear(
        [(1.0, cap_ab), (-1.0, cap_a), (-1.0, cap_b), (1.0, chi), (1.0, eps)],
        seed=rng.seed)


@dataclass(frozen=True)
class BlockingResult:
    """Blocking decomposition of a sausage capacity over dyadic time blocks."""

    cap_total: Estimate
    s_sum: Estimate
    xi_sum: Estimate
    upsilon_sum: Estimate
    residual: Estimate
    contained: bool


def blocking_decomposition(rng: RngStream, skeleton, levels: int, n: int,
                           params: WosParams | None = None, radius: float = 1.0,
                           workers: int = 1) -> BlockingResult:
    """Split [0, t] into 2^levels dyadic blocks and decompose the capacity.

    S sums the capacities of the block sausages; Xi and Upsilon sum the
    ordered and simultaneous cross terms over the dyadic pairing tree,
    all at the cross-term radius r(t) = sqrt(t) log(t).  On the event
    that the sausage is contained in B(0, r(t)) the identity
    Cap = S - Xi - Upsilon holds, and the residual estimates
    cap_total - S + Xi + Upsilon (zero in expectation); otherwise
    `contained` is False and the caller should discard the sample.
    """
    params = params or WosParams()
    t = skeleton.horizon
    pts = skeleton.points
    if 2 ** levels > len(skeleton) / 4:
        raise ValueError("too many levels for this skeleton size")
    r_t = math.sqrt(t) * math.log(t)
    full = BallUnion(pts, radius)
    contained = full.bounding_radius <= r_t
    if not contained:
        # the decomposition identity is only claimed on the containment
        # event; callers discard these samples
        zero = Estimate(mean=0.0, std_error=0.0, n=0, seed=rng.seed)
        return BlockingResult(cap_total=zero, s_sum=zero, xi_sum=zero,
                              upsilon_sum=zero, residual=zero,
                              contained=False)
    cap_total = cap_estimate(rng.child(0), full, n, params, workers)
    if levels == 0:
        zero = Estimate(mean=0.0, std_error=0.0, n=n, seed=rng.seed)
        return BlockingResult(cap_total=cap_total, s_sum=cap_total,
                              xi_sum=zero, upsilon_sum=zero,
                              residual=Estimate(0.0, 0.0, n, rng.seed),
                              contained=contained)
    edges = t * np.arange(2 ** levels + 1) / 2 ** levels
    starts = np.searchsorted(skeleton.times, edges[:-1], side="left")
    starts[0] = 0
    ends = np.append(starts[1:], len(skeleton))

    def block_union(i0: int, i1: int) -> BallUnion:
        lo, hi = starts[i0], ends[i1 - 1]
        return BallUnion(pts[lo:hi], radius)

    s_terms = [cap_estimate(rng.child(1, k), block_union(k, k + 1), n,
                            params, workers)
               for k in range(2 ** levels)]
    xi_terms, ups_terms = [], []
    width = 2 ** levels
    for lev in range(1, levels + 1):
        half = width // 2 ** lev
        for i in range(2 ** (lev - 1)):
            lo = 2 * i * half
            left = block_union(lo, lo + half)
            right = block_union(lo + half, lo + 2 * half)
            xi_terms.append(chi_estimate(rng.child(2, lev, i), left, right,
                                         r_t, n, params, workers))
            ups_terms.append(eps_estimate(rng.child(3, lev, i), left, right,
                                          r_t, n, params, workers))
    s_sum = Estimate.linear([(1.0, e) for e in s_terms], seed=rng.seed)
    xi_sum = Estimate.linear([(1.0, e) for e in xi_terms], seed=rng.seed)
    ups_sum = Estimate.linear([(1.0, e) for e in ups_terms], seed=rng.seed)
    residual = Estimate.linear(
        [(1.0, cap_total), (-1.0, s_sum), (1.0, xi_sum), (1.0, ups_sum)],
        seed=rng.seed)
    return BlockingResult(cap_total=cap_total, s_sum=s_sum, xi_sum=xi_sum,
                          upsilon_sum=ups_sum, residual=residual,
                          contained=contained)
