"""Brownian path sampling: fixed-step paths, delta-skeletons, dyadic shells.

The delta-skeleton records the positions Z_i and times tau_i at which the
path leaves successive balls of radius delta.  Consecutive points are at
distance exactly delta; the gaps tau_{i+1} - tau_i are delta^2 times
independent unit-ball exit times.  Exit positions are exact (uniform on
the sphere by isotropy); exit times come from a fine-step simulation of
the radial crossing with a Brownian-bridge correction, whose mean is
certified against the exact value E[tau] = 1/4 from optional stopping of
the martingale ||B_s||^2 - 4s.

Bulk skeleton generation draws gaps from a quantile table built once from
the certified sampler (a direct fine-step draw per gap would cost ~10^3
Gaussian steps per sample, which is prohibitive at ~4 t / delta^2 gaps per
path).  The table is deterministic: fixed internal calibration seed, fixed
step, fixed size, cached on disk.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .capacity import Estimate
from .geometry import (BallUnion, GREEN_COEFF, ball4_volume, green_g,
                       sphere_sample)
from .rng import RngStream

#: Step of the fine-step exit-time simulation (certified bias < 0.1%).
EXIT_STEP = 1e-3
#: Size and internal seed of the cached exit-time quantile table.
EXIT_TABLE_SIZE = 400_000
_EXIT_TABLE_SEED = 0x0E5CA9E7AB1E
_EXIT_TABLE_VERSION = 1

#: Integrand clip for shell functionals (guards excursions toward the pole).
GREEN_CLIP = 1e6


# ---------------------------------------------------------------------------
# plain fixed-step paths
# ---------------------------------------------------------------------------

def gauss_step_path(rng: RngStream | np.random.Generator, start, t: float,
                    h: float) -> tuple[np.ndarray, np.ndarray]:
    """Fixed-step Brownian path: positions at times 0, h, ..., ceil(t/h) h.

    Increments are centered Gaussians with per-coordinate variance h, so
    the marginal at time k h has per-coordinate variance k h.
    Returns (times, positions) with shapes (k+1,) and (k+1, 4).
    """
    if h <= 0 or h > t:
        raise ValueError("step must satisfy 0 < h <= t")
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    k = int(np.ceil(t / h))
    pos = np.empty((k + 1, 4))
    pos[0] = np.asarray(start, dtype=float)
    steps = gen.standard_normal((k, 4)) * np.sqrt(h)
    np.cumsum(steps, axis=0, out=steps)
    pos[1:] = pos[0] + steps
    return np.arange(k + 1) * h, pos


# ---------------------------------------------------------------------------
# unit-ball exit times
# ---------------------------------------------------------------------------

def _simulate_exit_times(gen: np.random.Generator, n: int, h: float) -> np.ndarray:
    """Fine-step exit times from the unit ball for paths started at 0.

    Steps of variance h per coordinate; a crossing inside a step is
    detected either directly (endpoint outside) or via the local
    Brownian-bridge crossing probability exp(-2(1-a)(1-b)/h) of the radial
    part, which removes the O(sqrt(h)) bias of pure endpoint monitoring.
    The crossing instant is placed by linear interpolation in the radius.
    """
    out = np.empty(n)
    pos = np.zeros((n, 4))
    prev_r = np.zeros(n)
    alive = np.arange(n)
    s = np.sqrt(h)
    t = 0.0
    while alive.size:
        m = alive.size
        newpos = pos[alive] + gen.standard_normal((m, 4)) * s
        r = np.sqrt(np.einsum("ij,ij->i", newpos, newpos))
        a = prev_r[alive]
        direct = r >= 1.0
        interior = ~direct
        bridge = np.zeros(m, dtype=bool)
        if interior.any():
            pb = np.exp(-2.0 * (1.0 - a[interior]) * (1.0 - r[interior]) / h)
            hit = gen.random(pb.size) < pb
            bridge[np.flatnonzero(interior)[hit]] = True
        if direct.any():
            frac = (1.0 - a[direct]) / np.maximum(r[direct] - a[direct], 1e-300)
            out[alive[direct]] = t + frac * h
        if bridge.any():
            gap = (1.0 - a[bridge]) + (1.0 - r[bridge])
            frac = (1.0 - a[bridge]) / np.maximum(gap, 1e-300)
            out[alive[bridge]] = t + frac * h
        keep = ~(direct | bridge)
        pos[alive[keep]] = newpos[keep]
        prev_r[alive[keep]] = r[keep]
        alive = alive[keep]
        t += h
    return out


def sample_exit_time_unit_ball(rng: RngStream | np.random.Generator,
                               n: int | None = None,
                               h: float = EXIT_STEP) -> float | np.ndarray:
    """Exit time(s) of standard Brownian motion from the unit ball.

    Exact oracle for the mean: 1/4.  By Brownian scaling, delta^2 times a
    sample is a valid exit time from a ball of radius delta.
    """
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    out = _simulate_exit_times(gen, 1 if n is None else int(n), h)
    return float(out[0]) if n is None else out


def _cache_dir() -> str:
    base = os.environ.get("XDG_CACHE_HOME") or os.path.join(
        os.path.expanduser("~"), ".cache")
    path = os.path.join(base, "sausagelab")
    os.makedirs(path, exist_ok=True)
    return path


class ExitTimeTable:
    """Quantile table of the unit-ball exit time for O(1) bulk sampling.

    Draws are inverse-CDF interpolations through the sorted calibration
    sample, so the sampled law matches the fine-step law up to table
    resolution and the table is identical in every process (fixed seed,
    step and size; cached on disk as a plain .npy file).
    """

    _shared: "ExitTimeTable | None" = None

    def __init__(self, quantiles: np.ndarray):
        self.quantiles = np.ascontiguousarray(quantiles, dtype=float)
        k = self.quantiles.size
        self._probs = (np.arange(k) + 0.5) / k

    @classmethod
    def build(cls, h: float = EXIT_STEP, size: int = EXIT_TABLE_SIZE,
              batch: int = 100_000) -> "ExitTimeTable":
        gen = RngStream(_EXIT_TABLE_SEED, _EXIT_TABLE_VERSION).generator()
        parts = [_simulate_exit_times(gen, min(batch, size - i), h)
                 for i in range(0, size, batch)]
        return cls(np.sort(np.concatenate(parts)))

    @classmethod
    def cached(cls) -> "ExitTimeTable":
        if cls._shared is not None:
            return cls._shared
        fname = os.path.join(
            _cache_dir(),
            f"exit_time_quantiles_v{_EXIT_TABLE_VERSION}"
            f"_h{EXIT_STEP:g}_n{EXIT_TABLE_SIZE}.npy")
        if os.path.exists(fname):
            table = cls(np.load(fname))
        else:
            table = cls.build()
            tmp = fname[:-4] + f".tmp{os.getpid()}.npy"
            np.save(tmp, table.quantiles)
            os.replace(tmp, fname)
        cls._shared = table
        return table

    def sample(self, gen: np.random.Generator, n: int) -> np.ndarray:
        return np.interp(gen.random(n), self._probs, self.quantiles)

    @property
    def mean(self) -> float:
        return float(self.quantiles.mean())


# ---------------------------------------------------------------------------
# delta-skeletons and sausages
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PathSkeleton:
    """Exit chain of a Brownian path through balls of radius delta.

    points[i] is Z_i, times[i] is tau_i, with tau_0 = 0, consecutive
    points at distance exactly delta, times strictly increasing, and
    times[-1] <= horizon < next (unrecorded) exit time.
    """

    points: np.ndarray
    times: np.ndarray
    delta: float
    horizon: float

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def gaps(self) -> np.ndarray:
        """Complete exit gaps tau_{i+1} - tau_i between recorded entries."""
        return np.diff(self.times)

    def horizon_weights(self) -> np.ndarray:
        """Occupation weights min(tau_{i+1}, t) - min(tau_i, t) per entry.

        The final entry's exit time exceeds the horizon, so its weight is
        the remaining time t - tau_last.
        """
        w = np.empty(len(self))
        w[:-1] = self.gaps
        w[-1] = self.horizon - self.times[-1]
        return w


def sample_skeleton(rng: RngStream, start, t: float, delta: float,
                    table: ExitTimeTable | None = None) -> PathSkeleton:
    """Sample the delta-skeleton of a Brownian path on [0, t].

    Each hop is uniform on the delta-sphere around the previous point
    (exact by isotropy); each gap is delta^2 times an independent
    unit-ball exit time drawn from the calibrated table.  Recording stops
    at the last entry whose time is <= t.
    """
    if delta <= 0 or t <= 0:
        raise ValueError("delta and t must be positive")
    gen = rng.generator()
    if table is None:
        table = ExitTimeTable.cached()
    d2 = delta * delta
    n_est = int(4.0 * t / d2 * 1.1) + 64
    times = [np.zeros(1)]
    total, last = 0.0, 0.0
    while True:
        gaps = d2 * table.sample(gen, n_est)
        cum = last + np.cumsum(gaps)
        times.append(cum)
        last = cum[-1]
        total += gaps.size
        if last > t:
            break
    tau = np.concatenate(times)
    k = int(np.searchsorted(tau, t, side="right"))  # first index with tau > t
    tau = tau[:k]
    dirs = gen.standard_normal((k - 1, 4))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    pts = np.empty((k, 4))
    pts[0] = np.asarray(start, dtype=float)
    np.cumsum(dirs * delta, axis=0, out=dirs)
    pts[1:] = pts[0] + dirs
    return PathSkeleton(points=pts, times=tau, delta=delta, horizon=t)


def build_sausage(skeleton: PathSkeleton, r: float) -> BallUnion:
    """Union of radius-r balls over the skeleton points.

    For fixed skeleton, membership is monotone in r, which realizes the
    sandwich: the radius-1 skeleton sausage sits inside the true sausage,
    which sits inside the radius-(1+delta) skeleton sausage.
    """
    if len(skeleton) == 0:
        raise ValueError("cannot build a sausage from an empty skeleton")
    return BallUnion(skeleton.points, r)


def sausage_volume_estimate(rng: RngStream, skeleton: PathSkeleton, r: float,
                            n_probe: int) -> Estimate:
    """Hit-or-miss volume of the skeleton sausage of radius r.

    Uniform probes in the centroid-centered bounding ball of the union;
    the estimate is (fraction inside) times the bounding-ball volume with
    the binomial standard error.
    """
    if n_probe < 1000:
        raise ValueError("n_probe must be at least 1000")
    union = build_sausage(skeleton, r)
    gen = rng.generator()
    center = union.centroid
    rad = union.circumradius
    vol = ball4_volume(rad)
    dirs = gen.standard_normal((n_probe, 4))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    probes = center + dirs * (rad * gen.random(n_probe) ** 0.25)[:, None]
    frac = float(union.contains(probes).mean())
    se = vol * np.sqrt(max(frac * (1.0 - frac), 0.0) / n_probe)
    return Estimate(mean=vol * frac, std_error=se, n=n_probe, seed=rng.seed)


# ---------------------------------------------------------------------------
# dyadic shells
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ShellRecord:
    """Crossing times of the radii 2^i, shell functionals, and count.

    tau[i] is the first time the norm exceeds 2^i; y[i] is the Green
    integral over [tau_i, tau_{i+1}]; n_t = sup{i : tau_i <= t}.  The
    record always completes the shell containing t, so y has n_t + 1
    complete entries.
    """

    tau: np.ndarray
    y: np.ndarray
    n_t: int
    clip_count: int = 0


def dyadic_shell_records(rng: RngStream, n: int, t: float,
                         h: float = 0.01) -> list[ShellRecord]:
    """Simulate n independent shell records up to horizon t.

    The step inside shell i is h 4^i and each shell segment restarts from
    the radially projected crossing point, so the discretized Y_i are
    exactly i.i.d. across shells (Gaussian scaling plus the radial
    symmetry of the Green kernel); the integrand is clipped at GREEN_CLIP
    and clips are counted.  h must resolve the innermost shell (h <= 0.01).
    """
    if h > 0.01:
        raise ValueError("shell step h must be at most 0.01")
    if t <= 0:
        raise ValueError("horizon must be positive")
    gen = rng.generator()
    max_shells = 34
    pos = np.zeros((n, 4))
    prev_r = np.zeros(n)
    shell = np.zeros(n, dtype=np.int64)     # current shell regime i
    started = np.zeros(n, dtype=bool)       # past tau_0, accumulating Y
    clock = np.zeros(n)
    taus = np.full((n, max_shells + 1), np.nan)
    ys = np.zeros((n, max_shells))
    clips = np.zeros(n, dtype=np.int64)
    alive = np.arange(n)
    while alive.size:
        m = alive.size
        dt = h * 4.0 ** np.where(started[alive], shell[alive], 0)
        newpos = pos[alive] + gen.standard_normal((m, 4)) * np.sqrt(dt)[:, None]
        r = np.sqrt(np.einsum("ij,ij->i", newpos, newpos))
        thr = 2.0 ** np.where(started[alive], shell[alive] + 1, 0)
        # Green integrand at the segment start (left Riemann), clipped.
        g = np.zeros(m)
        acc = started[alive]
        if acc.any():
            rsq = np.maximum(prev_r[alive[acc]] ** 2, GREEN_COEFF / GREEN_CLIP)
            clipped = prev_r[alive[acc]] ** 2 < GREEN_COEFF / GREEN_CLIP
            if clipped.any():
                np.add.at(clips, alive[acc][clipped], 1)
            g[acc] = GREEN_COEFF / rsq
        crossed = r > thr
        frac = np.ones(m)
        if crossed.any():
            a = prev_r[alive[crossed]]
            b = r[crossed]
            frac[crossed] = np.clip(
                (thr[crossed] - a) / np.maximum(b - a, 1e-300), 0.0, 1.0)
        dt_used = dt * frac
        yi = np.minimum(shell[alive], max_shells - 1)
        np.add.at(ys, (alive[acc], yi[acc]), (g * dt_used)[acc])
        clock[alive] += dt_used
        if crossed.any():
            ci = alive[crossed]
            # Project the interpolated crossing point onto the sphere so the
            # next segment starts exactly on it (keeps shells scale-exact).
            interp = pos[ci] + frac[crossed, None] * (newpos[crossed] - pos[ci])
            nrm = np.linalg.norm(interp, axis=1, keepdims=True)
            interp *= thr[crossed, None] / np.maximum(nrm, 1e-300)
            pos[ci] = interp
            prev_r[ci] = thr[crossed]
            idx = np.where(started[ci], shell[ci] + 1, 0)
            taus[ci, idx] = clock[ci]
            done = started[ci] & ((clock[ci] > t) | (idx >= max_shells))
            shell[ci] = np.where(started[ci], shell[ci] + 1, 0)
            started[ci] = True
            keep_c = ~done
        else:
            keep_c = None
        nc = ~crossed
        pos[alive[nc]] = newpos[nc]
        prev_r[alive[nc]] = r[nc]
        if keep_c is None:
            alive = alive[nc]
        else:
            ci = alive[crossed]
            alive = np.concatenate([alive[nc], ci[keep_c]])
            alive.sort()
    records = []
    for i in range(n):
        row = taus[i]
        k = int(np.count_nonzero(~np.isnan(row)))
        tau_i = row[:k]
        n_t = int(np.searchsorted(tau_i, t, side="right")) - 1
        records.append(ShellRecord(tau=tau_i, y=ys[i, :max(k - 1, 0)].copy(),
                                   n_t=n_t, clip_count=int(clips[i])))
    return records


def dyadic_shell_record(rng: RngStream, t: float, h: float = 0.01) -> ShellRecord:
    """Single shell record; see dyadic_shell_records."""
    return dyadic_shell_records(rng, 1, t, h)[0]
