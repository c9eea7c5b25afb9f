"""Declarative experiment runner with deterministic, self-describing output.

Each experiment kind maps to a pipeline over the library estimators.  A
run is fully determined by (config, seed): work units derive their
streams by hashing (kind, t index, path index), estimators chunk their
walker budgets by fixed-size blocks, and partial results fold in index
order, so output files are byte-identical for any worker count.

Wall-clock timing is genuinely nondeterministic, so the wall_time_s
column is written as 0.0 unless timing is explicitly requested (the
determinism contract on the output bytes wins); real timings go to the
run log.
"""

from __future__ import annotations

import configparser
import json
import math
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .capacity import (Estimate, WosParams, blocking_decomposition,
                       cap_estimate, decomp_residual,
                       hit_probability_from_point)
from .functionals import (d0_functional_batch, pair_functional_expectation,
                          r_pair_conditional_batch, r_pair_functional_batch)
from .geometry import BallUnion, TWO_PI_SQ
from .paths import build_sausage, sample_skeleton, sausage_volume_estimate
from .rng import RngStream

KINDS = ("cap", "lln", "decomp", "d0", "volume", "intersect", "blocking",
         "pair")

CSV_HEADER = ("experiment,kind,t,delta,r_sausage,n_paths,n_walkers,seed,"
              "mean,std_error,n,wall_time_s,diag_escape_rate,diag_clip_count")

#: escape-by-max-steps rate above which a run is marked invalid
MAX_STEP_ESCAPE_TOLERANCE = 1e-3


class ConfigError(ValueError):
    """Raised with the full list of violated config fields."""

    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__("invalid experiment config:\n  " + "\n  ".join(errors))


@dataclass(frozen=True)
class ExperimentConfig:
    """Declarative description of one experiment sweep."""

    kind: str
    t_grid: tuple[float, ...]
    seed: int
    delta: float = 0.1
    r_sausage: float = 1.0
    n_paths: int = 100
    n_walkers: int = 10_000
    wos: WosParams = field(default_factory=WosParams)
    workers: int = 1
    out_path: str = ""
    levels: int = 1          # blocking: dyadic split depth
    z_norm: float = 40.0     # pair: second start distance

    def validate(self) -> None:
        errors = []
        if self.kind not in KINDS:
            errors.append(f"kind must be one of {KINDS}, got {self.kind!r}")
        if len(self.t_grid) == 0:
            errors.append("t_grid must not be empty")
        elif any(b <= a for a, b in zip(self.t_grid, self.t_grid[1:])):
            errors.append("t_grid must be strictly increasing")
        if any(t <= 0 for t in self.t_grid):
            errors.append("t_grid entries must be positive")
        if self.delta >= 1.0:
            errors.append("delta must be smaller than 1 (skeleton resolution)")
        if self.delta <= 0:
            errors.append("delta must be positive")
        if self.r_sausage <= 0:
            errors.append("r_sausage must be positive")
        if self.wos.eps_hit >= self.r_sausage:
            errors.append("eps_hit must be smaller than the sausage radius")
        if (self.wos.r_escape is not None
                and self.wos.r_escape <= 2.0 * max(self.r_sausage, 1.0)):
            errors.append("r_escape must exceed the launch radius")
        if self.n_paths < 1:
            errors.append("n_paths must be at least 1")
        if self.n_walkers < 1:
            errors.append("n_walkers must be at least 1")
        if self.workers < 1:
            errors.append("workers must be at least 1")
        if self.levels < 0:
            errors.append("levels must be nonnegative")
        if errors:
            raise ConfigError(errors)


@dataclass(frozen=True)
class ResultRow:
    """One output row; reproducible from (config, seed) alone."""

    experiment: str
    kind: str
    t: float
    delta: float
    r_sausage: float
    n_paths: int
    n_walkers: int
    seed: int
    mean: float
    std_error: float
    n: int
    wall_time_s: float = 0.0
    diag_escape_rate: float = 0.0
    diag_clip_count: int = 0

    FIELDS = ("experiment", "kind", "t", "delta", "r_sausage", "n_paths",
              "n_walkers", "seed", "mean", "std_error", "n", "wall_time_s",
              "diag_escape_rate", "diag_clip_count")


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def write_results(rows: list[ResultRow], path: str, format: str = "csv") -> None:
    """Write rows as CSV or JSON, atomically (temp file plus rename).

    The CSV header and the float serialization (17 significant digits)
    are part of the output contract; rewriting the same rows produces a
    byte-identical file.
    """
    if not rows:
        raise ValueError("refusing to write an empty result set")
    if format not in ("csv", "json"):
        raise ValueError("format must be 'csv' or 'json'")
    if format == "csv":
        lines = [CSV_HEADER]
        lines += [",".join(_fmt(getattr(r, f)) for f in ResultRow.FIELDS)
                  for r in rows]
        payload = "\n".join(lines) + "\n"
    else:
        payload = json.dumps(
            [{f: getattr(r, f) for f in ResultRow.FIELDS} for r in rows],
            indent=1) + "\n"
    tmp = f"{path}.tmp{os.getpid()}"
    try:
        with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except OSError:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_results_csv(path: str) -> list[ResultRow]:
    """Parse a CSV written by write_results back into rows."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError(f"unexpected CSV header in {path}")
    rows = []
    for line in lines[1:]:
        parts = line.split(",")
        vals = dict(zip(ResultRow.FIELDS, parts))
        rows.append(ResultRow(
            experiment=vals["experiment"], kind=vals["kind"],
            t=float(vals["t"]), delta=float(vals["delta"]),
            r_sausage=float(vals["r_sausage"]), n_paths=int(vals["n_paths"]),
            n_walkers=int(vals["n_walkers"]), seed=int(vals["seed"]),
            mean=float(vals["mean"]), std_error=float(vals["std_error"]),
            n=int(vals["n"]), wall_time_s=float(vals["wall_time_s"]),
            diag_escape_rate=float(vals["diag_escape_rate"]),
            diag_clip_count=int(vals["diag_clip_count"])))
    return rows


# ---------------------------------------------------------------------------
# pipelines
# ---------------------------------------------------------------------------

def _row(config: ExperimentConfig, experiment: str, t: float, mean: float,
         std_error: float, n: int, escape_rate: float = 0.0,
         clip_count: int = 0) -> ResultRow:
    return ResultRow(
        experiment=experiment, kind=config.kind, t=t, delta=config.delta,
        r_sausage=config.r_sausage, n_paths=config.n_paths,
        n_walkers=config.n_walkers, seed=config.seed, mean=mean,
        std_error=std_error, n=n, diag_escape_rate=escape_rate,
        diag_clip_count=clip_count)


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    m = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(values.size)) \
        if values.size > 1 else 0.0
    return m, se


def _escape_rate(est: Estimate) -> float:
    n = est.diag.get("n_walkers", est.n) or 1
    return est.diag.get("max_step_escapes", 0) / n


def _run_cap(config: ExperimentConfig) -> list[ResultRow]:
    """Ball-capacity oracle battery: t_grid doubles as the radius grid."""
    base = RngStream(config.seed, 0)
    rows = []
    for ti, rho in enumerate(config.t_grid):
        ball = BallUnion(np.zeros((1, 4)), rho)
        est = cap_estimate(base.child(0, ti), ball, config.n_walkers,
                           config.wos, config.workers)
        rows.append(_row(config, f"cap:rho={rho:g}", rho, est.mean,
                         est.std_error, est.n, _escape_rate(est)))
        rows.append(_row(config, f"cap:exact:rho={rho:g}", rho,
                         TWO_PI_SQ * rho * rho, 0.0, 1))
    return rows


def _run_lln(config: ExperimentConfig) -> list[ResultRow]:
    """Scaled capacity (log t / t) Cap(W_r[0,t]) across the t grid."""
    base = RngStream(config.seed, 1)
    rows = []
    for ti, t in enumerate(config.t_grid):
        scaled = np.empty(config.n_paths)
        caps = np.empty(config.n_paths)
        esc = 0
        for p in range(config.n_paths):
            stream = base.child(1, ti, p)
            sk = sample_skeleton(stream.child(0), np.zeros(4), t, config.delta)
            union = build_sausage(sk, config.r_sausage)
            est = cap_estimate(stream.child(1), union, config.n_walkers,
                               config.wos, config.workers)
            caps[p] = est.mean
            scaled[p] = est.mean * math.log(t) / t
            esc += est.diag.get("max_step_escapes", 0)
        rate = esc / (config.n_paths * config.n_walkers)
        m, se = _mean_se(scaled)
        rows.append(_row(config, "lln:scaled_mean", t, m, se,
                         config.n_paths, rate))
        var = float(caps.var(ddof=1)) if config.n_paths > 1 else 0.0
        var_se = var * math.sqrt(2.0 / max(config.n_paths - 1, 1))
        rows.append(_row(config, "lln:path_var", t, var, var_se,
                         config.n_paths, rate))
        rows.append(_row(config, "lln:spread_over_mean", t,
                         float(np.sqrt(var) / caps.mean()), 0.0,
                         config.n_paths, rate))
    return rows


def decomp_battery() -> list[tuple[str, BallUnion, BallUnion]]:
    """The built-in two-union battery: disjoint, overlapping, nested.

    Overlapping pairs share whole balls (so the intersection is itself a
    ball union and the epsilon bound is checkable); nested pairs put every
    ball of A strictly inside a ball of B.
    """
    e = lambda x: np.array([[x, 0.0, 0.0, 0.0]])
    e2 = lambda x, y: np.array([[x, y, 0.0, 0.0]])
    cfgs: list[tuple[str, BallUnion, BallUnion]] = []
    # disjoint unit-ball pairs at growing separation
    for i, d in enumerate((3.0, 4.0, 6.0, 9.0, 14.0)):
        cfgs.append((f"disjoint_d{d:g}", BallUnion(e(0.0), 1.0),
                     BallUnion(e(d), 1.0)))
    # disjoint with different radii
    cfgs.append(("disjoint_radii", BallUnion(e(0.0), 0.5),
                 BallUnion(e(4.0), 1.5)))
    # overlapping as sets (lens), no shared balls
    for d in (1.0, 1.5):
        cfgs.append((f"lens_d{d:g}", BallUnion(e(0.0), 1.0),
                     BallUnion(e(d), 1.0)))
    # shared-ball overlaps: A = U + S, B = V + S
    shared = e(0.0)
    cfgs.append(("shared_one", BallUnion(np.vstack([shared, e(3.0)]), 1.0),
                 BallUnion(np.vstack([shared, e(-3.0)]), 1.0)))
    cfgs.append(("shared_two",
                 BallUnion(np.vstack([shared, e2(0.0, 3.0), e(4.0)]), 1.0),
                 BallUnion(np.vstack([shared, e2(0.0, 3.0), e(-4.0)]), 1.0)))
    cfgs.append(("shared_far", BallUnion(np.vstack([shared, e(6.0)]), 1.0),
                 BallUnion(np.vstack([shared, e(-6.0)]), 1.0)))
    # nested: balls of A inside single balls of B
    cfgs.append(("nested_ball", BallUnion(e(0.0), 0.5),
                 BallUnion(e(0.0), 2.0)))
    cfgs.append(("nested_offset", BallUnion(e(0.5), 0.5),
                 BallUnion(e(0.0), 2.0)))
    cfgs.append(("nested_pair",
                 BallUnion(np.vstack([e(0.0), e(5.0)]), 0.5),
                 BallUnion(np.vstack([e(0.0), e(5.0)]), 1.5)))
    # clusters of several balls
    cfgs.append(("cluster_3v2",
                 BallUnion(np.vstack([e(0.0), e2(0.0, 1.2), e2(1.2, 0.0)]), 1.0),
                 BallUnion(np.vstack([e(4.0), e2(4.0, 1.2)]), 1.0)))
    cfgs.append(("cluster_line",
                 BallUnion(np.vstack([e(-2.0), e(-4.0)]), 1.0),
                 BallUnion(np.vstack([e(2.0), e(4.0)]), 1.0)))
    cfgs.append(("cluster_mixed",
                 BallUnion(np.vstack([e(0.0), e2(0.0, 2.0)]), 1.0),
                 BallUnion(np.vstack([e(5.0), e2(5.0, 2.0)]), 0.8)))
    # asymmetric sizes
    cfgs.append(("asym_small", BallUnion(e(0.0), 0.5),
                 BallUnion(e(2.5), 1.0)))
    cfgs.append(("asym_large", BallUnion(e(0.0), 2.0),
                 BallUnion(e(7.0), 1.0)))
    cfgs.append(("tangentish", BallUnion(e(0.0), 1.0),
                 BallUnion(e(2.05), 1.0)))
    return cfgs


def _run_decomp(config: ExperimentConfig) -> list[ResultRow]:
    base = RngStream(config.seed, 2)
    rows = []
    for i, (name, a, b) in enumerate(decomp_battery()):
        est = decomp_residual(base.child(2, i), a, b, config.n_walkers,
                              config.wos, config.workers)
        rows.append(_row(config, f"decomp:residual:{name}", float(i),
                         est.mean, est.std_error, est.n, _escape_rate(est)))
    return rows


def _run_d0(config: ExperimentConfig) -> list[ResultRow]:
    base = RngStream(config.seed, 3)
    rows = []
    h = 0.01
    for ti, t in enumerate(config.t_grid):
        values, _ = d0_functional_batch(base.child(3, ti), config.n_paths,
                                        np.zeros(4), t, h)
        m, se = _mean_se(values)
        rows.append(_row(config, "d0:mean", t, m, se, config.n_paths))
        frac = float((np.abs(values / m - 1.0) <= 0.25).mean())
        frac_se = math.sqrt(max(frac * (1 - frac), 0.0) / config.n_paths)
        rows.append(_row(config, "d0:frac_within_25pct", t, frac, frac_se,
                         config.n_paths))
        m2 = float((values ** 2).mean())
        rows.append(_row(config, "d0:second_moment_ratio", t, m2 / m ** 2,
                         0.0, config.n_paths))
    return rows


def _run_volume(config: ExperimentConfig) -> list[ResultRow]:
    """Sausage volume per unit time; n_walkers doubles as probe count."""
    base = RngStream(config.seed, 4)
    rows = []
    for ti, t in enumerate(config.t_grid):
        vols = np.empty(config.n_paths)
        for p in range(config.n_paths):
            stream = base.child(4, ti, p)
            sk = sample_skeleton(stream.child(0), np.zeros(4), t, config.delta)
            est = sausage_volume_estimate(stream.child(1), sk,
                                          config.r_sausage,
                                          max(config.n_walkers, 1000))
            vols[p] = est.mean / t
        m, se = _mean_se(vols)
        rows.append(_row(config, "volume:mean_over_t", t, m, se,
                         config.n_paths))
    return rows


def _run_intersect(config: ExperimentConfig) -> list[ResultRow]:
    """Sausage-hitting probabilities from distance ||z|| ~ sqrt(t).

    The event that a second infinite-horizon sausage of radius 1/2 meets
    W_{1/2}[0,t] equals the event that the second motion hits the radius-1
    sausage of the first path, so each probe is an exact walk-on-spheres
    hitting run (no second-path truncation at all).  The three-motion
    double-intersection probability multiplies the conditional hit
    fractions of two independent walker groups from z and its reflection.
    """
    base = RngStream(config.seed, 5)
    rows = []
    m_walkers = max(4, min(config.n_walkers, 64))
    factors = (0.25, 1.0, 4.0)
    for ti, t in enumerate(config.t_grid):
        singles = {f: np.empty(config.n_paths) for f in factors}
        doubles = {f: np.empty(config.n_paths) for f in factors}
        esc = 0
        nw = 0
        for p in range(config.n_paths):
            stream = base.child(5, ti, p)
            sk = sample_skeleton(stream.child(0), np.zeros(4), t, config.delta)
            union = build_sausage(sk, 1.0)
            for fi, f in enumerate(factors):
                z = np.array([f * math.sqrt(t), 0.0, 0.0, 0.0])
                fr1, e1 = hit_probability_from_point(
                    stream.child(1, fi), union, z, m_walkers, config.wos)
                fr2, e2 = hit_probability_from_point(
                    stream.child(2, fi), union, -z, m_walkers, config.wos)
                singles[f][p] = fr1
                doubles[f][p] = fr1 * fr2
                esc += e1 + e2
                nw += 2 * m_walkers
        for f in factors:
            rate = esc / max(nw, 1)
            m, se = _mean_se(singles[f])
            rows.append(_row(config, f"intersect:single:f={f:g}", t, m, se,
                             config.n_paths, rate))
            z2 = (f * math.sqrt(t)) ** 2
            norm = min(1.0, t / z2) / math.log(t)
            rows.append(_row(config, f"intersect:single_norm:f={f:g}", t,
                             m / norm, se / norm, config.n_paths, rate))
            md, sed = _mean_se(doubles[f])
            rows.append(_row(config, f"intersect:double:f={f:g}", t, md, sed,
                             config.n_paths, rate))
    return rows


def _run_blocking(config: ExperimentConfig) -> list[ResultRow]:
    base = RngStream(config.seed, 6)
    rows = []
    for ti, t in enumerate(config.t_grid):
        parts = {"residual": [], "cap_total": [], "s_sum": [], "xi_sum": [],
                 "upsilon_sum": []}
        discarded = 0
        for p in range(config.n_paths):
            stream = base.child(6, ti, p)
            sk = sample_skeleton(stream.child(0), np.zeros(4), t, config.delta)
            res = blocking_decomposition(stream.child(1), sk, config.levels,
                                         config.n_walkers, config.wos,
                                         config.r_sausage, config.workers)
            if not res.contained:
                discarded += 1
                continue
            parts["residual"].append(res.residual.mean)
            parts["cap_total"].append(res.cap_total.mean)
            parts["s_sum"].append(res.s_sum.mean)
            parts["xi_sum"].append(res.xi_sum.mean)
            parts["upsilon_sum"].append(res.upsilon_sum.mean)
        for name, vals in parts.items():
            if not vals:
                continue
            m, se = _mean_se(np.asarray(vals))
            rows.append(_row(config, f"blocking:{name}:L={config.levels}", t,
                             m, se, len(vals), discarded / config.n_paths))
        rows.append(_row(config, f"blocking:discarded:L={config.levels}", t,
                         float(discarded), 0.0, config.n_paths))
    return rows


def _run_pair(config: ExperimentConfig) -> list[ResultRow]:
    """Pair functional R[0,t] between paths from 0 and from distance z_norm.

    Emits the conditioned estimator (second path integrated out exactly),
    the literal two-path estimator at the truncated horizon 100 t, and
    the quadrature oracles for both horizons.
    """
    base = RngStream(config.seed, 7)
    rows = []
    for ti, t in enumerate(config.t_grid):
        h = min(0.05, t / 1000.0)
        z = np.array([config.z_norm, 0.0, 0.0, 0.0])
        t_tilde = 100.0 * t
        cond = r_pair_conditional_batch(base.child(7, ti, 0), config.n_paths,
                                        z, t, h)
        m, se = _mean_se(cond)
        rows.append(_row(config, "pair:conditional", t, m, se,
                         config.n_paths))
        two = r_pair_functional_batch(base.child(7, ti, 1), config.n_walkers,
                                      z, t, t_tilde, h)
        m2, se2 = _mean_se(two)
        rows.append(_row(config, "pair:two_path", t, m2, se2,
                         config.n_walkers))
        oracle = pair_functional_expectation(config.z_norm, t)
        rows.append(_row(config, "pair:oracle", t, oracle, 0.0, 1))
        oracle_tr = pair_functional_expectation(config.z_norm, t, t_tilde)
        rows.append(_row(config, "pair:oracle_truncated", t, oracle_tr,
                         0.0, 1))
    return rows


_PIPELINES = {
    "cap": _run_cap,
    "lln": _run_lln,
    "decomp": _run_decomp,
    "d0": _run_d0,
    "volume": _run_volume,
    "intersect": _run_intersect,
    "blocking": _run_blocking,
    "pair": _run_pair,
}


def run_experiment(config: ExperimentConfig,
                   timing: bool = False) -> list[ResultRow]:
    """Dispatch the configured pipeline; rows in deterministic order.

    Any row whose max-steps escape rate exceeds the tolerance is marked
    invalid by suffixing its experiment id; the CLI maps that to a
    dedicated exit code.
    """
    config.validate()
    t0 = time.perf_counter()
    rows = _PIPELINES[config.kind](config)
    elapsed = time.perf_counter() - t0
    out = []
    for r in rows:
        if r.diag_escape_rate > MAX_STEP_ESCAPE_TOLERANCE:
            r = replace(r, experiment=r.experiment + ":invalid")
        if timing:
            r = replace(r, wall_time_s=elapsed)
        out.append(r)
    return out


def lln_sweep(config: ExperimentConfig) -> list[ResultRow]:
    """Law-of-large-numbers sweep (kind must be 'lln')."""
    if config.kind != "lln":
        raise ConfigError(["lln_sweep requires kind = 'lln'"])
    return run_experiment(config)


def intersect_sweep(config: ExperimentConfig) -> list[ResultRow]:
    """Intersection-probability sweep (kind must be 'intersect')."""
    if config.kind != "intersect":
        raise ConfigError(["intersect_sweep requires kind = 'intersect'"])
    return run_experiment(config)


# ---------------------------------------------------------------------------
# config file parsing
# ---------------------------------------------------------------------------

_DEFAULT_T_GRID = {
    "cap": (0.5, 1.0, 2.0, 4.0),
    "lln": (1e2, 1e3, 1e4),
    "decomp": (1.0,),
    "d0": (1e2, 1e3, 1e4, 1e5),
    "volume": (500.0,),
    "intersect": (1e2, 1e3, 1e4),
    "blocking": (1e2,),
    "pair": (25.0,),
}


def config_from_file(path: str, kind: str, overrides: dict) -> ExperimentConfig:
    """Build a config from an INI file plus CLI overrides.

    Sections: [common] (seed, workers, out, format, timing), [wos]
    (eps_hit, r_escape, max_steps, restart_mode) and one flat section per
    experiment kind.  Every value is optional; defaults are echoed into
    the output so results are self-describing.
    """
    parser = configparser.ConfigParser()
    if path:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    merged: dict = {}
    for section in ("common", kind):
        if parser.has_section(section):
            merged.update(dict(parser.items(section)))
    wos_kw: dict = {}
    if parser.has_section("wos"):
        wos_kw.update(dict(parser.items("wos")))
    merged.update({k: v for k, v in overrides.items() if v is not None})
    for key in ("eps_hit", "r_escape", "max_steps", "restart_mode"):
        if key in merged:
            wos_kw[key] = merged.pop(key)

    def fget(d, key, cast, default):
        if key not in d or d[key] in (None, ""):
            return default
        raw = d.pop(key)
        return cast(raw)

    t_grid = merged.pop("t_grid", None)
    if isinstance(t_grid, str):
        t_grid = tuple(float(x) for x in t_grid.replace(",", " ").split())
    elif t_grid is not None:
        t_grid = tuple(float(x) for x in t_grid)
    else:
        t_grid = _DEFAULT_T_GRID[kind]
    wos = WosParams(
        eps_hit=fget(wos_kw, "eps_hit", float, 1e-3),
        r_escape=fget(wos_kw, "r_escape", float, None),
        max_steps=fget(wos_kw, "max_steps", int, 100_000),
        restart_mode=fget(wos_kw, "restart_mode", str, "roulette"))
    seed = fget(merged, "seed", int, None)
    if seed is None:
        raise ConfigError(["seed is required for result-bearing runs"])
    cfg = ExperimentConfig(
        kind=kind,
        t_grid=t_grid,
        seed=seed,
        delta=fget(merged, "delta", float, 0.1),
        r_sausage=fget(merged, "r_sausage", float, 1.0),
        n_paths=fget(merged, "n_paths", int, 100),
        n_walkers=fget(merged, "n_walkers", int, 10_000),
        wos=wos,
        workers=fget(merged, "workers", int, 1),
        out_path=fget(merged, "out", str, ""),
        levels=fget(merged, "levels", int, 1),
        z_norm=fget(merged, "z_norm", float, 40.0))
    cfg.validate()
    return cfg
