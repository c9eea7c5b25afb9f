"""Publication-style figures from result CSVs.

Four figure kinds: scaled-capacity convergence toward 4 pi^2, the D0 mean
against log t with the reference slope 1/8, a forest plot of
decomposition residuals, and intersection-probability decay on log-log
axes.  Error bars are +-2 standard errors everywhere; every number shown
comes from the CSV.  Output is deterministic: fixed svg hash salt, no
date metadata, fixed fonts and dpi.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .schema import SchemaError, read_rows, select  # noqa: E402

FOUR_PI_SQ = 4.0 * math.pi ** 2
TWO_PI_SQ = 2.0 * math.pi ** 2

FIGURE_KINDS = ("LlnConvergence", "D0Slope", "DecompForest", "IntersectDecay")

matplotlib.rcParams.update({
    "svg.hashsalt": "sausagefigs",
    "figure.dpi": 120,
    "savefig.dpi": 120,
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
})


@dataclass(frozen=True)
class FigureSpec:
    """One figure job: input CSVs, kind, output path base, reference toggles."""

    kind: str
    inputs: tuple[str, ...]
    output: str
    show_four_pi_sq: bool = True
    show_two_pi_sq: bool = False
    show_slope_eighth: bool = True

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}; "
                             f"expected one of {FIGURE_KINDS}")
        if not self.inputs:
            raise ValueError("figure spec needs at least one input CSV")


def load_spec_file(path: str) -> list[FigureSpec]:
    """Parse a JSON spec file: {"figures": [{kind, inputs, output, ...}]}."""
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    specs = []
    for item in data.get("figures", []):
        refs = item.get("reference_lines", {})
        specs.append(FigureSpec(
            kind=item["kind"],
            inputs=tuple(item["inputs"]),
            output=item["output"],
            show_four_pi_sq=bool(refs.get("four_pi_sq", True)),
            show_two_pi_sq=bool(refs.get("two_pi_sq", False)),
            show_slope_eighth=bool(refs.get("slope_eighth", True))))
    if not specs:
        raise ValueError(f"{path}: no figures declared")
    return specs


def _rows_for(spec: FigureSpec, prefix: str) -> list[dict]:
    rows: list[dict] = []
    for path in spec.inputs:
        rows.extend(select(read_rows(path), prefix))
    if not rows:
        raise SchemaError(
            f"no rows with experiment prefix {prefix!r} in {spec.inputs}")
    return rows


def _save(fig, base: str) -> list[str]:
    written = []
    for ext in ("png", "svg"):
        path = f"{base}.{ext}"
        # Date metadata is the only run-dependent output; scrub it.
        meta = {"Date": None} if ext == "svg" else None
        fig.savefig(path, metadata=meta)
        written.append(path)
    plt.close(fig)
    return written


def _lln_convergence(spec: FigureSpec) -> list[str]:
    rows = sorted(_rows_for(spec, "lln:scaled_mean"), key=lambda r: r["t"])
    fig, ax = plt.subplots(figsize=(5.4, 3.6))
    ts = [r["t"] for r in rows]
    ax.errorbar(ts, [r["mean"] for r in rows],
                yerr=[2 * r["std_error"] for r in rows],
                fmt="o-", capsize=3, color="#1f5fa8", label="(log t / t) Cap")
    if spec.show_four_pi_sq:
        ax.axhline(FOUR_PI_SQ, color="#c23b22", ls="--",
                   label=f"4 pi^2 = {FOUR_PI_SQ:.3f}")
    if spec.show_two_pi_sq:
        ax.axhline(TWO_PI_SQ, color="#777777", ls=":",
                   label=f"2 pi^2 = {TWO_PI_SQ:.3f}")
    ax.set_xscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel("scaled capacity")
    ax.set_title("Scaled sausage capacity")
    ax.legend(loc="best")
    fig.tight_layout()
    return _save(fig, spec.output)


def _d0_slope(spec: FigureSpec) -> list[str]:
    rows = sorted(_rows_for(spec, "d0:mean"), key=lambda r: r["t"])
    fig, ax = plt.subplots(figsize=(5.4, 3.6))
    ts = [r["t"] for r in rows]
    means = [r["mean"] for r in rows]
    ax.errorbar(ts, means, yerr=[2 * r["std_error"] for r in rows],
                fmt="s-", capsize=3, color="#1f5fa8", label="mean D0[0,t]")
    if spec.show_slope_eighth and len(rows) >= 2:
        # guide with slope 1/8 in log t, anchored at the first data point
        x0, y0 = math.log(ts[0]), means[0]
        guide = [y0 + 0.125 * (math.log(t) - x0) for t in ts]
        ax.plot(ts, guide, ls="--", color="#c23b22",
                label="reference slope 1/8")
    ax.set_xscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel("mean D0")
    ax.set_title("Occupation functional growth")
    ax.legend(loc="best")
    fig.tight_layout()
    return _save(fig, spec.output)


def _decomp_forest(spec: FigureSpec) -> list[str]:
    rows = _rows_for(spec, "decomp:residual")
    fig, ax = plt.subplots(figsize=(5.8, 0.32 * len(rows) + 1.6))
    ys = range(len(rows))
    ax.errorbar([r["mean"] for r in rows], list(ys),
                xerr=[2 * r["std_error"] for r in rows],
                fmt="o", capsize=3, color="#1f5fa8")
    ax.axvline(0.0, color="#c23b22", ls="--")
    labels = [r["experiment"].rsplit(":", 1)[-1] for r in rows]
    ax.set_yticks(list(ys), labels, fontsize=7)
    ax.invert_yaxis()
    ax.set_xlabel("residual Cap(A u B) - Cap(A) - Cap(B) + chi + eps")
    ax.set_title("Decomposition residuals (expected 0)")
    fig.tight_layout()
    return _save(fig, spec.output)


def _intersect_decay(spec: FigureSpec) -> list[str]:
    rows = _rows_for(spec, "intersect:single:")
    groups: dict[str, list[dict]] = {}
    for r in rows:
        groups.setdefault(r["experiment"], []).append(r)
    fig, ax = plt.subplots(figsize=(5.4, 3.6))
    colors = ("#1f5fa8", "#c23b22", "#3c8031", "#8a51a5")
    for color, (name, grp) in zip(colors, sorted(groups.items())):
        grp = sorted(grp, key=lambda r: r["t"])
        ax.errorbar([r["t"] for r in grp], [max(r["mean"], 1e-12) for r in grp],
                    yerr=[2 * r["std_error"] for r in grp], fmt="o-",
                    capsize=3, color=color, label=name.rsplit(":", 1)[-1])
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel("intersection probability")
    ax.set_title("Sausage intersection decay")
    ax.legend(loc="best", fontsize=8, title="start distance")
    fig.tight_layout()
    return _save(fig, spec.output)


_RENDERERS = {
    "LlnConvergence": _lln_convergence,
    "D0Slope": _d0_slope,
    "DecompForest": _decomp_forest,
    "IntersectDecay": _intersect_decay,
}


def render_figures(specs: FigureSpec | list[FigureSpec]) -> list[str]:
    """Render each spec to <output>.png and <output>.svg; returns paths."""
    if isinstance(specs, FigureSpec):
        specs = [specs]
    written: list[str] = []
    for spec in specs:
        written.extend(_RENDERERS[spec.kind](spec))
    return written
