import filecmp
import json
import os
import subprocess
import sys

import pytest

from sausagefigs import (FigureSpec, SchemaError, load_spec_file, read_rows,
                         render_figures)

DATA = os.path.join(os.path.dirname(__file__), "data")


def fixture(name: str) -> str:
    return os.path.join(DATA, name)


# ---------------------------------------------------------------------------
# schema
# ---------------------------------------------------------------------------

def test_read_rows_parses_fixture():
    rows = read_rows(fixture("lln.csv"))
    assert rows[0]["experiment"] == "lln:scaled_mean"
    assert rows[0]["t"] == 100.0
    assert isinstance(rows[0]["n"], int)


def test_schema_mismatch_names_offending_column(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("experiment,kind,time,delta\nx,cap,1,0.1\n")
    with pytest.raises(SchemaError, match="column 2 is 'time'"):
        read_rows(str(bad))


def test_empty_file_rejected(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(SchemaError):
        read_rows(str(empty))


def test_header_only_rejected(tmp_path):
    from sausagefigs import CSV_COLUMNS
    p = tmp_path / "h.csv"
    p.write_text(",".join(CSV_COLUMNS) + "\n")
    with pytest.raises(SchemaError, match="no data rows"):
        read_rows(str(p))


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------

KIND_INPUT = {
    "LlnConvergence": "lln.csv",
    "D0Slope": "d0.csv",
    "DecompForest": "decomp.csv",
    "IntersectDecay": "intersect.csv",
}


@pytest.mark.parametrize("kind", sorted(KIND_INPUT))
def test_render_is_byte_deterministic(kind, tmp_path):
    out_a = str(tmp_path / f"{kind}_a")
    out_b = str(tmp_path / f"{kind}_b")
    inp = fixture(KIND_INPUT[kind])
    pa = render_figures(FigureSpec(kind=kind, inputs=(inp,), output=out_a))
    pb = render_figures(FigureSpec(kind=kind, inputs=(inp,), output=out_b))
    assert [p.rsplit(".", 1)[1] for p in pa] == ["png", "svg"]
    for a, b in zip(pa, pb):
        assert os.path.getsize(a) > 0
        assert filecmp.cmp(a, b, shallow=False), (a, b)


def test_lln_figure_has_reference_line(tmp_path):
    out = str(tmp_path / "lln")
    render_figures(FigureSpec(kind="LlnConvergence",
                              inputs=(fixture("lln.csv"),), output=out))
    svg = open(out + ".svg", encoding="utf-8").read()
    assert "39.478" in svg  # the 4 pi^2 reference label
    # three error-barred data points
    assert svg.count("errorbar") >= 1 or "use" in svg


def test_lln_reference_can_be_toggled_off(tmp_path):
    out = str(tmp_path / "lln_noref")
    render_figures(FigureSpec(kind="LlnConvergence",
                              inputs=(fixture("lln.csv"),), output=out,
                              show_four_pi_sq=False))
    svg = open(out + ".svg", encoding="utf-8").read()
    assert "39.478" not in svg


def test_d0_figure_has_slope_reference(tmp_path):
    out = str(tmp_path / "d0")
    render_figures(FigureSpec(kind="D0Slope", inputs=(fixture("d0.csv"),),
                              output=out))
    svg = open(out + ".svg", encoding="utf-8").read()
    assert "slope 1/8" in svg


def test_render_never_mutates_inputs(tmp_path):
    inp = fixture("decomp.csv")
    before = open(inp, "rb").read()
    render_figures(FigureSpec(kind="DecompForest", inputs=(inp,),
                              output=str(tmp_path / "forest")))
    assert open(inp, "rb").read() == before


def test_missing_rows_is_an_error(tmp_path):
    with pytest.raises(SchemaError, match="lln:scaled_mean"):
        render_figures(FigureSpec(kind="LlnConvergence",
                                  inputs=(fixture("d0.csv"),),
                                  output=str(tmp_path / "x")))


def test_unknown_kind_rejected():
    with pytest.raises(ValueError, match="unknown figure kind"):
        FigureSpec(kind="Sparkline", inputs=("x.csv",), output="y")


# ---------------------------------------------------------------------------
# spec files and CLI
# ---------------------------------------------------------------------------

def _spec_file(tmp_path, entries):
    path = tmp_path / "spec.json"
    path.write_text(json.dumps({"figures": entries}))
    return str(path)


def test_load_spec_file(tmp_path):
    spec = _spec_file(tmp_path, [{
        "kind": "LlnConvergence",
        "inputs": [fixture("lln.csv")],
        "output": str(tmp_path / "out"),
        "reference_lines": {"four_pi_sq": True, "two_pi_sq": True},
    }])
    specs = load_spec_file(spec)
    assert len(specs) == 1
    assert specs[0].show_two_pi_sq


def test_cli_renders_png_and_svg(tmp_path):
    spec = _spec_file(tmp_path, [
        {"kind": "LlnConvergence", "inputs": [fixture("lln.csv")],
         "output": str(tmp_path / "lln")},
        {"kind": "IntersectDecay", "inputs": [fixture("intersect.csv")],
         "output": str(tmp_path / "decay")},
    ])
    res = subprocess.run([sys.executable, "-m", "sausagefigs.cli",
                          "--spec", spec], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    for base in ("lln", "decay"):
        assert os.path.exists(tmp_path / f"{base}.png")
        assert os.path.exists(tmp_path / f"{base}.svg")


def test_cli_schema_error_exit_code(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("wrong,header\n1,2\n")
    spec = _spec_file(tmp_path, [{
        "kind": "LlnConvergence", "inputs": [str(bad)],
        "output": str(tmp_path / "x")}])
    res = subprocess.run([sys.executable, "-m", "sausagefigs.cli",
                          "--spec", spec], capture_output=True, text=True)
    assert res.returncode == 2
    assert "column" in res.stderr
