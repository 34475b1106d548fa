import csv
import re

import numpy as np
import pytest

from fsbp import io as fsbp_io
from fsbp.cli import EXIT_CRASH, EXIT_DIAGNOSTICS, EXIT_NOT_EXACT, EXIT_OK, EXIT_USAGE, main, parse_nodes, read_config
from fsbp.report import OutputTable, config_hash, emit_svg, format_value


# {{{ tables and svg


def test_output_table_text_and_footer():
    t = OutputTable("demo", ["a", "b"], config={"x": 1}, seed=7)
    t.add(1, 2.5e-7)
    t.add("name", True)
    lines = t.to_text().splitlines()
    assert lines[:3] == ["a,b", "1,2.500000e-07", "name,true"]
    assert lines[3:] == [
        "# table: demo",
        f"# config-hash: {config_hash({'x': 1})}",
        "# seed: 7",
        "# version: fsbp 0.1.0",
    ]
    assert t.to_text("tsv").splitlines()[0] == "a\tb"
    assert t.column("b") == [2.5e-7, True]


def test_output_table_validation():
    t = OutputTable("demo", ["a"])
    with pytest.raises(ValueError, match="1 columns"):
        t.add(1, 2)
    with pytest.raises(ValueError):
        t.to_text("json")


def test_config_hash_is_order_independent():
    assert config_hash({"a": 1, "b": 2}) == config_hash({"b": 2, "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})


def test_format_value():
    assert format_value(0.5) == "0.5"
    assert format_value(1.5e-5) == "1.500000e-05"
    assert format_value(float("nan")) == "nan"
    assert format_value(False) == "false"


def _series():
    x = np.linspace(0.25, 10, 40)
    return [(f"op{k}", x, 10.0 ** (-k) * (1 + x)) for k in range(4)]


def test_svg_structure():
    svg = emit_svg(_series(), xlabel="t", ylabel="error", title="demo", ylog=True)
    assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")
    assert svg.count("<polyline") == 4
    assert len(re.findall(r'class="legend"', svg)) == 4
    for k in range(4):
        assert f">op{k}<" in svg


def test_svg_is_deterministic():
    assert emit_svg(_series(), ylog=True) == emit_svg(_series(), ylog=True)


def test_svg_skips_nonfinite_points():
    svg = emit_svg([("a", [0, 1, 2], [1.0, float("nan"), 3.0])])
    points = re.search(r'points="([^"]*)"', svg).group(1).split()
    assert len(points) == 2


@pytest.mark.parametrize("series", [[], [("a", [], [])]])
def test_svg_rejects_empty(series):
    with pytest.raises(ValueError, match="nothing to plot"):
        emit_svg(series)


def test_svg_rejects_nonpositive_log_values():
    with pytest.raises(ValueError, match="log axis"):
        emit_svg([("a", [0, 1], [1.0, 0.0])], ylog=True)
    with pytest.raises(ValueError, match="log axis"):
        emit_svg([("a", [0, 1], [1.0, 2.0])], xlog=True)


def test_svg_length_mismatch():
    with pytest.raises(ValueError, match="2 x values"):
        emit_svg([("a", [0, 1], [1.0])])


# }}}


# {{{ argument helpers


def test_parse_nodes():
    nodes = parse_nodes("eq:-1,1,5")
    np.testing.assert_allclose(nodes.nodes, [-1, -0.5, 0, 0.5, 1])
    nodes = parse_nodes("list:0,0.3,1")
    assert (nodes.x_L, nodes.x_R, nodes.n) == (0.0, 1.0, 3)
    with pytest.raises(ValueError):
        parse_nodes("eq:0,1")
    with pytest.raises(ValueError):
        parse_nodes("cheb:4")


def test_parse_nodes_file(tmp_path):
    path = tmp_path / "nodes.txt"
    path.write_text("0.0 0.25\n0.5 1.0\n")
    assert parse_nodes(f"file:{path}").n == 4


def test_read_config(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# comment\n[construction]\nspace = poly:3\nmax_iters = 20\n[regularization]\nbasis = sin:pi\n")
    cfg = read_config(path)
    assert cfg["space"] == "poly:3"
    assert cfg["max_iters"] == "20"
    assert cfg["g"] == "sin:pi"


# }}}


# {{{ cli


def _run(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr()


def _fields(line):
    return dict(item.split("=", 1) for item in line.split())


def _read_csv(path):
    rows = [r for r in csv.reader(path.read_text().splitlines()) if r and not r[0].startswith("#")]
    return rows[0], rows[1:]


@pytest.fixture
def built(tmp_path, capsys):
    path = tmp_path / "p3b3.fsbp"
    code, out = _run(capsys, "build", "--space", "poly:3", "--nodes", "eq:-1,1,20",
                     "--pattern", "banded:b=3,c=6", "--max-iters", "50000", "-o", str(path))
    assert code == EXIT_OK, out.err
    return path, _fields(out.out.strip().splitlines()[-1])


def test_build_banded(built):
    path, fields = built
    assert fields["exact"] == "true"
    assert int(fields["rank"]) == 19
    assert float(fields["max_residual"]) <= 1e-9
    assert fsbp_io.load(path).n == 20


def test_build_dense_poly3(tmp_path, capsys):
    code, out = _run(capsys, "build", "--space", "poly:3", "--nodes", "eq:-1,1,50", "--pattern", "dense",
                     "--max-iters", "50000", "--out-dir", str(tmp_path))
    assert code == EXIT_OK
    assert _fields(out.out.strip())["rank"] == "8"
    assert (tmp_path / "operator.fsbp").exists()


def test_build_rejects_too_small_mesh(tmp_path, capsys):
    code, out = _run(capsys, "build", "--nodes", "eq:-1,1,12", "--pattern", "banded:b=3,c=6",
                     "--out-dir", str(tmp_path))
    assert code == EXIT_USAGE
    assert "2c + b" in out.err


def test_build_reports_not_exact(tmp_path, capsys):
    # bandwidth 1 cannot be exact on quadratics
    code, out = _run(capsys, "build", "--space", "poly:2", "--nodes", "eq:-1,1,20",
                     "--pattern", "banded:b=1,c=2", "--max-iters", "500", "--out-dir", str(tmp_path))
    assert code == EXIT_NOT_EXACT
    assert _fields(out.out.strip())["exact"] == "false"


def test_build_regularized_full_rank(tmp_path, capsys):
    code, out = _run(capsys, "build", "--space", "poly:3", "--nodes", "eq:-1,1,15", "--g", "sin:pi,cos:pi",
                     "--lambda", "1,1", "--max-iters", "50000", "--out-dir", str(tmp_path))
    assert code == EXIT_OK, out.err
    assert _fields(out.out.strip())["rank"] == "14"


def test_build_lambda_without_g(tmp_path, capsys):
    code, _ = _run(capsys, "build", "--lambda", "1", "--out-dir", str(tmp_path))
    assert code == EXIT_USAGE


def test_config_file_overrides_flags(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("space = poly:1\nnodes = eq:-1,1,6\n")
    code, out = _run(capsys, "build", "--space", "poly:3", "--config", str(cfg), "--out-dir", str(tmp_path))
    assert code == EXIT_OK
    assert _fields(out.out.strip())["N"] == "6"


def test_unknown_command(capsys):
    code, _ = _run(capsys, "frobnicate")
    assert code == EXIT_USAGE


def test_check_passes_for_banded(built, capsys):
    path, _ = built
    code, out = _run(capsys, "check", str(path), "--space", "poly:3")
    assert code == EXIT_OK
    assert out.out.strip().endswith("diagnostics: pass")


def test_check_fails_for_rank_deficient_dense(tmp_path, capsys):
    code, _ = _run(capsys, "build", "--space", "poly:1", "--nodes", "eq:-1,1,50", "--out-dir", str(tmp_path))
    assert code == EXIT_OK
    code, out = _run(capsys, "check", str(tmp_path / "operator.fsbp"), "--space", "poly:1",
                     "--csv", "--out-dir", str(tmp_path))
    assert code == EXIT_DIAGNOSTICS
    assert "diagnostics: fail" in out.out
    header, rows = _read_csv(tmp_path / "check.csv")
    assert header == ["quantity", "value"]
    values = dict(rows)
    assert int(values["rank_D"]) == 3


def test_check_rejects_tampered_file(built, tmp_path, capsys):
    path, _ = built
    text = path.read_text()
    bad = tmp_path / "bad.fsbp"
    # flip the sign of one norm weight
    lines = text.splitlines()
    i = lines.index("P") + 1
    v = lines[i].split()
    v[2] = "-" + v[2]
    lines[i] = " ".join(v)
    bad.write_text("\n".join(lines) + "\n")
    code, out = _run(capsys, "check", str(bad))
    assert code == EXIT_USAGE
    assert "non-positive norm weight" in out.err


def test_check_missing_file(tmp_path, capsys):
    code, _ = _run(capsys, "check", str(tmp_path / "missing.fsbp"))
    assert code == EXIT_USAGE


def test_solve_advection(built, tmp_path, capsys):
    path, _ = built
    code, out = _run(capsys, "solve", str(path), "--blocks", "2", "--t-end", "0.5", "--save", "0.25",
                     "--out-dir", str(tmp_path))
    assert code == EXIT_OK, out.err
    header, rows = _read_csv(tmp_path / "solve_errors.csv")
    assert header == ["t", "var", "L2", "Linf"]
    assert [float(r[0]) for r in rows] == [0.25, 0.5]
    assert all(float(r[2]) < 1e-2 for r in rows)


def test_solve_rejects_several_block_counts(built, capsys):
    path, _ = built
    code, _ = _run(capsys, "solve", str(path), "--blocks", "2,4")
    assert code == EXIT_USAGE


def test_solve_reports_crash(tmp_path, capsys):
    # the rank-deficient dense P3 operator blows up on the Euler problem
    code, _ = _run(capsys, "build", "--space", "poly:3", "--nodes", "eq:-1,1,50", "--max-iters", "50000",
                   "--out-dir", str(tmp_path))
    assert code == EXIT_OK
    code, out = _run(capsys, "solve", str(tmp_path / "operator.fsbp"), "--equation", "euler", "--blocks", "1",
                     "--t-end", "10", "--out-dir", str(tmp_path))
    assert code == EXIT_CRASH
    assert "error:" in out.err


def test_convergence_command(built, tmp_path, capsys):
    path, _ = built
    code, out = _run(capsys, "convergence", str(path), "--blocks", "2,4,8", "--t-end", "2",
                     "--tol", "1e-12", "--out-dir", str(tmp_path))
    assert code == EXIT_OK, out.err
    header, rows = _read_csv(tmp_path / "convergence.csv")
    rates = [float(r[header.index("EOC")]) for r in rows[1:]]
    assert all(r >= 3.0 for r in rates)


def test_convergence_requires_increasing_blocks(built, capsys):
    path, _ = built
    code, _ = _run(capsys, "convergence", str(path), "--blocks", "4,2")
    assert code == EXIT_USAGE


def test_reproduce_rejects_unknown_override(tmp_path, capsys):
    code, _ = _run(capsys, "reproduce", "table1", "--K", "2", "--out-dir", str(tmp_path))
    assert code == EXIT_USAGE


@pytest.mark.slow
def test_reproduce_table2_b3(tmp_path, capsys):
    code, out = _run(capsys, "reproduce", "table2", "--b", "3", "--out-dir", str(tmp_path))
    assert code == EXIT_OK, out.err
    header, rows = _read_csv(tmp_path / "table2.csv")
    l2 = dict(zip(header[1:], map(float, rows[0][1:])))
    assert 2.6e-2 / 3 <= l2["P2 b=3"] <= 3 * 2.6e-2
    assert 1.2e-3 / 3 <= l2["T b=3"] <= 3 * 1.2e-3
    first = (tmp_path / "table2.csv").read_text()
    assert main(["reproduce", "table2", "--b", "3", "--out-dir", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "table2.csv").read_text() == first


@pytest.mark.slow
def test_reproduce_table4(tmp_path, capsys):
    code, out = _run(capsys, "reproduce", "table4", "--K", "2,4,8", "--out-dir", str(tmp_path))
    assert code == EXIT_OK, out.err
    header, rows = _read_csv(tmp_path / "table4_P3.csv")
    rates = [float(r[header.index("EOC")]) for r in rows[1:]]
    assert len(rates) == 2
    assert all(3.0 <= r <= 4.8 for r in rates)


@pytest.mark.slow
def test_reproduce_fig3_dense_crash(tmp_path, capsys):
    code, out = _run(capsys, "reproduce", "fig3", "--out-dir", str(tmp_path))
    assert code == EXIT_OK, out.err
    header, rows = _read_csv(tmp_path / "fig3.csv")
    crashes = {r[1]: float(r[0]) for r in rows if r[2] == "crash"}
    assert "P3 dense" in crashes
    assert 2.0 <= crashes["P3 dense"] <= 6.0
    assert "P3 b=3" not in crashes
    svg = (tmp_path / "fig3_L2.svg").read_text()
    assert svg.count("<polyline") == 4
    assert "crash: P3 dense" in out.out


# }}}
