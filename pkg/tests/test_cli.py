import csv
import io

import numpy as np
import pytest

from esqpt import cli


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def table(text):
    body = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(body))))


def header(text):
    return dict(ln[2:].split("=", 1) for ln in text.splitlines() if ln.startswith("# ") and "=" in ln
                and not ln.startswith("# agreement"))


def test_spectrum_n1(capsys):
    code, out, _ = run(capsys, "spectrum", "--N", "1", "--xi", "0.5")
    assert code == 0
    np.testing.assert_allclose([float(r["energy_per_N"]) for r in table(out)], [-0.5, 0.0, 0.0], atol=1e-12)
    h = header(out)
    assert h["N"] == "1" and h["xi"] == "0.5" and h["command"] == "spectrum"


def test_spectrum_blocks_write_files(tmp_path, capsys):
    code, _, _ = run(capsys, "spectrum", "--N", "4", "--xi", "0.3", "--blocks", "--out", str(tmp_path / "s.csv"))
    assert code == 0
    files = sorted(p.name for p in tmp_path.iterdir())
    assert files == [f"s_l{m / 4:.4f}.csv" for m in range(5)]
    top = table((tmp_path / "s_l1.0000.csv").read_text())
    np.testing.assert_allclose([float(r["energy_per_N"]) for r in top], 1 - 2 * 0.3, atol=1e-12)


@pytest.mark.parametrize("argv", [
    ["spectrum", "--N", "4", "--xi", "0.3", "--eps", "0.1", "--blocks", "--out", "x.csv"],
    ["spectrum", "--N", "400", "--xi", "0.3"],
    ["spectrum", "--N", "4", "--xi", "1.3"],
    ["stationary", "--xi-grid", "0.5:0.1:0.1"],
    ["stationary", "--xi-grid", "0:2:0.5"],
    ["stationary", "--xi-grid", "0.5", "--constraints", "n+l"],
    ["density", "--xi", "0.5"],
    ["density", "--xi", "0.5", "--delta", "0.1", "--delta2", "0.01"],
    ["density", "--xi", "0.5", "--delta", "0.1", "--source", "weyl-chart", "--samples", "10"],
    ["hpmap", "forward", "--chart", "0", "--point", "1,2,3"],
    ["hpmap", "transition", "--chart", "0", "--point", "0,0,0,0"],
    ["nonsense"],
])
def test_usage_errors_exit_2(capsys, argv):
    assert run(capsys, *argv)[0] == 2


def test_stationary_both_methods_agree(capsys):
    code, out, _ = run(capsys, "stationary", "--xi-grid", "0.5", "--eps", "0.3", "--method", "both",
                       "--n-starts", "600")
    assert code == 0
    rows = table(out)
    assert any(r["method"] == "lagrange" and abs(float(r["E"]) - 0.5) < 1e-9 and r["r"] == "3" for r in rows)
    agree = [ln for ln in out.splitlines() if ln.startswith("# agreement")]
    assert len(agree) == 1 and "unmatched=0" in agree[0]
    assert float(agree[0].split("max_abs_dE=")[1]) <= 1e-6


def test_stationary_zero_field_saddles(capsys):
    code, out, _ = run(capsys, "stationary", "--xi-grid", "0.6", "--constraints", "n", "--n-starts", "600")
    assert code == 0
    got = {(round(float(r["E"]), 6), r["r"]) for r in table(out)}
    assert (-0.2, "2") in got and (0.0, "2") in got


def test_stationary_fixed_l_has_only_extrema(capsys):
    code, out, _ = run(capsys, "stationary", "--xi-grid", "0.6", "--constraints", "n+l", "--l", "0.4",
                       "--n-starts", "400")
    assert code == 0
    rows = table(out)
    assert [r["r"] for r in rows] == ["0", "2"]
    assert all(abs(abs(float(r["l"])) - 0.4) < 1e-8 for r in rows)


def test_config_file_with_override(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# spectrum options\nN = 2\nxi = 0.25\n")
    code, out, _ = run(capsys, "--config", str(cfg), "spectrum", "--xi", "0.5")
    assert code == 0
    h = header(out)
    assert h["N"] == "2" and h["xi"] == "0.5"
    cfg.write_text("bogus = 1\n")
    assert run(capsys, "--config", str(cfg), "spectrum", "--N", "1", "--xi", "0.5")[0] == 2
    cfg.write_text("N = many\n")
    assert run(capsys, "--config", str(cfg), "spectrum", "--xi", "0.5")[0] == 2


def test_output_independent_of_threads(tmp_path, capsys):
    base = ["stationary", "--xi-grid", "0.4:0.6:0.1", "--eps", "0.3", "--n-starts", "300"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run(capsys, "--threads", "1", *base, "--out", str(a))[0] == 0
    assert run(capsys, "--threads", "2", *base, "--out", str(b))[0] == 0
    assert a.read_bytes() == b.read_bytes()


def test_hpmap_modes(capsys):
    code, out, _ = run(capsys, "hpmap", "forward", "--chart", "0", "--point", f"1,{0.5**0.5},{0.5**0.5},0,0,0")
    assert code == 0
    np.testing.assert_allclose([float(v) for v in out.split(",")], [0.5**0.5, 0.5**0.5, 0, 0], atol=1e-12)
    code, out, _ = run(capsys, "hpmap", "transition", "--chart", "0", "--to", "1",
                       "--point", f"{0.5**0.5},{0.5**0.5},0,0")
    np.testing.assert_allclose([float(v) for v in out.split(",")], [1.0, 0.5**0.5, 0, 0], atol=1e-12)
    code, out, _ = run(capsys, "hpmap", "inverse", "--chart", "0", "--point", "0,0,0,0")
    np.testing.assert_allclose([float(v) for v in out.split(",")], [2**0.5, 0, 0, 0, 0, 0], atol=1e-12)
    code, _, err = run(capsys, "hpmap", "forward", "--chart", "0", "--point", f"0,{2**0.5},0,0,0,0")
    assert code == 2 and "boundary singularity" in err


def test_density_quantum_and_svg(tmp_path, capsys):
    out, svg = tmp_path / "rho.csv", tmp_path / "rho.svg"
    pytest.importorskip("matplotlib")
    code, _, _ = run(capsys, "density", "--xi", "0.6", "--N", "20", "--delta2", "0.0025", "--grid=-0.6:1:0.01",
                     "--n-starts", "200", "--out", str(out), "--svg", str(svg))
    assert code == 0
    rows = table(out.read_text())
    E = np.array([float(r["E"]) for r in rows])
    rho = np.array([float(r["rho"]) for r in rows])
    assert np.trapezoid(rho, E) == pytest.approx(231 / 400, rel=1e-3)
    assert svg.read_text().lstrip().startswith("<?xml")
    assert header(out.read_text())["delta2"] == "0.0025"


def test_density_block_and_weyl(capsys):
    code, out, _ = run(capsys, "density", "--xi", "0.6", "--N", "10", "--l", "0.3", "--delta", "0.05",
                       "--grid=-0.8:1:0.01")
    assert code == 0
    rows = table(out)
    rho = np.array([float(r["rho"]) for r in rows])
    assert np.trapezoid(rho, dx=0.01) == pytest.approx(8 / 10, rel=1e-3)  # |l|=3: 8 levels, weight 1/N
    code, out, _ = run(capsys, "density", "--source", "weyl-sphere", "--xi", "0.0", "--delta", "0.05",
                       "--samples", "100000", "--grid=0.2:0.8:0.1")
    rows = table(out)
    for r in rows:
        assert abs(float(r["rho"]) - float(r["E"])) <= 4 * float(r["sigma_rho"]) + 1e-12


@pytest.mark.slow
def test_verify_atlas_suite(capsys):
    code, out, _ = run(capsys, "verify", "--suite", "atlas")
    assert code == 0
    assert out.count("[PASS]") >= 2 and "[FAIL]" not in out


def test_version_exits_0(capsys):
    assert run(capsys, "--version")[0] == 0
