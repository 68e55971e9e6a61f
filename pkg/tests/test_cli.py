import json
import os
import subprocess
import sys

import pytest
import sympy as sp

from cuspvol import __version__
from cuspvol.cli import main

SPECS = os.path.join(os.path.dirname(__file__), os.pardir, "specs")


def spec(name):
    return os.path.join(SPECS, name)


def _read(d):
    return {f: open(os.path.join(d, f), encoding="utf-8").read() for f in sorted(os.listdir(d))}


def test_group_validate_exit_codes(tmp_path, capsys):
    assert main(["group-validate", spec("genus2.json"), "--out", str(tmp_path / "a")]) == 0
    report = json.loads((tmp_path / "a" / "group.json").read_text())
    assert report["valid"] and report["genus"] == 2 and report["min_gap"] > 0.49
    assert main(["group-validate", spec("overlap.json"), "--out", str(tmp_path / "b")]) == 1
    assert "not adapted" in capsys.readouterr().out
    bad = tmp_path / "bad.json"
    bad.write_text('{"generators":\n [1,,2]}')
    assert main(["group-validate", str(bad), "--out", str(tmp_path / "c")]) == 2
    assert "line 2" in capsys.readouterr().err


def test_missing_spec_and_bad_flags(tmp_path):
    assert main(["volr", str(tmp_path / "none.json"), "--out", str(tmp_path)]) == 2
    assert main(["volr", spec("funnel.json"), "--tol", "-1", "--out", str(tmp_path)]) == 2
    with pytest.raises(SystemExit) as e:
        main(["no-such-command"])
    assert e.value.code == 2


def test_volr_funnel_matches_symbolic_oracle(tmp_path):
    x, e = sp.symbols("x epsilon", positive=True)
    I = sp.expand(sp.integrate((1 + x ** 2 / 2) ** 2 / x ** 3, (x, e, 1)))
    ref = float(sum(t for t in I.as_ordered_terms() if not t.has(e)))
    assert main(["volr", spec("funnel.json"), "--out", str(tmp_path)]) == 0
    fit = json.loads((tmp_path / "volr_summary.json").read_text())["fit"]
    assert abs(fit["a0"] - ref) < 1e-6
    lines = (tmp_path / "volr_series.csv").read_text().splitlines()
    assert lines[0] == f"# cuspvol {__version__}"
    assert lines[2].startswith("# config sha256:")
    assert "eps,volume" in lines


def test_repeat_run_is_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert main(["volr", spec("cusp.json"), "--out", str(tmp_path / d)]) == 0
    a, b = _read(tmp_path / "a"), _read(tmp_path / "b")
    assert a == b and len(a) == 2


def test_config_hash_tracks_options(tmp_path):
    main(["volr", spec("funnel.json"), "--out", str(tmp_path / "a")])
    main(["volr", spec("funnel.json"), "--grid", "12", "--out", str(tmp_path / "b")])
    ha = (tmp_path / "a" / "volr_series.csv").read_text().splitlines()[2]
    hb = (tmp_path / "b" / "volr_series.csv").read_text().splitlines()[2]
    assert ha != hb


def test_grid_flags(tmp_path):
    out = str(tmp_path)
    assert main(["volr", spec("funnel.json"), "--eps0", "0.2", "--eps-min", "0.01", "--grid", "8",
                 "--out", out]) == 0
    rows = (tmp_path / "volr_series.csv").read_text().splitlines()[-8:]
    eps = [float(r.split(",")[0]) for r in rows]
    assert eps[0] == pytest.approx(0.2) and eps[-1] == pytest.approx(0.01)
    # too few points for the fit, and a non-decreasing list
    assert main(["volr", spec("funnel.json"), "--grid", "3", "--out", out]) == 2
    assert main(["volr", spec("funnel.json"), "--grid", "0.1,0.2,0.05,0.01,0.005,0.001", "--out", out]) == 2


def test_sweep_bad_grid_and_frozen(tmp_path, capsys):
    assert main(["sweep", spec("cyclic.json"), "--grid", "0.1,0.05", "--out", str(tmp_path / "a")]) == 2
    assert main(["sweep", spec("frozen.json"), "--out", str(tmp_path / "b")]) == 0
    assert "final gap" in capsys.readouterr().out
    plot = (tmp_path / "b" / "sweep_plot.csv").read_text().splitlines()
    rows = [r.split(",") for r in plot if not r.startswith("#")][1:]
    assert len(rows) == 4 and len({r[1] for r in rows}) == 1


@pytest.mark.slow
def test_sweep_cyclic_converging_series(tmp_path):
    out = tmp_path / "s"
    assert main(["sweep", spec("cyclic.json"), "--grid", "0.016,0.0064,0.00256,0.001024", "--out", str(out)]) == 0
    summary = json.loads((out / "sweep_summary.json").read_text())
    ch = summary["checks"]
    assert ch["trend"] and ch["converged"] and ch["regions_ok"]
    assert ch["final_gap"] < ch["threshold"]


def test_hj_uniformize_variation_model(tmp_path):
    assert main(["hj-solve", spec("hj.json"), "--out", str(tmp_path / "h")]) == 0
    s = json.loads((tmp_path / "h" / "hj_summary.json").read_text())["summary"]
    assert s["max_residual"] < 1e-7 and s["max_a1"] < 1e-6 and s["max_a2_error"] < 1e-5
    assert main(["uniformize", spec("uniformize.json"), "--out", str(tmp_path / "u")]) == 0
    assert main(["variation", spec("variation.json"), "--seed", "2", "--out", str(tmp_path / "v")]) == 0
    assert main(["model-check", "--seed", "1", "--out", str(tmp_path / "m")]) == 0
    # an impossible tolerance is a numerical-check failure, not a usage error
    assert main(["model-check", "--tol", "1e-30", "--out", str(tmp_path / "m2")]) == 1


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "cuspvol.cli", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and __version__ in r.stdout
