import csv
import json
import subprocess
import sys

import pytest

from omegalab import cli, nlie

PAIRS = [[-0.6, 0.4], [1.0, 0.2]]


@pytest.fixture(scope="module")
def cache(tmp_path_factory):
    return str(tmp_path_factory.mktemp("ddv-cache"))


@pytest.fixture(autouse=True)
def _no_env_cache(monkeypatch):
    monkeypatch.delenv("OMEGALAB_CACHE", raising=False)


def _run(tmp_path, config, *extra):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(config))
    out = tmp_path / "out"
    code = cli.main(["--config", str(path), "--out", str(out), *extra])
    return code, out


def _rows(out):
    with open(out / "residuals.csv", newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.mark.parametrize(
    "config",
    [
        {"mode": "bogus"},
        {"colour": "blue"},
        {"params": {"p": 0.6}},
        {"params": {"beta": 1.0}},
        {"lattice": {"sizes": [3]}},
        {"refine": "1"},
        {"refine": True},
        {"probes": {"ray": 0.2}},
        {"probes": {"ray": -1.0}},
        {"tolerances": {"nonsense": 1.0}},
        {"grid": {"N0": 8}},
    ],
)
def test_config_errors_exit_2(tmp_path, config, capsys):
    code, _ = _run(tmp_path, config)
    assert code == cli.EXIT_CONFIG
    assert "configuration error" in capsys.readouterr().err


def test_unreadable_config_and_scale(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("[1, 2")
    assert cli.main(["--config", str(bad)]) == cli.EXIT_CONFIG
    bad.write_text("[1, 2]")
    assert cli.main(["--config", str(bad)]) == cli.EXIT_CONFIG
    assert cli.main(["lattice-verify", "--tolerance-scale", "0"]) == cli.EXIT_CONFIG


def test_lattice_verify(tmp_path):
    config = {"mode": "lattice-verify", "lattice": {"sizes": [2], "draws": 1, "probes": 2, "seed": 3}}
    code, out = _run(tmp_path, config)
    assert code == cli.EXIT_OK
    rows = _rows(out)
    assert list(rows[0]) == ["identity", "Z", "X", "alpha", "residual", "refinement_factor"]
    names = {r["identity"] for r in rows}
    assert {"P-symmetry", "dual-omega", "psi-equivalence", "g_left", "moment", "X-pol[psiPlus]"} <= names
    summary = (out / "summary.txt").read_text().splitlines()
    assert summary[-1] == f"{len(rows)}/{len(rows)} rows within tolerance"
    report = json.loads((out / "report.json").read_text())
    assert report["failed"] == [] and report["rows"] == len(rows)


def test_nlie_solve_writes_solutions_and_cache(tmp_path, cache):
    code, out = _run(tmp_path, {"mode": "nlie-solve", "refine": 0, "cache": cache})
    assert code == cli.EXIT_OK
    sol = nlie.NlieSolution.from_json(json.loads((out / "nlie_kappa_prime.json").read_text()))
    assert sol.kappa == 0.05 and sol.equation_residual() < 1e-10
    report = json.loads((out / "report.json").read_text())
    assert report["nlie"]["deltaI"][0][0] == pytest.approx(-1.0089355, abs=1e-6)
    names = {r["identity"] for r in _rows(out)}
    assert {"ddv", "asR-exponent[+]", "tail-parity[-]"} <= names


def test_shift_verify_free(tmp_path, cache):
    cfg = {"mode": "shift-verify", "refine": 0, "cache": cache, "probes": {"pairs": PAIRS}}
    code, out = _run(tmp_path, cfg, "--free")
    assert code == cli.EXIT_OK
    rows = _rows(out)
    assert {"FFF", "corr", "alphashift", "mainR", "ray-robustness[tau]"} <= {r["identity"] for r in rows}
    assert max(float(r["residual"]) for r in rows if r["identity"] == "alphashift") < 1e-5


def test_quarter_u_fails_with_exit_1(tmp_path, cache):
    cfg = {"mode": "shift-verify", "refine": 0, "cache": cache, "quarter_u": True, "probes": {"pairs": PAIRS}}
    code, out = _run(tmp_path, cfg)
    assert code == cli.EXIT_FAIL
    failed = {f["identity"] for f in json.loads((out / "report.json").read_text())["failed"]}
    assert "zeroT" in failed
    assert any(line.startswith("FAIL  zeroT") for line in (out / "summary.txt").read_text().splitlines())


def test_tolerance_scale_tightens(tmp_path, cache):
    cfg = {"mode": "shift-verify", "refine": 0, "cache": cache, "probes": {"pairs": PAIRS}}
    code, _ = _run(tmp_path, cfg, "--tolerance-scale", "1e-9")
    assert code == cli.EXIT_FAIL


def test_omega_eval(tmp_path, cache):
    cfg = {"mode": "omega-eval", "refine": 0, "cache": cache, "probes": {"pairs": PAIRS}}
    code, out = _run(tmp_path, cfg)
    assert code == cli.EXIT_OK
    with open(out / "omega_plot.csv", newline="") as fh:
        plot = list(csv.reader(fh))
    assert plot[0] == ["Z", "X", "Re_Omega", "Im_Omega"]
    assert len(plot) == 1 + 2 * len(PAIRS)
    omega = json.loads((out / "report.json").read_text())["omega"]
    assert omega["include_omega0"] is False and len(omega["samples"]) == 2 * len(PAIRS)


def test_compute_error_exit_3(tmp_path, cache):
    # a ray this close to the axis leaves the convergence strip of Psi^+
    cfg = {"mode": "omega-eval", "refine": 0, "cache": cache, "probes": {"ray": -0.05, "pairs": PAIRS}}
    code, out = _run(tmp_path, cfg)
    assert code == cli.EXIT_COMPUTE
    assert (out / "summary.txt").read_text().startswith("FAILED: StripViolationError")


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "omegalab", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for mode in cli.MODES:
        assert mode in proc.stdout
