import json
import subprocess
import sys
from pathlib import Path

import pytest

from spinreadout import cli
from spinreadout.io import sha256_file
from spinreadout.model import reference_params


def run(*args):
    return subprocess.run([sys.executable, "-m", "spinreadout", *args],
                          capture_output=True, text=True)


def read_rows(path):
    lines = Path(path).read_text().splitlines()
    header = lines[0].split(",")
    return header, [dict(zip(header, line.split(","))) for line in lines[1:]]


@pytest.fixture
def config(tmp_path):
    def make(**overrides):
        raw = reference_params().to_hz()
        raw.update(overrides)
        path = tmp_path / "config.json"
        path.write_text(json.dumps(raw, indent=2))
        return str(path)
    return make


def test_help():
    cp = run("--help")
    assert cp.returncode == 0
    assert "oracle" in cp.stdout


def test_regime_reference(tmp_path, config):
    assert cli.main(["regime", "--config", config(), "--out", str(tmp_path)]) == 0
    header, rows = read_rows(tmp_path / "regime.csv")
    assert header == ["quantity", "value"]
    assert all(float(r["value"]) > 10 for r in rows if r["quantity"].endswith("margin"))


def test_regime_boundary_warns(tmp_path, config):
    p = reference_params()
    edge_hz = 50.0 * p.n_bar ** 0.5
    assert cli.main(["regime", "--config", config(delta_hz=edge_hz), "--out", str(tmp_path)]) == 2


def test_malformed_config(tmp_path, config):
    path = config(color=3)
    cp = run("regime", "--config", path, "--out", str(tmp_path))
    assert cp.returncode == 1
    assert "color" in cp.stderr


def test_bad_flag_exits_one(tmp_path):
    assert run("snr", "--lambda", "ten", "--out", str(tmp_path)).returncode == 1


def test_curves(tmp_path):
    assert cli.main(["curves", "--n-bar", "0,2.5e4", "--out", str(tmp_path)]) == 0
    header, rows = read_rows(tmp_path / "curves.csv")
    assert tuple(header) == cli.CURVES_HEADER
    zero = [r for r in rows if float(r["n_bar"]) == 0]
    assert all(r["total"] == r["shot_noise"] for r in zero)
    lam = {float(r["lambda"]) for r in rows if float(r["n_bar"]) == 2.5e4}
    assert len(lam) == 1 and round(lam.pop()) == 1


def test_snr_optimum_column(tmp_path):
    assert cli.main(["snr", "--lambda", "100", "--out", str(tmp_path)]) == 0
    _, rows = read_rows(tmp_path / "snr.csv")
    assert max(float(r["snr_over_sqrtN"]) for r in rows) > 0.85
    _, opt = read_rows(tmp_path / "snr_optima.csv")
    assert float(opt[0]["snr_opt"]) == pytest.approx(0.923010168406408, rel=1e-9)


def test_squeeze(tmp_path):
    args = ["squeeze", "--lambda", "10", "--xi2", "1,0.5,2,1.5", "--out", str(tmp_path)]
    assert cli.main(args) == 0
    _, rows = read_rows(tmp_path / "squeeze.csv")
    by = {}
    for r in rows:
        by.setdefault(float(r["xi2"]), []).append(float(r["delta_variance_over_shot"]))
    assert all(v == 0 for v in by[1.0])
    assert all(v <= 0 for v in by[0.5]) and all(v >= 0 for v in by[2.0])
    # (xi2 - 1) flips sign between 0.5 and 1.5
    assert by[1.5] == pytest.approx([-v for v in by[0.5]])
    _, peaks = read_rows(tmp_path / "squeeze_peaks.csv")
    peak = {float(r["xi2"]): float(r["gamma_T_peak"]) for r in peaks}
    assert peak[0.5] == pytest.approx(1.25, abs=0.05)
    assert float(peaks[1]["xi2_db"]) == pytest.approx(3.0103, abs=1e-4)


def test_squeeze_from_twisting_time(tmp_path):
    assert cli.main(["squeeze", "--t-sqz", "0.5", "--out", str(tmp_path)]) == 0


def test_runs(tmp_path):
    args = ["runs", "--lambda", "10,1e6", "--xi2", "0.5", "--out", str(tmp_path)]
    assert cli.main(args) == 0
    _, opt = read_rows(tmp_path / "runs_optima.csv")
    assert float(opt[0]["gamma_T_opt"]) == pytest.approx(2.1, abs=0.05)
    assert float(opt[0]["nruns_min"]) == pytest.approx(1.26046, abs=1e-5)
    _, rows = read_rows(tmp_path / "runs.csv")
    perfect = [float(r["nruns_plain"]) for r in rows
               if float(r["lambda"]) == 1e6 and float(r["gamma_T"]) > 0.5]
    assert max(perfect) < 1.0001
    sq = [(float(r["gamma_T"]), float(r["nruns_squeezing"])) for r in rows
          if float(r["lambda"]) == 10]
    assert min(sq, key=lambda v: v[1])[0] == pytest.approx(0.376, abs=0.01)


def test_runs_without_squeezing_fails(tmp_path):
    cp = run("runs", "--xi2", "1", "--out", str(tmp_path))
    assert cp.returncode == 1
    assert "xi2 = 1" in cp.stderr


def test_oracle_guards(tmp_path):
    assert run("oracle", "variance", "--out", str(tmp_path)).returncode == 1
    assert run("oracle", "variance", "--seed", "1", "--n-traj", "1",
               "--out", str(tmp_path)).returncode == 1


def test_oracle_variance(tmp_path):
    assert cli.main(["oracle", "variance", "--seed", "5", "--n-traj", "20000",
                     "--out", str(tmp_path)]) == 0
    header, rows = read_rows(tmp_path / "oracle_variance.csv")
    assert tuple(header) == cli.ORACLE_HEADER
    assert len(rows) == 16


def test_oracle_dispersive(tmp_path, capsys):
    assert cli.main(["oracle", "dispersive", "--seed", "1", "--out", str(tmp_path)]) == 0
    assert "convergence slope 1.99" in capsys.readouterr().out


def test_oracle_correlator_and_squeeze(tmp_path):
    for which in ("correlator", "squeeze"):
        assert cli.main(["oracle", which, "--seed", "2", "--n-traj", "20000",
                         "--out", str(tmp_path / which)]) == 0


def test_manifest_lists_outputs(tmp_path):
    assert cli.main(["snr", "--lambda", "1,10", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "manifest.json").read_text())
    assert doc["command"] == "snr"
    assert [o["path"] for o in doc["outputs"]] == ["snr.csv", "snr_optima.csv"]
    for o in doc["outputs"]:
        assert o["sha256"] == sha256_file(tmp_path / o["path"])


def test_snr_map_needs_seed(tmp_path):
    assert run("snr-map", "--out", str(tmp_path)).returncode == 1


def _tree(path):
    return {p.name: p.read_bytes() for p in sorted(Path(path).iterdir())}


def test_byte_identical_reruns(tmp_path):
    base = ["snr-map", "--seed", "3", "--desk-spins", "2000", "--n-realizations", "3",
            "--t-points", "4", "--delta-grid", "0.5:20:4"]
    assert cli.main(base + ["--out", str(tmp_path / "a")]) == 0
    assert cli.main(base + ["--out", str(tmp_path / "b"), "--workers", "3"]) == 0
    assert _tree(tmp_path / "a") == _tree(tmp_path / "b")


def test_golden_headers(tmp_path):
    assert cli.main(["snr-map", "--seed", "1", "--desk-spins", "500", "--n-realizations", "1",
                     "--t-points", "2", "--delta-grid", "1:2:2", "--out", str(tmp_path)]) == 0
    first = (tmp_path / "snr_map.csv").read_text().splitlines()[0]
    assert first == "gamma_minus_T,Delta_over_sigma,snr_mean,snr_stderr,retained_fraction"
