import csv
import json

import numpy as np
import pytest

from ullersma import __version__
from ullersma.cli import main
from ullersma.config import reference_config

PLANE_CONTINUUM = """
[geometry]
kind = planewave
q = 1.2
[medium]
rho = 1.0
omega0 = 1.0
alpha = 0.8
[reservoir]
kind = continuum
cutoff = 2.0
amplitude = 0.6
smear_n = 64
[run]
seed = 1
fit_n = 256
omega_points = 20
"""


def _write(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def _ref(tmp_path, name, extra=""):
    return _write(tmp_path, reference_config(name).source + extra, name + ".ini")


def _read_csv(path):
    with open(path) as fh:
        header = fh.readline()
        rows = list(csv.reader(fh))
    return header, rows[0], rows[1:]


def test_modes_outputs(tmp_path, capsys):
    cfg = _ref(tmp_path, "homogeneous_n3")
    out = tmp_path / "o"
    assert main(["modes", "--config", cfg, "--out", str(out)]) == 0
    header, cols, rows = _read_csv(out / "modes.csv")
    assert header.startswith(f"# tool=ullersma version={__version__} config=")
    assert "generated=" in header
    assert cols == ["mode", "k", "l", "Omega", "dlambda_ds", "weight"]
    assert len(rows) == 5 * 16
    summary = json.loads(capsys.readouterr().out)
    assert summary["modes"] == summary["expected"] == 80
    assert all(z - p == 1 for z, p in summary["zeros_poles_per_branch"].values())
    assert (out / "eigenvectors.csv").exists()


def test_outputs_deterministic_without_timestamp(tmp_path):
    cfg = _ref(tmp_path, "two_layer_n2", "initial = random\nsteps = 4\nt_max = 3.0\n")
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["evolve", "--config", cfg, "--out", str(d), "--no-timestamp"]) == 0
    for name in ("fields_t.csv", "energy.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_evolve_conserves_energy(tmp_path):
    cfg = _ref(tmp_path, "homogeneous_n3", "steps = 10\n")
    out = tmp_path / "o"
    assert main(["evolve", "--config", cfg, "--out", str(out)]) == 0
    _, cols, rows = _read_csv(out / "energy.csv")
    e = np.array([[float(v) for v in r[1:]] for r in rows])
    assert np.allclose(e[:, 0], e[0, 1], rtol=1e-10)
    _, cols, rows = _read_csv(out / "fields_t.csv")
    assert cols == ["t", "point", "x", "A", "Pi", "Q0", "P0", "E", "D"]
    assert len(rows) == 11 * 16


def test_random_initial_needs_seed(tmp_path, capsys):
    text = reference_config("homogeneous_n0").source.replace("seed = 2", "initial = random")
    cfg = _write(tmp_path, text)
    assert main(["evolve", "--config", cfg, "--out", str(tmp_path)]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["key"] == "run.seed"
    assert main(["evolve", "--config", cfg, "--out", str(tmp_path), "--seed", "3"]) == 0


def test_verify_pass_and_fault(tmp_path, capsys):
    good = _ref(tmp_path, "homogeneous_n3")
    assert main(["verify", "--config", good, "--out", str(tmp_path / "g")]) == 0
    report = json.loads((tmp_path / "g" / "report.json").read_text())
    assert report["meta"]["tool"] == "ullersma"
    assert all(c["status"] != "fail" for c in report["checks"])
    bad = _write(tmp_path, reference_config("homogeneous_n3").source + "corrupt_weight = true\n",
                 "fault.ini")
    assert main(["verify", "--config", bad, "--out", str(tmp_path / "b"),
                 "--checks", "commutators"]) == 1


def test_configuration_errors_exit_2(tmp_path, capsys):
    assert main(["modes", "--config", str(tmp_path / "missing.ini")]) == 2
    bad = _write(tmp_path, "[geometry]\nkind = layered1d\npoints = 16\n")
    assert main(["modes", "--config", bad, "--out", str(tmp_path)]) == 2
    err = json.loads(capsys.readouterr().err.splitlines()[-1])
    assert err["error"] == "ConfigurationError" and err["key"].startswith("medium.")
    good = _ref(tmp_path, "vacuum")
    assert main(["verify", "--config", good, "--out", str(tmp_path), "--checks", "bogus"]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["explode", "--config", good])
    assert exc.value.code == 2


def test_continuum_command(tmp_path):
    cfg = _write(tmp_path, PLANE_CONTINUUM)
    out = tmp_path / "o"
    assert main(["continuum", "--config", cfg, "--out", str(out), "--no-timestamp"]) == 0
    decay = json.loads((out / "decay.json").read_text())
    assert len(decay["poles"]) == 2
    for p in decay["poles"]:
        assert p["pole"][1] < 0
        assert p["rate_error"] < 0.05
    _, cols, rows = _read_csv(out / "epsilon_c.csv")
    assert len(rows) == 20 and all(float(r[3]) > 0 for r in rows)
    _, cols, rows = _read_csv(out / "fluctuations.csv")
    assert cols == ["x", "x_prime", "quadrature", "dynamic"]
    assert float(rows[0][2]) > 0


def test_continuum_needs_continuum_bath(tmp_path):
    cfg = _ref(tmp_path, "homogeneous_n3")
    assert main(["continuum", "--config", cfg, "--out", str(tmp_path)]) == 2
