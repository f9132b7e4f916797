import json
import math

import numpy as np
import pytest

from orbitalcluster.cli import (EXIT_CONFIG, EXIT_NUMERIC, ConfigError, load_config, main,
                                parse_config, sample_times)

BELL = """
[scenario]
name = bell
kind = evolve

[physical]
v0_recoil = 10
v0p_recoil = 6.2
n_sites = 2

[schedule]
duration_ms = {duration}

[numerics]
sample_interval_ms = 0.05
"""


def _write(tmp_path, text, name="cfg.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_builtin_scenarios_parse():
    for name in ("fig1-params", "fig3-bell", "fig5-pairwise", "fig5c-shift"):
        cfg = load_config(name)
        assert cfg["scenario"]["name"] == name
    cfg = load_config("fig5-pairwise")
    assert cfg["physical"]["n_sites"] == (4, 6)
    assert cfg["physical"]["scattering_len_nm"] == "auto"


def test_config_roundtrip():
    cfg = load_config("fig3-bell")
    again = parse_config(cfg.to_ini(), "again")
    assert again.values == cfg.values
    assert cfg.physical().V0p == 6.2
    assert math.isclose(cfg.physical().theta, math.pi / 2)


@pytest.mark.parametrize("text, match", [
    ("[physical]\nv0_recoil = 10\ndepth = 3\n", r"cfg:3: unknown key 'depth'"),
    ("[physical]\nv0_recoil = 100\n", r"cfg:2: v0_recoil = 100 out of bounds"),
    ("[lattice]\nv0 = 1\n", r"unknown section \[lattice\]"),
    ("v0_recoil = 10\n", r"cfg"),
    ("[physical]\nn_sites = 3\n", r"out of bounds"),
    ("[physical]\ntheta_rad = 1\ntheta_pi = 0.5\n", r"either theta_rad or theta_pi"),
    ("[schedule]\nduration_ms = auto\n", r"requires tilt_recoil or scattering_len_nm = auto"),
    ("[physical]\nv0_recoil = deep\n", r"cannot parse"),
])
def test_config_errors(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(text, "cfg")


def test_unknown_key_exit_code(tmp_path, capsys):
    path = _write(tmp_path, "[scenario]\nkind = evolve\n[physical]\nv0 = 10\n")
    assert main(["run", path, "--output-dir", str(tmp_path / "o")]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "cfg.ini:4" in err and "unknown key 'v0'" in err


def test_missing_config(tmp_path):
    assert main(["run", str(tmp_path / "nope.ini")]) == EXIT_CONFIG


def test_numeric_failure_exit_code(tmp_path, capsys):
    text = BELL.format(duration=1.0) + "cutoff = 8\n"
    text = text.replace("v0_recoil = 10", "v0_recoil = 40")
    assert main(["run", _write(tmp_path, text), "--output-dir", str(tmp_path / "o")]) == EXIT_NUMERIC
    assert "BandSolveError" in capsys.readouterr().err
    doc = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert doc["status"] == "numeric_failure"


def test_run_is_deterministic(tmp_path):
    path = _write(tmp_path, BELL.format(duration=1.0))
    digests = []
    for k in range(2):
        out = tmp_path / f"o{k}"
        assert main(["run", path, "--output-dir", str(out)]) == 0
        doc = json.loads((out / "manifest.json").read_text())
        assert doc["status"] == "ok"
        digests.append({o["path"]: o["sha256"] for o in doc["outputs"]})
    assert digests[0] == digests[1]
    data = np.loadtxt(tmp_path / "o0" / "trace.txt", skiprows=1)
    np.testing.assert_allclose(data[:, 0], np.arange(21) * 0.05, atol=1e-12)
    assert doc["resolved_config"]["physical"]["v0p_recoil"] == 6.2
    assert doc["results"]["n2"]["max_norm_error"] < 1e-9


def test_empty_schedule(tmp_path):
    out = tmp_path / "o"
    assert main(["run", _write(tmp_path, BELL.format(duration=0.0)), "--output-dir", str(out)]) == 0
    data = np.loadtxt(out / "trace.txt", skiprows=1, ndmin=2)
    assert data.shape == (1, 7)
    # F_raw of the product state on one Bell pair, F in the optimized frame
    assert data[0, 2] == pytest.approx(0.25, abs=1e-12)
    assert data[0, 1] == pytest.approx(0.5, abs=1e-12)
    assert data[0, 4] == pytest.approx(1.0, abs=1e-12)


def test_params_scenario(tmp_path):
    out = tmp_path / "o"
    assert main(["run", "fig1-params", "--output-dir", str(out)]) == 0
    doc = json.loads((out / "manifest.json").read_text())
    assert doc["results"]["eps_prime_staggered"]
    assert doc["results"]["hop_prime_12_over_rest"] > 20
    assert doc["results"]["max_interorbital_J"] < 1e-10
    names = {o["path"] for o in doc["outputs"]}
    assert names == {"params.txt", "perturbative.txt", "bands.txt", "wannier.txt"}


def test_bands_command(tmp_path):
    out = tmp_path / "o"
    assert main(["bands", "fig3-bell", "--output-dir", str(out)]) == 0
    doc = json.loads((out / "manifest.json").read_text())
    assert doc["results"]["max_edge_deviation"] < 1e-9
    assert doc["results"]["recoil_hz"] == pytest.approx(7317.25, abs=0.05)


def test_sweep_sign_change(tmp_path):
    out = tmp_path / "o"
    assert main(["sweep", "fig3-bell", "--param", "aS", "--from", "-50", "--to", "0", "--points", "6",
                 "--output-dir", str(out)]) == 0
    lines = (out / "sweep_aS.txt").read_text().splitlines()
    assert lines[0].split()[0] == "aS"
    rows = np.array([[float(x) for x in l.split()[:-1]] for l in lines[1:]])
    assert np.all([l.split()[-1] == "ok" for l in lines[1:]])
    J, residual = rows[:, 1], rows[:, 2]
    assert residual[0] < 0 < residual[-1] or residual[0] > 0 > residual[-1]
    assert np.any(np.sign(J[:-1]) != np.sign(J[1:]))


def test_sweep_single_point_and_validation(tmp_path):
    out = tmp_path / "o"
    assert main(["sweep", "fig3-bell", "--param", "V0p", "--from", "5", "--to", "5", "--points", "1",
                 "--output-dir", str(out)]) == 0
    assert len((out / "sweep_V0p.txt").read_text().splitlines()) == 2
    assert main(["sweep", "fig3-bell", "--param", "V0p", "--from", "5", "--to", "6", "--points", "1"]) == EXIT_CONFIG
    assert main(["sweep", "fig3-bell", "--param", "V0p", "--from", "5", "--to", "99", "--points", "3",
                 "--output-dir", str(out)]) == EXIT_CONFIG


def test_sample_times_include_boundaries():
    t = sample_times(1.0, 0.3, [0.45])
    np.testing.assert_allclose(t, [0.0, 0.3, 0.45, 0.6, 0.9, 1.0])
