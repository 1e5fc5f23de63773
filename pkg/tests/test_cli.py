import csv
import io
import subprocess
import sys

import numpy as np
import pytest

from thermocoh import cli
from thermocoh.coherence import pair_plateau
from thermocoh.config import ConfigError, config_hash, resolve


def run_cli(tmp_path, args, config=None, name="out.csv"):
    out = tmp_path / name
    argv = list(args) + ["--out", str(out)]
    if config is not None:
        path = tmp_path / f"{name}.toml"
        path.write_text(config)
        argv += ["--config", str(path)]
    code = cli.main(argv)
    return code, (out.read_text() if out.exists() else None)


def parse(text):
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(lines))))


def header(text):
    return {ln[2:].split(":")[0]: ln[2:].split(":", 1)[-1].strip()
            for ln in text.splitlines() if ln.startswith("# ") and ":" in ln}


def test_header_block(tmp_path):
    code, text = run_cli(tmp_path, ["couplings", "--seed", "7"])
    assert code == 0
    h = header(text)
    assert h["experiment"] == "couplings" and h["seed"] == "7"
    assert len(h["config_sha256"]) == 64
    assert text.startswith("# thermocoh ")


# --- pair-coherence ---------------------------------------------------------

def test_pair_coherence_plateaus(tmp_path):
    code, text = run_cli(tmp_path, ["pair-coherence", "--nbar", "0,0.5,1,10"],
                         config="[time]\nt_max = 5.0\nn_points = 26\n")
    assert code == 0
    rows = parse(text)
    assert max(float(r["abs_error"]) for r in rows) <= 1e-6
    for nb in (0.5, 1.0, 10.0):
        last = [r for r in rows if float(r["nbar"]) == nb][-1]
        # the slowest approach (nbar = 0.5) decays like exp(-2.27 t)
        assert float(last["C_numeric"]) == pytest.approx(pair_plateau(nb), abs=1e-5)
    zero = [float(r["C_numeric"]) for r in rows if float(r["nbar"]) == 0]
    assert zero and all(v == 0 for v in zero)


# --- dipole-effect ------------------------------------------------------------

@pytest.fixture(scope="module")
def dipole_rows(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("dipole")
    code, text = run_cli(tmp, ["dipole-effect", "--f0", "0,1,100"],
                         config="[time]\nt_max = 5.0\nn_points = 501\n")
    assert code == 0
    return parse(text)


def series(rows, state, f0):
    sel = [r for r in rows if r["state"] == state and float(r["f0"]) == f0]
    return np.array([float(r["t"]) for r in sel]), np.array([float(r["C"]) for r in sel])


@pytest.mark.parametrize("state", ["ge+i_eg", "sqrt3_ge+eg"])
def test_dipole_effect_weak_and_strong(dipole_rows, state):
    t, c0 = series(dipole_rows, state, 0.0)
    _, c1 = series(dipole_rows, state, 1.0)
    _, c100 = series(dipole_rows, state, 100.0)
    assert np.all(np.abs(c1 - c0) < 1e-2 * np.maximum(c0, 1e-3))
    short = t <= 0.2
    assert np.abs(c100 - c0)[short].max() > 1e-2
    # several local extrema: oscillations
    d = np.diff(c100[short])
    assert np.sum(np.sign(d[1:]) != np.sign(d[:-1])) >= 2
    assert abs(c100[-1] - c0[-1]) < 1e-6 and abs(c1[-1] - c0[-1]) < 1e-6


def test_dipole_insensitive_state(dipole_rows):
    _, c0 = series(dipole_rows, "insensitive", 0.0)
    for f0 in (1.0, 100.0):
        _, c = series(dipole_rows, "insensitive", f0)
        assert np.abs(c - c0).max() < 1e-6


def test_dipole_unknown_state(tmp_path):
    code, _ = run_cli(tmp_path, ["dipole-effect"], config='[states]\nnames = ["nope"]\n')
    assert code == 2


# --- scaling ------------------------------------------------------------------

def test_scaling_small(tmp_path):
    code, text = run_cli(tmp_path, ["scaling", "--n-atoms", "5"],
                         config="[scaling]\nn_min = 1\n")
    assert code == 0
    rows = parse(text)
    assert [int(r["N"]) for r in rows] == [1, 2, 3, 4, 5]
    cs = [float(r["C_longtime"]) for r in rows]
    assert all(b > a for a, b in zip(cs, cs[1:]))
    assert cs[1] == pytest.approx(110 / 331, abs=1e-6)
    assert "r_squared=" in text and "strictly_increasing=True" in text
    assert all(float(r["residual_l1"]) <= 1e-8 for r in rows)


def test_scaling_dense_rejected_above_four(tmp_path, capsys):
    code, text = run_cli(tmp_path, ["scaling", "--n-atoms", "5"],
                         config='[model]\nmode = "dense"\n')
    assert code == 2 and text is None
    assert "matrix-free" in capsys.readouterr().err
    code, _ = run_cli(tmp_path, ["scaling", "--n-atoms", "5"],
                      config='[scaling]\nmethod = "null"\n', name="b.csv")
    assert code == 2


def test_scaling_null_method(tmp_path):
    code, text = run_cli(tmp_path, ["scaling", "--n-atoms", "3"],
                         config='[scaling]\nmethod = "null"\n')
    assert code == 0
    assert float(parse(text)[0]["C_longtime"]) == pytest.approx(110 / 331, abs=1e-10)


def test_numerical_failure_exit_code(tmp_path, capsys):
    code, text = run_cli(tmp_path, ["scaling", "--n-atoms", "2"],
                         config="[scaling]\nconv_tol = 1e-14\nhorizon = 0.5\n")
    assert code == 3 and text is None
    assert "numerical failure" in capsys.readouterr().err


# --- harvest ------------------------------------------------------------------

HARVEST_PAIRS = """
[collision]
collisions = 2000
seeds = 4

[[pairs]]
name = "thermal"
kind = "thermal"
nbar = 10.0

[[pairs]]
name = "reference"
kind = "thermal-reference"
nbar = 10.0

[[pairs]]
name = "inverted"
a = [[0.5, 0, 0, 0], [0, 0.2, 0, 0], [0, 0, 0.2, 0], [0, 0, 0, 0.1]]

[[pairs]]
name = "dark"
a = [[0, 0, 0, 0], [0, 0.5, -0.5, 0], [0, -0.5, 0.5, 0], [0, 0, 0, 0]]
"""


def test_harvest(tmp_path):
    code, text = run_cli(tmp_path, ["harvest"], config=HARVEST_PAIRS)
    assert code == 0
    rows = {r["pair"]: r for r in parse(text)}
    th, ref = rows["thermal"], rows["reference"]
    assert th["T_kind"] == "positive" and ref["T_kind"] == "positive"
    assert float(th["T_value"]) > float(ref["T_value"])
    assert float(th["T_value"]) == pytest.approx(1 / np.log(1.1), rel=1e-9)
    assert rows["inverted"]["T_kind"] == "negative"
    assert rows["dark"]["status"] == "dark" and rows["dark"]["T_kind"] == "undefined"
    for name in ("thermal", "reference", "inverted"):
        r = rows[name]
        assert abs(float(r["rho_ee_ss"]) - float(r["rho_ee_mc"])) < 2e-2
        assert float(r["collisions_mean"]) == pytest.approx(2000, rel=0.1)


def test_harvest_bad_pair(tmp_path):
    code, _ = run_cli(tmp_path, ["harvest"], config='[[pairs]]\nname = "x"\na = [[1, 0], [0, 0]]\n')
    assert code == 2


# --- couplings ------------------------------------------------------------------

def test_couplings_regimes(tmp_path):
    code, text = run_cli(tmp_path, ["couplings"])
    assert code == 0
    rows = parse(text)
    first, last = rows[0], rows[-1]
    assert float(first["xi"]) == pytest.approx(0.01)
    assert abs(float(first["gamma"]) - 1) < 1e-3
    assert float(first["f"]) == pytest.approx(float(first["f_near_field"]), rel=1e-3)
    assert abs(float(last["gamma"])) < 0.02 and abs(float(last["f"])) < 0.02


def test_couplings_magic_angle(tmp_path):
    alpha = float(np.degrees(np.arccos(1 / np.sqrt(3))))
    code, text = run_cli(tmp_path, ["couplings"],
                         config=f"[geometry]\nalpha_deg = [{alpha!r}]\nxi_min = 0.01\n")
    assert code == 0
    for r in parse(text):
        assert abs(float(r["f_near_field"])) < 1e-9 / float(r["xi"]) ** 3
        xi = float(r["xi"])
        # only the far-field piece survives
        assert float(r["f"]) == pytest.approx(-0.5 * np.cos(xi) / xi, rel=1e-9, abs=1e-12)


def test_couplings_presets(tmp_path):
    code, text = run_cli(tmp_path, ["couplings"],
                         config='[geometry]\npreset = "collinear"\nn_atoms = 4\nspacing = 0.2\n')
    assert code == 0 and len(parse(text)) == 6
    code, text = run_cli(tmp_path, ["couplings"], name="e.csv",
                         config='[geometry]\npreset = "explicit"\n'
                                'positions = [[0, 0, 0], [0, 0, 0]]\n')
    assert code == 2
    code, _ = run_cli(tmp_path, ["couplings"], name="f.csv",
                      config='[geometry]\npreset = "spiral"\n')
    assert code == 2


# --- configuration and determinism -------------------------------------------------

def test_malformed_and_missing_config(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("[model\nnbar = ")
    assert cli.main(["couplings", "--config", str(bad)]) == 2
    assert cli.main(["couplings", "--config", str(tmp_path / "missing.toml")]) == 2
    other = tmp_path / "other.toml"
    other.write_text('experiment = "scaling"\n')
    assert cli.main(["couplings", "--config", str(other)]) == 2


def test_argparse_errors_exit_two():
    with pytest.raises(SystemExit) as info:
        cli.main(["pair-coherence", "--nbar", "abc"])
    assert info.value.code == 2
    with pytest.raises(SystemExit) as info:
        cli.main(["no-such-experiment"])
    assert info.value.code == 2


def test_precedence_defaults_file_flags(tmp_path):
    assert resolve("pair-coherence")["model"]["nbar"] == [0.5, 1.0, 10.0]
    file_cfg = {"model": {"nbar": 2.0, "f0": 3.0}, "time": {"n_points": 5}}
    cfg = resolve("pair-coherence", file_cfg, {"model": {"nbar": 4.0}})
    assert cfg["model"] == {"nbar": 4.0, "f0": 3.0}
    assert cfg["time"] == {"t_max": 5.0, "n_points": 5}
    with pytest.raises(ConfigError):
        resolve("pair-coherence", {"workers": 0})
    code, text = run_cli(tmp_path, ["pair-coherence", "--nbar", "4"],
                         config="[model]\nnbar = 2.0\n[time]\nn_points = 3\n")
    assert {float(r["nbar"]) for r in parse(text)} == {4.0}
    assert len(parse(text)) == 3


def test_hash_ignores_output_and_workers():
    a = resolve("harvest", {}, {"out": "x.csv", "workers": 3})
    b = resolve("harvest")
    assert config_hash(a) == config_hash(b)
    assert config_hash(resolve("harvest", {}, {"seed": 1})) != config_hash(b)


def test_byte_identical_outputs(tmp_path):
    cfg = "[collision]\ncollisions = 500\nseeds = 3\n"
    _, a = run_cli(tmp_path, ["harvest", "--seed", "9"], config=cfg, name="a.csv")
    _, b = run_cli(tmp_path, ["harvest", "--seed", "9", "--workers", "2"], config=cfg,
                   name="b.csv")
    _, c = run_cli(tmp_path, ["harvest", "--seed", "10"], config=cfg, name="c.csv")
    assert a == b
    assert a != c


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "thermocoh", "couplings"],
                          capture_output=True, text=True, check=True)
    assert proc.stdout.startswith("# thermocoh")
