import json
import subprocess
import sys


from deadoil.artifacts import read_trajectory
from deadoil.cli import run

from conftest import config_path

SMALL = """
[domain]
Lx = 1
Ly = 1
T = 0.05
nx = 8
nt = 10

[coefficients]
phi = affine_plus_sine c=0.25
g = rational a=0.5 b=1
d = affine_plus_cosine a=1.25 b=0 c=0.25
c1 = 1
c2 = 2.5
c3 = 1.25
delta_phi = 0.5
range = -2 2

[initial]
u0 = sine_product amp=0.5
p0 = sine_product amp=1 ky=2

[targets]
U = poly_bump amp=0.3
P = zero

[wells]
control = sine_product amp=5
control_time = linear a=1 b=10

[cost]
beta1 = 1.5e-3
beta2 = 2E-4
q0 = 1.5

[optimize]
max_outer = 5
starts = 2
"""


def small_config(tmp_path, extra="", replace=None):
    text = SMALL + extra
    for old, new in (replace or {}).items():
        text = text.replace(old, new)
    path = tmp_path / "run.cfg"
    path.write_text(text)
    return str(path)


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


def test_simulate_heat_writes_trajectories(tmp_path):
    out = tmp_path / "heat"
    assert run(["simulate", "--config", config_path("heat.cfg"), "--out", str(out)]) == 0
    u, ns = read_trajectory(out / "u")
    assert ns[0] == 0 and ns[-1] == 200
    assert (out / "p" / "index.csv").exists() and (out / "figures" / "p_final.png").exists()
    m = manifest(out)
    assert m["status"] == "ok" and "u/index.csv" in m["outputs"]
    assert "manifest.json" not in m["outputs"]


def test_missing_config_exits_2_and_names_path(tmp_path, capsys):
    missing = str(tmp_path / "nope.cfg")
    assert run(["simulate", "--config", missing, "--out", str(tmp_path / "o")]) == 2
    assert missing in capsys.readouterr().err
    m = manifest(tmp_path / "o")
    assert m["exit_code"] == 2 and missing in m["error"]


def test_duplicate_key_exits_2(tmp_path):
    cfg = small_config(tmp_path, "\n[cost]\nbeta1 = 1\n")
    out = tmp_path / "o"
    assert run(["simulate", "--config", cfg, "--out", str(out)]) == 2
    assert "duplicate" in manifest(out)["error"]


def test_usage_errors_exit_2(tmp_path):
    assert run(["simulate"]) == 2
    assert run(["simulate", "--out", str(tmp_path), "--jobs", "0"]) == 2
    assert run(["simulate", "--out", str(tmp_path)]) == 2  # needs --config


def test_hypothesis_failure_exits_1_with_witness(tmp_path):
    cfg = small_config(tmp_path, replace={"a=1.25 b=0 c=0.25": "a=1.0 b=0 c=0.25"})
    out = tmp_path / "o"
    assert run(["simulate", "--config", cfg, "--out", str(out)]) == 1
    m = manifest(out)
    assert m["status"] == "error" and "d >= c1" in m["error"]
    # d = 1 + 0.25 (cos r - 1) is smallest at the ends of [-2, 2]
    assert "r=-2" in m["error"] or "r=2" in m["error"]
    assert json.loads((out / "validation.json").read_text())["passed"] is False


def test_manifest_echoes_scientific_notation(tmp_path):
    cfg = small_config(tmp_path)
    out = tmp_path / "o"
    assert run(["simulate", "--config", cfg, "--out", str(out)]) == 0
    m = manifest(out)
    assert m["config_text"] == open(cfg).read()
    assert float(m["config"]["cost"]["beta1"]) == 1.5e-3
    assert float(m["config"]["cost"]["beta2"]) == 2e-4
    assert len(m["input_hash"]) == 64


def test_optimize_multistart_outputs(tmp_path):
    cfg = small_config(tmp_path)
    out = tmp_path / "o"
    assert run(["optimize", "--config", cfg, "--out", str(out), "--jobs", "2"]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert len(summary["starts"]) == 2
    for k in range(2):
        header = (out / f"start_{k:02d}" / "history.csv").read_text().splitlines()[0]
        assert header.startswith("iteration,J,")
    assert (out / "f_opt" / "index.csv").exists() and (out / "figures" / "history.png").exists()


def test_verify_small(tmp_path):
    cfg = small_config(tmp_path, "\n[verify]\nprobes = 6\n")
    out = tmp_path / "o"
    assert run(["verify", "--config", cfg, "--out", str(out), "--jobs", "2"]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["probes"] == 6 and summary["passed"]


def test_mms_writes_convergence_tables(tmp_path):
    out = tmp_path / "o"
    assert run(["mms", "--case", "M1", "--levels", "2", "--out", str(out), "--jobs", "2"]) == 0
    lines = (out / "convergence_space.csv").read_text().splitlines()
    assert lines[0].startswith("n,h,nt,dt,err_u,err_p") and len(lines) == 3
    assert (out / "figures" / "convergence.png").exists()


def test_mms_unknown_case_exits_2(tmp_path):
    assert run(["mms", "--case", "M7", "--out", str(tmp_path)]) == 2


def test_simulate_is_deterministic(tmp_path):
    cfg = small_config(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["simulate", "--config", cfg, "--out", str(a), "--seed", "3"]) == 0
    assert run(["simulate", "--config", cfg, "--out", str(b), "--seed", "3"]) == 0
    ma, mb = manifest(a), manifest(b)
    assert ma["outputs"] == mb["outputs"] and ma["input_hash"] == mb["input_hash"]


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "deadoil", "--version"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("deadoil ")
