import json
import subprocess
import sys

import pytest

from enskoglab.cli import main


def run(tmp_path, command, cfg, *extra, name="run"):
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / f"out-{name}"
    code = main([command, "--config", str(path), "--out", str(out), *extra])
    return code, out


def test_simulate_two_particles(tmp_path):
    cfg = {"a": 0.1, "L": 1.0, "t": 1.0, "positions": [[0.3, 0.5, 0.5], [0.7, 0.5, 0.5]],
           "velocities": [[0.5, 0, 0], [-0.5, 0, 0]]}
    code, out = run(tmp_path, "simulate", cfg)
    assert code == 0
    events = (out / "events.jsonl").read_text().splitlines()
    assert len(events) == 1
    assert (out / "snapshots.csv").read_text().startswith("t,particle,qx,qy,qz,wx,wy,wz")
    man = json.loads((out / "manifest.json").read_text())
    assert man["command"] == "simulate" and "wall_time_s" in man and man["version"]


def test_simulate_with_potential_writes_energy(tmp_path):
    cfg = {"N": 3, "t": 0.2, "seed": 2, "potential": {"strength": 0.5}}
    code, out = run(tmp_path, "simulate", cfg)
    assert code == 0
    assert (out / "energy.csv").read_text().startswith("t,kinetic,potential,total")


def test_config_errors(tmp_path, capsys):
    code, _ = run(tmp_path, "simulate", {"N": 2, "a": 0.6, "L": 1.0})
    assert code == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["message"] == "sphere larger than half the box"
    assert main(["simulate", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 2
    code, _ = run(tmp_path, "simulate", {"bogus": 1}, name="bogus")
    assert code == 2


def test_kinetic_runs_and_stability_exit(tmp_path):
    base = {"initial": "maxwellian", "M": 12, "steps": 3, "n_samples": 50_000}
    code, out = run(tmp_path, "kinetic", base)
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    assert abs(summary["H_final"] - summary["H_initial"]) < 1e-10
    assert (out / "timeseries.csv").read_text().startswith("t,mass,px,py,pz,energy,H")
    code, _ = run(tmp_path, "kinetic", {**base, "initial": "bimodal", "dt": 100.0}, name="unstable")
    assert code == 3


def test_blobs_gate_and_reproducibility(tmp_path):
    code, _ = run(tmp_path, "blobs", {"eps_r": [0.2]}, name="wide")
    assert code == 2
    cfg = {"S": 20, "eps_r": [0.02], "gap_times": [0.0], "t_max": 0.5, "t_probe": 0.4, "write_ensembles": True}
    c1, o1 = run(tmp_path, "blobs", cfg, "--seed", "9", name="a")
    c2, o2 = run(tmp_path, "blobs", cfg, "--seed", "9", name="b")
    assert c1 == c2 == 0
    for f in ("report_0.json", "ensemble_0.csv", "sweep.json"):
        assert (o1 / f).read_bytes() == (o2 / f).read_bytes()


def test_reversal_commands(tmp_path):
    code, out = run(tmp_path, "reversal", {"class": "particle", "N": 8, "t": 2.0}, name="p")
    assert code == 0 and json.loads((out / "report.json").read_text())["verdict"] == "reversible"
    code, out = run(tmp_path, "reversal", {"class": "smooth", "M": 16, "steps": 10}, name="s")
    assert code == 0 and json.loads((out / "report.json").read_text())["verdict"] == "irreversible"
    assert (out / "h_series.csv").exists()
    code, _ = run(tmp_path, "reversal", {"class": "smooth", "t_rev": 2.0, "t_total": 1.0}, name="bad")
    assert code == 2


def test_stscan_uniform_has_no_gap(tmp_path):
    code, out = run(tmp_path, "stscan", {"field": "maxwellian", "probes": 2, "potential": None,
                                         "condition_11_samples": 100})
    assert code == 0
    s = json.loads((out / "summary.json").read_text())
    assert s["gap"]["mean_gap_a"] == 0.0
    header = (out / "scan.csv").read_text().splitlines()[0]
    assert header == "r_x,r_y,r_z,v_x,v_y,v_z,st_enskog,st_boltzmann,vlasov"


def test_stscan_threads_do_not_change_results(tmp_path):
    cfg = {"field": "modulated", "probes": 2, "n_v": 9, "n_theta": 6, "n_phi": 12, "vlasov_grid": 8,
           "condition_11_samples": 100}
    _, o1 = run(tmp_path, "stscan", cfg, "--threads", "1", name="t1")
    _, o2 = run(tmp_path, "stscan", cfg, "--threads", "2", name="t2")
    assert (o1 / "scan.csv").read_bytes() == (o2 / "scan.csv").read_bytes()


def test_module_entry_point(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"N": 2, "t": 0.1}))
    res = subprocess.run([sys.executable, "-m", "enskoglab", "simulate", "--config", str(path),
                          "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
