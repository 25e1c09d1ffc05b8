import json

import numpy as np
import pytest

from enskoglab import homogeneous as hk
from enskoglab.blobs import Mollifier, three_particle_scenario
from enskoglab.hardspheres import ParticleConfig, sample_admissible_config
from enskoglab.reversibility import run_blob_reversal, run_particle_reversal, run_smooth_irreversibility


@pytest.fixture(scope="module")
def quad16():
    return hk.CollisionSampler.build(16, 6.0, n_samples=200_000, seed=3)


def test_particle_single_and_zero_time():
    one = ParticleConfig([[0.1, 0.2, 0.3]], [[0.3, -1.0, 0.2]], 0.1, 1.0)
    assert run_particle_reversal(one, 3.0).reversal_error < 1e-15
    cfg = sample_admissible_config(6, 0.1, 1.0, seed=1)
    rep = run_particle_reversal(cfg, 0.0)
    assert rep.reversal_error == 0.0 and rep.verdict == "reversible"


def test_particle_report_is_json():
    rep = run_particle_reversal(sample_admissible_config(8, 0.1, 1.0, seed=0), 2.0)
    d = json.loads(rep.to_json())
    assert d["class_tag"] == "particle"
    assert d["forward"]["collisions_forward"] == d["forward"]["collisions_backward"]
    assert d["verdict"] == ("reversible" if d["reversal_error"] <= d["thresholds"]["tol"] else "not reversible")


def test_smooth_bimodal_irreversible(quad16):
    f = hk.bimodal_field(16, 6.0, separation=1.2)
    dt = 0.2 * hk.dt_max(f, 1.0, 1.0, quad16)
    rep = run_smooth_irreversibility(f, 10 * dt, 20 * dt, dt, quad=quad16)
    assert rep.verdict == "irreversible"
    assert all(s == -1 for s in rep.forward["h_slope_signs"])


def test_smooth_maxwellian_degenerate(quad16):
    f = hk.maxwellian_field(16, 6.0)
    rep = run_smooth_irreversibility(f, 0.05, 0.1, 0.01, quad=quad16)
    assert rep.verdict == "degenerate"


def test_smooth_reversal_at_zero_is_forward_run(quad16):
    f = hk.bimodal_field(16, 6.0)
    dt = 0.2 * hk.dt_max(f, 1.0, 1.0, quad16)
    rep = run_smooth_irreversibility(f, 0.0, 5 * dt, dt, quad=quad16)
    # reversing at t=0 then running equals running the mirrored field; f is mirror symmetric
    plain = hk.integrate(f, dt, 5, 1.0, 1.0, quad16)
    assert rep.h_series[-1][1] == pytest.approx(plain.rows[-1][6], rel=1e-12)


def test_smooth_argument_gate():
    with pytest.raises(ValueError):
        run_smooth_irreversibility(hk.maxwellian_field(8, 6.0), 1.0, 0.5, 0.1)


def test_blob_reversal_and_window_flag():
    g = three_particle_scenario()
    rep = run_blob_reversal(g, Mollifier(0.01, 0.01), 50, 0.3, seed=2)
    assert rep.verdict == "reversible" and not rep.flags
    late = run_blob_reversal(g, Mollifier(0.02, 0.02), 20, 1.0, seed=2, t_window=0.2)
    assert "outside guaranteed window" in late.flags


def test_blob_degenerate_matches_particle():
    g = three_particle_scenario()
    a = run_blob_reversal(g, Mollifier(0.0, 0.0), 3, 0.5, t_window=0.5)
    b = run_particle_reversal(g, 0.5)
    assert a.reversal_error == pytest.approx(b.reversal_error, abs=1e-18)
