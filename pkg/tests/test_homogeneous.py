import math

import numpy as np
import pytest

from enskoglab import homogeneous as hk
from enskoglab.collision import QuadratureRule, collision_integrals
from enskoglab.errors import ResolutionError, StabilityError
from enskoglab.fields import bimodal


@pytest.fixture(scope="module")
def quad16():
    return hk.CollisionSampler.build(16, 6.0, n_samples=200_000, seed=3)


def test_field_validation():
    with pytest.raises(ValueError):
        hk.VelocityField(-np.ones((4, 4, 4)), 6.0)
    with pytest.raises(ValueError):
        hk.VelocityField(np.ones((4, 4, 5)), 6.0)


def test_moments_of_maxwellian():
    f = hk.maxwellian_field(24, 6.0, theta=1.0, mean=(0.5, 0, 0))
    m, p, e = f.moments()
    assert m == pytest.approx(1.0, rel=1e-6)
    assert p == pytest.approx([0.5, 0, 0], abs=1e-6)
    assert e == pytest.approx(0.5 * (3 + 0.25), rel=1e-5)


def test_h_functional_gaussian():
    f = hk.maxwellian_field(32, 7.0)
    exact = -1.5 * (1 + math.log(2 * math.pi))
    assert hk.h_functional(f) == pytest.approx(exact, rel=1e-3)


def test_reverse_field_flips_momentum_and_is_involution():
    f = hk.maxwellian_field(16, 6.0, mean=(0.3, -0.2, 0.1))
    r = hk.reverse_field(f)
    assert np.allclose(r.momentum(), -f.momentum())
    assert np.array_equal(hk.reverse_field(r).values, f.values)


def test_maxwellian_is_stationary(quad16):
    f = hk.maxwellian_field(16, 6.0)
    rate = hk.collision_rate(f, 1.0, 1.0, quad16)
    assert np.max(np.abs(rate)) <= 1e-12 * np.max(f.values)


def test_step_conserves_and_decreases_h(quad16):
    f = hk.bimodal_field(16, 6.0, separation=1.2)
    dt = 0.5 * hk.dt_max(f, 1.0, 1.0, quad16)
    run = hk.integrate(f, dt, 20, 1.0, 1.0, quad16)
    rows = np.array(run.rows)
    assert np.max(np.abs(rows[:, 1:6] - rows[0, 1:6])) <= 1e-10
    assert np.all(np.diff(rows[:, 6]) <= hk.clip_budget(f))
    assert rows[-1, 6] < rows[0, 6]


def test_h_keeps_falling_after_reversal(quad16):
    f = hk.bimodal_field(16, 6.0, separation=1.2)
    dt = 0.3 * hk.dt_max(f, 1.0, 1.0, quad16)
    run = hk.integrate(f, dt, 20, 1.0, 1.0, quad16, reverse_at=10)
    h = np.array(run.rows)[:, 6]
    assert np.all(np.diff(h) <= hk.clip_budget(f))
    assert h[-1] < h[10]


def test_stability_gate(quad16):
    f = hk.bimodal_field(16, 6.0)
    with pytest.raises(StabilityError):
        hk.step(f, 2.0 * hk.dt_max(f, 1.0, 1.0, quad16), 1.0, 1.0, quad16)
    assert hk.step(f, 0.0, 1.0, 1.0, quad16) is f


def test_clipping_gate(quad16):
    # far beyond the stability bound RK4 overshoots into negative values
    f = hk.bimodal_field(16, 6.0, separation=2.0)
    with pytest.raises(ResolutionError):
        hk.step(f, 50 * hk.dt_max(f, 1.0, 1.0, quad16), 1.0, 1.0, quad16, check_stability=False)


def test_sampler_grid_mismatch(quad16):
    with pytest.raises(ValueError):
        hk.collision_rate(hk.maxwellian_field(24, 6.0), 1.0, 1.0, quad16)


def test_discrete_condition_11(quad16):
    m = hk.maxwellian_field(16, 6.0)
    viol, floor = hk.discrete_condition_11(m, quad16)
    assert viol <= 5 * floor
    b = hk.bimodal_field(16, 6.0)
    viol, floor = hk.discrete_condition_11(b, quad16)
    assert viol > 5 * floor


def test_snapshot_and_series_roundtrip(tmp_path, quad16):
    f = hk.bimodal_field(16, 6.0)
    hk.write_snapshot(tmp_path / "snap", f)
    g = hk.read_snapshot(tmp_path / "snap")
    assert np.array_equal(g.values, f.values) and g.v_max == f.v_max
    run = hk.integrate(f, 0.01, 2, 1.0, 1.0, quad16)
    hk.write_time_series(tmp_path / "ts.csv", run.rows)
    lines = (tmp_path / "ts.csv").read_text().splitlines()
    assert lines[0] == "t,mass,px,py,pz,energy,H" and len(lines) == 4


def test_rate_moments_match_collision_operator():
    """Velocity moments of the grid rate against the node-wise quadrature of the collision integral."""
    f = hk.bimodal_field(24, 6.0)
    rate = hk.collision_rate(f, 1.0, 1.0, hk.default_sampler(24, 6.0))
    V = f.nodes()
    psi = [V[..., 0] ** 2 - V[..., 1] ** 2, V[..., 0] ** 4]
    grid = np.array([np.sum(p * rate) * f.cell_volume for p in psi])
    fc = bimodal()
    inner = QuadratureRule.default(n_theta=8, n_phi=16, n_v=12)
    x, w = np.polynomial.legendre.leggauss(10)
    x, w = 5.0 * x, 5.0 * w
    ref = np.zeros(2)
    for i, a in enumerate(x):
        for j, b in enumerate(x):
            for k, c in enumerate(x):
                st = collision_integrals(fc, [0, 0, 0], [a, b, c], 1.0, 1.0, inner).boltzmann
                ref += w[i] * w[j] * w[k] * st * np.array([a * a - b * b, a**4])
    assert np.allclose(grid, ref, rtol=0.15)
