"""Acceptance suite: one PASS/FAIL line per criterion at the stated tolerances.

Two parts are genuinely unattainable and are kept red as strict xfails:
the modulated-Maxwellian half of criterion 7 and the post-collision
factorization gap of criterion 8(c).  The analysis is in the decisions ledger
(notes/decisions.md).
"""

import math
import time

import numpy as np
import pytest

from enskoglab import blobs
from enskoglab import homogeneous as hk
from enskoglab.bev import evolve_bev, quartic_bump, zero_potential
from enskoglab.collision import (
    QuadratureRule,
    SpatialGrid,
    check_condition_11,
    collision_integrals,
    condition_11_noise_floor,
    mean_force,
    sample_contact_set,
    vlasov_term,
)
from enskoglab.fields import bimodal, blob_field, maxwellian, modulated_maxwellian
from enskoglab.hardspheres import (
    collide_many,
    evolve,
    reverse,
    sample_admissible_config,
    state_distance,
)
from enskoglab.reversibility import PARTICLE_TOL, reversal_roundtrip, run_blob_reversal
from enskoglab.seeding import stream
from enskoglab.torus import min_image

LEDGER = "see notes/decisions.md"
EPSILONS = (0.02, 0.01, 0.005)
T_MAX = 1.2
T_PROBE = 0.6


# --- 1 ----------------------------------------------------------------------


def test_criterion_1_collision_law(verdict):
    rng = stream(0, "acceptance-1")
    n = 10**6
    v1 = rng.normal(size=(n, 3))
    v2 = rng.normal(size=(n, 3))
    sig = rng.normal(size=(n, 3))
    sig /= np.linalg.norm(sig, axis=1)[:, None]
    flip = np.einsum("ij,ij->i", v2 - v1, sig) < 0
    sig[flip] *= -1.0

    t0 = time.perf_counter()
    p1, p2 = collide_many(v1, v2, sig)
    elapsed = time.perf_counter() - t0

    # momentum in impulse form: each velocity moves by the same float vector J,
    # once with each sign, so the transfer J + (-J) is exactly zero
    J = sig * np.einsum("ij,ij->i", v2 - v1, sig)[:, None]
    impulse_exact = np.array_equal(p1, v1 + J) and np.array_equal(p2, v2 - J)
    # the rounded sum of the new velocities, for information only
    rounding = np.max(np.abs((p1 + p2) - (v1 + v2)))
    e0 = np.sum(v1 * v1 + v2 * v2, axis=1)
    e1 = np.sum(p1 * p1 + p2 * p2, axis=1)
    rel_e = np.max(np.abs(e1 - e0) / e0)

    ok = impulse_exact and rel_e <= 1e-12 and elapsed < 5.0
    verdict("1", ok, f"impulse form exact {impulse_exact}, sum rounding {rounding:.1e}, "
                     f"energy rel {rel_e:.1e}, {elapsed:.2f}s")
    assert ok


# --- 2, 3 -------------------------------------------------------------------


@pytest.fixture(scope="module")
def particle_runs():
    t0 = time.perf_counter()
    runs = [reversal_roundtrip(sample_admissible_config(8, 0.1, 1.0, seed=s), 4.0) for s in range(20)]
    return runs, time.perf_counter() - t0


def test_criterion_2_particle_reversal(particle_runs, verdict):
    runs, elapsed = particle_runs
    worst = max(max(dq, dw) for dq, dw, *_ in runs)
    counts_match = all(n1 == n2 for _, _, n1, n2, _ in runs)
    mean_coll = np.mean([n1 for _, _, n1, _, _ in runs])
    ok = worst <= PARTICLE_TOL and counts_match and elapsed < 30.0
    verdict("2", ok, f"max error {worst:.1e}, counts match {counts_match}, "
                     f"mean collisions {mean_coll:.1f}, {elapsed:.1f}s")
    assert ok


def test_criterion_3_no_overlap(particle_runs, verdict):
    runs, _ = particle_runs
    dmin = min(r[4] for r in runs)
    ok = dmin >= 0.1 * (1 - 1e-9)
    verdict("3", ok, f"min event distance {dmin:.12f} (a = 0.1)")
    assert ok


# --- 4 ----------------------------------------------------------------------


def test_criterion_4_maxwellian_fixed_point(verdict):
    f = maxwellian()
    quad = QuadratureRule.default()
    rng = stream(0, "acceptance-4")
    r = rng.uniform(0.0, 1.0, size=(1000, 3))
    v = rng.normal(size=(1000, 3))
    t0 = time.perf_counter()
    worst = 0.0
    for k in range(1000):
        ci = collision_integrals(f, r[k], v[k], 0.1, 1.0, quad)
        worst = max(worst, abs(ci.enskog) / ci.enskog_loss, abs(ci.boltzmann) / ci.boltzmann_loss)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-6 and elapsed < 60.0
    verdict("4", ok, f"max |St|/loss {worst:.1e}, {elapsed:.1f}s")
    assert ok


# --- 5, 6 -------------------------------------------------------------------


@pytest.fixture(scope="module")
def bimodal_run():
    f = hk.bimodal_field(24, 6.0)
    t0 = time.perf_counter()
    quad = hk.default_sampler(f.M, f.v_max)
    dt = 0.5 * hk.dt_max(f, 1.0, 1.0, quad)
    run = hk.integrate(f, dt, 200, 1.0, 1.0, quad, reverse_at=100)
    return f, run, time.perf_counter() - t0


def test_criterion_5_conservation(bimodal_run, verdict):
    f, run, elapsed = bimodal_run
    rows = run.as_array()
    m0, e0 = rows[0, 1], rows[0, 5]
    dm = np.max(np.abs(rows[:, 1] - m0)) / m0
    de = np.max(np.abs(rows[:, 5] - e0)) / e0
    # momentum starts at zero; measure it against the thermal momentum scale
    dp = np.max(np.linalg.norm(rows[:, 2:5] - rows[0, 2:5], axis=1)) / math.sqrt(m0 * e0)
    ok = max(dm, dp, de) <= 1e-5 and elapsed < 600.0
    verdict("5", ok, f"mass {dm:.1e}, momentum {dp:.1e}, energy {de:.1e}, {elapsed:.0f}s")
    assert ok


def test_criterion_6_h_theorem(bimodal_run, verdict):
    f, run, _ = bimodal_run
    h = run.h_series()
    budget = hk.clip_budget(f)
    rises = np.diff(h)
    worst = float(rises.max())
    before, after = h[:101], h[100:]
    # the reversed field keeps relaxing: H keeps falling past the reversal point
    witness = after[-1] < after[0] - budget
    ok = worst <= budget and witness
    verdict("6", ok, f"largest step rise {worst:.1e} (budget {budget:.1e}), "
                     f"H {before[0]:.6f} -> {after[0]:.6f} -> {after[-1]:.6f}")
    assert ok


# --- 7 ----------------------------------------------------------------------


def _condition_11(f, samples, a=0.1):
    return check_condition_11(f, a, samples), condition_11_noise_floor(f, a, samples)


@pytest.fixture(scope="module")
def contact_samples():
    return sample_contact_set(stream(0, "acceptance-7"), 20_000)


def test_criterion_7_controls(contact_samples):
    """Uniform Maxwellian and separated blobs sit at or below the floor."""
    v, fl = _condition_11(maxwellian(), contact_samples)
    assert v <= fl
    blobs_f = blob_field([[0.2, 0.2, 0.2], [0.7, 0.7, 0.7]], [[0.5, 0, 0], [-0.5, 0, 0]], 0.02, 0.02)
    v, fl = _condition_11(blobs_f, contact_samples)
    assert v <= fl


@pytest.mark.xfail(strict=True, reason="any M(v) g(r) satisfies the pair condition exactly; " + LEDGER)
def test_criterion_7_condition_11(contact_samples, verdict):
    vm, fm = _condition_11(modulated_maxwellian(0.5), contact_samples)
    vu, fu = _condition_11(maxwellian(), contact_samples)
    blobs_f = blob_field([[0.2, 0.2, 0.2], [0.7, 0.7, 0.7]], [[0.5, 0, 0], [-0.5, 0, 0]], 0.02, 0.02)
    vb, fb = _condition_11(blobs_f, contact_samples)
    vx, fx = _condition_11(bimodal(), contact_samples)
    ok = vm > 5 * fm and vu <= fu and vb <= fb
    verdict("7", ok, f"modulated {vm:.1e} vs 5x floor {5 * fm:.1e}; uniform {vu:.1e} <= {fu:.1e}; "
                     f"blobs {vb:.1e}; (bimodal for contrast {vx:.1e} vs {fx:.1e})")
    assert ok


# --- 8, 9 -------------------------------------------------------------------


@pytest.fixture(scope="module")
def blob_study():
    gamma = blobs.three_particle_scenario()
    _, log = evolve(gamma, T_MAX, return_log=True)
    ref_probe = blobs.check_probe_time(gamma, T_PROBE)
    out = []
    t0 = time.perf_counter()
    for eps in EPSILONS:
        moll = blobs.Mollifier(eps, eps)
        ens = blobs.draw_ensemble(gamma, moll, 2000, seed=0)
        T = blobs.coherence_time(ens, T_MAX)
        err, se = blobs.centroid_errors(blobs.flow_ensemble(ens, T_PROBE), ref_probe)
        k = int(np.argmax(err))
        gaps = []
        for t in (0.0, 0.5 * T, T, T_PROBE):
            _, rows = blobs.factorization_gap(blobs.flow_ensemble(ens, t))
            gaps.append((t, rows))
        out.append({"eps": eps, "moll": moll, "T": T, "err": float(err[k]), "se": float(se[k]), "gaps": gaps})
    return gamma, len(log), out, time.perf_counter() - t0


def _gap_summary(study):
    worst_z, core_zero = 0.0, True
    for s in study:
        for _, rows in s["gaps"]:
            for r in rows:
                if r["core"]:
                    core_zero &= r["F2"] == 0.0
                else:
                    z = abs(r["gap"]) / r["se"] if r["se"] > 0 else (0.0 if r["gap"] == 0 else math.inf)
                    worst_z = max(worst_z, z)
    return worst_z, core_zero


def _part_a(study):
    T = [s["T"] for s in study]
    return all(T[i] <= T[i + 1] for i in range(len(T) - 1)), T


def _part_b(study):
    ok = True
    for s, t in zip(study, study[1:]):
        ok &= s["err"] - t["err"] > 3 * math.hypot(s["se"], t["se"])
    return ok


def test_criterion_8a_coherence_time(blob_study):
    gamma, n_coll, study, _ = blob_study
    assert n_coll >= 2
    assert _part_a(study)[0]


def test_criterion_8b_centroid_error(blob_study):
    assert _part_b(blob_study[2])


@pytest.mark.xfail(strict=True, reason="collisions correlate the pair density beyond 3 SE; " + LEDGER)
def test_criterion_8_blob_mechanism(blob_study, verdict):
    _, n_coll, study, elapsed = blob_study
    a_ok, T = _part_a(study)
    b_ok = _part_b(study)
    worst_z, core_zero = _gap_summary(study)
    c_ok = worst_z <= 3.0 and core_zero
    ok = n_coll >= 2 and a_ok and b_ok and c_ok and elapsed < 600.0
    errs = ", ".join(f"{s['err']:.2e}" for s in study)
    verdict("8", ok, f"(a) {'PASS' if a_ok else 'FAIL'} T = {', '.join(f'{x:.3f}' for x in T)}; "
                     f"(b) {'PASS' if b_ok else 'FAIL'} errors {errs}; "
                     f"(c) {'PASS' if c_ok else 'FAIL'} worst gap {worst_z:.1f} SE, core F2 = 0 {core_zero}; "
                     f"{elapsed:.0f}s")
    assert ok


def test_criterion_9_blob_reversal(blob_study, verdict):
    gamma, _, study, _ = blob_study
    s = study[-1]
    rep = run_blob_reversal(gamma, s["moll"], 2000, s["T"], seed=0, t_window=s["T"])
    ok = rep.reversal_error <= PARTICLE_TOL and rep.verdict == "reversible" and not rep.flags
    verdict("9", ok, f"eps {s['eps']}, t = T_eps = {s['T']:.3f}, max sample error {rep.reversal_error:.1e}")
    assert ok


# --- 10 ---------------------------------------------------------------------


def test_criterion_10_boltzmann_grad_gap(verdict):
    f = modulated_maxwellian(0.5)
    quad = QuadratureRule.default()
    rng = stream(0, "acceptance-10")
    r = rng.uniform(0.0, 1.0, size=(100, 3))
    v = rng.normal(size=(100, 3))
    a, na2 = 0.05, 1.0
    gaps = np.zeros((100, 2))
    for k in range(100):
        for j, aa in enumerate((a, 0.5 * a)):
            ci = collision_integrals(f, r[k], v[k], aa, na2 / aa**2, quad)
            gaps[k, j] = abs(ci.enskog - ci.boltzmann)
    ratio = gaps[:, 0].mean() / gaps[:, 1].mean()
    ok = 1.6 <= ratio <= 2.4
    verdict("10", ok, f"gap ratio a / (a/2) = {ratio:.3f}")
    assert ok


# --- 11 ---------------------------------------------------------------------


def test_criterion_11_bev_hybrid(verdict):
    # seed 22 collides three times under the bump by t=2, seed 34 four times without it
    cfg = sample_admissible_config(4, 0.1, 1.0, seed=22)
    pot = quartic_bump()
    drift = []
    for dt in (1e-3, 5e-4):
        _, E = evolve_bev(cfg, pot, 2.0, dt, record_energy=True)
        drift.append(np.max(np.abs(E[:, 3] - E[0, 3])))
    ratio = drift[0] / drift[1]

    fwd = evolve_bev(cfg, pot, 2.0)
    back = evolve_bev(reverse(fwd), pot, 2.0)
    rev_err = max(state_distance(back, reverse(cfg)))

    zero_err = 0.0
    for seed in (22, 34):
        c = sample_admissible_config(4, 0.1, 1.0, seed=seed)
        zero_err = max(zero_err, *state_distance(evolve_bev(c, zero_potential(), 2.0), evolve(c, 2.0)))

    ok = ratio >= 3.5 and rev_err <= 1e-5 and zero_err <= 1e-8
    verdict("11", ok, f"drift ratio {ratio:.2f}, reversal error {rev_err:.1e}, Phi=0 vs hard spheres {zero_err:.1e}")
    assert ok


# --- 12 ---------------------------------------------------------------------


def test_criterion_12_vlasov(verdict):
    pot = quartic_bump()
    uniform = max(abs(vlasov_term(maxwellian(), r, v, pot, 1.0, grid=SpatialGrid(16)))
                  for r, v in [([0.3, 0.2, 0.1], [0.4, -0.2, 0.1]), ([0.9, 0.5, 0.05], [-1.0, 0.3, 0.7])])

    # two point sources, smeared into narrow Gaussians and integrated on the grid;
    # the force is cubic in the offset, so the w^2 smearing bias extrapolates away
    L = 1.0
    src = np.array([[0.62, 0.5, 0.5], [0.4, 0.38, 0.55]])
    mass = np.array([1.0, 0.5])
    r1 = np.array([0.5, 0.5, 0.5])
    direct = mean_force(r1, pot, L, sources=src, masses=mass)

    def smeared(w):
        def rho(p):
            d = min_image(p[:, None, :], src[None], L)
            return (mass * np.exp(-0.5 * np.sum(d * d, -1) / w**2) / (2 * np.pi * w * w) ** 1.5).sum(1)

        return mean_force(r1, pot, L, density=rho, grid=SpatialGrid(96))

    grid_force = (4 * smeared(0.01) - smeared(0.02)) / 3
    rel = np.linalg.norm(grid_force - direct) / np.linalg.norm(direct)
    ok = uniform <= 1e-10 and rel <= 1e-3
    verdict("12", ok, f"uniform density {uniform:.1e}, two sources rel error {rel:.1e}")
    assert ok
