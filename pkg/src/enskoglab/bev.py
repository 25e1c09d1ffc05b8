"""Hard spheres with an additional smooth pair potential.

Between contacts the spheres follow Newton's equations with the cut-off
pair force; contacts are resolved with the elastic hard-sphere law.  The
integrator is kick-drift-kick velocity Verlet in which the force-free drift
carries the hard-core collisions, so every step is time-symmetric.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import BracketError, EventBudgetError, OverlapError, StepSizeError
from .hardspheres import DEFAULT_MAX_EVENTS, CollisionEvent, ParticleConfig, collide, reverse  # noqa: F401
from .torus import min_image, wrap

CONTACT_TOL = 1e-10


@dataclass(frozen=True)
class PairPotential:
    """Radial pair potential ``Φ(s)`` that vanishes (with its slope) beyond ``cutoff``."""

    phi: Callable
    dphi: Callable
    cutoff: float
    m: float = 1.0

    def energy(self, s):
        s = np.asarray(s, dtype=float)
        return np.where(s < self.cutoff, self.phi(np.minimum(s, self.cutoff)), 0.0)

    def slope(self, s):
        s = np.asarray(s, dtype=float)
        return np.where(s < self.cutoff, self.dphi(np.minimum(s, self.cutoff)), 0.0)

    def gradient(self, d):
        """``∂Φ(|d|)/∂d`` for displacement rows ``d = r1 - r2`` (zero at ``d = 0``)."""
        d = np.asarray(d, dtype=float)
        s = np.linalg.norm(d, axis=-1)
        safe = np.where(s > 0, s, 1.0)
        coef = np.where(s > 0, self.slope(s) / safe, 0.0)
        return coef[..., None] * d


def bump_potential(strength=1.0, cutoff=0.4, m=1.0, power=2) -> PairPotential:
    """``Φ(s) = strength (1 - (s/cutoff)^2)^power`` for ``s < cutoff``.

    ``power=2`` (the quartic bump) is C¹ at the cutoff; its force has a kink
    there, which :func:`evolve_bev` handles by refining steps that cross it.
    """
    if power < 2:
        raise ValueError("power must be at least 2")

    def phi(s):
        return strength * (1.0 - (s / cutoff) ** 2) ** power

    def dphi(s):
        return -2.0 * power * strength * s * (1.0 - (s / cutoff) ** 2) ** (power - 1) / cutoff**2

    return PairPotential(phi, dphi, cutoff, m)


def quartic_bump(strength=1.0, cutoff=0.4, m=1.0) -> PairPotential:
    return bump_potential(strength, cutoff, m, power=2)


def zero_potential(cutoff=0.4, m=1.0) -> PairPotential:
    return PairPotential(np.zeros_like, np.zeros_like, cutoff, m)


def _check_potential(pot: PairPotential, config: ParticleConfig):
    if pot.cutoff > 0.5 * config.L:
        raise ValueError("potential cutoff must not exceed L/2")


def _pairs(N):
    return np.triu_indices(N, 1)


def pair_forces(positions, pot: PairPotential, L, a=None):
    """Force on every sphere; overlapping pairs raise :class:`OverlapError`."""
    N = positions.shape[0]
    F = np.zeros((N, 3))
    if N < 2:
        return F
    i, j = _pairs(N)
    d = min_image(positions[i], positions[j], L)
    s = np.linalg.norm(d, axis=1)
    if a is not None and np.any(s < a * (1.0 - 1e-8)):
        raise OverlapError("pair distance below the sphere diameter")
    fij = -pot.gradient(d)  # force on i from j
    np.add.at(F, i, fij)
    np.add.at(F, j, -fij)
    return F


def total_force(config: ParticleConfig, pot: PairPotential, i: int) -> np.ndarray:
    """Force on sphere ``i``: ``-Σ_j Φ'(s_ij) e_ji`` with ``e_ji`` the unit vector from j to i."""
    _check_potential(pot, config)
    q = config.positions
    others = np.array([k for k in range(config.N) if k != i], dtype=int)
    if others.size == 0:
        return np.zeros(3)
    d = min_image(q[i], q[others], config.L)
    s = np.linalg.norm(d, axis=1)
    if np.any(s < config.a * (1.0 - 1e-8)):
        raise OverlapError("pair distance below the sphere diameter")
    return -pot.gradient(d).sum(axis=0)


def potential_energy(positions, pot: PairPotential, L) -> float:
    N = positions.shape[0]
    if N < 2:
        return 0.0
    i, j = _pairs(N)
    s = np.linalg.norm(min_image(positions[i], positions[j], L), axis=1)
    return float(np.sum(pot.energy(s)))


def total_energy(config: ParticleConfig, pot: PairPotential) -> float:
    return 0.5 * pot.m * float(np.sum(config.velocities**2)) + potential_energy(config.positions, pot, config.L)


def _first_contact(q, w, a, L, span):
    """Earliest time in ``[0, span]`` at which an approaching pair reaches contact.

    Brackets each pair's sign change of ``|d + u τ| - a`` on the straight
    drift and refines it by bisection until the gap is below
    ``CONTACT_TOL * a`` (always from the non-overlapping side).
    """
    N = q.shape[0]
    if N < 2:
        return None
    i, j = _pairs(N)
    d = min_image(q[i], q[j], L)
    u = w[i] - w[j]
    b = np.einsum("ij,ij->i", d, u)
    uu = np.einsum("ij,ij->i", u, u)

    def gap(k, tau):
        return math.sqrt(float(np.sum((d[k] + u[k] * tau) ** 2))) - a

    best = None
    for k in np.nonzero(b < 0.0)[0]:
        tmin = min(span, -b[k] / uu[k])
        if gap(k, tmin) >= 0.0:
            continue
        lo, hi = 0.0, tmin
        g_lo = gap(k, lo)
        if g_lo < -CONTACT_TOL * a:
            raise BracketError(f"pair ({i[k]}, {j[k]}) starts the drift overlapping")
        while g_lo > CONTACT_TOL * a:
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                raise BracketError("bisection stalled before reaching the contact tolerance")
            g_mid = gap(k, mid)
            if g_mid >= 0.0:
                lo, g_lo = mid, g_mid
            else:
                hi = mid
        if best is None or lo < best[0]:
            best = (lo, int(i[k]), int(j[k]))
    return best


def _crosses_cutoff(q, w, L, span, cutoff):
    """True if some pair distance passes through ``cutoff`` on the straight drift."""
    N = q.shape[0]
    if N < 2:
        return False
    i, j = _pairs(N)
    d = min_image(q[i], q[j], L)
    u = w[i] - w[j]
    uu = np.einsum("ij,ij->i", u, u)
    s0 = np.linalg.norm(d, axis=1) - cutoff
    s1 = np.linalg.norm(d + u * span, axis=1) - cutoff
    tau = np.clip(-np.einsum("ij,ij->i", d, u) / np.where(uu > 0, uu, 1.0), 0.0, span)
    smin = np.linalg.norm(d + u * tau[:, None], axis=1) - cutoff
    return bool(np.any(s0 * s1 < 0) or np.any((smin < 0) & (s0 > 0) & (s1 > 0)))


def _needs_refinement(q, w, a, L, span, cutoff):
    return _first_contact(q, w, a, L, span) is not None or _crosses_cutoff(q, w, L, span, cutoff)


def _drift(q, w, a, L, span, log, t0, budget):
    t = 0.0
    while True:
        hit = _first_contact(q, w, a, L, span - t)
        if hit is None:
            q[:] = wrap(q + w * (span - t), L)
            return budget
        tau, i, j = hit
        q[:] = wrap(q + w * tau, L)
        t += tau
        d = min_image(q[i], q[j], L)
        sigma = d / np.linalg.norm(d)
        v1, v2 = w[i].copy(), w[j].copy()
        w[i], w[j] = collide(v1, v2, sigma)
        budget -= 1
        if budget < 0:
            raise EventBudgetError("event budget exceeded")
        if log is not None:
            log.append(CollisionEvent(t0 + t, i, j, sigma, v1, v2, w[i].copy(), w[j].copy()))


def evolve_bev(
    config: ParticleConfig,
    pot: PairPotential,
    t: float,
    dt: float = 1e-3,
    *,
    max_events: int = DEFAULT_MAX_EVENTS,
    record_energy: bool = False,
    return_log: bool = False,
    min_substep: float = 1e-12,
    collision_refine: bool = True,
):
    """Integrate the hybrid dynamics for a duration ``t >= 0`` with step ``≈ dt``.

    The step is shortened to divide ``t`` evenly, and halved further whenever
    the fastest pair could close its gap by more than ``a/4`` in one step.
    Steps containing a contact or a crossing of the potential cutoff are
    bisected (``collision_refine``) down to ``dt^3 / t_cross^2`` with
    ``t_cross`` the time to close one diameter.
    Extra outputs (energy rows ``(t, kinetic, potential, total)`` and the
    collision list) are returned after the configuration when requested.
    """
    if t < 0:
        raise ValueError("evolve_bev needs t >= 0")
    if dt <= 0:
        raise ValueError("dt must be positive")
    _check_potential(pot, config)
    a, L, m = config.a, config.L, pot.m
    q = config.positions.astype(float).copy()
    w = config.velocities.astype(float).copy()
    log = [] if return_log else None
    energy = []

    def record(now):
        ke = 0.5 * m * float(np.sum(w**2))
        pe = potential_energy(q, pot, L)
        energy.append((now, ke, pe, ke + pe))

    if record_energy:
        record(config.time)
    n_steps = max(1, int(math.ceil(t / dt - 1e-9))) if t > 0 else 0
    h = t / n_steps if n_steps else 0.0
    F = pair_forces(q, pot, L, a)
    budget = max_events
    now = config.time

    def kdk(hs, depth):
        # a step whose drift meets a contact or crosses the cutoff (where the
        # force is not smooth) is bisected until it is short; the test is
        # symmetric under reversal, so the refinement is too
        nonlocal F, budget, now
        if hs > h_fine and _needs_refinement(q, w + (0.5 * hs / m) * F, a, L, hs, pot.cutoff):
            if hs / 2 < min_substep:
                raise StepSizeError("step size underflow")
            kdk(0.5 * hs, depth + 1)
            kdk(0.5 * hs, depth + 1)
            return
        w[:] += (0.5 * hs / m) * F
        budget = _drift(q, w, a, L, hs, log, now, budget)
        F = pair_forces(q, pot, L, a)
        w[:] += (0.5 * hs / m) * F
        now += hs

    h_fine = math.inf
    for _ in range(n_steps):
        rel = _max_relative_speed(w)
        nsub = 1
        while rel * h / nsub > 0.25 * a:
            nsub *= 2
            if h / nsub < min_substep:
                raise StepSizeError("step size underflow")
        hs = h / nsub
        # contact steps shrink to ~hs^3 / t_cross^2 so their O(step) splitting error stays below the O(dt^2) Verlet error
        h_fine = hs * min(1.0, hs * rel / a) ** 2 if collision_refine and rel > 0 else math.inf
        for _ in range(nsub):
            kdk(hs, 0)
        if record_energy:
            record(now)
    out = ParticleConfig(q, w, a, L, config.time + t)
    extras = []
    if record_energy:
        extras.append(np.asarray(energy))
    if return_log:
        extras.append(log)
    return (out, *extras) if extras else out


def _max_relative_speed(w):
    if w.shape[0] < 2:
        return 0.0
    speeds = np.linalg.norm(w, axis=1)
    top = np.sort(speeds)[-2:]
    return float(top.sum())
