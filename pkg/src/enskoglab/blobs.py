"""Mollified delta data and Monte Carlo transport of particle blobs.

Every particle of a reference configuration is smeared into a compact blob
in phase space.  Drawing ``S`` labelled N-particle samples from the product
density and pushing each through the exact hard-sphere flow gives a sampled
picture of the smoothed one- and two-particle densities, which is what the
estimators here measure: blob coherence, two-particle factorisation, and
convergence of the cloud centroids onto the reference trajectory.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import bev
from .errors import ConfigError, ProbeAtContactError
from .fields import BUMP_NORM, PhaseField, blob_field
from .hardspheres import ParticleConfig, evolve, min_pair_distance
from .seeding import stream
from .torus import min_image, wrap

BUMP_STD = 1.0 / math.sqrt(7.0)  # std of the unit bump kernel
PROBE_CONTACT_TOL = 1e-9


@dataclass(frozen=True)
class Mollifier:
    """Tensor bump kernel with half-widths ``eps_r`` (position) and ``eps_v`` (velocity)."""

    eps_r: float
    eps_v: float

    def __post_init__(self):
        if self.eps_r < 0 or self.eps_v < 0:
            raise ValueError("mollifier widths must be non-negative")

    def density(self, dr, dv):
        """``delta_eps(dr, dv)`` for trailing-axis-3 offsets; needs both widths positive."""
        if self.eps_r == 0 or self.eps_v == 0:
            raise ValueError("degenerate mollifier has no density")
        x = np.concatenate([np.asarray(dr, float) / self.eps_r, np.asarray(dv, float) / self.eps_v], axis=-1)
        b = np.where(np.abs(x) < 1, BUMP_NORM * (1 - x**2) ** 2, 0.0)
        return np.prod(b, axis=-1) / (self.eps_r**3 * self.eps_v**3)

    def peak(self) -> float:
        return BUMP_NORM**6 / (self.eps_r**3 * self.eps_v**3)

    def sample_unit(self, rng, size):
        """Unit-width offsets, shape ``(size, 6)``; ``(x + 1) / 2`` is Beta(3, 3)."""
        return 2.0 * rng.beta(3.0, 3.0, size=(size, 6)) - 1.0

    def scale(self):
        return np.array([self.eps_r] * 3 + [self.eps_v] * 3)

    def halved(self) -> "Mollifier":
        return Mollifier(0.5 * self.eps_r, 0.5 * self.eps_v)


def _check_separation(gamma: ParticleConfig, moll: Mollifier):
    if gamma.N > 1:
        d = min_pair_distance(gamma.positions, gamma.L)
        if not d > gamma.a + 2.0 * moll.eps_r:
            raise ConfigError(
                f"blob supports too close: min separation {d:.6g} <= a + 2 eps_r = {gamma.a + 2 * moll.eps_r:.6g}"
            )


def make_blob_initial(gamma: ParticleConfig, moll: Mollifier) -> PhaseField:
    """``n^-1 sum_i delta_eps(r - q_i, v - w_i)``; integrates to the torus volume."""
    _check_separation(gamma, moll)
    return blob_field(gamma.positions, gamma.velocities, moll.eps_r, moll.eps_v, L=gamma.L, n=gamma.n)


@dataclass
class BlobEnsemble:
    """``S`` labelled samples of the blob density plus the reference they follow.

    ``positions`` and ``velocities`` have shape ``(S, N, 3)``; sample particle
    ``k`` started inside blob ``k``.
    """

    reference: ParticleConfig
    mollifier: Mollifier
    positions: np.ndarray
    velocities: np.ndarray
    seed: int
    time: float = 0.0
    potential: object = None
    dt: float = 1e-3

    @property
    def S(self) -> int:
        return self.positions.shape[0]

    @property
    def N(self) -> int:
        return self.positions.shape[1]

    def sample(self, s) -> ParticleConfig:
        ref = self.reference
        return ParticleConfig(self.positions[s], self.velocities[s], ref.a, ref.L, self.time)

    def configs(self):
        return [self.sample(s) for s in range(self.S)]

    def offsets(self):
        """Position (minimum image) and velocity offsets from the reference, ``(S, N, 6)``."""
        dq = min_image(self.positions, self.reference.positions[None], self.reference.L)
        dw = self.velocities - self.reference.velocities[None]
        return np.concatenate([dq, dw], axis=-1)

    def reversed(self) -> "BlobEnsemble":
        ref = self.reference.copy()
        ref.velocities = -ref.velocities
        return BlobEnsemble(ref, self.mollifier, self.positions.copy(), -self.velocities,
                            self.seed, self.time, self.potential, self.dt)


def draw_ensemble(gamma: ParticleConfig, moll: Mollifier, S: int, seed: int = 0, *,
                  potential=None, dt=1e-3) -> BlobEnsemble:
    """Sample ``S`` configurations; sample ``s`` draws from its own stream.

    The unit offsets do not depend on the widths, so ensembles for different
    mollifiers with the same seed are coupled (common random numbers).
    """
    if S < 1:
        raise ValueError("need at least one sample")
    _check_separation(gamma, moll)
    N = gamma.N
    unit = np.stack([moll.sample_unit(stream(seed, "blob-sample", s), N) for s in range(S)])
    off = unit * moll.scale()
    pos = wrap(gamma.positions[None] + off[..., :3], gamma.L)
    vel = gamma.velocities[None] + off[..., 3:]
    return BlobEnsemble(gamma.copy(), moll, pos, vel, seed, gamma.time, potential, dt)


def _flow_one(cfg, t, potential, dt, return_log):
    if potential is None:
        return evolve(cfg, t, return_log=return_log)
    if return_log:
        out, events = bev.evolve_bev(cfg, potential, t, dt, return_log=True)
        return out, events
    return bev.evolve_bev(cfg, potential, t, dt)


def flow_ensemble(ens: BlobEnsemble, t: float) -> BlobEnsemble:
    """Push every sample and the reference forward by ``t``."""
    if t == 0:
        return BlobEnsemble(ens.reference.copy(), ens.mollifier, ens.positions.copy(),
                            ens.velocities.copy(), ens.seed, ens.time, ens.potential, ens.dt)
    ref = _flow_one(ens.reference, t, ens.potential, ens.dt, False)
    pos = np.empty_like(ens.positions)
    vel = np.empty_like(ens.velocities)
    for s in range(ens.S):
        out = _flow_one(ens.sample(s), t, ens.potential, ens.dt, False)
        pos[s], vel[s] = out.positions, out.velocities
    return BlobEnsemble(ref, ens.mollifier, pos, vel, ens.seed, ens.time + t, ens.potential, ens.dt)


# --- coherence ----------------------------------------------------------------


def _trajectory(cfg, t):
    _, log = evolve(cfg, t, return_log=True)
    return log.trajectory(), log.times


def _max_deviation(ref_traj, traj, times, L):
    q_ref = ref_traj.positions_at(times)
    q = traj.positions_at(times)
    return np.max(np.linalg.norm(min_image(q, q_ref, L), axis=-1), axis=-1)


def coherence_time(ens: BlobEnsemble, t_max: float, threshold: float | None = None, n_probe: int = 100) -> float:
    """Largest ``T <= t_max`` with every sample particle within ``threshold``
    (default ``a/4``) of its reference particle on ``[0, T]``.

    Deviations are checked on ``n_probe`` uniform times plus every event time
    of the sample and the reference; the first crossing is then refined by
    bisection.  Hard-sphere dynamics only.
    """
    a, L = ens.reference.a, ens.reference.L
    if threshold is None:
        threshold = 0.25 * a
    if not threshold < 0.5 * a:
        raise ValueError("coherence threshold must be below a/2")
    if ens.potential is not None:
        raise NotImplementedError("coherence_time follows the hard-sphere flow only")
    t0 = ens.time
    ref_traj, ref_events = _trajectory(ens.reference, t_max)
    grid = t0 + np.linspace(0.0, t_max, n_probe + 1)
    T = t_max
    for s in range(ens.S):
        traj, events = _trajectory(ens.sample(s), t_max)
        times = np.unique(np.concatenate([grid, ref_events, events]))
        times = times[times <= t0 + T]
        dev = _max_deviation(ref_traj, traj, times, L)
        bad = np.nonzero(dev > threshold)[0]
        if bad.size == 0:
            continue
        k = bad[0]
        if k == 0:
            return 0.0
        lo, hi = times[k - 1], times[k]
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if _max_deviation(ref_traj, traj, np.array([mid]), L)[0] > threshold:
                hi = mid
            else:
                lo = mid
            if hi - lo <= 1e-12 * max(1.0, abs(hi)):
                break
        T = min(T, lo - t0)
    return float(T)


# --- marginal estimates -------------------------------------------------------


@dataclass
class MarginalEstimate:
    """Gaussian product-kernel estimates of ``F1`` and ``F2`` from an ensemble.

    ``F1(x) = n^-1 mean_s sum_i K(x - x_si)`` and
    ``F2(x1, x2) = n^-2 mean_s sum_{i != j} K(x1 - x_si) K(x2 - x_sj)``, set
    to 0 when ``|r2 - r1| < a``.  Positions use minimum-image differences.
    The bandwidth follows Scott's rule per coordinate on the pooled spread
    of each blob; particles are grouped by nearest reference particle, so
    relabelling sample particles leaves every estimate unchanged.
    """

    ens: BlobEnsemble
    bandwidth: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.bandwidth is None:
            self.bandwidth = scott_bandwidth(self.ens)
        self.bandwidth = np.asarray(self.bandwidth, dtype=float)
        ref = self.ens.reference
        self.n = ref.n
        self.a = ref.a
        self.L = ref.L
        self._x = np.concatenate([self.ens.positions, self.ens.velocities], axis=-1)  # (S, N, 6)

    def _kernel(self, x):
        """``K(x - x_si)`` for one probe, shape ``(S, N)``."""
        x = np.asarray(x, dtype=float)
        d = self._x - x
        d[..., :3] = min_image(self._x[..., :3], x[:3], self.L)
        if np.all(self.bandwidth > 0):
            z = d / self.bandwidth
            norm = (2 * math.pi) ** 3 * np.prod(self.bandwidth)
            return np.exp(-0.5 * np.sum(z * z, axis=-1)) / norm
        return np.zeros(d.shape[:2])

    def f1_samples(self, x):
        return self._kernel(x).sum(axis=1) / self.n

    def f2_samples(self, x1, x2):
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        if np.linalg.norm(min_image(x2[:3], x1[:3], self.L)) < self.a:
            return np.zeros(self.ens.S)
        k1 = self._kernel(x1)
        k2 = self._kernel(x2)
        both = k1.sum(axis=1) * k2.sum(axis=1) - np.sum(k1 * k2, axis=1)
        return both / self.n**2

    def f1(self, x):
        y = self.f1_samples(x)
        return float(y.mean()), float(y.std(ddof=1) / math.sqrt(len(y))) if len(y) > 1 else 0.0

    def f2(self, x1, x2):
        z = self.f2_samples(x1, x2)
        return float(z.mean()), float(z.std(ddof=1) / math.sqrt(len(z))) if len(z) > 1 else 0.0

    def gap(self, x1, x2):
        """``F2 - F1 F1`` and the combined standard error
        ``sqrt(se(F2)^2 + (F1(x2) se(F1(x1)))^2 + (F1(x1) se(F1(x2)))^2)``."""
        z = self.f2_samples(x1, x2)
        y1 = self.f1_samples(x1)
        y2 = self.f1_samples(x2)
        S = len(z)
        m1, m2 = y1.mean(), y2.mean()
        g = z.mean() - m1 * m2
        if S < 2:
            return float(g), 0.0
        se = math.sqrt((z.var(ddof=1) + (m2 * y1.std(ddof=1)) ** 2 + (m1 * y2.std(ddof=1)) ** 2) / S)
        return float(g), float(se)


def scott_bandwidth(ens: BlobEnsemble) -> np.ndarray:
    """``sigma_c S^(-1/10)`` per phase coordinate; ``sigma_c`` pooled over blobs."""
    ref = ens.reference
    x = np.concatenate([ens.positions, ens.velocities], axis=-1).reshape(-1, 6)
    if ref.N > 1:
        d = np.linalg.norm(min_image(x[:, None, :3], ref.positions[None], ref.L), axis=-1)
        label = np.argmin(d, axis=1)
    else:
        label = np.zeros(len(x), dtype=int)
    centre = np.empty_like(x)
    for k in range(ref.N):
        sel = label == k
        if sel.any():
            sub = x[sel]
            c = np.empty(6)
            c[:3] = ref.positions[k] + min_image(sub[:, :3], ref.positions[k], ref.L).mean(axis=0)
            c[3:] = sub[:, 3:].mean(axis=0)
            centre[sel] = c
    dev = x - centre
    dev[:, :3] = min_image(x[:, :3], centre[:, :3], ref.L)
    sd = np.sqrt(np.mean(dev**2, axis=0))
    return sd * ens.S ** (-1.0 / 10.0)


def phase_points(cfg: ParticleConfig):
    return np.concatenate([cfg.positions, cfg.velocities], axis=1)


def default_probe_pairs(ens: BlobEnsemble):
    """Every ordered pair of reference particle states, plus one overlapping pair."""
    x = phase_points(ens.reference)
    pairs = [(x[i], x[j]) for i in range(ens.N) for j in range(ens.N) if i != j]
    inside = x[0].copy()
    inside[0] += 0.5 * ens.reference.a
    pairs.append((x[0], inside))
    return pairs


def factorization_gap(ens: BlobEnsemble, probe_pairs=None, bandwidth=None):
    """Largest ``|F2 - F1 F1|`` over probes at the ensemble's current time.

    Returns ``(max_gap, rows)`` where each row is a dict with the probe's
    gap, standard error, ``F2``, ``F1(x1) F1(x2)`` and whether the probe is
    inside the hard core.
    """
    est = MarginalEstimate(ens, bandwidth)
    if probe_pairs is None:
        probe_pairs = default_probe_pairs(ens)
    rows = []
    worst = 0.0
    for x1, x2 in probe_pairs:
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        core = bool(np.linalg.norm(min_image(x2[:3], x1[:3], ens.reference.L)) < ens.reference.a)
        g, se = est.gap(x1, x2)
        f2, _ = est.f2(x1, x2)
        p1, _ = est.f1(x1)
        p2, _ = est.f1(x2)
        rows.append({"gap": g, "se": se, "F2": f2, "F1F1": p1 * p2, "core": core})
        if not core:
            worst = max(worst, abs(g))
    return worst, rows


# --- epsilon -> 0 -----------------------------------------------------------------


def check_probe_time(gamma: ParticleConfig, t_probe: float, tol=PROBE_CONTACT_TOL):
    """Raise :class:`ProbeAtContactError` if the reference has a pair in contact at ``t_probe``."""
    ref = evolve(gamma, t_probe)
    d = min_pair_distance(ref.positions, ref.L) if ref.N > 1 else math.inf
    if d <= ref.a * (1 + tol):
        raise ProbeAtContactError(f"probe at contact: pair distance {d!r} at t={t_probe!r}")
    return ref


def centroid_errors(ens: BlobEnsemble, ref_at_probe: ParticleConfig):
    """Per-particle centroid distance from the reference and its MC standard error."""
    dq = min_image(ens.positions, ref_at_probe.positions[None], ref_at_probe.L)  # (S, N, 3)
    mean = dq.mean(axis=0)
    err = np.linalg.norm(mean, axis=1)
    if ens.S > 1:
        cov_se = dq.std(axis=0, ddof=1) / math.sqrt(ens.S)
        # standard error of |mean| by the delta method, floor at the isotropic value
        unit = np.where(err[:, None] > 0, mean / np.where(err[:, None] > 0, err[:, None], 1), 1 / math.sqrt(3))
        se = np.sqrt(np.sum((unit * cov_se) ** 2, axis=1))
    else:
        se = np.zeros(ens.N)
    return err, se


def limit_trajectory_error(gamma: ParticleConfig, mollifiers, t_probe: float, S: int = 2000, seed: int = 0):
    """For each mollifier, ``max_i |centroid_i(t_probe) - q_i(t_probe)|`` and its standard error."""
    ref = check_probe_time(gamma, t_probe)
    out = []
    for moll in mollifiers:
        if moll.eps_r == 0 and moll.eps_v == 0:
            out.append((0.0, 0.0))
            continue
        ens = flow_ensemble(draw_ensemble(gamma, moll, S, seed), t_probe)
        err, se = centroid_errors(ens, ref)
        k = int(np.argmax(err))
        out.append((float(err[k]), float(se[k])))
    return out


# --- scenarios and output -----------------------------------------------------


def three_particle_scenario(a=0.16, L=1.0) -> ParticleConfig:
    """Particle 0 strikes particle 1, which then strikes particle 2.

    With ``a = 0.16`` the corner offset ``sqrt(3) eps_r`` of the widest blob in
    the standard sweep stays inside the ``a/4`` coherence threshold.
    """
    q = np.array([[0.15, 0.50, 0.50], [0.45, 0.56, 0.50], [0.684, 0.719, 0.53]])
    w = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    return ParticleConfig(q, w, a, L, 0.0)


def write_ensemble_csv(path, ensembles):
    """Rows ``sample,particle,t,qx,qy,qz,wx,wy,wz`` for one or more ensembles."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample", "particle", "t", "qx", "qy", "qz", "wx", "wy", "wz"])
        for ens in ensembles:
            for s in range(ens.S):
                for k in range(ens.N):
                    w.writerow([s, k, repr(float(ens.time)),
                                *(repr(float(x)) for x in ens.positions[s, k]),
                                *(repr(float(x)) for x in ens.velocities[s, k])])


def harness_report(moll: Mollifier, S, T_eps, gap, centroid_errors_):
    return {
        "epsilon_r": moll.eps_r,
        "epsilon_v": moll.eps_v,
        "S": int(S),
        "T_epsilon": T_eps,
        "factorization_gap": gap,
        "centroid_errors": list(centroid_errors_),
    }


def write_report(path, report):
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
