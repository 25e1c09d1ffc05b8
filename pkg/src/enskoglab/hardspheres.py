"""Event-driven dynamics of N identical hard spheres on the 3-torus.

Between collisions every sphere moves freely; at contact the pair exchanges
the normal component of the relative velocity.  Collisions are processed one
at a time from a priority queue whose entries are invalidated by per-particle
collision counters.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from . import seeding
from .errors import (
    ConfigError,
    EventBudgetError,
    OverlapError,
    PackingError,
    TripleContactError,
)
from .torus import image_offsets, min_image, wrap

SIGMA_TOL = 1e-12
TOL_EVENT = 1e-12
TRIPLE_FACTOR = 1.0 + 1e-9
DEFAULT_MAX_EVENTS = 10**7


def _real(x):
    """Array of at least double precision; extended precision is preserved."""
    x = np.asarray(x)
    return x.astype(np.result_type(x.dtype, np.float64), copy=True)


@dataclass
class ParticleConfig:
    """A phase point of N spheres of diameter ``a`` on a torus of side ``L``."""

    positions: np.ndarray
    velocities: np.ndarray
    a: float
    L: float
    time: float = 0.0

    def __post_init__(self):
        self.positions = _real(self.positions).reshape(-1, 3)
        self.velocities = _real(self.velocities).reshape(-1, 3)
        if self.positions.shape != self.velocities.shape:
            raise ConfigError("positions and velocities must have the same shape")
        if self.N < 1:
            raise ConfigError("need at least one particle")
        if not self.a > 0:
            raise ConfigError("sphere diameter must be positive")
        if self.a >= 0.5 * self.L:
            raise ConfigError("sphere larger than half the box")
        if not np.all(np.isfinite(self.velocities)):
            raise ConfigError("non-finite velocity")
        self.positions = wrap(self.positions, self.L)

    @property
    def N(self) -> int:
        return self.positions.shape[0]

    @property
    def volume(self) -> float:
        return self.L**3

    @property
    def n(self) -> float:
        """Mean number density ``N / V``."""
        return self.N / self.volume

    @property
    def dtype(self):
        return self.velocities.dtype

    def copy(self) -> "ParticleConfig":
        return ParticleConfig(self.positions.copy(), self.velocities.copy(), self.a, self.L, self.time)

    def astype(self, dtype) -> "ParticleConfig":
        """Same phase point stored in ``dtype`` (e.g. ``np.longdouble``)."""
        return ParticleConfig(self.positions.astype(dtype), self.velocities.astype(dtype),
                              self.a, self.L, self.time)

    def min_pair_distance(self) -> float:
        return min_pair_distance(self.positions, self.L)

    def check_overlap(self, rel_tol: float = 1e-12) -> None:
        if self.N > 1 and self.min_pair_distance() < self.a * (1.0 - rel_tol):
            raise OverlapError("spheres overlap")

    def kinetic_energy(self, m: float = 1.0) -> float:
        return 0.5 * m * float(np.sum(self.velocities**2))

    def momentum(self, m: float = 1.0) -> np.ndarray:
        return m * self.velocities.sum(axis=0)


def min_pair_distance(positions, L) -> float:
    pos = np.asarray(positions, dtype=float)
    n = pos.shape[0]
    if n < 2:
        return math.inf
    i, j = np.triu_indices(n, 1)
    d = min_image(pos[i], pos[j], L)
    return float(np.sqrt(np.min(np.einsum("ij,ij->i", d, d))))


@dataclass
class CollisionEvent:
    t: float
    i: int
    j: int
    sigma: np.ndarray
    v1_pre: np.ndarray
    v2_pre: np.ndarray
    v1_post: np.ndarray
    v2_post: np.ndarray
    grazing: bool = False
    min_distance: float = math.inf

    def to_record(self) -> dict:
        return {
            "t": float(self.t),
            "i": int(self.i),
            "j": int(self.j),
            "sigma": [float(x) for x in self.sigma],
            "v1_pre": [float(x) for x in self.v1_pre],
            "v2_pre": [float(x) for x in self.v2_pre],
            "v1_post": [float(x) for x in self.v1_post],
            "v2_post": [float(x) for x in self.v2_post],
            "grazing": bool(self.grazing),
        }


@dataclass
class EventLog:
    """Collision events plus full snapshots, enough to rebuild trajectories."""

    start: ParticleConfig
    events: list = field(default_factory=list)
    times: list = field(default_factory=list)
    positions: list = field(default_factory=list)
    velocities: list = field(default_factory=list)

    def __len__(self):
        return len(self.events)

    def snapshot(self, t, positions, velocities):
        self.times.append(float(t))
        self.positions.append(np.array(positions))
        self.velocities.append(np.array(velocities))

    def trajectory(self) -> "Trajectory":
        times = [self.start.time] + self.times
        pos = [self.start.positions] + self.positions
        vel = [self.start.velocities] + self.velocities
        return Trajectory(np.asarray(times), np.asarray(pos), np.asarray(vel), self.start.L)


@dataclass
class Trajectory:
    """Piecewise-linear motion between recorded snapshots."""

    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    L: float

    def state_at(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        k = np.searchsorted(self.times, t, side="right") - 1
        k = np.clip(k, 0, len(self.times) - 1)
        dt = (t - self.times[k])[:, None, None]
        pos = wrap(self.positions[k] + self.velocities[k] * dt, self.L)
        return pos, self.velocities[k]

    def positions_at(self, t):
        return self.state_at(t)[0]


class EventQueue:
    """Min-heap of pending events with counter-based stale-event rejection."""

    def __init__(self, n_particles: int):
        self._heap = []
        self._seq = 0
        self.counters = np.zeros(n_particles, dtype=np.int64)

    def __len__(self):
        return len(self._heap)

    def push(self, t: float, i: int, j: int, kind: str, sigma=None):
        # kind "collide" sorts before "refresh" at equal times
        self._seq += 1
        entry = (t, i, j, kind, int(self.counters[i]), int(self.counters[j]), self._seq, sigma)
        heapq.heappush(self._heap, entry)

    def valid(self, entry) -> bool:
        _, i, j, _, ci, cj, _, _ = entry
        return self.counters[i] == ci and self.counters[j] == cj

    def pop(self):
        """Earliest valid event; ties within ``TOL_EVENT`` go to the smallest ``(i, j)``."""
        first = None
        while self._heap:
            entry = heapq.heappop(self._heap)
            if self.valid(entry):
                first = entry
                break
        if first is None:
            return None
        ties = [first]
        while self._heap and self._heap[0][0] <= first[0] + TOL_EVENT:
            entry = heapq.heappop(self._heap)
            if self.valid(entry):
                ties.append(entry)
        if len(ties) == 1:
            return first
        ties.sort(key=lambda e: (e[3] != "collide", e[1], e[2], e[0]))
        for e in ties[1:]:
            heapq.heappush(self._heap, e)
        return ties[0]

    def bump(self, *particles):
        for p in particles:
            self.counters[p] += 1


def collide(v1, v2, sigma):
    """Post-collision velocities of an elastic hard-sphere pair.

    ``sigma`` is the unit vector from the centre of sphere 2 to the centre
    of sphere 1; the pair must be approaching, ``(v2 - v1, sigma) >= 0``.
    The same impulse is added to ``v1`` and subtracted from ``v2``.
    """
    v1, v2, sigma = _real(v1), _real(v2), _real(sigma)
    if abs(float(np.dot(sigma, sigma)) - 1.0) > 2 * SIGMA_TOL:
        raise ValueError("sigma must be a unit vector")
    v21 = v2 - v1
    proj = np.dot(v21, sigma)
    if proj < 0.0:
        scale = float(np.sqrt(np.dot(v21, v21)))
        if proj < -SIGMA_TOL * max(scale, 1e-300):
            raise ValueError("pair is receding: (v2 - v1, sigma) < 0")
        proj = proj * 0
    dv = sigma * proj
    return v1 + dv, v2 - dv


def collide_many(v1, v2, sigma):
    """Vectorised :func:`collide` over leading axes (no validation)."""
    proj = np.einsum("...k,...k->...", v2 - v1, sigma)
    dv = sigma * proj[..., None]
    return v1 + dv, v2 - dv


def _contact_time(d, u, a, offsets):
    """Earliest approaching contact of a pair over the given image offsets.

    ``d`` is the displacement of sphere i relative to sphere j, ``u`` the
    relative velocity ``w_i - w_j``.  Returns ``(tau, s_contact)`` or None.
    """
    s = d + offsets
    b = s @ u
    uu = u @ u
    c = np.einsum("ij,ij->i", s, s) - a * a
    disc = b * b - uu * c
    ok = (b < 0.0) & (disc >= 0.0)
    if not np.any(ok):
        return None
    b, c, disc, s = b[ok], c[ok], disc[ok], s[ok]
    # stable smaller root of uu*t^2 + 2b t + c = 0 with b < 0
    tau = c / (-b + np.sqrt(disc))
    tau = np.maximum(tau, 0.0)
    k = int(np.argmin(tau))
    return tau[k], s[k] + u * tau[k]


def predict_collision(config: ParticleConfig, i: int, j: int, horizon: float | None = None):
    """Next contact of spheres ``i`` and ``j`` within ``horizon`` time units.

    Positions and velocities are taken from ``config`` at ``config.time``.
    Returns ``(t_event, sigma)`` with absolute ``t_event``, or None.
    """
    qi, qj = config.positions[i], config.positions[j]
    u = config.velocities[i] - config.velocities[j]
    if horizon is None:
        horizon = default_horizon(config)
    return _predict(qi, qj, u, config.a, config.L, config.time, horizon)[0]


def _predict(qi, qj, u, a, L, now, horizon):
    """Returns ``(hit, checked_until)``; ``hit`` is ``(t, sigma)`` or None."""
    speed = math.sqrt(float(u @ u))
    if speed == 0.0 or horizon <= 0.0:
        return None, math.inf
    # keep the image search to the nearest shell, refresh afterwards if needed
    window = min(horizon, (L - a) / speed)
    d = min_image(qi, qj, L)
    hit = _contact_time(d, u, a, image_offsets(a, L, speed * window))
    if hit is None or hit[0] > window:
        return None, now + window
    tau, s = hit
    return (now + tau, s / np.linalg.norm(s)), now + window


def default_horizon(config: ParticleConfig) -> float:
    vmax = float(np.max(np.linalg.norm(config.velocities, axis=1)))
    return math.inf if vmax == 0 else config.L / vmax


def reverse(config: ParticleConfig) -> ParticleConfig:
    out = config.copy()
    out.velocities = -out.velocities
    return out


def evolve(
    config: ParticleConfig,
    t: float,
    *,
    max_events: int = DEFAULT_MAX_EVENTS,
    horizon: float | None = None,
    return_log: bool = False,
):
    """Advance the hard-sphere flow by a duration ``t >= 0``.

    With ``return_log=True`` also returns an :class:`EventLog` holding every
    collision and a full snapshot (positions, post-collision velocities) at
    each event time, plus the minimum pair distance at that instant.
    """
    if t < 0:
        raise ValueError("evolve needs t >= 0; reverse, evolve, reverse for negative times")
    a, L, N = config.a, config.L, config.N
    t0 = config.time
    t_end = t0 + t
    q = config.positions.copy()
    w = config.velocities.copy()
    tp = np.full(N, t0, dtype=w.dtype)
    log = EventLog(config.copy()) if return_log else None

    if t == 0 or N == 1:
        out = ParticleConfig(wrap(q + w * t, L), w, a, L, t_end)
        return (out, log) if return_log else out

    if horizon is None:
        horizon = default_horizon(config)
    queue = EventQueue(N)

    def pos(k, now):
        return wrap(q[k] + w[k] * (now - tp[k]), L)

    def schedule(i, j, now):
        hit, until = _predict(pos(i, now), pos(j, now), w[i] - w[j], a, L, now, horizon)
        if hit is not None:
            if hit[0] <= t_end:
                queue.push(hit[0], i, j, "collide", hit[1])
        elif until <= t_end:
            queue.push(until, i, j, "refresh")

    for i in range(N):
        for j in range(i + 1, N):
            schedule(i, j, t0)

    n_events = 0
    while True:
        entry = queue.pop()
        if entry is None or entry[0] > t_end:
            break
        t_ev, i, j, kind = entry[0], entry[1], entry[2], entry[3]
        if kind == "refresh":
            schedule(i, j, t_ev)
            continue
        n_events += 1
        if n_events > max_events:
            raise EventBudgetError(f"event budget exceeded ({max_events} collisions)")
        qi, qj = pos(i, t_ev), pos(j, t_ev)
        d = min_image(qi, qj, L)
        sigma = d / np.linalg.norm(d)
        _check_triple(q, w, tp, t_ev, i, j, a, L)
        v1, v2 = w[i].copy(), w[j].copy()
        v21 = v2 - v1
        grazing = abs(float(v21 @ sigma)) <= SIGMA_TOL * max(float(np.linalg.norm(v21)), 1e-300)
        w[i], w[j] = collide(v1, v2, sigma)
        q[i], q[j] = qi, qj
        tp[i] = tp[j] = t_ev
        queue.bump(i, j)
        if log is not None:
            allpos = np.array([pos(k, t_ev) for k in range(N)])
            ev = CollisionEvent(t_ev, i, j, sigma, v1, v2, w[i].copy(), w[j].copy(), grazing,
                                min_pair_distance(allpos, L))
            log.events.append(ev)
            log.snapshot(t_ev, allpos, w)
        for k in range(N):
            if k != i:
                schedule(*sorted((i, k)), t_ev)
            if k != j and k != i:
                schedule(*sorted((j, k)), t_ev)

    qf = np.array([pos(k, t_end) for k in range(N)])
    out = ParticleConfig(qf, w, a, L, t_end)
    return (out, log) if return_log else out


def _check_triple(q, w, tp, t_ev, i, j, a, L):
    others = [k for k in range(q.shape[0]) if k != i and k != j]
    if not others:
        return
    others = np.asarray(others)
    pk = wrap(q[others] + w[others] * (t_ev - tp[others])[:, None], L)
    for p in (i, j):
        pp = wrap(q[p] + w[p] * (t_ev - tp[p]), L)
        dist = np.linalg.norm(min_image(pk, pp, L), axis=1)
        if np.any(dist < a * TRIPLE_FACTOR):
            k = int(others[np.argmin(dist)])
            raise TripleContactError(
                f"third sphere {k} within contact range of pair ({i}, {j}) at t={t_ev!r}"
            )


def sample_admissible_config(
    N: int,
    a: float,
    L: float,
    velocity_scale: float = 1.0,
    seed: int = 0,
    max_attempts: int = 10_000,
) -> ParticleConfig:
    """Uniform non-overlapping positions by sequential rejection, Gaussian velocities."""
    if N < 1:
        raise ConfigError("need at least one particle")
    if not a > 0:
        raise ConfigError("sphere diameter must be positive")
    if a >= 0.5 * L:
        raise ConfigError("sphere larger than half the box")
    phi = N * (math.pi / 6.0) * a**3 / L**3
    if phi > 0.3:
        raise PackingError(f"packing too dense (fraction {phi:.3f} > 0.3)")
    rng = seeding.stream(seed, "sample_admissible_config")
    pos = np.empty((N, 3))
    for k in range(N):
        for _ in range(max_attempts):
            trial = rng.uniform(0.0, L, size=3)
            if k == 0 or np.min(np.linalg.norm(min_image(pos[:k], trial, L), axis=1)) > a:
                pos[k] = trial
                break
        else:
            raise PackingError("packing too dense: rejection sampling failed")
    vel = rng.normal(0.0, velocity_scale, size=(N, 3))
    return ParticleConfig(pos, vel, a, L, 0.0)


def state_distance(c1: ParticleConfig, c2: ParticleConfig) -> tuple[float, float]:
    """Max-norm differences in position (minimum image) and velocity."""
    dq = float(np.max(np.abs(min_image(c1.positions, c2.positions, c1.L))))
    dw = float(np.max(np.abs(c1.velocities - c2.velocities)))
    return dq, dw
