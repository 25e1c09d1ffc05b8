"""Space-homogeneous hard-sphere kinetics on a cubic velocity grid.

When ``f`` does not depend on position the Enskog shifts drop out and the
equation reduces to ``df/dt = St f``.  The collision term is discretised by a
conservative projection method: a fixed set of weighted pair samples
``(alpha, beta, sigma)`` on the grid, each sample's post-collision velocities
split between two node pairs so that mass, momentum and energy are conserved
exactly.  The gain factor is interpolated geometrically between the two
pairs, which keeps every discrete Maxwellian stationary and makes the
discrete H-functional non-increasing.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numba as nb
import numpy as np
from scipy.special import ndtr

from .errors import ResolutionError, StabilityError
from .seeding import stream

CLIP_LIMIT = 1e-6


@dataclass(frozen=True)
class VelocityField:
    """``M^3`` cell-centred values of ``f`` on ``[-v_max, v_max]^3``."""

    values: np.ndarray
    v_max: float
    time: float = 0.0
    clipped: float = 0.0  # mass removed by clipping, accumulated

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 3 or len(set(v.shape)) != 1:
            raise ValueError("values must be an M x M x M array")
        if not self.v_max > 0:
            raise ValueError("v_max must be positive")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite field values")
        if np.any(v < 0):
            raise ValueError("field values must be non-negative")
        object.__setattr__(self, "values", v)

    @property
    def M(self) -> int:
        return self.values.shape[0]

    @property
    def h(self) -> float:
        return 2.0 * self.v_max / self.M

    @property
    def cell_volume(self) -> float:
        return self.h**3

    @property
    def axis(self) -> np.ndarray:
        return grid_axis(self.M, self.v_max)

    def nodes(self) -> np.ndarray:
        ax = self.axis
        return np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1)

    def mass(self) -> float:
        return float(self.values.sum() * self.cell_volume)

    def momentum(self) -> np.ndarray:
        ax = self.axis
        f = self.values
        dv = self.cell_volume
        return np.array([
            np.einsum("i,ijk->", ax, f), np.einsum("j,ijk->", ax, f), np.einsum("k,ijk->", ax, f)
        ]) * dv

    def energy(self) -> float:
        """``(1/2) sum |v|^2 f dv`` (unit mass)."""
        sq = self.axis**2
        e = (np.einsum("i,ijk->", sq, self.values) + np.einsum("j,ijk->", sq, self.values)
             + np.einsum("k,ijk->", sq, self.values))
        return float(0.5 * e * self.cell_volume)

    def moments(self):
        return self.mass(), self.momentum(), self.energy()


def grid_axis(M, v_max):
    h = 2.0 * v_max / M
    return -v_max + (np.arange(M) + 0.5) * h


def field_from_function(fn, M, v_max, time=0.0) -> VelocityField:
    """Sample a vectorised ``fn(v)`` (trailing axis 3) at the grid nodes."""
    ax = grid_axis(M, v_max)
    v = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1)
    return VelocityField(np.asarray(fn(v), dtype=float), v_max, time)


def maxwellian_field(M=24, v_max=6.0, theta=1.0, mean=(0.0, 0.0, 0.0), rho=1.0) -> VelocityField:
    mean = np.asarray(mean, dtype=float)

    def fn(v):
        return rho * np.exp(-np.sum((v - mean) ** 2, axis=-1) / (2 * theta)) / (2 * math.pi * theta) ** 1.5

    return field_from_function(fn, M, v_max)


def bimodal_field(M=24, v_max=6.0, separation=1.0, theta=1.0, axis=0, rho=1.0) -> VelocityField:
    """Equal mix of Maxwellians with means ``±separation`` along ``axis``."""
    u = np.zeros(3)
    u[axis] = separation
    a = maxwellian_field(M, v_max, theta, u, 0.5 * rho)
    b = maxwellian_field(M, v_max, theta, -u, 0.5 * rho)
    return VelocityField(a.values + b.values, v_max)


def h_functional(field: VelocityField) -> float:
    """``sum f ln f dv`` over nodes with ``f > 0``."""
    f = field.values
    pos = f > 0
    return float(np.sum(f[pos] * np.log(f[pos])) * field.cell_volume)


def reverse_field(field: VelocityField) -> VelocityField:
    """``v -> -v``; on a cell-centred grid this reverses every axis."""
    return replace(field, values=field.values[::-1, ::-1, ::-1].copy())


# --- projection collision rule ------------------------------------------------


@nb.njit(cache=True)
def _project(ia, ib, sig, M, v_max, out_idx, out_r, out_g):
    """Fill the two target node pairs and the interpolation weight per sample.

    Samples whose collision sphere has no grid pair on both sides (in energy)
    among the 27 nodes around ``v1'`` get ``out_g = 0`` and are dropped.
    """
    h = 2.0 * v_max / M
    for s in range(ia.shape[0]):
        a = ia[s]
        b = ib[s]
        v1 = np.empty(3)
        v2 = np.empty(3)
        for c in range(3):
            v1[c] = -v_max + (a[c] + 0.5) * h
            v2[c] = -v_max + (b[c] + 0.5) * h
        pr = 0.0
        for c in range(3):
            pr += (v2[c] - v1[c]) * sig[s, c]
        out_g[s] = abs(pr)
        if pr == 0.0:
            out_g[s] = 0.0
            continue
        e0 = 0.0
        for c in range(3):
            e0 += v1[c] * v1[c] + v2[c] * v2[c]
        best_lo = -1.0e300
        best_hi = 1.0e300
        lo = np.full(3, -1)
        hi = np.full(3, -1)
        near = np.empty(3, dtype=np.int64)
        for c in range(3):
            w = v1[c] + pr * sig[s, c]
            near[c] = int(math.floor((w + v_max) / h))
        for dx in range(-1, 2):
            for dy in range(-1, 2):
                for dz in range(-1, 2):
                    lam0 = near[0] + dx
                    lam1 = near[1] + dy
                    lam2 = near[2] + dz
                    mu0 = a[0] + b[0] - lam0
                    mu1 = a[1] + b[1] - lam1
                    mu2 = a[2] + b[2] - lam2
                    if (min(lam0, lam1, lam2, mu0, mu1, mu2) < 0
                            or max(lam0, lam1, lam2, mu0, mu1, mu2) >= M):
                        continue
                    e = 0.0
                    for q in (lam0, lam1, lam2, mu0, mu1, mu2):
                        x = -v_max + (q + 0.5) * h
                        e += x * x
                    if e <= e0 and e > best_lo:
                        best_lo = e
                        lo[0], lo[1], lo[2] = lam0, lam1, lam2
                    elif e > e0 and e < best_hi:
                        best_hi = e
                        hi[0], hi[1], hi[2] = lam0, lam1, lam2
        if lo[0] < 0:
            out_g[s] = 0.0
            continue
        if best_lo == e0 or hi[0] < 0:
            if best_lo != e0:
                out_g[s] = 0.0
                continue
            r = 0.0
            for c in range(3):
                hi[c] = lo[c]
        else:
            r = (e0 - best_lo) / (best_hi - best_lo)
        flat = np.empty(6, dtype=np.int64)
        flat[0] = (a[0] * M + a[1]) * M + a[2]
        flat[1] = (b[0] * M + b[1]) * M + b[2]
        flat[2] = (lo[0] * M + lo[1]) * M + lo[2]
        flat[3] = ((a[0] + b[0] - lo[0]) * M + (a[1] + b[1] - lo[1])) * M + (a[2] + b[2] - lo[2])
        flat[4] = (hi[0] * M + hi[1]) * M + hi[2]
        flat[5] = ((a[0] + b[0] - hi[0]) * M + (a[1] + b[1] - hi[1])) * M + (a[2] + b[2] - hi[2])
        for k in range(6):
            out_idx[s, k] = flat[k]
        out_r[s] = r


@nb.njit(cache=True)
def _rate(f, idx, r, w, out):
    """Accumulate the discrete collision term; ``f`` is clipped at zero on read."""
    out[:] = 0.0
    for s in range(idx.shape[0]):
        fa = max(f[idx[s, 0]], 0.0)
        fb = max(f[idx[s, 1]], 0.0)
        p1 = max(f[idx[s, 2]], 0.0) * max(f[idx[s, 3]], 0.0)
        p2 = max(f[idx[s, 4]], 0.0) * max(f[idx[s, 5]], 0.0)
        rs = r[s]
        if rs == 0.0:
            g = p1
        elif p1 == 0.0 or p2 == 0.0:
            g = 0.0
        else:
            g = math.exp((1.0 - rs) * math.log(p1) + rs * math.log(p2))
        d = w[s] * (fa * fb - g)
        out[idx[s, 0]] -= d
        out[idx[s, 1]] -= d
        out[idx[s, 2]] += (1.0 - rs) * d
        out[idx[s, 3]] += (1.0 - rs) * d
        out[idx[s, 4]] += rs * d
        out[idx[s, 5]] += rs * d


@nb.njit(cache=True)
def _pair_speed_mean(f, ia, ib, inv_q, speed):
    acc = 0.0
    for s in range(ia.shape[0]):
        acc += f[ia[s]] * f[ib[s]] * speed[s] * inv_q[s]
    return acc / ia.shape[0]


def _axis_probs(M, v_max, scale, floor):
    """Discrete proposal over one axis: normal cell masses mixed with a uniform
    share ``floor``, so that tail weights ``1/q`` stay bounded."""
    edges = -v_max + np.arange(M + 1) * (2.0 * v_max / M)
    p = np.diff(ndtr(edges / scale))
    return (1.0 - floor) * p / p.sum() + floor / M


@dataclass(frozen=True)
class CollisionSampler:
    """Fixed pair-sample rule for one ``(M, v_max)`` grid.

    ``weights`` hold ``(pi / 2 nu) |(v21, sigma)| / (q_alpha q_beta)``; the
    extra half offsets the antisymmetric ``f f - f' f'`` form, which counts
    every collision once directly and once as an inverse collision.  The rate
    at a node is ``n a^2 h^3`` times the accumulated sum (see
    :func:`collision_rate`).  ``pairs``, ``speed`` and ``inv_q`` keep every
    drawn pair (dropped ones included) for the mean loss-rate estimate.
    """

    M: int
    v_max: float
    idx: np.ndarray
    r: np.ndarray
    weights: np.ndarray
    pairs: np.ndarray
    speed: np.ndarray
    inv_q: np.ndarray
    dropped: int

    @classmethod
    def build(cls, M=24, v_max=6.0, n_samples=10**6, proposal_scale=None, uniform_share=0.25, seed=0):
        """Draw ``n_samples`` node pairs with uniform directions.

        Each velocity index is drawn per axis from a discrete Gaussian of width
        ``proposal_scale`` (default ``v_max / 4``) mixed with a uniform share.
        """
        if proposal_scale is None:
            proposal_scale = v_max / 4.0
        rng = stream(seed, "homogeneous-pairs")
        p = _axis_probs(M, v_max, proposal_scale, uniform_share)
        ia = rng.choice(M, size=(n_samples, 3), p=p).astype(np.int64)
        ib = rng.choice(M, size=(n_samples, 3), p=p).astype(np.int64)
        sig = rng.normal(size=(n_samples, 3))
        sig /= np.linalg.norm(sig, axis=1)[:, None]
        q = np.prod(p[ia], axis=1) * np.prod(p[ib], axis=1)
        idx = np.zeros((n_samples, 6), dtype=np.int64)
        r = np.zeros(n_samples)
        g = np.zeros(n_samples)
        _project(ia, ib, sig, M, float(v_max), idx, r, g)
        keep = g > 0
        ax = grid_axis(M, v_max)
        pairs = np.stack([np.ravel_multi_index(ia.T, (M,) * 3), np.ravel_multi_index(ib.T, (M,) * 3)], axis=1)
        return cls(
            M=M,
            v_max=float(v_max),
            idx=np.ascontiguousarray(idx[keep]),
            r=r[keep],
            weights=0.5 * math.pi * g[keep] / (n_samples * q[keep]),
            pairs=np.ascontiguousarray(pairs),
            speed=np.linalg.norm(ax[ia] - ax[ib], axis=1),
            inv_q=1.0 / q,
            dropped=int(n_samples - keep.sum()),
        )

    def check(self, field: VelocityField):
        if field.M != self.M or not math.isclose(field.v_max, self.v_max):
            raise ValueError("sampler was built for a different velocity grid")


_SAMPLERS = {}


def default_sampler(M, v_max) -> CollisionSampler:
    key = (int(M), float(v_max))
    if key not in _SAMPLERS:
        _SAMPLERS[key] = CollisionSampler.build(M, v_max)
    return _SAMPLERS[key]


def collision_rate(field: VelocityField, a, n, quad: CollisionSampler | None = None) -> np.ndarray:
    """Discrete ``St f`` at every node, shape ``(M, M, M)``."""
    quad = quad or default_sampler(field.M, field.v_max)
    quad.check(field)
    return _rate_values(field.values, field.cell_volume, a, n, quad)


def _rate_values(values, dv, a, n, quad):
    out = np.empty(values.size)
    _rate(values.ravel(), quad.idx, quad.r, quad.weights, out)
    return (n * a * a * dv) * out.reshape(values.shape)


def mean_loss_rate(field: VelocityField, quad: CollisionSampler | None = None) -> float:
    """``<pi ∫ |v21| f(v2) dv2>`` averaged over ``f``, estimated on the pair samples."""
    quad = quad or default_sampler(field.M, field.v_max)
    m = field.mass()
    if m == 0:
        return 0.0
    f = np.ascontiguousarray(field.values.ravel())
    s = _pair_speed_mean(f, quad.pairs[:, 0].copy(), quad.pairs[:, 1].copy(), quad.inv_q, quad.speed)
    return math.pi * field.cell_volume**2 * s / m


def dt_max(field: VelocityField, a, n, quad: CollisionSampler | None = None) -> float:
    rate = n * a * a * mean_loss_rate(field, quad)
    return math.inf if rate == 0 else 0.1 / rate


def step(field: VelocityField, dt, a, n, quad: CollisionSampler | None = None, *, check_stability=True):
    """One classical RK4 step of ``df/dt = St f``; negatives are clipped afterwards.

    The clipped mass is added to ``field.clipped``; more than ``1e-6`` of the
    total in one step raises :class:`ResolutionError`.
    """
    if dt < 0:
        raise ValueError("dt must be non-negative")
    if dt == 0:
        return field
    quad = quad or default_sampler(field.M, field.v_max)
    quad.check(field)
    if check_stability:
        bound = dt_max(field, a, n, quad)
        if dt > bound:
            raise StabilityError(f"dt={dt:g} exceeds the stability bound {bound:g}")
    dv = field.cell_volume
    f0 = field.values
    k1 = _rate_values(f0, dv, a, n, quad)
    k2 = _rate_values(f0 + 0.5 * dt * k1, dv, a, n, quad)
    k3 = _rate_values(f0 + 0.5 * dt * k2, dv, a, n, quad)
    k4 = _rate_values(f0 + dt * k3, dv, a, n, quad)
    f1 = f0 + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    neg = f1 < 0
    clipped = float(-f1[neg].sum() * dv)
    total = float(f0.sum() * dv)
    if total > 0 and clipped > CLIP_LIMIT * total:
        raise ResolutionError(f"resolution insufficient: clipped mass {clipped:.3g} of {total:.3g}")
    f1[neg] = 0.0
    return VelocityField(f1, field.v_max, field.time + dt, field.clipped + clipped)


@dataclass
class KineticRun:
    """Time series of moments and H along a sequence of steps."""

    rows: list
    field: VelocityField
    clip_per_step: list

    def as_array(self):
        return np.asarray(self.rows, dtype=float)

    def h_series(self):
        return self.as_array()[:, 6]


def _row(field):
    m, p, e = field.moments()
    return [field.time, m, p[0], p[1], p[2], e, h_functional(field)]


def integrate(field: VelocityField, dt, steps, a, n, quad=None, *, reverse_at=None, callback=None) -> KineticRun:
    """Take ``steps`` RK4 steps, optionally reversing the field after step ``reverse_at``."""
    quad = quad or default_sampler(field.M, field.v_max)
    rows = [_row(field)]
    clips = []
    for k in range(steps):
        if reverse_at is not None and k == reverse_at:
            field = reverse_field(field)
        before = field.clipped
        field = step(field, dt, a, n, quad)
        clips.append(field.clipped - before)
        rows.append(_row(field))
        if callback is not None:
            callback(k, field)
    return KineticRun(rows, field, clips)


TIME_SERIES_HEADER = ["t", "mass", "px", "py", "pz", "energy", "H"]


def write_time_series(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TIME_SERIES_HEADER)
        for row in rows:
            w.writerow([repr(float(x)) for x in row])


def write_snapshot(stem, field: VelocityField):
    """``stem.csv`` with ``vx,vy,vz,f`` rows and ``stem.json`` with the grid header."""
    stem = Path(stem)
    v = field.nodes().reshape(-1, 3)
    with open(stem.with_suffix(".csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["vx", "vy", "vz", "f"])
        for row, val in zip(v, field.values.ravel()):
            w.writerow([repr(float(row[0])), repr(float(row[1])), repr(float(row[2])), repr(float(val))])
    header = {"M": field.M, "v_max": field.v_max, "extent": [-field.v_max, field.v_max],
              "time": field.time, "cell_volume": field.cell_volume}
    stem.with_suffix(".json").write_text(json.dumps(header, indent=2, sort_keys=True))


def read_snapshot(stem) -> VelocityField:
    stem = Path(stem)
    header = json.loads(stem.with_suffix(".json").read_text())
    data = np.loadtxt(stem.with_suffix(".csv"), delimiter=",", skiprows=1)
    M = int(header["M"])
    return VelocityField(data[:, 3].reshape(M, M, M), float(header["v_max"]), float(header["time"]))


@nb.njit(cache=True)
def _pair_products(f, idx, r, pre, post):
    for s in range(idx.shape[0]):
        pre[s] = f[idx[s, 0]] * f[idx[s, 1]]
        p1 = f[idx[s, 2]] * f[idx[s, 3]]
        p2 = f[idx[s, 4]] * f[idx[s, 5]]
        rs = r[s]
        if rs == 0.0:
            post[s] = p1
        elif p1 == 0.0 or p2 == 0.0:
            post[s] = 0.0
        else:
            post[s] = math.exp((1.0 - rs) * math.log(p1) + rs * math.log(p2))


def discrete_condition_11(field: VelocityField, quad: CollisionSampler | None = None, rel=1e-12):
    """Pre- versus post-collision pair products on the grid's collision samples.

    The post-collision product is the interpolated one used by the solver,
    so a discrete Maxwellian gives zero up to rounding.  Returns
    ``(violation, noise_floor)`` with the floor ``rel`` times the largest product.
    """
    quad = quad or default_sampler(field.M, field.v_max)
    quad.check(field)
    pre = np.empty(len(quad.r))
    post = np.empty(len(quad.r))
    _pair_products(np.ascontiguousarray(field.values.ravel()), quad.idx, quad.r, pre, post)
    if not pre.size:
        return 0.0, 0.0
    return float(np.max(np.abs(pre - post))), rel * float(max(pre.max(), post.max()))


def clip_budget(field: VelocityField) -> float:
    """Per-step H tolerance: the largest clipped mass a step may remove."""
    return CLIP_LIMIT * field.mass()
