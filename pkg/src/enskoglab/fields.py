"""One-particle phase-space densities ``f(r, v)`` on torus x R^3.

A :class:`PhaseField` always offers a vectorised numpy evaluator.  The
built-in families additionally carry a compiled scalar kernel plus a flat
parameter vector, which the collision-integral quadrature calls directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numba as nb
import numpy as np

TWO_PI = 2.0 * math.pi
BUMP_NORM = 15.0 / 16.0


@nb.njit(cache=True, inline="always")
def bump(x):
    """``(15/16)(1 - x^2)^2`` on ``[-1, 1]``, zero outside; unit integral."""
    if x <= -1.0 or x >= 1.0:
        return 0.0
    y = 1.0 - x * x
    return BUMP_NORM * y * y


@nb.njit(cache=True, inline="always")
def _wrap_delta(d, L):
    return d - L * math.floor(d / L + 0.5)


# Mixture family, parameter layout:
#   [scale, L, K, M, (c, ux, uy, uz, 1/(2 theta), w) * K, (amp, kx, ky, kz, phase) * M]
# with c = w (2 pi theta)^(-3/2):
# f = scale * (1 + sum amp sin(2 pi k.r / L + phase)) * sum w N(v; u, theta)
MIX_STRIDE = 6


@nb.njit(cache=True, inline="always")
def _modulation(p, o, M, rx, ry, rz):
    rho = 1.0
    scale = 2.0 * math.pi / p[1]
    for m in range(M):
        q = o + 5 * m
        rho += p[q] * math.sin(scale * (p[q + 1] * rx + p[q + 2] * ry + p[q + 3] * rz) + p[q + 4])
    return rho


@nb.njit(cache=True, inline="always")
def _gaussians(p, K, vx, vy, vz):
    g = 0.0
    for k in range(K):
        o = 4 + MIX_STRIDE * k
        dx = vx - p[o + 1]
        dy = vy - p[o + 2]
        dz = vz - p[o + 3]
        g += p[o] * math.exp(-(dx * dx + dy * dy + dz * dz) * p[o + 4])
    return g


@nb.njit(cache=True, inline="always")
def mixture_density(p, rx, ry, rz, vx, vy, vz):
    K = int(p[2])
    M = int(p[3])
    g = _gaussians(p, K, vx, vy, vz)
    return p[0] * _modulation(p, 4 + MIX_STRIDE * K, M, rx, ry, rz) * g


@nb.njit(cache=True, inline="always")
def uniform_mixture_density(p, rx, ry, rz, vx, vy, vz):
    """Mixture without spatial modes; a separate kernel so the modulation loop compiles away."""
    return p[0] * _gaussians(p, int(p[2]), vx, vy, vz)


@nb.njit(cache=True)
def mixture_rho(p, rx, ry, rz):
    K = int(p[2])
    M = int(p[3])
    mass = 0.0
    for k in range(K):
        mass += p[4 + MIX_STRIDE * k + 5]
    return p[0] * _modulation(p, 4 + MIX_STRIDE * K, M, rx, ry, rz) * mass


# Blob family, parameter layout:
#   [scale, L, eps_r, eps_v, N, (qx, qy, qz, wx, wy, wz) * N]
# f = scale * sum_i prod_c bump(dr_c / eps_r) / eps_r * bump(dv_c / eps_v) / eps_v
@nb.njit(cache=True, inline="always")
def blob_density(p, rx, ry, rz, vx, vy, vz):
    L = p[1]
    er = p[2]
    ev = p[3]
    N = int(p[4])
    norm = 1.0 / (er * er * er * ev * ev * ev)
    total = 0.0
    o = 5
    for i in range(N):
        b = bump(_wrap_delta(rx - p[o], L) / er)
        if b > 0.0:
            b *= bump(_wrap_delta(ry - p[o + 1], L) / er)
        if b > 0.0:
            b *= bump(_wrap_delta(rz - p[o + 2], L) / er)
        if b > 0.0:
            b *= bump((vx - p[o + 3]) / ev) * bump((vy - p[o + 4]) / ev) * bump((vz - p[o + 5]) / ev)
        total += b
        o += 6
    return p[0] * norm * total


@nb.njit(cache=True)
def blob_rho(p, rx, ry, rz):
    L = p[1]
    er = p[2]
    N = int(p[4])
    total = 0.0
    o = 5
    for i in range(N):
        total += (bump(_wrap_delta(rx - p[o], L) / er) * bump(_wrap_delta(ry - p[o + 1], L) / er)
                  * bump(_wrap_delta(rz - p[o + 2], L) / er))
        o += 6
    return p[0] * total / (er * er * er)


@nb.njit(cache=True)
def _eval_many(fn, p, r, v):
    out = np.empty(r.shape[0])
    for k in range(r.shape[0]):
        out[k] = fn(p, r[k, 0], r[k, 1], r[k, 2], v[k, 0], v[k, 1], v[k, 2])
    return out


@nb.njit(cache=True)
def _rho_many(fn, p, r):
    out = np.empty(r.shape[0])
    for k in range(r.shape[0]):
        out[k] = fn(p, r[k, 0], r[k, 1], r[k, 2])
    return out


def _broadcast_rv(r, v):
    r = np.asarray(r, dtype=float)
    v = np.asarray(v, dtype=float)
    shape = np.broadcast_shapes(r.shape, v.shape)
    r = np.ascontiguousarray(np.broadcast_to(r, shape).reshape(-1, 3))
    v = np.ascontiguousarray(np.broadcast_to(v, shape).reshape(-1, 3))
    return r, v, shape[:-1]


@dataclass(frozen=True)
class PhaseField:
    """Density of particles (or of mass) at a phase point.

    Parameters
    ----------
    evaluate
        Vectorised ``f(r, v)``; ``r`` and ``v`` broadcast with trailing axis 3.
    L
        Torus side.
    normalization
        ``"volume"`` (integral equals the torus volume) or ``"mass"``
        (integral equals the total mass, collision prefactor ``1/m``).
    mass
        Particle mass ``m``; only used under the mass convention.
    spatially_uniform
        True when ``f`` does not depend on ``r``.
    """

    evaluate: Callable
    L: float = 1.0
    normalization: str = "volume"
    mass: float = 1.0
    smooth: bool = True
    spatially_uniform: bool = False
    kernel: Optional[object] = None
    rho_kernel: Optional[object] = None
    params: Optional[np.ndarray] = field(default=None, repr=False)
    label: str = "field"

    def __post_init__(self):
        if self.normalization not in ("volume", "mass"):
            raise ValueError(f"unknown normalization {self.normalization!r}")

    def __call__(self, r, v):
        return self.evaluate(r, v)

    def prefactor(self, n: float) -> float:
        """Collision prefactor: ``n`` under the volume convention, ``1/m`` under the mass one."""
        return n if self.normalization == "volume" else 1.0 / self.mass

    def spatial_density(self, r, velocity_rule=None):
        """``rho(r) = integral f(r, v) dv``."""
        r = np.asarray(r, dtype=float)
        flat = np.ascontiguousarray(r.reshape(-1, 3))
        if self.rho_kernel is not None:
            return _rho_many(self.rho_kernel, self.params, flat).reshape(r.shape[:-1])
        if velocity_rule is None:
            raise ValueError("field has no closed-form spatial density; pass a velocity rule")
        nodes, weights = velocity_rule
        vals = self.evaluate(flat[:, None, :], nodes[None, :, :])
        return (vals @ weights).reshape(r.shape[:-1])

    def scaled(self, c: float) -> "PhaseField":
        if self.params is not None:
            p = self.params.copy()
            p[0] *= c
            return _kernel_field(self.kernel, self.rho_kernel, p, self)
        base = self.evaluate
        return replace(self, evaluate=lambda r, v: c * base(r, v))


def _kernel_field(kernel, rho_kernel, params, template=None, **kw) -> PhaseField:
    params = np.ascontiguousarray(params, dtype=float)

    def evaluate(r, v):
        rr, vv, shape = _broadcast_rv(r, v)
        return _eval_many(kernel, params, rr, vv).reshape(shape)

    if template is not None:
        return replace(template, evaluate=evaluate, params=params)
    return PhaseField(evaluate=evaluate, kernel=kernel, rho_kernel=rho_kernel, params=params, **kw)


def maxwellian_mixture(weights, means, thetas, *, L=1.0, modes=(), scale=1.0,
                       normalization="volume", mass=1.0, label="mixture") -> PhaseField:
    """Sum of Maxwellians times an optional sinusoidal spatial modulation.

    ``modes`` is a sequence of ``(amplitude, (kx, ky, kz), phase)`` with
    integer wave vectors; the modulation ``1 + sum amp sin(...)`` must stay
    non-negative, i.e. ``sum |amp| <= 1``.
    """
    weights = np.atleast_1d(np.asarray(weights, dtype=float))
    means = np.asarray(means, dtype=float).reshape(-1, 3)
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    if not (len(weights) == len(means) == len(thetas)):
        raise ValueError("weights, means and thetas must have equal length")
    if np.any(weights < 0) or np.any(thetas <= 0):
        raise ValueError("weights must be non-negative and temperatures positive")
    if sum(abs(m[0]) for m in modes) > 1.0:
        raise ValueError("modulation amplitudes would make the density negative")
    p = [scale, L, len(weights), len(modes)]
    for w, u, th in zip(weights, means, thetas):
        p += [w * (2.0 * math.pi * th) ** -1.5, *u, 0.5 / th, w]
    for amp, k, phase in modes:
        p += [amp, *np.asarray(k, dtype=float), phase]
    kernel = mixture_density if modes else uniform_mixture_density
    return _kernel_field(kernel, mixture_rho, p, L=L, normalization=normalization,
                         mass=mass, spatially_uniform=not modes, label=label)


def maxwellian(theta=1.0, mean=(0.0, 0.0, 0.0), **kw) -> PhaseField:
    """Spatially uniform Maxwellian with unit velocity integral (``∫f = V``)."""
    kw.setdefault("label", "maxwellian")
    return maxwellian_mixture([1.0], [mean], [theta], **kw)


def bimodal(separation=1.0, theta=1.0, axis=0, **kw) -> PhaseField:
    """Two equal Maxwellians with means ``±separation`` along ``axis``."""
    u = np.zeros(3)
    u[axis] = separation
    kw.setdefault("label", "bimodal")
    return maxwellian_mixture([0.5, 0.5], [u, -u], [theta, theta], **kw)


def modulated_maxwellian(amplitude=0.5, wave=(1, 0, 0), theta=1.0, L=1.0, **kw) -> PhaseField:
    """``M(v) (1 + amplitude sin(2 pi k.r / L))``."""
    kw.setdefault("label", "modulated")
    return maxwellian_mixture([1.0], [(0.0, 0.0, 0.0)], [theta], L=L,
                              modes=[(amplitude, wave, 0.0)], **kw)


def blob_field(positions, velocities, eps_r, eps_v, *, L=1.0, n=None, label="blobs") -> PhaseField:
    """``n^-1 sum_i bump_eps(r - q_i, v - w_i)`` with the tensor bump kernel."""
    q = np.asarray(positions, dtype=float).reshape(-1, 3)
    w = np.asarray(velocities, dtype=float).reshape(-1, 3)
    if eps_r <= 0 or eps_v <= 0:
        raise ValueError("blob widths must be positive")
    N = q.shape[0]
    if n is None:
        n = N / L**3
    p = [1.0 / n, L, eps_r, eps_v, N]
    for qi, wi in zip(q, w):
        p += [*qi, *wi]
    return _kernel_field(blob_density, blob_rho, p, L=L, smooth=True, label=label)


def callable_field(fn, *, L=1.0, spatially_uniform=False, **kw) -> PhaseField:
    """Wrap an arbitrary vectorised ``fn(r, v)``; evaluated through numpy only."""
    return PhaseField(evaluate=fn, L=L, spatially_uniform=spatially_uniform, **kw)
