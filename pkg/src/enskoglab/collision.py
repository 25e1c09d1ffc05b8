"""Quadrature of the Enskog and Boltzmann hard-sphere collision integrals.

For a phase field ``f`` and a point ``(r1, v1)``::

    St_E f = K * ∫∫_{(v21,σ)>=0} (v21,σ) [f(r1,v1') f(r1+aσ,v2') - f(r1,v1) f(r1-aσ,v2)] dσ dv2
    St_B f = K * ∫∫_{(v21,σ)>=0} (v21,σ) [f(r1,v1') f(r1,v2')    - f(r1,v1) f(r1,v2)]    dσ dv2

with ``K = n a^2`` (or ``a^2 / m`` for mass-normalised fields).  The loss
term pairs ``f(r1, v1)`` with the partner velocity ``v2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .errors import EnskogError
from .fields import PhaseField
from .hardspheres import collide_many
from .torus import min_image, wrap


class NegativeDensityError(EnskogError, ValueError):
    pass


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights for the contact-direction sphere and the velocity cube.

    ``sigma_nodes`` cover the whole sphere (product Gauss–Legendre in
    ``cos θ`` times a uniform ``φ`` rule); nodes outside the hemisphere
    ``(v21, σ) >= 0`` are zero-weighted at evaluation time.
    """

    sigma_nodes: np.ndarray
    sigma_weights: np.ndarray
    v_nodes: np.ndarray
    v_weights: np.ndarray
    v_max: float
    velocity_scale: float = 1.0
    v_axis: np.ndarray = field(default=None, repr=False)
    v_axis_weights: np.ndarray = field(default=None, repr=False)
    half_nodes: np.ndarray = field(init=False, repr=False)
    half_weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        S, SW = self.sigma_nodes, self.sigma_weights
        upper = (S[:, 2] > 0) | ((S[:, 2] == 0) & ((S[:, 1] > 0) | ((S[:, 1] == 0) & (S[:, 0] > 0))))
        half, hw = S[upper], SW[upper]
        # every retained node needs its antipode with the same weight
        dist = np.linalg.norm(S[None, :, :] + half[:, None, :], axis=2)
        j = np.argmin(dist, axis=1)
        if 2 * len(half) != len(S) or np.any(dist[np.arange(len(half)), j] > 1e-12) \
                or np.any(np.abs(SW[j] - hw) > 1e-14 * np.abs(hw).max()):
            raise ValueError("sigma rule must be symmetric under sigma -> -sigma")
        object.__setattr__(self, "half_nodes", np.ascontiguousarray(half))
        object.__setattr__(self, "half_weights", np.ascontiguousarray(hw))

    @classmethod
    def default(cls, velocity_scale=1.0, n_theta=16, n_phi=32, n_v=17, v_max=None):
        if v_max is None:
            v_max = 5.5 * velocity_scale
        ct, cw = np.polynomial.legendre.leggauss(n_theta)
        phi = (np.arange(n_phi) + 0.5) * (2.0 * math.pi / n_phi)
        st = np.sqrt(1.0 - ct**2)
        sig = np.stack(
            [np.outer(st, np.cos(phi)).ravel(), np.outer(st, np.sin(phi)).ravel(), np.repeat(ct, n_phi)],
            axis=-1,
        )
        sig /= np.linalg.norm(sig, axis=1)[:, None]
        sw = np.repeat(cw, n_phi) * (2.0 * math.pi / n_phi)
        x, w = np.polynomial.legendre.leggauss(n_v)
        ax, aw = x * v_max, w * v_max
        grid = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1).reshape(-1, 3)
        gw = np.einsum("i,j,k->ijk", aw, aw, aw).ravel()
        return cls(np.ascontiguousarray(sig), sw, np.ascontiguousarray(grid), gw, float(v_max),
                   float(velocity_scale), ax, aw)

    def velocity_rule(self):
        return self.v_nodes, self.v_weights


@dataclass(frozen=True)
class CollisionIntegrals:
    """Gain and loss parts (prefactor included) of both operators at one point."""

    enskog_gain: float
    enskog_loss: float
    boltzmann_gain: float
    boltzmann_loss: float

    @property
    def enskog(self) -> float:
        return self.enskog_gain - self.enskog_loss

    @property
    def boltzmann(self) -> float:
        return self.boltzmann_gain - self.boltzmann_loss


@nb.njit(cache=True, inline="always")
def _wrapc(x, L):
    return x - L * math.floor(x / L)


_KERNELS = {}


def _st_kernel_for(fn):
    """Quadrature loop compiled against one density kernel.

    Binding ``fn`` at compile time lets numba inline it; passing it as a
    first-class argument costs an indirect call per evaluation.
    """
    if fn in _KERNELS:
        return _KERNELS[fn]

    @nb.njit(inline="always")
    def fin(p, rx, ry, rz, vx, vy, vz, vmax, L):
        # the cube bounds the v2 nodes only; post-collision velocities that
        # leave it are still evaluated, which keeps gain and loss balanced
        return fn(p, rx, ry, rz, vx, vy, vz)

    @nb.njit
    def kernel(p, r1, v1, a, L, S, SW, V, W, vmax, uniform):
        """Returns (gain_E, loss_E, gain_B, loss_B, min_f) without the prefactor."""
        x, y, z = r1[0], r1[1], r1[2]
        f11 = fin(p, x, y, z, v1[0], v1[1], v1[2], vmax, L)
        fmin = f11
        nv = V.shape[0]
        f_at_r1 = np.empty(nv)
        for m in range(nv):
            f_at_r1[m] = fin(p, x, y, z, V[m, 0], V[m, 1], V[m, 2], vmax, L)
            fmin = min(fmin, f_at_r1[m])
        gE = 0.0
        lE = 0.0
        gB = 0.0
        lB = 0.0
        # S holds one node of each antipodal pair: for every v2 exactly one of
        # +σ, -σ faces the hemisphere, and v1', v2' are the same for both
        for k in range(S.shape[0]):
            sx, sy, sz = S[k, 0], S[k, 1], S[k, 2]
            # shifted centres for +σ, wrapped once per node
            px, py, pz = _wrapc(x + a * sx, L), _wrapc(y + a * sy, L), _wrapc(z + a * sz, L)
            mx, my, mz = _wrapc(x - a * sx, L), _wrapc(y - a * sy, L), _wrapc(z - a * sz, L)
            agE = 0.0
            alE = 0.0
            agB = 0.0
            alB = 0.0
            for m in range(nv):
                pr = (V[m, 0] - v1[0]) * sx + (V[m, 1] - v1[1]) * sy + (V[m, 2] - v1[2]) * sz
                dx, dy, dz = pr * sx, pr * sy, pr * sz
                f1p = fin(p, x, y, z, v1[0] + dx, v1[1] + dy, v1[2] + dz, vmax, L)
                wpr = W[m] * abs(pr)
                f2b = fin(p, x, y, z, V[m, 0] - dx, V[m, 1] - dy, V[m, 2] - dz, vmax, L)
                agB += wpr * f1p * f2b
                alB += wpr * f_at_r1[m]
                if f1p < fmin or f2b < fmin:
                    fmin = min(fmin, f1p, f2b)
                if not uniform:
                    if pr > 0.0:
                        f2g = fin(p, px, py, pz, V[m, 0] - dx, V[m, 1] - dy, V[m, 2] - dz, vmax, L)
                        f2l = fin(p, mx, my, mz, V[m, 0], V[m, 1], V[m, 2], vmax, L)
                    else:
                        f2g = fin(p, mx, my, mz, V[m, 0] - dx, V[m, 1] - dy, V[m, 2] - dz, vmax, L)
                        f2l = fin(p, px, py, pz, V[m, 0], V[m, 1], V[m, 2], vmax, L)
                    agE += wpr * f1p * f2g
                    alE += wpr * f2l
                    if f2g < fmin or f2l < fmin:
                        fmin = min(fmin, f2g, f2l)
            if uniform:
                agE = agB
                alE = alB
            gE += SW[k] * agE
            lE += SW[k] * alE
            gB += SW[k] * agB
            lB += SW[k] * alB
        return gE, f11 * lE, gB, f11 * lB, fmin

    _KERNELS[fn] = kernel
    return kernel


def _st_numpy(f: PhaseField, r1, v1, a, L, quad: QuadratureRule):
    """Reference path for fields without a compiled kernel."""
    S, SW, V, W = quad.sigma_nodes, quad.sigma_weights, quad.v_nodes, quad.v_weights

    def fin(r, v):
        return np.asarray(f(wrap(r, L), v), dtype=float)

    pr = (V - v1) @ S.T  # (nv, ns)
    iv, js = np.nonzero(pr > 0.0)
    prm = pr[iv, js]
    sig = S[js]
    v2 = V[iv]
    v1p, v2p = collide_many(np.broadcast_to(v1, v2.shape), v2, sig)
    f11 = fin(r1, v1)
    f1p = fin(r1, v1p)
    f2g = fin(r1 + a * sig, v2p)
    f2l = fin(r1 - a * sig, v2)
    f2b = fin(r1, v2p)
    f2 = fin(np.broadcast_to(r1, v2.shape), v2)
    wts = W[iv] * SW[js] * prm
    fmin = min(float(np.min(f11)), *(float(np.min(x)) if x.size else 0.0 for x in (f1p, f2g, f2l, f2b)))
    return (float(wts @ (f1p * f2g)), float(f11 * (wts @ f2l)),
            float(wts @ (f1p * f2b)), float(f11 * (wts @ f2)), fmin)


def collision_integrals(f: PhaseField, r1, v1, a: float, n: float, quad: QuadratureRule) -> CollisionIntegrals:
    """Evaluate the Enskog and Boltzmann integrals in one pass at ``(r1, v1)``."""
    r1 = np.ascontiguousarray(wrap(r1, f.L), dtype=float)
    v1 = np.ascontiguousarray(v1, dtype=float)
    if f.kernel is not None:
        gE, lE, gB, lB, fmin = _st_kernel_for(f.kernel)(f.params, r1, v1, float(a), float(f.L),
                                          quad.half_nodes, quad.half_weights, quad.v_nodes,
                                          quad.v_weights, quad.v_max, bool(f.spatially_uniform))
    else:
        gE, lE, gB, lB, fmin = _st_numpy(f, r1, v1, float(a), float(f.L), quad)
        if f.spatially_uniform:
            gE, lE = gB, lB
    if fmin < 0.0:
        raise NegativeDensityError(f"negative density {fmin!r} at an evaluation point")
    c = f.prefactor(n) * a * a
    return CollisionIntegrals(c * gE, c * lE, c * gB, c * lB)


def st_enskog(f: PhaseField, r1, v1, a, n, quad) -> float:
    return collision_integrals(f, r1, v1, a, n, quad).enskog


def st_boltzmann(f: PhaseField, r1, v1, a, n, quad) -> float:
    return collision_integrals(f, r1, v1, a, n, quad).boltzmann


# --- mean-field (Vlasov) term -------------------------------------------------


@dataclass(frozen=True)
class SpatialGrid:
    """Cell-centred offsets filling ``(-L/2, L/2)^3``, symmetric about zero."""

    G: int = 32

    def offsets(self, L):
        h = L / self.G
        ax = (np.arange(self.G) + 0.5) * h - 0.5 * L
        pts = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1).reshape(-1, 3)
        return pts, h**3


def mean_force(r1, pot, L, *, density=None, grid=SpatialGrid(), sources=None, masses=None):
    """``∫ ∂Φ(|r1 - r2|)/∂r1 ρ(r2) dr2`` on the torus.

    Give either a continuous ``density`` (callable on an ``(K, 3)`` array of
    points, integrated on a grid centred at ``r1``) or discrete point
    ``sources`` with ``masses``.
    """
    r1 = np.asarray(r1, dtype=float)
    if sources is not None:
        src = np.asarray(sources, dtype=float).reshape(-1, 3)
        m = np.ones(len(src)) if masses is None else np.asarray(masses, dtype=float)
        return m @ pot.gradient(min_image(r1, src, L))
    if density is None:
        raise ValueError("need a density or point sources")
    off, dv = grid.offsets(L)
    rho = np.asarray(density(wrap(r1 - off, L)), dtype=float)
    return dv * (rho @ pot.gradient(off))


def velocity_gradient(f: PhaseField, r1, v1, h):
    r1 = np.asarray(r1, dtype=float)
    v1 = np.asarray(v1, dtype=float)
    e = np.eye(3) * h
    fp = f(np.broadcast_to(r1, (3, 3)), v1 + e)
    fm = f(np.broadcast_to(r1, (3, 3)), v1 - e)
    return (np.asarray(fp) - np.asarray(fm)) / (2.0 * h)


def vlasov_term(f: PhaseField, r1, v1, pot, n, *, grid=SpatialGrid(), h_v=None, quad=None):
    """``(n/m) [∫ ∂Φ/∂r1 ρ(r2) dr2] · ∂f/∂v1`` at ``(r1, v1)``.

    ``ρ`` comes from the field's closed form when it has one, otherwise from
    the velocity quadrature of ``quad``.
    """
    if h_v is None:
        h_v = 1e-4 * (quad.velocity_scale if quad is not None else 1.0)
    rule = quad.velocity_rule() if quad is not None else None
    force = mean_force(r1, pot, f.L, density=lambda pts: f.spatial_density(pts, rule), grid=grid)
    grad = velocity_gradient(f, r1, v1, h_v)
    if not np.all(np.isfinite(grad)) or not np.all(np.isfinite(force)):
        raise EnskogError("non-finite gradient in Vlasov term")
    return float((n / pot.m) * (force @ grad))


# --- collision-continuity check ----------------------------------------------


def condition_11_products(f: PhaseField, a, samples):
    """Pre- and post-collision pair products for rows ``(r1, v1, v2, σ)``."""
    s = np.asarray(samples, dtype=float).reshape(-1, 12)
    r1, v1, v2, sig = s[:, 0:3], s[:, 3:6], s[:, 6:9], s[:, 9:12]
    if np.any(np.einsum("ij,ij->i", v2 - v1, sig) < 0):
        raise ValueError("samples must satisfy (v2 - v1, sigma) >= 0")
    r2 = wrap(r1 - a * sig, f.L)
    v1p, v2p = collide_many(v1, v2, sig)
    pre = np.asarray(f(r1, v1)) * np.asarray(f(r2, v2))
    post = np.asarray(f(r1, v1p)) * np.asarray(f(r2, v2p))
    return pre, post


def check_condition_11(f: PhaseField, a, samples) -> float:
    """Largest ``|f(r1,v1) f(r1-aσ,v2) - f(r1,v1') f(r1-aσ,v2')|`` over samples."""
    pre, post = condition_11_products(f, a, samples)
    return float(np.max(np.abs(pre - post))) if pre.size else 0.0


def condition_11_noise_floor(f: PhaseField, a, samples, rel=1e-12) -> float:
    """Rounding-level floor: ``rel`` times the largest product magnitude."""
    pre, post = condition_11_products(f, a, samples)
    if not pre.size:
        return 0.0
    return rel * float(np.max(np.maximum(np.abs(pre), np.abs(post))))


def sample_contact_set(rng, size, L=1.0, velocity_scale=1.0):
    """Random ``(r1, v1, v2, σ)`` rows with ``(v21, σ) >= 0``."""
    r1 = rng.uniform(0.0, L, size=(size, 3))
    v1 = rng.normal(0.0, velocity_scale, size=(size, 3))
    v2 = rng.normal(0.0, velocity_scale, size=(size, 3))
    sig = rng.normal(size=(size, 3))
    sig /= np.linalg.norm(sig, axis=1)[:, None]
    flip = np.einsum("ij,ij->i", v2 - v1, sig) < 0
    sig[flip] *= -1.0
    return np.hstack([r1, v1, v2, sig])
