"""Arithmetic on the flat cubic 3-torus of side ``L``."""

from __future__ import annotations

import itertools
import math

import numpy as np


def _finite(p, name="input"):
    p = np.asarray(p)
    p = p.astype(np.result_type(p.dtype, np.float64))
    if not np.all(np.isfinite(p)):
        raise ValueError(f"non-finite {name}: {p!r}")
    return p


def _check_side(L):
    if not (L > 0 and math.isfinite(L)):
        raise ValueError(f"torus side must be positive and finite, got {L!r}")


def wrap(p, L: float) -> np.ndarray:
    """Map coordinates into ``[0, L)`` componentwise.

    Works on a single point or on any array whose last axis has length 3.
    """
    _check_side(L)
    p = _finite(p)
    out = np.mod(p, L)
    # np.mod can round a tiny negative up to exactly L
    out[out >= L] = 0.0
    return out


def min_image(p, q, L: float) -> np.ndarray:
    """Shortest displacement ``d`` with ``p == wrap(q + d)``.

    Components lie in ``(-L/2, L/2]``; an exact antipodal tie resolves to
    ``+L/2``.
    """
    _check_side(L)
    d = _finite(p) - _finite(q)
    h = 0.5 * L
    return h - np.mod(h - d, L)


def distance(p, q, L: float) -> np.ndarray:
    return np.linalg.norm(min_image(p, q, L), axis=-1)


def image_offsets(a: float, L: float, horizon: float) -> np.ndarray:
    """Lattice offsets ``k*L`` needed to catch every contact within ``horizon``.

    ``horizon`` is the largest relative displacement (a length) the pair can
    accumulate over the look-ahead window.  Starting from a minimum-image
    separation, an image ``k`` can only be reached if
    ``|k_c| L - L/2 <= a + horizon`` in every component.

    Returns an ``(K, 3)`` array, the zero offset first.
    """
    _check_side(L)
    if not a > 0:
        raise ValueError("sphere diameter must be positive")
    if a >= 0.5 * L:
        raise ValueError("sphere larger than half the box")
    if horizon < 0 or not math.isfinite(horizon):
        raise ValueError(f"invalid horizon {horizon!r}")
    if horizon == 0:
        return np.zeros((1, 3))
    kmax = int(math.floor((a + horizon) / L + 0.5))
    rng = range(-kmax, kmax + 1)
    ks = sorted(itertools.product(rng, rng, rng), key=lambda k: (sum(map(abs, k)), k))
    return np.asarray(ks, dtype=float) * L
