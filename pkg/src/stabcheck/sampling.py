"""Deterministic low-discrepancy sampling of balls, spheres and intervals.

Every sampler here is a pure function of (count, dimension, seed), so checks
built on top of them are exactly reproducible run to run.  The seed offsets
the start index of the underlying Halton sequence (or rotates the angular
lattice); it does not switch to pseudo-randomness.
"""

from __future__ import annotations

import math
from statistics import NormalDist

import numpy as np

_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
_INV_CDF = NormalDist().inv_cdf


def _van_der_corput(index: int, base: int) -> float:
    v, denom = 0.0, 1.0
    while index > 0:
        index, rem = divmod(index, base)
        denom *= base
        v += rem / denom
    return v


def halton(count: int, dim: int, seed: int = 0) -> np.ndarray:
    """Halton points in [0, 1)^dim; ``seed`` offsets the sequence start."""
    if dim > len(_PRIMES):
        raise ValueError(f"halton supports at most {len(_PRIMES)} dimensions")
    start = 32 + 1009 * int(seed)
    out = np.empty((count, dim))
    for j in range(dim):
        base = _PRIMES[j]
        out[:, j] = [_van_der_corput(start + i, base) for i in range(count)]
    return out


def _directions_from_uniform(u: np.ndarray) -> np.ndarray:
    """Map uniforms in [0,1)^k to unit directions in dimension k (k >= 4)."""
    z = np.array([[_INV_CDF(min(max(v, 1e-12), 1.0 - 1e-12)) for v in row] for row in u])
    norms = np.linalg.norm(z, axis=1)
    norms[norms == 0.0] = 1.0
    return z / norms[:, None]


def ball_points(count: int, dim: int, radius: float = 1.0, seed: int = 0) -> np.ndarray:
    """Low-discrepancy points in the closed origin-centered ball."""
    u = halton(count, dim, seed)
    r = radius * u[:, 0] ** (1.0 / dim)
    if dim == 1:
        return (radius * (2.0 * u[:, 0] - 1.0))[:, None]
    if dim == 2:
        theta = 2.0 * math.pi * u[:, 1]
        return np.column_stack((r * np.cos(theta), r * np.sin(theta)))
    if dim == 3:
        z = 2.0 * u[:, 1] - 1.0
        theta = 2.0 * math.pi * u[:, 2]
        s = np.sqrt(np.maximum(1.0 - z * z, 0.0))
        return np.column_stack((r * s * np.cos(theta), r * s * np.sin(theta), r * z))
    dirs = _directions_from_uniform(halton(count, dim, seed + 1))
    return dirs * r[:, None]


def sphere_points(count: int, dim: int, radius: float = 1.0, seed: int = 0) -> np.ndarray:
    """Deterministic well-spread points on the origin-centered sphere.

    Golden-angle lattice for dim 2 and 3; inverse-normal Halton directions
    for higher dimensions.
    """
    offset = (int(seed) * _GOLDEN) % 1.0
    if dim == 1:
        signs = np.array([1.0 if k % 2 == 0 else -1.0 for k in range(count)])
        return (radius * signs)[:, None]
    if dim == 2:
        k = np.arange(count)
        theta = 2.0 * math.pi * ((k * _GOLDEN + offset) % 1.0)
        return radius * np.column_stack((np.cos(theta), np.sin(theta)))
    if dim == 3:
        k = np.arange(count)
        z = 1.0 - (2.0 * k + 1.0) / count
        theta = 2.0 * math.pi * ((k * _GOLDEN + offset) % 1.0)
        s = np.sqrt(np.maximum(1.0 - z * z, 0.0))
        return radius * np.column_stack((s * np.cos(theta), s * np.sin(theta), z))
    dirs = _directions_from_uniform(halton(count, dim, seed + 2))
    return radius * dirs


def interval_points(count: int, lo: float, hi: float, seed: int = 0) -> np.ndarray:
    """Low-discrepancy points in the closed interval [lo, hi]."""
    if count == 1:
        return np.array([0.5 * (lo + hi)])
    u = halton(count, 1, seed)[:, 0]
    return lo + (hi - lo) * u
