"""Small numeric helpers."""

from __future__ import annotations

import hashlib
import json
import math

import numpy as np

# Gauss-Legendre nodes on [0, 1] used by the fixed-order panel rules.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(20)
GL01_X = 0.5 * (_GL_X + 1.0)
GL01_W = 0.5 * _GL_W


def sphere_area(d: int) -> float:
    """Surface measure of the unit sphere in R^d (2 for d = 1)."""
    return 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)


def ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def as_points(x, dim: int) -> np.ndarray:
    """Coerce ``x`` to an array of shape (n, dim)."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1) if arr.shape[0] == dim else arr.reshape(-1, 1)
    if arr.shape[-1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got shape {arr.shape}")
    return arr.reshape(-1, dim)


def canonical_hash(obj) -> str:
    """Stable sha256 digest of a JSON-serialisable object."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=float)
    return hashlib.sha256(blob.encode()).hexdigest()


def directions(d: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature directions and weights on the unit sphere.

    d = 1 gives the two signs; d = 2 uses the periodic trapezoid rule;
    d = 3 uses Gauss-Legendre in cos(polar) times trapezoid in azimuth.
    """
    if d == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if d == 2:
        t = (np.arange(n) + 0.5) * (2 * math.pi / n)
        return np.stack([np.cos(t), np.sin(t)], axis=1), np.full(n, 2 * math.pi / n)
    if d == 3:
        m = max(4, int(round(math.sqrt(n / 2))))
        z, wz = np.polynomial.legendre.leggauss(m)
        k = 2 * m
        phi = (np.arange(k) + 0.5) * (2 * math.pi / k)
        zz, pp = np.meshgrid(z, phi, indexing="ij")
        s = np.sqrt(1 - zz**2)
        dirs = np.stack([zz, s * np.cos(pp), s * np.sin(pp)], axis=-1).reshape(-1, 3)
        w = (wz[:, None] * np.full(k, 2 * math.pi / k)[None, :]).reshape(-1)
        return dirs, w
    raise ValueError("directions are implemented for d <= 3")
