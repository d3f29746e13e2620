"""Regions, boundary distances and the killing potential ``V_D(x) = int_{D^c} J(x, y) dy``.

All regions are open sets.  Besides membership and distance to the boundary
each region can report where a ray ``x + t*omega`` started inside it crosses
the boundary.  The crossings come as an array of shape ``(n_dirs, K)``:
entries ``2k`` and ``2k+1`` bound the k-th stretch of the ray lying outside
the region, with ``inf`` padding.  Combined with the radial tail of the
kernel this reduces ``V_D`` to a one-dimensional angular quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._util import as_points, ball_volume, directions, sphere_area
from .errors import ConfigError, DomainError, QuadratureError
from .expr import Expr
from .kernels import JumpKernel, ScalingFunction

_GOLD = 0.5 * (math.sqrt(5.0) - 1.0)


# ---------------------------------------------------------------------------
# reference functions
# ---------------------------------------------------------------------------
class ReferenceFunction:
    """Bounded positive profile ``f`` on ``[0, inf)``.

    kinds
        ``log_power``  ``Phi^{-1}(log(e+s)^{-theta})``
        ``poly_power`` ``Phi^{-1}((1+s)^{-theta})``
        ``exp``        ``exp(-s^theta)``
        ``expr``       user expression in ``s``
    """

    def __init__(self, kind: str, theta: Optional[float] = None, phi: Optional[ScalingFunction] = None,
                 expr: Optional[str] = None):
        self.kind = kind
        self.theta = None if theta is None else float(theta)
        self.phi = phi
        self._expr = Expr(expr, ("s",)) if expr is not None else None
        if kind in ("log_power", "poly_power"):
            if phi is None or theta is None or theta <= 0:
                raise ConfigError(f"{kind} profile needs theta > 0 and a scaling function", path=("f", "theta"))
        elif kind == "exp":
            if theta is None or theta <= 0:
                raise ConfigError("exp profile needs theta > 0", path=("f", "theta"))
        elif kind == "expr":
            if expr is None:
                raise ConfigError("expr profile needs an expression", path=("f", "expr"))
        else:
            raise ConfigError(f"unknown profile kind {kind!r}", path=("f", "kind"))

    @property
    def decreasing(self) -> bool:
        return self.kind != "expr"

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "log_power":
            return self.phi.inverse(np.log(np.e + s) ** (-self.theta))
        if self.kind == "poly_power":
            return self.phi.inverse((1.0 + s) ** (-self.theta))
        if self.kind == "exp":
            return np.exp(-np.power(np.maximum(s, 0.0), self.theta))
        return self._expr(s=s)

    def log_inverse(self, t):
        """``log inf{s > 0 : f*(s) <= t}``; ``-inf`` when the set contains 0+."""
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            if self.kind == "log_power":
                L = self.phi(t) ** (-1.0 / self.theta)
                # log(exp(L) - e) computed without overflow
                out = np.where(L > 1, L + np.log1p(-np.exp(np.minimum(1.0 - L, 0.0))), -np.inf)
                return out
            if self.kind == "poly_power":
                base = self.phi(t) ** (-1.0 / self.theta) - 1.0
                return np.where(base > 0, np.log(np.maximum(base, 1e-300)), -np.inf)
            if self.kind == "exp":
                return np.where(t < 1, np.log(np.maximum(-np.log(t), 1e-300)) / self.theta, -np.inf)
        return np.log(np.maximum(self._numeric_inverse(t), 1e-300))

    def inverse(self, t):
        """Generalised inverse of the upper envelope, ``inf{s > 0 : f*(s) <= t}``."""
        with np.errstate(over="ignore"):
            return np.exp(self.log_inverse(t))

    def _numeric_inverse(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty_like(t)
        for i, ti in enumerate(t):
            hi = 1.0
            while upper_envelope(self, hi) > ti:
                hi *= 2.0
                if hi > 1e12:
                    raise DomainError(f"profile never drops below {ti}")
            lo = 0.0
            if upper_envelope(self, 0.0) <= ti:
                out[i] = 0.0
                continue
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                if upper_envelope(self, mid) <= ti:
                    hi = mid
                else:
                    lo = mid
            out[i] = hi
        return out

    def spec(self) -> dict:
        d = {"kind": self.kind}
        if self.theta is not None:
            d["theta"] = self.theta
        if self._expr is not None:
            d["expr"] = self._expr.source
        return d


def upper_envelope(f, r: float, span: float = 1e6, n: int = 10_000) -> float:
    """``f*(r) = sup_{s >= r} f(s)`` for a profile that tends to 0."""
    if getattr(f, "decreasing", False):
        return float(f(r))
    offs = np.concatenate([[0.0], np.geomspace(1e-6, span, n - 1)])
    s = r + offs
    v = np.asarray(f(s), dtype=float)
    k = int(np.argmax(v))
    lo, hi = s[max(k - 1, 0)], s[min(k + 1, n - 1)]
    best = v[k]
    for _ in range(60):
        a = hi - _GOLD * (hi - lo)
        b = lo + _GOLD * (hi - lo)
        fa, fb = float(f(a)), float(f(b))
        best = max(best, fa, fb)
        if fa > fb:
            hi = b
        else:
            lo = a
    return float(best)


def lower_envelope(f, r: float, n: int = 10_000) -> float:
    """``f_*(r) = inf_{1 <= s <= r} f(s)`` (``f(r)`` when r < 1)."""
    if r <= 1:
        return float(f(r))
    if getattr(f, "decreasing", False):
        return float(f(r))
    s = np.linspace(1.0, r, n)
    v = np.asarray(f(s), dtype=float)
    k = int(np.argmin(v))
    lo, hi = s[max(k - 1, 0)], s[min(k + 1, n - 1)]
    best = v[k]
    for _ in range(60):
        a = hi - _GOLD * (hi - lo)
        b = lo + _GOLD * (hi - lo)
        fa, fb = float(f(a)), float(f(b))
        best = min(best, fa, fb)
        if fa < fb:
            hi = b
        else:
            lo = a
    return float(best)


def reference_envelopes(f, r):
    """Return ``(f*(r), f_*(r))`` for scalar or array ``r``."""
    r = np.asarray(r, dtype=float)
    up = np.vectorize(lambda x: upper_envelope(f, x))(r)
    lo = np.vectorize(lambda x: lower_envelope(f, x))(r)
    return up, lo


# ---------------------------------------------------------------------------
# regions
# ---------------------------------------------------------------------------
class Region:
    """Open subset of R^d."""

    dim: int
    kind = "region"

    def contains(self, x) -> np.ndarray:
        raise NotImplementedError

    def boundary_distance(self, x) -> np.ndarray:
        raise NotImplementedError

    def nearest_boundary_point(self, x) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} has no nearest-point routine")

    def bounding_box(self):
        return None

    def volume_is_finite(self):
        return None

    def far_samples(self, n: int):
        """Points of the region marching to infinity, or None for bounded regions."""
        return None

    def boundary_samples(self, n: int):
        """Boundary points marching to infinity together with outward normals."""
        return None

    def far_field_fraction(self):
        """``(R, q)``: beyond distance ``R`` count a fraction ``q`` of space as complement."""
        return None

    def ray_crossings(self, x, dirs, r_min: float = 0.0, r_max: float = 1e4, per_decade: int = 96):
        """Generic crossings by log-spaced sampling along each ray plus bisection."""
        return _sampled_crossings(self, x, dirs, r_min, r_max, per_decade)

    def spec(self) -> dict:
        return {"kind": self.kind, "dim": self.dim}


def _sampled_crossings(region, x, dirs, r_min, r_max, per_decade):
    x = np.asarray(x, dtype=float)
    r0 = max(r_min, 1e-9)
    n = max(16, int(per_decade * math.log10(r_max / r0)) + 1)
    t = np.concatenate([[0.0], np.geomspace(r0, r_max, n)])
    pts = x[None, None, :] + t[None, :, None] * dirs[:, None, :]
    inside = region.contains(pts.reshape(-1, x.size)).reshape(len(dirs), len(t))
    flips = inside[:, 1:] != inside[:, :-1]
    rows, cols = np.nonzero(flips)
    lo = t[cols].copy()
    hi = t[cols + 1].copy()
    state_lo = inside[rows, cols]
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        ins = region.contains(x[None, :] + mid[:, None] * dirs[rows])
        same = ins == state_lo
        lo = np.where(same, mid, lo)
        hi = np.where(same, hi, mid)
    cross = 0.5 * (lo + hi)
    counts = np.bincount(rows, minlength=len(dirs))
    K = int(counts.max()) if counts.size else 0
    K += K % 2
    out = np.full((len(dirs), max(K, 2)), np.inf)
    order = np.lexsort((cross, rows))
    rows, cross = rows[order], cross[order]
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    pos = np.arange(len(rows)) - starts[rows]
    out[rows, pos] = cross
    return out


class WholeSpace(Region):
    kind = "whole"

    def __init__(self, dim: int):
        self.dim = dim

    def contains(self, x):
        return np.ones(as_points(x, self.dim).shape[0], dtype=bool)

    def boundary_distance(self, x):
        return np.full(as_points(x, self.dim).shape[0], np.inf)

    def ray_crossings(self, x, dirs, **kw):
        return np.full((len(dirs), 2), np.inf)

    def volume_is_finite(self):
        return False

    def far_samples(self, n):
        return np.outer(np.geomspace(2, 1e4, n), np.eye(self.dim)[0])


class Ball(Region):
    kind = "ball"

    def __init__(self, center, radius: float):
        self.center = np.atleast_1d(np.asarray(center, dtype=float))
        self.dim = self.center.size
        self.radius = float(radius)
        if self.radius <= 0:
            raise ConfigError("ball radius must be positive", path=("radius",))

    def contains(self, x):
        p = as_points(x, self.dim)
        return np.sum((p - self.center) ** 2, axis=1) < self.radius**2

    def boundary_distance(self, x):
        p = as_points(x, self.dim)
        return np.abs(self.radius - np.linalg.norm(p - self.center, axis=1))

    def nearest_boundary_point(self, x):
        p = as_points(x, self.dim)
        v = p - self.center
        n = np.linalg.norm(v, axis=1, keepdims=True)
        e = np.where(n > 0, v / np.where(n > 0, n, 1.0), np.eye(self.dim)[0])
        return self.center + self.radius * e

    def ray_crossings(self, x, dirs, **kw):
        v = np.asarray(x, dtype=float) - self.center
        b = dirs @ v
        c = v @ v - self.radius**2
        t = -b + np.sqrt(np.maximum(b * b - c, 0.0))
        return np.stack([t, np.full_like(t, np.inf)], axis=1)

    def bounding_box(self):
        return np.stack([self.center - self.radius, self.center + self.radius], axis=1)

    def volume_is_finite(self):
        return True

    def spec(self):
        return {"kind": self.kind, "dim": self.dim, "center": self.center.tolist(), "radius": self.radius}


class BallComplement(Region):
    kind = "ball_complement"

    def __init__(self, center, radius: float):
        self.center = np.atleast_1d(np.asarray(center, dtype=float))
        self.dim = self.center.size
        self.radius = float(radius)

    def contains(self, x):
        p = as_points(x, self.dim)
        return np.sum((p - self.center) ** 2, axis=1) > self.radius**2

    def boundary_distance(self, x):
        p = as_points(x, self.dim)
        return np.abs(np.linalg.norm(p - self.center, axis=1) - self.radius)

    def nearest_boundary_point(self, x):
        return Ball(self.center, self.radius).nearest_boundary_point(x)

    def ray_crossings(self, x, dirs, **kw):
        v = np.asarray(x, dtype=float) - self.center
        b = dirs @ v
        c = v @ v - self.radius**2
        disc = b * b - c
        sq = np.sqrt(np.maximum(disc, 0.0))
        t0, t1 = -b - sq, -b + sq
        hit = (disc > 0) & (t0 > 0)
        return np.stack([np.where(hit, t0, np.inf), np.where(hit, t1, np.inf)], axis=1)

    def volume_is_finite(self):
        return False

    def far_samples(self, n):
        return self.center + np.outer(np.geomspace(self.radius + 1, 1e4, n), np.eye(self.dim)[0])

    def spec(self):
        return {"kind": self.kind, "dim": self.dim, "center": self.center.tolist(), "radius": self.radius}


class Box(Region):
    kind = "box"

    def __init__(self, lo, hi):
        self.lo = np.atleast_1d(np.asarray(lo, dtype=float))
        self.hi = np.atleast_1d(np.asarray(hi, dtype=float))
        self.dim = self.lo.size
        if np.any(self.hi <= self.lo):
            raise ConfigError("box needs lo < hi", path=("hi",))

    def contains(self, x):
        p = as_points(x, self.dim)
        return np.all((p > self.lo) & (p < self.hi), axis=1)

    def boundary_distance(self, x):
        p = as_points(x, self.dim)
        return np.min(np.minimum(p - self.lo, self.hi - p), axis=1)

    def nearest_boundary_point(self, x):
        p = as_points(x, self.dim).copy()
        dl, dh = p - self.lo, self.hi - p
        idx = np.arange(len(p))
        k = np.argmin(np.minimum(dl, dh), axis=1)
        low = dl[idx, k] <= dh[idx, k]
        p[idx, k] = np.where(low, self.lo[k], self.hi[k])
        return p

    def ray_crossings(self, x, dirs, **kw):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            tl = (self.lo - x) / dirs
            th = (self.hi - x) / dirs
        tmax = np.where(dirs > 0, th, np.where(dirs < 0, tl, np.inf))
        t = np.min(tmax, axis=1)
        return np.stack([t, np.full_like(t, np.inf)], axis=1)

    def bounding_box(self):
        return np.stack([self.lo, self.hi], axis=1)

    def volume_is_finite(self):
        return True

    def spec(self):
        return {"kind": self.kind, "dim": self.dim, "lo": self.lo.tolist(), "hi": self.hi.tolist()}


class HalfSpace(Region):
    """``{x : <x, normal> < offset}`` with a unit normal."""

    kind = "half_space"

    def __init__(self, normal, offset: float = 0.0):
        n = np.atleast_1d(np.asarray(normal, dtype=float))
        self.normal = n / np.linalg.norm(n)
        self.offset = float(offset)
        self.dim = n.size

    def contains(self, x):
        return as_points(x, self.dim) @ self.normal < self.offset

    def boundary_distance(self, x):
        return np.abs(self.offset - as_points(x, self.dim) @ self.normal)

    def nearest_boundary_point(self, x):
        p = as_points(x, self.dim)
        return p + np.outer(self.offset - p @ self.normal, self.normal)

    def ray_crossings(self, x, dirs, **kw):
        dn = dirs @ self.normal
        with np.errstate(divide="ignore"):
            t = np.where(dn > 0, (self.offset - np.asarray(x, dtype=float) @ self.normal) / dn, np.inf)
        return np.stack([t, np.full_like(t, np.inf)], axis=1)

    def volume_is_finite(self):
        return False

    def far_samples(self, n):
        return np.outer(-np.geomspace(1, 1e4, n) + self.offset, self.normal)

    def spec(self):
        return {"kind": self.kind, "dim": self.dim, "normal": self.normal.tolist(), "offset": self.offset}


class Complement(Region):
    """Closed complement of a region (used as the target set of the fatness probe)."""

    kind = "complement"

    def __init__(self, region: Region):
        self.region = region
        self.dim = region.dim

    def contains(self, x):
        return ~self.region.contains(x)


class Intersection(Region):
    kind = "intersection"

    def __init__(self, *parts: Region):
        self.parts = parts
        self.dim = parts[0].dim

    def contains(self, x):
        out = self.parts[0].contains(x)
        for p in self.parts[1:]:
            out &= p.contains(x)
        return out

    def boundary_distance(self, x):
        return np.min([p.boundary_distance(x) for p in self.parts], axis=0)

    def bounding_box(self):
        boxes = [p.bounding_box() for p in self.parts if p.bounding_box() is not None]
        if not boxes:
            return None
        lo = np.max([b[:, 0] for b in boxes], axis=0)
        hi = np.min([b[:, 1] for b in boxes], axis=0)
        return np.stack([lo, hi], axis=1)

    def volume_is_finite(self):
        flags = [p.volume_is_finite() for p in self.parts]
        return True if any(f is True for f in flags) else (False if all(f is False for f in flags) else None)

    def spec(self):
        return {"kind": self.kind, "parts": [p.spec() for p in self.parts]}


class Union(Region):
    kind = "union"

    def __init__(self, *parts: Region):
        self.parts = parts
        self.dim = parts[0].dim

    def contains(self, x):
        out = self.parts[0].contains(x)
        for p in self.parts[1:]:
            out |= p.contains(x)
        return out

    def boundary_distance(self, x, n_dirs: int = 720):
        # first exit along many rays: an upper bound converging as n_dirs grows
        p = as_points(x, self.dim)
        dirs, _ = directions(self.dim, n_dirs)
        return np.array([float(np.min(self.ray_crossings(xi, dirs)[:, 0])) for xi in p])

    def bounding_box(self):
        boxes = [p.bounding_box() for p in self.parts]
        if any(b is None for b in boxes):
            return None
        return np.stack([np.min([b[:, 0] for b in boxes], axis=0), np.max([b[:, 1] for b in boxes], axis=0)], axis=1)

    def volume_is_finite(self):
        flags = [p.volume_is_finite() for p in self.parts]
        return False if any(f is False for f in flags) else (True if all(flags) else None)

    def spec(self):
        return {"kind": self.kind, "parts": [p.spec() for p in self.parts]}


class Horn(Region):
    """``D_f = {x : x1 > 0, |x~| < f(x1)}`` with ``x~ = (x2, ..., xd)``."""

    kind = "horn"

    def __init__(self, f, dim: int):
        self.f = f
        self.dim = int(dim)
        if self.dim < 1:
            raise ConfigError("dim must be >= 1", path=("dim",))

    def contains(self, x):
        p = as_points(x, self.dim)
        if self.dim == 1:
            return p[:, 0] > 0
        rad = np.linalg.norm(p[:, 1:], axis=1)
        ok = p[:, 0] > 0
        out = np.zeros(len(p), dtype=bool)
        out[ok] = rad[ok] < self.f(p[ok, 0])
        return out

    def _lateral(self, a, b, n_samples=257, n_golden=64):
        """Minimise ``(a-s)^2 + (f(s)-b)^2`` over ``s >= 0`` near ``a``; returns (dist, s)."""
        w = np.maximum(self.f(a) - b, 0.0)
        lo = np.maximum(a - w, 0.0)
        hi = a + w
        frac = np.linspace(0.0, 1.0, n_samples)
        s = lo[:, None] + (hi - lo)[:, None] * frac[None, :]
        dist2 = (a[:, None] - s) ** 2 + (self.f(s) - b[:, None]) ** 2
        k = np.argmin(dist2, axis=1)
        step = (hi - lo) / (n_samples - 1)
        L = np.maximum(s[np.arange(len(a)), k] - step, lo)
        H = np.minimum(s[np.arange(len(a)), k] + step, hi)
        best_s = s[np.arange(len(a)), k]
        best = dist2[np.arange(len(a)), k]

        def g(t):
            return (a - t) ** 2 + (self.f(t) - b) ** 2

        for _ in range(n_golden):
            A = H - _GOLD * (H - L)
            B = L + _GOLD * (H - L)
            left = g(A) < g(B)
            H = np.where(left, B, H)
            L = np.where(left, L, A)
        mid = 0.5 * (L + H)
        gm = g(mid)
        better = gm < best
        best = np.where(better, gm, best)
        best_s = np.where(better, mid, best_s)
        return np.sqrt(best), best_s

    def boundary_distance(self, x):
        p = as_points(x, self.dim)
        if self.dim == 1:
            return np.abs(p[:, 0])
        a = p[:, 0].copy()
        b = np.linalg.norm(p[:, 1:], axis=1)
        lat, _ = self._lateral(a, b)
        cap = np.where(b <= self.f(0.0), np.abs(a), np.inf)
        return np.minimum(lat, cap)

    def nearest_boundary_point(self, x):
        p = as_points(x, self.dim)
        if self.dim == 1:
            return np.zeros_like(p)
        a = p[:, 0].copy()
        b = np.linalg.norm(p[:, 1:], axis=1)
        lat, s = self._lateral(a, b)
        cap = np.where(b <= self.f(0.0), np.abs(a), np.inf)
        e = np.zeros_like(p[:, 1:])
        e[:, 0] = 1.0
        nz = b > 0
        e[nz] = p[nz, 1:] / b[nz, None]
        out = np.empty_like(p)
        use_cap = cap < lat
        out[:, 0] = np.where(use_cap, 0.0, s)
        out[:, 1:] = np.where(use_cap[:, None], p[:, 1:], self.f(s)[:, None] * e)
        return out

    def volume_is_finite(self):
        if self.dim == 1:
            return False
        from scipy import integrate

        parts = []
        for lo, hi in ((0, 10), (10, 1e3), (1e3, 1e6)):
            v, _ = integrate.quad(lambda s: float(self.f(s)) ** (self.dim - 1), lo, hi, limit=400)
            parts.append(v)
        # finite when the last decades add a vanishing share of the total
        return bool(parts[2] < 1e-2 * (parts[0] + parts[1]) and float(self.f(1e6)) < float(self.f(1e3)))

    def far_samples(self, n):
        s = np.geomspace(5.0, 1e4, n)
        return np.column_stack([s, np.zeros((n, self.dim - 1))])

    def boundary_samples(self, n):
        if self.dim == 1:
            return None
        s = np.geomspace(5.0, 1e3, n)
        pts = np.column_stack([s, self.f(s), np.zeros((n, self.dim - 2))])
        h = 1e-6 * np.maximum(s, 1.0)
        slope = (self.f(s + h) - self.f(s - h)) / (2 * h)
        nrm = np.column_stack([-slope, np.ones(n), np.zeros((n, self.dim - 2))])
        return pts, nrm / np.linalg.norm(nrm, axis=1, keepdims=True)

    def spec(self):
        return {"kind": self.kind, "dim": self.dim, "f": self.f.spec() if hasattr(self.f, "spec") else str(self.f)}


class Ring(Region):
    """Concentric shells: ``|x| <= 1`` or ``|x|`` in one of the intervals
    ``(n + m/H_n, n + (m + 1/2)/H_n)``, ``n >= 1``, ``0 <= m < H_n``,
    with ``H_n = floor(h(n)) >= 12``.
    """

    kind = "ring"

    def __init__(self, h, dim: int, far_radius: float = 50.0):
        self.h = h
        self.dim = int(dim)
        self.far_radius = float(far_radius)
        hs = np.floor(np.asarray(h(np.arange(0, 200, dtype=float)), dtype=float))
        if np.any(hs < 12):
            raise ConfigError("ring growth function must satisfy h >= 12", path=("h",))

    def H(self, n):
        return np.floor(np.asarray(self.h(np.asarray(n, dtype=float)), dtype=float))

    def _radial_in(self, r):
        r = np.asarray(r, dtype=float)
        n = np.floor(r)
        H = self.H(np.maximum(n, 1.0))
        frac = (r - n) * H
        m = np.floor(frac)
        rem = frac - m
        return (r <= 1) | ((n >= 1) & (rem > 0) & (rem < 0.5))

    def contains(self, x):
        return self._radial_in(np.linalg.norm(as_points(x, self.dim), axis=1))

    def _component(self, r):
        """Radial interval (left, right) containing ``r``."""
        r = np.asarray(r, dtype=float)
        H1 = float(self.H(1.0))
        first = 1.0 + 0.5 / H1
        n = np.floor(r)
        H = self.H(np.maximum(n, 1.0))
        m = np.floor((r - n) * H)
        left = n + m / H
        right = n + (m + 0.5) / H
        in_first = r < first
        return np.where(in_first, -np.inf, left), np.where(in_first, first, right)

    def boundary_distance(self, x):
        r = np.linalg.norm(as_points(x, self.dim), axis=1)
        left, right = self._component(r)
        return np.minimum(r - left, right - r)

    def gaps(self, r_max: float, r_min: float = 0.0):
        """Complement shells ``[n + (m+1/2)/H, n + (m+1)/H]`` between ``r_min`` and ``r_max``."""
        out = []
        n = max(1, int(math.floor(r_min)))
        while n < r_max:
            H = int(self.H(float(n)))
            m = np.arange(H)
            out.append(np.column_stack([n + (m + 0.5) / H, n + (m + 1.0) / H]))
            n += 1
        return np.vstack(out) if out else np.zeros((0, 2))

    def ray_crossings(self, x, dirs, **kw):
        x = np.asarray(x, dtype=float)
        R = self.far_radius
        rx = float(np.linalg.norm(x))
        # only shells within reach of a ray of length R
        g = self.gaps(rx + R + 1, rx - R)
        b = dirs @ x
        p = x @ x - b**2
        ra2 = g[:, 0] ** 2
        rb2 = g[:, 1] ** 2
        sb = np.sqrt(np.maximum(rb2[None, :] - p[:, None], 0.0))
        sa = np.sqrt(np.maximum(ra2[None, :] - p[:, None], 0.0))
        hit = rb2[None, :] > p[:, None]
        split = ra2[None, :] > p[:, None]
        # outgoing branch [-b + sa, -b + sb]; incoming branch [-b - sb, -b - sa]
        o_lo, o_hi = -b[:, None] + np.where(split, sa, -sb), -b[:, None] + sb
        i_lo, i_hi = -b[:, None] - sb, -b[:, None] - sa
        ivs = []
        for lo, hi, ok in ((o_lo, o_hi, hit), (i_lo, i_hi, hit & split)):
            lo = np.clip(lo, 0.0, R)
            hi = np.clip(hi, 0.0, R)
            ok = ok & (hi > lo)
            ivs.append((np.where(ok, lo, np.inf), np.where(ok, hi, np.inf)))
        lo = np.concatenate([ivs[0][0], ivs[1][0]], axis=1)
        hi = np.concatenate([ivs[0][1], ivs[1][1]], axis=1)
        order = np.argsort(lo, axis=1)
        lo = np.take_along_axis(lo, order, axis=1)
        hi = np.take_along_axis(hi, order, axis=1)
        keep = int(np.max(np.sum(np.isfinite(lo), axis=1))) if lo.size else 0
        lo, hi = lo[:, :max(keep, 1)], hi[:, :max(keep, 1)]
        out = np.empty((len(dirs), 2 * lo.shape[1]))
        out[:, 0::2] = lo
        out[:, 1::2] = hi
        return out

    def far_field_fraction(self):
        return self.far_radius, 0.5

    def volume_is_finite(self):
        return False

    def far_samples(self, n):
        ns = np.unique(np.round(np.geomspace(2, 2000, n)))
        H = self.H(ns)
        r = ns + 0.25 / H
        return np.outer(r, np.eye(self.dim)[0])

    def spec(self):
        return {"kind": self.kind, "dim": self.dim, "h": self.h.spec() if hasattr(self.h, "spec") else str(self.h)}


class GrowthFunction:
    """Ring growth function ``h``.

    kinds ``log_power`` ``1/Phi^{-1}(log(e+s)^{-theta})``, ``poly_power``
    ``1/Phi^{-1}((1+s)^{-theta})``, both shifted up by ``floor`` so that
    ``h >= 12``; ``expr`` a user expression in ``s``.
    """

    def __init__(self, kind: str, theta: Optional[float] = None, phi: Optional[ScalingFunction] = None,
                 expr: Optional[str] = None, floor: float = 12.0):
        self.kind, self.theta, self.phi, self.floor = kind, theta, phi, float(floor)
        self._expr = Expr(expr, ("s", "n")) if expr is not None else None
        if kind in ("log_power", "poly_power") and (theta is None or phi is None):
            raise ConfigError(f"{kind} growth needs theta and a scaling function", path=("h", "theta"))
        if kind == "expr" and expr is None:
            raise ConfigError("expr growth needs an expression", path=("h", "expr"))

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "log_power":
            return self.floor + 1.0 / self.phi.inverse(np.log(np.e + s) ** (-self.theta))
        if self.kind == "poly_power":
            return self.floor + 1.0 / self.phi.inverse((1.0 + s) ** (-self.theta))
        return self._expr(s=s, n=s)

    def spec(self):
        d = {"kind": self.kind}
        if self.theta is not None:
            d["theta"] = self.theta
        if self._expr is not None:
            d["expr"] = self._expr.source
        return d


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------
def region_contains(region: Region, x):
    """Vectorised membership; a single point returns a bool."""
    x = np.asarray(x, dtype=float)
    out = region.contains(x)
    return bool(out[0]) if x.ndim <= 1 and region.dim == x.size else out


def boundary_distance(region: Region, x):
    """Distance to the boundary for points of the region (scalar for a single point)."""
    x = np.asarray(x, dtype=float)
    pts = as_points(x, region.dim)
    if not np.all(region.contains(pts)):
        raise DomainError("boundary_distance is defined for points of the region")
    out = region.boundary_distance(pts)
    return float(out[0]) if x.ndim <= 1 and region.dim == x.size else out


def killing_potential(kernel: JumpKernel, region: Region, x, rtol: float = 1e-6, n_dirs: Optional[int] = None,
                      max_dirs: int = 1 << 14):
    """``V_D(x) = int_{D^c} J(x, y) dy`` for x in the region.

    For translation-invariant kernels the radial integral over each outside
    stretch of a ray is a difference of tail values; the angular integral
    uses the periodic trapezoid rule (Gauss x trapezoid in d = 3), doubled
    until successive values agree to ``rtol``.  ``n_dirs`` fixes the rule.

    Raises
    ------
    DomainError
        ``x`` outside the region.
    QuadratureError
        Tolerance not met within ``max_dirs`` directions; ``partial`` holds the
        last estimate.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != region.dim or x.size != kernel.dim:
        raise DomainError("dimension mismatch between point, kernel and region")
    if not region.contains(x)[0]:
        raise DomainError("killing_potential needs x inside the region")
    if isinstance(region, WholeSpace):
        return 0.0
    d = region.dim
    delta = float(region.boundary_distance(x)[0]) if not isinstance(region, (Intersection, Union)) else 0.0
    r_max = kernel.range if math.isfinite(kernel.range) else 1e4

    def estimate(n):
        dirs, w = directions(d, n)
        cr = region.ray_crossings(x, dirs, r_min=0.5 * delta, r_max=r_max)
        if kernel.translation_invariant:
            T = kernel.tail(np.where(np.isfinite(cr), cr, np.inf))
            T = np.where(np.isfinite(cr), T, 0.0)
            per_dir = np.sum(T[:, 0::2] - T[:, 1::2], axis=1)
            val = kernel.kappa.constant * float(np.dot(w, per_dir))
        else:
            val = float(np.dot(w, _ray_integrals(kernel, x, dirs, cr)))
        ff = region.far_field_fraction()
        if ff is not None:
            R, q = ff
            val += q * _kappa_scale(kernel) * sphere_area(d) * float(kernel.tail(R))
        return val

    if d == 1:
        return estimate(2)
    if n_dirs is not None:
        return estimate(n_dirs)
    n = 256 if d == 2 else 512
    prev = estimate(n)
    while True:
        n *= 2
        cur = estimate(n)
        if abs(cur - prev) <= rtol * abs(cur):
            return cur
        if n >= max_dirs:
            raise QuadratureError(f"killing potential did not reach rtol={rtol}", partial=cur)
        prev = cur


def _kappa_scale(kernel):
    return kernel.kappa.constant if kernel.kappa.is_constant else 1.0


def _ray_integrals(kernel, x, dirs, cr):
    """Radial integrals of ``q^{d-1} J(x, x + q omega)`` over the outside stretches."""
    from scipy import integrate

    d = kernel.dim
    out = np.zeros(len(dirs))
    for i, om in enumerate(dirs):
        for a, b in zip(cr[i, 0::2], cr[i, 1::2]):
            if not np.isfinite(a):
                break
            b = min(b, kernel.range)
            if b <= a:
                continue

            def f(q, om=om):
                return q ** (d - 1) * float(kernel(x, x + q * om))

            v, _ = integrate.quad(f, a, b, limit=200, epsrel=1e-9)
            out[i] += v
    return out


@dataclass
class FatnessProbe:
    """Outcome of a search for ``B(xi, kappa r)`` inside ``U`` and ``B(x, r)``."""

    x: np.ndarray
    r: float
    kappa: float
    witness: Optional[np.ndarray]
    n_verified: int

    @property
    def found(self) -> bool:
        return self.witness is not None


def kappa_fat_probe(target: Region, x, r: float, kappa: float, n_verify: int = 10_000, seed: int = 0,
                    n_dirs: int = 256, n_radii: int = 16) -> FatnessProbe:
    """Search for ``xi`` with ``B(xi, kappa*r)`` contained in ``target`` and in ``B(x, r)``.

    Candidates lie on a polar grid of radii in ``[0, (1-kappa) r]`` (so the
    small ball automatically fits in ``B(x, r)``), outermost first, with the
    coordinate axes added to the directions; each is
    screened with 200 points and the first survivor is verified with
    ``n_verify`` points (uniform in the ball plus its sphere).
    """
    if not (0 < kappa <= 1) or r <= 0:
        raise DomainError("need 0 < kappa <= 1 and r > 0")
    x = np.asarray(x, dtype=float).reshape(-1)
    d = x.size
    rng = np.random.default_rng(seed)
    rho = kappa * r

    def ball_points(n):
        g = rng.normal(size=(n, d))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        rad = rng.uniform(size=n) ** (1.0 / d)
        rad[: n // 4] = 1.0 - 1e-9
        return g * rad[:, None] * rho

    screen = ball_points(200)
    dirs, _ = directions(d, n_dirs) if d > 1 else (np.array([[1.0], [-1.0]]), None)
    # coordinate axes first: witnesses of flat boundaries sit exactly on them
    dirs = np.vstack([np.eye(d), -np.eye(d), dirs])
    radii = np.linspace((1 - kappa) * r, 0.0, n_radii) if kappa < 1 else np.array([0.0])
    for rad in radii:
        cands = x + rad * dirs if rad > 0 else x[None, :]
        for c in cands:
            if np.all(target.contains(c + screen)):
                pts = ball_points(n_verify)
                if np.all(target.contains(c + pts)):
                    return FatnessProbe(x, r, kappa, c, n_verify)
    return FatnessProbe(x, r, kappa, None, 0)


def vd_lower_bound(phi: ScalingFunction, region: Region, x, fatness: FatnessProbe, c0: float = 1.0) -> float:
    """Lower bound for ``V_D(x)`` from a fatness witness at the nearest boundary point.

    With ``delta = delta_D(x) <= 1/2`` and a ball ``B(xi, kappa rho)`` in the
    complement, ``rho = min(delta, fatness.r)``, every point of that ball is
    within ``2 delta`` of ``x``, so

        V_D(x) >= C0 |B_1| (kappa rho)^d / ((2 delta)^d Phi(2 delta)).
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    delta = float(boundary_distance(region, x))
    if delta > 0.5:
        raise DomainError("vd_lower_bound needs delta_D(x) <= 1/2")
    if not fatness.found:
        raise DomainError("fatness probe found no witness")
    if fatness.r > delta * (1 + 1e-9):
        raise DomainError("probe radius must not exceed delta_D(x)")
    if abs(float(np.linalg.norm(fatness.x - x)) - delta) > 1e-6 * max(delta, 1.0):
        raise DomainError("probe must be centred at a nearest boundary point of x")
    rho = fatness.r
    d = x.size
    return float(c0 * ball_volume(d) * (fatness.kappa * rho) ** d / ((2 * delta) ** d * phi(2 * delta)))
