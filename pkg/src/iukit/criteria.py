"""Analytic criteria: compactness, rate functions, the integral test,
IU classification, necessary conditions, lower bounds and envelopes.

Every formula holds up to multiplicative constants.  Declared constants
(``C1``, ``C2``, ...) default to 1; fitted constants are reported, never
claimed.  Rate functions are handled through ``log beta`` because the
interesting ones overflow a double long before the test becomes decisive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ._util import GL01_W, GL01_X
from .errors import ConfigError, DomainError, NumericError
from .expr import Expr
from .geometry import (GrowthFunction, Horn, ReferenceFunction, Region, Ring, kappa_fat_probe, killing_potential,
                       lower_envelope, upper_envelope, Complement)
from .kernels import JumpKernel, ScalingFunction, TemperingFunction

FAMILIES = ("log_power_horn", "poly_power_horn", "exp_horn", "ring", "generic")
NEC_SLOPE_TOL = 0.05
TAIL_EXPONENT_TOL = 1e-3
V_SAMPLE_RADIUS = 500.0  # far samples used for the V_D growth test


# ---------------------------------------------------------------------------
# setup
# ---------------------------------------------------------------------------
@dataclass
class ProblemSetup:
    """Kernel, region and the family parameters the classification needs.

    ``psi`` defaults to the kernel's scaling function, ``gamma`` to the
    tempering exponent and ``theta`` to the exponent of the region's profile.
    """

    kernel: JumpKernel
    region: Region
    family: str = "generic"
    psi: Optional[ScalingFunction] = None
    gamma: Optional[float] = None
    theta: Optional[float] = None
    threshold: float = 5.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}", path=("family",))
        if self.psi is None:
            self.psi = self.kernel.phi
        if self.gamma is None:
            self.gamma = float(self.kernel.chi.gamma)
        if self.kernel.dim != self.region.dim:
            raise ConfigError("kernel and region dimensions differ")
        want = {"log_power_horn": "log_power", "poly_power_horn": "poly_power", "exp_horn": "exp"}
        if self.family in want:
            if not isinstance(self.region, Horn) or getattr(self.region.f, "kind", None) != want[self.family]:
                raise ConfigError(f"family {self.family} needs a horn with a {want[self.family]} profile",
                                  path=("family",))
            if self.theta is None:
                self.theta = self.region.f.theta
        elif self.family == "ring":
            if not isinstance(self.region, Ring):
                raise ConfigError("family ring needs a Ring region", path=("family",))
            if self.theta is None:
                self.theta = getattr(self.region.h, "theta", None)

    @property
    def profile(self):
        """Reference profile ``f`` (horns) or ``1/h`` equivalent (rings)."""
        if isinstance(self.region, Horn):
            return self.region.f
        if isinstance(self.region, Ring):
            h = self.region.h
            if getattr(h, "kind", None) in ("log_power", "poly_power"):
                return ReferenceFunction(h.kind, h.theta, h.phi)
        return None

    @classmethod
    def family_setup(cls, family: str, gamma: float, theta: float, dim: int = 2, alpha: float = 1.0,
                     c: float = 1.0) -> "ProblemSetup":
        """Standard setup: power ``Phi(r) = r^alpha``, tempering ``exp(c r^gamma)`` beyond 1."""
        phi = ScalingFunction.power(alpha)
        chi = tempering(gamma, c)
        kernel = JumpKernel(dim, phi, chi)
        if family == "ring":
            kind = "log_power" if gamma == 0 else "poly_power"
            region = Ring(GrowthFunction(kind, theta, phi), dim)
        else:
            kind = {"log_power_horn": "log_power", "poly_power_horn": "poly_power", "exp_horn": "exp"}[family]
            region = Horn(ReferenceFunction(kind, theta, None if kind == "exp" else phi), dim)
        return cls(kernel, region, family, theta=theta)


def tempering(gamma: float, c: float = 1.0) -> TemperingFunction:
    if gamma == 0:
        return TemperingFunction.none()
    if math.isinf(gamma):
        return TemperingFunction.finite_range()
    return TemperingFunction(gamma, c, c, 1.0, 1.0)


# ---------------------------------------------------------------------------
# rate functions and the integral test
# ---------------------------------------------------------------------------
class RateFunction:
    """Nonincreasing positive ``beta`` on ``(0, s0]``, stored as ``log beta(s)``.

    ``log_of_log_s`` maps ``log s`` to ``log beta``; tabulated rates
    interpolate ``log log beta`` linearly in ``log s`` and extrapolate the
    last segment towards ``s -> 0``.
    """

    def __init__(self, log_of_log_s: Callable, s0: float = 1.0, kind: str = "closed", source: str = ""):
        self._f = log_of_log_s
        self.s0 = float(s0)
        self.kind = kind
        self.source = source

    @classmethod
    def closed(cls, expr: str, s0: float = 1.0, log: bool = False) -> "RateFunction":
        """From an expression giving ``beta`` (or ``log beta`` when ``log``).

        The expression may use ``s`` and ``ls = log s``.  Rates whose tails
        leave double range (``exp(s^-a)``) should be written as ``log beta``
        in ``ls``, e.g. ``exp(-ls/2)`` for ``beta(s) = exp(s^{-1/2})``.
        """
        e = Expr(expr, ("s", "ls"))

        def f(ls):
            with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
                v = np.asarray(e(s=np.exp(ls), ls=ls), dtype=float)
                if log:
                    return v
                if np.any(np.isinf(v) & np.isfinite(ls)):
                    raise NumericError(f"beta = {expr} overflows double precision; pass log beta in ls instead")
                return np.log(v)
        return cls(f, s0, "closed", expr)

    @classmethod
    def from_log(cls, fn: Callable, s0: float = 1.0, source: str = "") -> "RateFunction":
        """``fn(log s) = log beta(s)``."""
        return cls(fn, s0, "closed", source)

    @classmethod
    def tabulated(cls, s, beta=None, log_beta=None) -> "RateFunction":
        s = np.asarray(s, dtype=float)
        lb = np.log(np.asarray(beta, dtype=float)) if log_beta is None else np.asarray(log_beta, dtype=float)
        order = np.argsort(s)
        ls, lb = np.log(s[order]), lb[order]
        with np.errstate(invalid="ignore"):
            rising = np.diff(lb) > 1e-12 * np.maximum(1.0, np.abs(lb[1:]))
        if np.any(rising):
            raise DomainError("tabulated beta is not nonincreasing")
        fin = np.isfinite(lb)

        def f(x):
            x = np.asarray(x, dtype=float)
            out = np.interp(x, ls, lb)
            # below the table: inf if the smallest entries are inf, else extrapolate log(log beta - floor)
            below = x < ls[0]
            if below.any():
                if not fin[0]:
                    out = np.where(below, np.inf, out)
                else:
                    k = np.nonzero(fin)[0][:2]
                    if len(k) < 2:
                        out = np.where(below, lb[k[0]], out)
                    else:
                        slope = (lb[k[1]] - lb[k[0]]) / (ls[k[1]] - ls[k[0]])
                        out = np.where(below, lb[k[0]] + slope * (x - ls[k[0]]), out)
            return out
        return cls(f, float(s[order][-1]), "tabulated")

    def log_at(self, log_s):
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            return np.asarray(self._f(np.asarray(log_s, dtype=float)), dtype=float)

    def __call__(self, s):
        with np.errstate(over="ignore"):
            return np.exp(self.log_at(np.log(np.asarray(s, dtype=float))))

    def check_monotone(self, n: int = 400, span: float = 60.0):
        ls = np.linspace(math.log(self.s0) - span, math.log(self.s0), n)
        v = self.log_at(ls)
        if np.any(np.isnan(v)):
            raise DomainError("beta evaluates to NaN")
        with np.errstate(invalid="ignore"):
            d = np.diff(v)
        fin = np.isfinite(v[1:]) & np.isfinite(v[:-1])
        if np.any(d[fin] > 1e-9 * np.maximum(1.0, np.abs(v[1:][fin]))):
            raise DomainError("beta is not nonincreasing on (0, s0]")
        if np.any(np.isinf(v[1:]) & np.isfinite(v[:-1]) & (v[1:] > 0)):
            raise DomainError("beta is not nonincreasing on (0, s0]")

    def log_inverse(self, u, iters: int = 200):
        """``log beta^{-1}(e^u)`` with ``beta^{-1}(r) = inf{s in (0, s0] : beta(s) <= r}``.

        Returns ``log s0`` clipped from above; ``+inf`` marks an empty set.
        """
        u = np.atleast_1d(np.asarray(u, dtype=float))
        hi = np.full(u.shape, math.log(self.s0))
        out = np.full(u.shape, np.inf)
        ok = self.log_at(hi) <= u
        if not ok.any():
            return out
        lo = np.full(u.shape, math.log(self.s0) - 10.0)
        for _ in range(64):
            need = ok & (self.log_at(lo) <= u)
            if not need.any():
                break
            lo = np.where(need, hi - 2.0 * (hi - lo), lo)
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            le = self.log_at(mid) <= u
            hi = np.where(le, mid, hi)
            lo = np.where(le, lo, mid)
            if np.all(hi - lo <= 1e-15 * np.maximum(1.0, np.abs(hi))):
                break
        return np.where(ok, hi, np.inf)


@dataclass
class IntegralTestResult:
    verdict: str
    value: Optional[float]
    exponent: float
    window: tuple
    quad_error: float = 0.0

    @property
    def converges(self) -> bool:
        return self.verdict == "converges"


def iu_integral_test(beta: RateFunction, t: Optional[float] = None, rtol: float = 1e-8,
                     fit_start: Optional[float] = None) -> IntegralTestResult:
    """Decide whether ``int_t^inf beta^{-1}(r) / r dr`` is finite.

    With ``u = log r`` the integral is ``int beta^{-1}(e^u) du``.  The tail
    exponent ``p`` of ``beta^{-1}(e^u) ~ C u^{-p}`` is fitted on two decades
    of ``u`` (two decades of ``log r``) and the integral converges when
    ``p > 1 + 1e-3``.  The finite part is integrated with Gauss-Legendre
    panels in ``log u`` refined until successive halvings agree to ``rtol``;
    the fitted power tail is added analytically.

    Parameters
    ----------
    t : float, optional
        Lower limit; must exceed ``inf beta``.  Defaults to
        ``e * max(beta(s0), 1)``.
    """
    beta.check_monotone()
    u_inf = float(beta.log_at(math.log(beta.s0)))
    u_t = max(u_inf, 0.0) + 1.0 if t is None else math.log(t)
    if not u_t > u_inf:
        raise DomainError("the lower limit t must exceed inf beta")
    U0 = fit_start if fit_start is not None else max(1e8, 10.0 * abs(u_t))
    U1 = 100.0 * U0
    uf = np.geomspace(U0, U1, 41)
    lg = beta.log_inverse(uf)
    if not np.all(np.isfinite(lg)):
        raise NumericError("generalised inverse undefined in the tail window")
    p = -float(np.polyfit(np.log(uf), lg, 1)[0])
    window = (U0, U1)
    if not p > 1 + TAIL_EXPONENT_TOL:
        return IntegralTestResult("diverges", None, p, window)

    def integrand_u(u):
        return np.exp(beta.log_inverse(u))

    def g(v):
        u = np.exp(v)
        return integrand_u(u) * u

    # [u_t, 1] linearly in u when u_t < 1, then panels in v = log u up to U1
    lo_v, hi_v = math.log(max(u_t, 1.0)), math.log(U1)
    width = 0.25
    prev = None
    err = math.inf
    for _ in range(8):
        cur = _gl_integral(g, lo_v, hi_v, max(1, int(math.ceil((hi_v - lo_v) / width))))
        if u_t < 1.0:
            cur += _gl_integral(integrand_u, u_t, 1.0, max(1, int(math.ceil((1.0 - u_t) / width))))
        if prev is not None:
            err = abs(cur - prev)
            if err <= rtol * abs(cur):
                break
        prev = cur
        width /= 2
    # power tail anchored at the last window value (an overestimate for faster decay)
    tail = math.exp(float(lg[-1])) * U1 / (p - 1)
    return IntegralTestResult("converges", float(cur + tail), p, window, float(err))


def _gl_integral(fn, a, b, n):
    edges = np.linspace(a, b, n + 1)
    h = np.diff(edges)[:, None]
    pts = edges[:-1, None] + h * GL01_X
    vals = fn(pts.ravel()).reshape(pts.shape)
    return float(np.sum(vals * GL01_W * h))


# ---------------------------------------------------------------------------
# log-space helpers for the family formulas
# ---------------------------------------------------------------------------
def _log_phi_inverse(phi: ScalingFunction, log_t):
    """``log Phi^{-1}(e^{log_t})`` without leaving log space."""
    log_t = np.asarray(log_t, dtype=float)
    if phi.kind == "power":
        return log_t / phi.alpha
    lo = np.full(log_t.shape, -1e4)
    hi = np.full(log_t.shape, 1e4)
    for _ in range(120):
        mid = 0.5 * (lo + hi)
        ge = phi.log_value(mid) >= log_t
        hi = np.where(ge, mid, hi)
        lo = np.where(ge, lo, mid)
    return hi


def _log_f_star_inverse(f: ReferenceFunction, log_m):
    """``log f*^{-1}(m)`` for the decreasing named profiles, from ``log m``."""
    log_m = np.asarray(log_m, dtype=float)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        if f.kind == "log_power":
            lphi = f.phi.log_value(log_m)
            L = np.exp(-lphi / f.theta)
            return np.where(L > 1, L + np.log1p(-np.exp(np.minimum(1.0 - L, 0.0))), -np.inf)
        if f.kind == "poly_power":
            lphi = f.phi.log_value(log_m)
            return np.where(lphi < 0, np.log(np.expm1(-lphi / f.theta)), -np.inf)
        if f.kind == "exp":
            return np.where(log_m < 0, np.log(-log_m) / f.theta, -np.inf)
    return np.log(np.maximum(f.inverse(np.exp(log_m)), 1e-300))


def _log_f(f: ReferenceFunction, log_s):
    """``log f(e^{log_s})`` in log space for the named profiles."""
    log_s = np.asarray(log_s, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        s = np.exp(log_s)
        if f.kind == "log_power":
            ll = np.log(np.logaddexp(1.0, log_s))
            return _log_phi_inverse(f.phi, -f.theta * ll)
        if f.kind == "poly_power":
            return _log_phi_inverse(f.phi, -f.theta * np.logaddexp(0.0, log_s))
        if f.kind == "exp":
            return -np.power(s, f.theta)
    return np.log(f(s))


def _log_m(setup: ProblemSetup, log_s):
    """``log (Phi^{-1}(s) wedge 1)``."""
    return np.minimum(_log_phi_inverse(setup.kernel.phi, log_s), 0.0)


def _log_prefactor(setup, log_s, C1):
    lm = _log_m(setup, log_s)
    return math.log(C1) - setup.kernel.dim * lm - 2.0 * setup.psi.log_value(lm), lm


def beta_rate(setup: ProblemSetup, s=None, C1: float = 1.0, C2: float = 1.0, C3: float = 1.0,
              s_grid=None, c_alpha: float = 1.0):
    """Rate function of the super Poincare inequality for ``setup``.

    Horn and ring families with ``gamma <= 1`` use the form
    ``C1 m^{-d} Psi(m)^{-2} sup_{|y-z| <= C1 f*^{-1}(C2 m)} J^{-2}``,
    ``m = Phi^{-1}(s) wedge 1``; ``gamma > 1`` uses the chain form
    ``C1 m^{-d} Psi(m)^{-2} exp{C1 (1 + F) log(e + F / inf_{C2<=r<=F} f)}``
    with ``F = f*^{-1}(C3 m)``.  Rings use the profile ``1/h``.  Generic
    setups scan ``(R, r)`` in the defining infimum and may return ``+inf``.

    Returns a :class:`RateFunction` when ``s`` is None, else its values.
    """
    if setup.family == "generic":
        rf = _generic_beta(setup, s_grid=s_grid, c_alpha=c_alpha)
    else:
        f = setup.profile
        if f is None:
            raise ConfigError("family needs a named profile or growth function")
        kernel = setup.kernel
        chain = setup.gamma > 1

        def log_beta(ls):
            pre, lm = _log_prefactor(setup, ls, C1)
            if not chain:
                lF = _log_f_star_inverse(f, lm + math.log(C2))
                return pre + 2.0 * kernel.log_inv_sup(math.log(C1) + lF)
            lF = _log_f_star_inverse(f, lm + math.log(C3))
            with np.errstate(over="ignore", invalid="ignore"):
                F = np.exp(lF)
                lf = _log_f(f, np.maximum(lF, math.log(C2)))
                return pre + C1 * (1.0 + F) * np.logaddexp(1.0, lF - lf)

        rf = RateFunction.from_log(log_beta, 1.0, f"{setup.family} gamma={setup.gamma} theta={setup.theta}")
    if s is None:
        return rf
    return rf(s)


def _generic_beta(setup: ProblemSetup, s_grid=None, c_alpha: float = 1.0, n_samples: int = 24,
                  x0=None) -> RateFunction:
    """Tabulated rate from a scan of ``(R, r)`` in the defining infimum."""
    kernel, region = setup.kernel, setup.region
    s_grid = np.geomspace(1e-6, 1.0, 25) if s_grid is None else np.asarray(s_grid, dtype=float)
    radii_r = np.geomspace(1e-8, 0.49, 22)
    far = region.far_samples(n_samples)
    bbox = region.bounding_box()
    if far is not None:
        Rs = np.unique(np.concatenate([[1.0], np.linalg.norm(far, axis=1)]))
        vfar = np.array([killing_potential(kernel, region, x, n_dirs=512) for x in far])
        rfar = np.linalg.norm(far, axis=1)
    else:
        rad = float(np.max(np.abs(bbox))) * math.sqrt(region.dim) if bbox is not None else 1.0
        Rs = np.array([rad + 1.0])
        vfar, rfar = np.array([]), np.array([])
    layer_v = np.array([_layer_min_v(kernel, region, r) for r in radii_r])
    if x0 is None:
        x0 = far[0] if far is not None else np.mean(bbox, axis=1)
    d0 = float(region.boundary_distance(np.asarray(x0)[None, :])[0])
    rx0 = min(d0 / 4, 1.0)
    log_beta = np.full(len(s_grid), np.inf)
    for i, s in enumerate(s_grid):
        best = np.inf
        for R in Rs:
            vf = np.min(vfar[rfar >= R]) if np.any(rfar >= R) else np.inf
            for r, vl in zip(radii_r, layer_v):
                if min(vf, vl) < 1.0 / s:
                    continue
                floor_log = (math.log(c_alpha) + float(setup.psi.log_value(math.log(min(r / 2, rx0))))
                             - float(kernel.log_inv_sup(math.log(R + 1 + np.linalg.norm(x0) + 2 * rx0))))
                m = min(float(np.exp(_log_phi_inverse(kernel.phi, math.log(s / 2)))), r, 1.0)
                val = -kernel.dim * math.log(m) - 2.0 * floor_log
                best = min(best, val)
        log_beta[i] = best
    # enforce the nonincreasing shape the infimum has in exact arithmetic
    log_beta = np.minimum.accumulate(log_beta)
    return RateFunction.tabulated(s_grid, log_beta=log_beta)


def _layer_min_v(kernel, region, r, n: int = 32):
    """Sampled ``inf V_D`` over points at distance about ``r`` from the boundary."""
    bs = region.boundary_samples(n)
    if bs is not None:
        pts = bs[0] - r * bs[1]
    else:
        bbox = region.bounding_box()
        if bbox is None:
            return np.inf
        from ._util import directions

        c = np.mean(bbox, axis=1)
        if not region.contains(c)[0]:
            return np.inf
        dirs, _ = directions(region.dim, n) if region.dim > 1 else (np.array([[1.0], [-1.0]]), None)
        cr = region.ray_crossings(c, dirs)
        pts = c + np.maximum(cr[:, 0] - r, 0.0)[:, None] * dirs
    pts = pts[region.contains(pts)]
    if len(pts) == 0:
        return np.inf
    return float(min(killing_potential(kernel, region, p, n_dirs=512) for p in pts))


def local_super_poincare_alpha(setup: ProblemSetup, R: float, r: float, s: float, phi1_floor: float,
                               c: float = 1.0) -> float:
    """``c (Phi^{-1}(s) wedge r wedge 1)^{-d} / phi1_floor^2``."""
    if phi1_floor <= 0:
        raise DomainError("phi1_floor must be positive")
    if R <= 0 or r <= 0 or s <= 0:
        raise DomainError("R, r and s must be positive")
    m = min(float(np.exp(_log_phi_inverse(setup.kernel.phi, math.log(s)))), r, 1.0)
    return c * m ** (-setup.kernel.dim) / phi1_floor**2


# ---------------------------------------------------------------------------
# verdicts
# ---------------------------------------------------------------------------
@dataclass
class EnvelopeSpec:
    """Shape of the two-sided ground-state estimate; constants are free."""

    family: str
    gamma: float
    theta: Optional[float]
    return_kind: str
    g: Optional[Callable] = None
    constants: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"family": self.family, "gamma": _json_num(self.gamma), "theta": self.theta,
                "return_factor": self.return_kind, "g": self.constants.get("g", None)}


def _json_num(v):
    return "inf" if isinstance(v, float) and math.isinf(v) else v


@dataclass
class IUVerdict:
    compact: str
    iu: str
    reason: str
    predicted_envelope: Optional[EnvelopeSpec] = None

    def __post_init__(self):
        if self.iu == "yes" and self.compact != "yes":
            raise ValueError("iu=yes requires compact=yes")

    def to_dict(self) -> dict:
        return {"compact": self.compact, "iu": self.iu, "reason": self.reason,
                "envelope": self.predicted_envelope.to_dict() if self.predicted_envelope else None}


def compactness_verdict(setup: ProblemSetup, n_samples: int = 12) -> IUVerdict:
    """``yes`` when one sufficient condition fires, else ``inconclusive``.

    Checked in order: finite volume; a fat complement along sampled boundary
    points together with ``delta_D -> 0`` along far samples; ``V_D -> inf``
    along far samples.
    """
    region, kernel = setup.region, setup.kernel
    if region.volume_is_finite():
        return IUVerdict("yes", "inconclusive", "region has finite volume")
    far = region.far_samples(n_samples)
    if far is None:
        return IUVerdict("inconclusive", "inconclusive", "no far-field samples for this region")
    delta = region.boundary_distance(far)
    shrinking = bool(np.all(np.isfinite(delta)) and delta[-1] < 1e-2 * max(delta[0], 1e-300)
                     and np.all(np.diff(delta[len(delta) // 2:]) <= 1e-12))
    bs = region.boundary_samples(max(4, n_samples // 3))
    if shrinking and bs is not None:
        pts, nrm = bs
        comp = Complement(region)
        fat = all(kappa_fat_probe(comp, p, 0.25, 0.2, n_verify=2000).found for p in pts)
        if fat:
            return IUVerdict("yes", "inconclusive",
                             "complement is kappa-fat and the distance to the boundary tends to 0")
    near = far[np.linalg.norm(far, axis=1) <= V_SAMPLE_RADIUS]
    if len(near) >= 3:
        far = near
    V = np.array([killing_potential(kernel, region, x, n_dirs=512) for x in far])
    tail = V[len(V) // 2:]
    if np.all(np.isfinite(V)) and V[-1] > 10 * V[0] and np.all(np.diff(tail) >= -1e-9 * np.abs(tail[1:])):
        return IUVerdict("yes", "inconclusive", "killing potential grows without bound along far samples")
    return IUVerdict("inconclusive", "inconclusive", "no sufficient condition for compactness fired")


def _thr(gamma):
    return min(gamma, 1.0)


def classify(setup: ProblemSetup) -> IUVerdict:
    """IU verdict for the named families; generic setups go through the rate function.

    ``iu = yes`` comes with the predicted envelope.  Parameters outside
    the hypotheses give ``inconclusive`` with the unmet hypothesis named.
    """
    fam, g, th = setup.family, float(setup.gamma), setup.theta
    if fam == "generic":
        comp = compactness_verdict(setup)
        res = iu_integral_test(beta_rate(setup))
        if res.converges:
            return IUVerdict("yes", "yes", "rate function of the super Poincare inequality passes the integral test")
        return IUVerdict(comp.compact, "inconclusive", "integral test on the sampled rate function is not decisive")
    if th is None:
        raise ConfigError("family verdicts need theta", path=("theta",))
    compact = "yes"  # all named families thin out or shrink, so the semigroup is compact
    if fam == "log_power_horn":
        if g != 0:
            return IUVerdict(compact, "inconclusive", "log-power horn verdict needs an untempered kernel (gamma = 0)")
        ok = th > 1
        why = f"log-power horn, untempered kernel: IU iff theta > 1 (theta = {th:g})"
    elif fam == "poly_power_horn":
        if g == 0:
            return IUVerdict(compact, "yes",
                             "polynomial horn with an untempered kernel is thinner than every log-power horn",
                             envelope_spec(setup))
        ok = th > _thr(g)
        why = f"polynomial horn, tempering exponent {_json_num(g)}: IU iff theta > min(gamma, 1) (theta = {th:g})"
    elif fam == "exp_horn":
        if not g > 1:
            return IUVerdict(compact, "inconclusive", "exponential horn verdict needs gamma > 1")
        return IUVerdict(compact, "yes", "exponential horn with gamma > 1: always IU", envelope_spec(setup))
    else:
        kind = getattr(setup.region.h, "kind", None)
        if g == 0 and kind != "log_power":
            return IUVerdict(compact, "inconclusive", "ring verdict at gamma = 0 needs log-power growth")
        if g > 0 and kind != "poly_power":
            return IUVerdict(compact, "inconclusive", "ring verdict at gamma > 0 needs polynomial growth")
        ok = th > 1 if g == 0 else th > _thr(g)
        why = (f"ring set, {'untempered kernel: IU iff theta > 1' if g == 0 else 'tempered kernel: IU iff theta > min(gamma, 1)'}"
               f" (theta = {th:g})")
    if ok:
        return IUVerdict(compact, "yes", why, envelope_spec(setup))
    return IUVerdict(compact, "no", why)


def classify_grid(family: str, gammas, thetas, dim: int = 2) -> dict:
    """``{(gamma, theta): iu}`` over a parameter grid."""
    out = {}
    for g in gammas:
        for th in thetas:
            out[(g, th)] = classify(ProblemSetup.family_setup(family, g, th, dim)).iu
    return out


# ---------------------------------------------------------------------------
# necessary condition
# ---------------------------------------------------------------------------
def default_gamma_tail(setup: ProblemSetup) -> Callable:
    """``log Gamma(s)``: ``-log(s^d Phi(s))`` for gamma = 0, else
    ``-(1+s)^{gamma^1} log^{(gamma-1)^+/gamma}(1+s)``."""
    g = float(setup.gamma)
    d = setup.kernel.dim
    phi = setup.kernel.phi
    if g == 0:
        return lambda s: -d * np.log(s) - phi.log_value(np.log(s))
    ex = 1.0 if math.isinf(g) else max(g - 1.0, 0.0) / g
    return lambda s: -((1 + s) ** min(g, 1.0)) * np.log1p(s) ** ex


@dataclass
class NecessaryCheck:
    verdict: str
    slope: float
    c: float
    samples: np.ndarray
    values: np.ndarray


def necessary_condition_check(setup: ProblemSetup, psi: Optional[ScalingFunction] = None,
                              log_gamma_tail: Optional[Callable] = None, n: int = 21) -> NecessaryCheck:
    """Does ``Psi(delta_D(x)) |log Gamma(|x|)|`` tend to 0 along far samples?

    The sequence is regressed on ``log log |x|``; a slope below
    ``-NEC_SLOPE_TOL`` counts as decay (``satisfied``), anything else as a
    subsequence bounded away from 0 (``violated``, which certifies that
    the semigroup is not IU).  ``c`` is the smallest value on the last half.
    """
    psi = psi if psi is not None else setup.psi
    lg = log_gamma_tail if log_gamma_tail is not None else default_gamma_tail(setup)
    if isinstance(setup.region, Horn):
        s = np.geomspace(1e2, 1e12, n)
        X = np.column_stack([s, np.zeros((n, setup.region.dim - 1))])
        r = s
        delta = setup.region.boundary_distance(X)
    elif isinstance(setup.region, Ring):
        # midpoints of the first sub-shell of shell n; far out |x| cannot resolve 1/H in double precision,
        # so the distance 1/(4H) is taken from the construction
        ns = np.unique(np.round(np.geomspace(1e2, 1e12, n)))
        H = setup.region.H(ns)
        X = np.outer(ns + 0.25 / H, np.eye(setup.region.dim)[0])
        r = ns
        # named growth functions: drop the floor, which only shifts h by a constant
        f = setup.profile
        delta = 0.25 * f(ns) if f is not None else 0.25 / H
    else:
        X = setup.region.far_samples(n)
        if X is None:
            raise ConfigError("necessary_condition_check needs an unbounded region")
        r = np.linalg.norm(X, axis=1)
        delta = setup.region.boundary_distance(X)
    with np.errstate(divide="ignore"):
        q = np.exp(psi.log_value(np.log(delta))) * np.abs(lg(r))
    fin = q > 0
    if fin.sum() >= 3:
        b = float(np.polyfit(np.log(np.log(r[fin])), np.log(q[fin]), 1)[0])
    else:
        b = -math.inf  # the boundary distance underflows: the sequence is already 0 in double precision
    verdict = "satisfied" if b < -NEC_SLOPE_TOL else "violated"
    return NecessaryCheck(verdict, b, float(np.min(q[len(q) // 2:])), X, q)


# ---------------------------------------------------------------------------
# lower bounds
# ---------------------------------------------------------------------------
def lower_bound_direct(setup: ProblemSetup, x, x0, c: float = 1.0, r_tilde: float = 1.0) -> float:
    """``c Psi(delta_D(x) wedge r_x0) inf_{|y-z| <= |x-x0| + 2 r_x0} J(y, z)``, ``r_x0 = delta_D(x0)/4 wedge r~``."""
    if setup.kernel.chi.finite_range_cut:
        raise DomainError("finite-range kernel: use lower_bound_chain")
    x = np.asarray(x, dtype=float).reshape(-1)
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    d = setup.region.boundary_distance(np.stack([x, x0]))
    rx0 = min(d[1] / 4, r_tilde)
    R = float(np.linalg.norm(x - x0)) + 2 * rx0
    lpsi = float(setup.psi.log_value(math.log(min(d[0], rx0))))
    return float(c * math.exp(lpsi - float(setup.kernel.log_inv_sup(math.log(R)))))


def log_lower_bound_chain(setup: ProblemSetup, chain, a1: float, a2: float, c1: float = 1.0, c2: float = 1.0,
                          r_tilde: float = 1.0) -> float:
    """``log`` of ``c1 Psi(delta(x) wedge r0) exp[-c2 (n log n + sum_{i<n} log 1/r_i)]``.

    ``chain`` runs from ``x0`` to ``x``; consecutive gaps must lie in
    ``[a1, a2]`` with ``0 < a1 <= a2 < 1`` and every point in the region.
    """
    chain = np.asarray(chain, dtype=float)
    if not (0 < a1 <= a2 < 1):
        raise DomainError("need 0 < a1 <= a2 < 1")
    if len(chain) < 2:
        raise DomainError("a chain needs at least two points")
    gaps = np.linalg.norm(np.diff(chain, axis=0), axis=1)
    bad = np.nonzero((gaps < a1 * (1 - 1e-12)) | (gaps > a2 * (1 + 1e-12)))[0]
    if len(bad):
        i = int(bad[0]) + 1
        raise DomainError(f"chain gap {gaps[i - 1]:.4g} at index {i} outside [{a1}, {a2}]")
    inside = setup.region.contains(chain)
    if not inside.all():
        raise DomainError(f"chain point {int(np.nonzero(~inside)[0][0])} lies outside the region")
    delta = setup.region.boundary_distance(chain)
    n = len(chain) - 1
    r0 = min(delta[0] / 3, min(1 - a2, a1) / 4, r_tilde)
    ri = np.minimum(delta[:-1] / 3, r0)
    ri[0] = r0
    cost = (n * math.log(n) if n > 1 else 0.0) + float(np.sum(np.log(1.0 / ri)))
    return math.log(c1) + float(setup.psi.log_value(math.log(min(delta[-1], r0)))) - c2 * cost


def lower_bound_chain(setup: ProblemSetup, chain, a1: float, a2: float, **kw) -> float:
    return math.exp(log_lower_bound_chain(setup, chain, a1, a2, **kw))


def horn_chain(x, x0=None, a2: float = 0.5) -> np.ndarray:
    """Straight chain from ``x0`` (default ``(1/2, 0)``) to ``x`` with equal steps at most ``a2``."""
    x = np.asarray(x, dtype=float).reshape(-1)
    x0 = np.r_[0.5, np.zeros(x.size - 1)] if x0 is None else np.asarray(x0, dtype=float).reshape(-1)
    L = float(np.linalg.norm(x - x0))
    n = max(1, int(math.ceil(L / a2 - 1e-12)))
    t = np.linspace(0.0, 1.0, n + 1)
    return x0 + t[:, None] * (x - x0)


def ring_chain(ring: Ring, x, step: float = 0.5) -> np.ndarray:
    """Radial chain from the origin to ``x`` through shell midpoints."""
    x = np.asarray(x, dtype=float).reshape(-1)
    r = float(np.linalg.norm(x))
    e = x / r if r > 0 else np.eye(x.size)[0]
    rs = [0.0]
    while r - rs[-1] > step * 1.5:
        target = rs[-1] + step
        n = math.floor(target)
        if n < 1:
            rs.append(target)
            continue
        H = float(ring.H(n))
        m = math.floor((target - n) * H)
        rs.append(n + (m + 0.25) / H)
    rs.append(r)
    return np.outer(rs, e)


# ---------------------------------------------------------------------------
# envelopes
# ---------------------------------------------------------------------------
def default_g(setup: ProblemSetup) -> Optional[Callable]:
    g, th = float(setup.gamma), setup.theta
    if not g > 1 or math.isinf(g):
        return None
    if setup.family == "exp_horn":
        if th >= g:
            return lambda r: np.asarray(r, dtype=float) / 4.0
        return lambda r: 4.0 * np.asarray(r, dtype=float) ** (th / g)
    return lambda r: 4.0 * np.log(np.e + np.asarray(r, dtype=float)) ** (1.0 / g)


def check_g(g: Callable, gamma: float, c0: float = 1e-3):
    """Increasing with ``c0 log^{1/gamma} r <= g(r) <= r/4`` on a sample of large ``r``."""
    r = np.geomspace(1e3, 1e8, 25)
    v = np.asarray(g(r), dtype=float)
    if np.any(np.diff(v) < 0) or np.any(v > r / 4 * (1 + 1e-12)) or np.any(v < c0 * np.log(r) ** (1.0 / gamma)):
        raise DomainError("g must be increasing with c0 log^{1/gamma} r <= g(r) <= r/4 for large r")


def envelope_spec(setup: ProblemSetup, g: Optional[Callable] = None) -> EnvelopeSpec:
    gam = float(setup.gamma)
    if gam == 0:
        kind = "power: |x|^-d Phi(|x|)^-1"
    elif gam <= 1:
        kind = "stretched: exp(-c |x|^gamma)"
    elif math.isinf(gam):
        kind = "chain: exp(-c |x| log(1/f))"
    else:
        kind = "chain: exp(-c |x|/g (g^gamma ^ log 1/f))"
    g = g if g is not None else default_g(setup)
    if g is not None:
        check_g(g, gam)
    return EnvelopeSpec(setup.family, gam, setup.theta, kind, g)


def log_ground_state_envelope(setup: ProblemSetup, x, side: str = "lower", g: Optional[Callable] = None,
                              c_exp: float = 1.0, threshold: Optional[float] = None):
    """``log`` of the ground-state envelope at points ``x`` (rows), constants set to 1.

    ``side`` is ``lower`` (profile ``f_*(x1 + 1)``), ``upper`` (profile
    ``f*(x1 - 2)``) or ``two_sided`` (profile ``f(|x|)``, the closed
    two-sided form of the IU families).  ``c_exp`` scales the exponent of
    the return factor.
    """
    X = np.atleast_2d(np.asarray(x, dtype=float))
    f = setup.profile
    if f is None:
        raise ConfigError("envelopes need a horn or ring family")
    thr = setup.threshold if threshold is None else threshold
    r = np.linalg.norm(X, axis=1)
    if np.any(X[:, 0] < thr):
        raise DomainError(f"envelope is asymptotic: need x1 >= {thr}")
    phi = setup.kernel.phi
    d = setup.kernel.dim
    gam = float(setup.gamma)
    delta = setup.region.boundary_distance(X)
    if side == "lower":
        fs = np.array([lower_envelope(f, a + 1.0) for a in X[:, 0]])
    elif side == "upper":
        fs = np.array([upper_envelope(f, a - 2.0) for a in X[:, 0]])
    elif side == "two_sided":
        fs = f(r)
    else:
        raise ConfigError("side is lower, upper or two_sided")
    out = 0.5 * phi.log_value(np.log(delta)) + 0.5 * phi.log_value(np.log(fs))
    if gam == 0:
        ret = -d * np.log(r) - phi.log_value(np.log(r))
    elif gam <= 1:
        ret = -c_exp * r**gam
    elif math.isinf(gam):
        if side == "upper":
            ret = -c_exp * r * np.log1p(1.0 / np.array([upper_envelope(f, a / 4) for a in r]))
        elif side == "lower":
            ret = -c_exp * (1 + r) * np.log(np.e + r / np.array([lower_envelope(f, a + 1.0) for a in r]))
        else:
            ret = -c_exp * r * np.log(1.0 / f(r))
    else:
        gf = g if g is not None else default_g(setup)
        check_g(gf, gam)
        gr = np.asarray(gf(r), dtype=float)
        if side == "upper":
            fu = np.array([upper_envelope(f, a / 4) for a in r])
            ret = -c_exp * r / gr * np.minimum(gr**gam, np.log(1.0 / fu))
        elif side == "lower":
            fl = np.array([lower_envelope(f, 2 * a) for a in r])
            ret = -c_exp * np.minimum(r**gam, r / gr * np.maximum(gr**gam, np.log(1.0 / fl)))
        else:
            ret = -c_exp * r ** min(gam, 1.0) * np.log(r) ** ((gam - 1) / gam)
    return out + ret


def ground_state_envelope(setup: ProblemSetup, x, side: str = "lower", **kw):
    return np.exp(log_ground_state_envelope(setup, x, side, **kw))


@dataclass
class EnvelopeFit:
    slope: float
    intercept: float
    spread: float
    log_constant: float
    shape_spread: float


def fit_envelope(log_phi, log_env, calib=None) -> EnvelopeFit:
    """Regress ``log phi`` on ``log env`` and fit the free constant.

    ``spread`` is ``max - min`` of ``log phi - log env``; the constant is the
    least-squares shift on the ``calib`` mask and ``shape_spread`` the spread
    of the shifted log-ratio on the complementary points.
    """
    lp = np.asarray(log_phi, dtype=float)
    le = np.asarray(log_env, dtype=float)
    slope, icpt = np.polyfit(le, lp, 1)
    ratio = lp - le
    calib = np.ones(len(lp), dtype=bool) if calib is None else np.asarray(calib, dtype=bool)
    lc = float(np.mean(ratio[calib]))
    rest = ~calib if (~calib).any() else calib
    return EnvelopeFit(float(slope), float(icpt), float(np.ptp(ratio)), lc, float(np.ptp(ratio[rest] - lc)))


# ---------------------------------------------------------------------------
# killing lower bound check
# ---------------------------------------------------------------------------
@dataclass
class KillingCheck:
    delta: np.ndarray
    ratio: np.ndarray
    decade_means: dict

    @property
    def min_ratio(self) -> float:
        return float(self.ratio.min())

    @property
    def decade_spread(self) -> float:
        v = np.array(list(self.decade_means.values()))
        return float(v.max() / v.min())


def killing_ratio_samples(setup: ProblemSetup, n_base: int = 50, deltas=(1e-1, 1e-2, 1e-3, 1e-4),
                          n_dirs: int = 1024, base=None) -> KillingCheck:
    """``V_D(x) Phi(delta_D(x))`` at points approaching the boundary.

    ``n_base`` boundary points (from the region's boundary sampler, or
    ``base = (points, outward normals)``) are moved inward along the normal
    by each ``delta``; the ratio is grouped by decade.
    """
    bs = setup.region.boundary_samples(n_base) if base is None else base
    if bs is None:
        raise ConfigError("region has no boundary sampler")
    pts, nrm = bs
    phi = setup.kernel.phi
    dl, rl = [], []
    means = {}
    for dlt in deltas:
        X = pts - dlt * nrm
        X = X[setup.region.contains(X)]
        dd = setup.region.boundary_distance(X)
        V = np.array([killing_potential(setup.kernel, setup.region, x, n_dirs=n_dirs) for x in X])
        rat = V * phi(dd)
        dl.append(dd)
        rl.append(rat)
        means[dlt] = float(np.mean(rat))
    return KillingCheck(np.concatenate(dl), np.concatenate(rl), means)
