"""Monte Carlo simulation of the killed jump process.

Jumps longer than ``eps`` form a compound Poisson process with intensity
``2 int_{|z|>eps} J``; the generator convention matches :mod:`iukit.spectral`
(jump rate ``2 J``).  Shorter jumps are either dropped or replaced by a
Brownian motion with the matching covariance, in which case boundary
crossings between grid times are caught by the Brownian-bridge probability
``exp(-2 d_a d_b / (sigma^2 dt))``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from . import _backend, _corepy
from ._util import directions, sphere_area
from .errors import ConfigError, DomainError, NumericError
from .geometry import Ball, Box, Region, WholeSpace
from .kernels import JumpKernel, ScalingFunction

STREAM_SIZE = 10_000


@dataclass(frozen=True)
class SimScheme:
    """Simulation settings.

    Parameters
    ----------
    eps : float
        Jumps shorter than ``eps`` are not simulated individually.
    small_jump_mode : {"gauss", "drop"}
    dt_max : float
        Cap on the Brownian time step (only used in ``gauss`` mode).
    rng_seed : int
    """

    eps: float = 0.01
    small_jump_mode: str = "gauss"
    dt_max: float = 1e-3
    rng_seed: int = 0

    def __post_init__(self):
        if not (0 < self.eps <= 1):
            raise ConfigError("eps must lie in (0, 1]", path=("scheme", "eps"))
        if self.small_jump_mode not in ("gauss", "drop"):
            raise ConfigError("small_jump_mode is 'gauss' or 'drop'", path=("scheme", "small_jump_mode"))
        if not self.dt_max > 0:
            raise ConfigError("dt_max must be positive", path=("scheme", "dt_max"))

    @classmethod
    def default_for(cls, kernel: JumpKernel, **kw) -> "SimScheme":
        """``gauss`` when the lower scaling index is at least 1, else ``drop``."""
        mode = "gauss" if _alpha_lower(kernel) >= 1 else "drop"
        return cls(small_jump_mode=mode, **kw)

    def spec(self) -> dict:
        return {"eps": self.eps, "small_jump_mode": self.small_jump_mode, "dt_max": self.dt_max,
                "rng_seed": self.rng_seed}


@dataclass
class ExitRecord:
    tau: float
    exit_point: np.ndarray
    pre_exit_point: np.ndarray
    censored: bool
    by_jump: bool
    jump_log: Optional[list] = None


@dataclass
class ExitSample:
    """Exit data for a batch of paths; ``kind`` is 0 (jump), 1 (Brownian part) or 2 (censored).

    For ``kind == 1`` the exit point is the end of the Gaussian step, which
    lies inside the region when the crossing was detected by the bridge test.
    """

    tau: np.ndarray
    exit_point: np.ndarray
    kind: np.ndarray
    n_jumps: np.ndarray
    t_max: float
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.tau)

    @property
    def censored(self) -> np.ndarray:
        return self.kind == 2


@dataclass
class MCEstimate:
    estimate: float
    stderr: float
    n: int
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"estimate": self.estimate, "stderr": self.stderr, "n": self.n, **self.meta}


def _alpha_lower(kernel: JumpKernel) -> float:
    if kernel.variant == "variable_order":
        return kernel.alpha_bounds[0]
    return kernel.phi.alpha_lower


# ---------------------------------------------------------------------------
# proposal kernel
# ---------------------------------------------------------------------------
class _Proposal:
    """Separable proposal ``L / (r^d Phi_p(r) chi(r))`` dominating ``J``."""

    def __init__(self, kernel: JumpKernel, scheme: SimScheme):
        if kernel.variant == "generic":
            raise ConfigError("Monte Carlo needs a product or variable-order kernel", path=("kernel", "variant"))
        eps = scheme.eps
        if kernel.variant == "variable_order":
            lo, hi = kernel.alpha_bounds
            r = np.geomspace(1e-8, 1e8, 161)
            phi = ScalingFunction.tabulated(r, np.where(r <= 1, r**hi, r**lo))
            self.env = JumpKernel(kernel.dim, phi, kernel.chi)
        else:
            self.env = kernel if kernel.kappa.is_constant else JumpKernel(kernel.dim, kernel.phi, kernel.chi)
        self.kernel = kernel
        self.level = kernel.kappa.constant if kernel.translation_invariant else kernel.kappa.L0
        self.exact = kernel.translation_invariant
        self.rate = 2.0 * self.level * self.env.jump_rate(eps)
        self.params = _backend.radial_params(self.env, eps)
        if scheme.small_jump_mode == "gauss":
            if not self.exact:
                raise ConfigError("Gaussian compensation needs a translation-invariant kernel; use drop",
                                  path=("scheme", "small_jump_mode"))
            self.sigma2 = 2.0 * self.level * kernel.small_moment(eps) / kernel.dim
        else:
            self.sigma2 = 0.0
        self.proposed = 0
        self.accepted = 0

    def sampler(self):
        p = self.params
        return _corepy.radial_sampler(p["mode"], p["alpha"], p["chi0"], p["t1"], p["outer"], p["cut"],
                                      p["t_eps"], p["table_lt"], p["table_u"])

    def accept(self, x, y):
        r = np.linalg.norm(y - x, axis=1)
        prob = self.kernel(x, y) / (self.level * self.env.radial(r))
        self.proposed += len(x)
        self.accepted += int(np.sum(prob))
        return prob

    def check(self):
        if self.proposed >= 1000 and self.accepted < 1e-3 * self.proposed:
            raise NumericError(f"rejection acceptance rate {self.accepted / self.proposed:.2g} below 1e-3")


def _region_callables(region: Region):
    def contains(P):
        return region.contains(P)

    def dist(P):
        return region.boundary_distance(P)
    return contains, dist


def _check_start(region: Region, x0) -> np.ndarray:
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.size != region.dim:
        raise DomainError("starting point has the wrong dimension")
    if not region.contains(x0)[0]:
        raise DomainError("starting point must lie in the region")
    return x0


def _compiled_ok(prop: _Proposal, region: Region, backend: Optional[str]) -> bool:
    if not prop.exact or not isinstance(region, (Ball, Box)):
        return False
    if backend == "python":
        return False
    if backend == "cython":
        return True
    return _backend.BACKEND == "cython"


def simulate_exits(kernel: JumpKernel, region: Region, x0, n_paths: int, scheme: SimScheme,
                   t_max: float = 1e3, threads: int = 1, backend: Optional[str] = None) -> ExitSample:
    """Simulate ``n_paths`` independent exits from ``region`` started at ``x0``.

    Paths are split into streams of ``STREAM_SIZE`` with seeds spawned from
    ``scheme.rng_seed``, so results do not depend on ``threads``.  Ball and
    box regions with translation-invariant kernels run on the compiled core
    when it is available (``backend`` forces a choice).
    """
    x0 = _check_start(region, x0)
    if kernel.dim != region.dim:
        raise ConfigError("kernel and region dimensions differ")
    if t_max <= 0:
        raise ConfigError("t_max must be positive", path=("tmax",))
    prop = _Proposal(kernel, scheme)
    sizes = [STREAM_SIZE] * (n_paths // STREAM_SIZE)
    if n_paths % STREAM_SIZE:
        sizes.append(n_paths % STREAM_SIZE)
    seeds = np.random.SeedSequence(scheme.rng_seed).spawn(len(sizes))
    compiled = _compiled_ok(prop, region, backend)

    def run(k):
        rng = np.random.Generator(np.random.PCG64(seeds[k]))
        if compiled:
            p = prop.params
            if isinstance(region, Ball):
                kind, ra, rb = 0, region.center, np.array([region.radius])
            else:
                kind, ra, rb = 1, region.lo, region.hi
            mod = _backend.implementation("cython")
            return mod.simulate_exits(x0, sizes[k], prop.rate, prop.sigma2, scheme.dt_max, t_max, p["mode"],
                                      p["alpha"], p["chi0"], p["t1"], p["outer"], p["cut"], p["t_eps"],
                                      p["table_lt"], p["table_u"], kind, ra, rb, rng)
        contains, dist = _region_callables(region)
        X0 = np.tile(x0, (sizes[k], 1))
        return _corepy.lockstep(X0, prop.rate, prop.sigma2, scheme.dt_max, t_max, prop.sampler(), contains,
                                dist, rng, accept=None if prop.exact else prop.accept)

    if threads > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(run, range(len(sizes))))
    else:
        parts = [run(k) for k in range(len(sizes))]
    prop.check()
    tau, ep, kind, nj = (np.concatenate([p[i] for p in parts]) for i in range(4))
    meta = {"scheme": scheme.spec(), "backend": "cython" if compiled else "python", "jump_rate": prop.rate,
            "sigma2": prop.sigma2, "t_max": t_max, "kernel": kernel.digest()}
    return ExitSample(tau, ep, kind.astype(np.int8), nj, t_max, meta)


def simulate_exit(kernel: JumpKernel, region: Region, x0, scheme: SimScheme, t_max: float = 1e3) -> ExitRecord:
    """One path with its log of jumps longer than ``eps``.

    Raises
    ------
    DomainError
        ``x0`` is not in the region.
    """
    x0 = _check_start(region, x0)
    prop = _Proposal(kernel, scheme)
    rng = np.random.Generator(np.random.PCG64(scheme.rng_seed))
    log = []
    state = {"t": 0.0, "pre": x0.copy()}

    def record(idx, xa, dt, y, jumped):
        state["t"] += float(dt[0])
        state["pre"] = xa[0].copy()
        if jumped[0]:
            log.append((state["t"], xa[0].copy(), y[0].copy()))

    contains, dist = _region_callables(region)
    rec = record if prop.sigma2 == 0 else None
    tau, ep, kind, _ = _corepy.lockstep(x0[None, :], prop.rate, prop.sigma2, scheme.dt_max, t_max,
                                        prop.sampler(), contains, dist, rng,
                                        accept=None if prop.exact else prop.accept, record=rec)
    exit_point = ep[0]
    if kind[0] == 1:
        try:
            exit_point = region.nearest_boundary_point(exit_point[None, :])[0]
        except NotImplementedError:
            pass
    pre = log[-1][1] if (kind[0] == 0 and log) else state["pre"]
    return ExitRecord(float(tau[0]), exit_point, pre, bool(kind[0] == 2), bool(kind[0] == 0),
                      log if rec is not None else None)


# ---------------------------------------------------------------------------
# estimators
# ---------------------------------------------------------------------------
def _mean_se(v) -> tuple[float, float]:
    v = np.asarray(v, dtype=float)
    n = len(v)
    m = math.fsum(v) / n
    s = math.sqrt(math.fsum((v - m) ** 2) / (n - 1)) if n > 1 else math.inf
    return m, s / math.sqrt(n)


def mean_exit_time(kernel, region, x0, n_paths: int, scheme: SimScheme, t_max: float = 1e3,
                   lambda1: Optional[float] = None, **kw) -> MCEstimate:
    """Sample mean of ``min(tau, t_max)``; ``lambda1`` sets ``t_max = 50 / lambda1``."""
    if lambda1 is not None:
        t_max = 50.0 / lambda1
    s = simulate_exits(kernel, region, x0, n_paths, scheme, t_max, **kw)
    m, se = _mean_se(s.tau)
    return MCEstimate(m, se, s.n, {**s.meta, "censored": int(s.censored.sum())})


def survival_probability(kernel, region, x0, t: float, n_paths: int, scheme: SimScheme, **kw) -> MCEstimate:
    """Fraction of paths with ``tau > t`` and its binomial standard error."""
    if n_paths < 100:
        raise ConfigError("survival_probability needs at least 100 paths", path=("paths",))
    _check_start(region, x0)
    if t == 0:
        return MCEstimate(1.0, 0.0, n_paths, {"scheme": scheme.spec()})
    if isinstance(region, WholeSpace):
        return MCEstimate(1.0, 0.0, n_paths, {"scheme": scheme.spec()})
    s = simulate_exits(kernel, region, x0, n_paths, scheme, t_max=t, **kw)
    p = float(np.mean(s.censored))
    return MCEstimate(p, math.sqrt(p * (1 - p) / n_paths), n_paths, s.meta)


def survival_curve(kernel, region, x0, times, n_paths: int, scheme: SimScheme, **kw):
    """Survival estimates at several times from one batch of paths."""
    times = np.asarray(times, dtype=float)
    s = simulate_exits(kernel, region, x0, n_paths, scheme, t_max=float(times.max()) * (1 + 1e-12), **kw)
    p = np.array([np.mean(s.tau > t) for t in times])
    return p, np.sqrt(p * (1 - p) / n_paths)


@dataclass
class ExitProbe:
    radii: np.ndarray
    c: float
    estimates: np.ndarray
    stderr: np.ndarray

    @property
    def C1(self) -> float:
        return float(self.estimates.min())


def exit_probe(kernel: JumpKernel, x0, radii, n_paths: int, scheme: SimScheme, psi=None, **kw) -> ExitProbe:
    """Probe ``P^x(tau_{B(x, r)} > c Psi(r)) >= C1`` uniformly in ``r``.

    ``c`` is fitted as the median over ``r`` of ``median(tau_r) / Psi(r)``
    from a pilot batch; the estimates at ``t = c Psi(r)`` then come from an
    independent batch.  ``Psi`` defaults to the kernel's scaling function.
    """
    psi = psi if psi is not None else kernel.phi
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    radii = np.asarray(radii, dtype=float)
    ratios = []
    for r in radii:
        pilot = SimScheme(scheme.eps, scheme.small_jump_mode, scheme.dt_max, scheme.rng_seed + 7919)
        s = simulate_exits(kernel, Ball(x0, r), x0, max(1000, n_paths // 10), pilot, **kw)
        ratios.append(np.median(s.tau) / float(psi(r)))
    c = float(np.median(ratios))
    est, se = [], []
    for r in radii:
        e = survival_probability(kernel, Ball(x0, r), x0, c * float(psi(r)), n_paths, scheme, **kw)
        est.append(e.estimate)
        se.append(e.stderr)
    return ExitProbe(radii, c, np.array(est), np.array(se))


# ---------------------------------------------------------------------------
# Levy system
# ---------------------------------------------------------------------------
class Payoff:
    """Function ``f(y, z)`` of a jump from ``y`` to ``z`` with ``f(y, y) = 0``.

    Subclasses provide ``value(y, z)`` and ``compensator(kernel, Y, eps)``,
    the latter being ``int_{|z-y|>eps} f(y, z) J(y, z) dz`` for each row of ``Y``.
    """

    name = "payoff"

    def value(self, y, z):
        raise NotImplementedError

    def compensator(self, kernel, Y, eps):
        raise NotImplementedError


class ZeroPayoff(Payoff):
    name = "zero"

    def value(self, y, z):
        return np.zeros(len(y))

    def compensator(self, kernel, Y, eps):
        return np.zeros(len(Y))


class RadialPayoff(Payoff):
    """``f(y, z) = psi(|z - y|)``, optionally restricted to jumps with positive first coordinate."""

    def __init__(self, psi: Callable, name: str = "radial", forward_only: bool = False):
        self.psi = psi
        self.name = name
        self.forward_only = forward_only
        self._cache = {}

    def value(self, y, z):
        v = self.psi(np.linalg.norm(z - y, axis=1))
        if self.forward_only:
            v = np.where(z[:, 0] > y[:, 0], v, 0.0)
        return v

    def compensator(self, kernel, Y, eps):
        key = (kernel.digest(), eps)
        if key not in self._cache:
            def g(u):
                r = math.exp(u)
                return float(self.psi(np.array([r]))[0]) * r ** kernel.dim * float(kernel.radial(r))

            hi = math.log(kernel.range) if math.isfinite(kernel.range) else math.log(eps) + 60
            pts = np.linspace(math.log(eps), hi, 61)
            if pts[0] < 0 < pts[-1]:
                pts = np.sort(np.append(pts, 0.0))
            tot = 0.0
            for a, b in zip(pts[:-1], pts[1:]):
                v, _ = integrate.quad(g, a, b, epsabs=0, epsrel=1e-12, limit=200)
                tot += v
            if not math.isfinite(tot):
                raise NumericError(f"payoff {self.name} is not integrable against the kernel")
            frac = 0.5 if self.forward_only else 1.0
            self._cache[key] = kernel.kappa.constant * sphere_area(kernel.dim) * frac * tot
        return np.full(len(Y), self._cache[key])


def _exit_distances(region: Region, Y, dirs):
    """First exit distance along each ray from each point (m, n_dirs), for convex regions."""
    if isinstance(region, Ball):
        v = Y - region.center
        b = v @ dirs.T
        c = np.sum(v * v, axis=1)[:, None] - region.radius**2
        return -b + np.sqrt(np.maximum(b * b - c, 0.0))
    if isinstance(region, Box):
        with np.errstate(divide="ignore", invalid="ignore"):
            t_hi = (region.hi[None, None, :] - Y[:, None, :]) / dirs[None, :, :]
            t_lo = (region.lo[None, None, :] - Y[:, None, :]) / dirs[None, :, :]
        t = np.where(dirs[None, :, :] > 0, t_hi, np.where(dirs[None, :, :] < 0, t_lo, np.inf))
        return t.min(axis=2)
    return None


class OutsidePayoff(Payoff):
    """``f(y, z) = 1{z not in B}``; the sampled states must lie in ``B``."""

    def __init__(self, region: Region, name: str = "outside", n_dirs: int = 512):
        self.region = region
        self.name = name
        self.n_dirs = n_dirs

    def value(self, y, z):
        return (~self.region.contains(z)).astype(float)

    def compensator(self, kernel, Y, eps):
        dirs, w = directions(kernel.dim, self.n_dirs)
        t = _exit_distances(self.region, Y, dirs)
        if t is not None:
            T = kernel.tail(np.maximum(t, eps))
            return kernel.kappa.constant * (T @ w)
        out = np.empty(len(Y))
        for i, y in enumerate(Y):
            cr = self.region.ray_crossings(y, dirs)
            cr = np.where(np.isfinite(cr), np.maximum(cr, eps), np.inf)
            T = np.where(np.isfinite(cr), kernel.tail(cr), 0.0)
            out[i] = kernel.kappa.constant * float(w @ np.sum(T[:, 0::2] - T[:, 1::2], axis=1))
        return out


class BallHitPayoff(Payoff):
    """``f(y, z) = 1{z in B(c, rho)}``: landing in a target ball."""

    def __init__(self, center, radius: float, name: str = "target", n_dirs: int = 512):
        self.center = np.atleast_1d(np.asarray(center, dtype=float))
        self.radius = float(radius)
        self.name = name
        self.n_dirs = n_dirs

    def value(self, y, z):
        return (np.sum((z - self.center) ** 2, axis=1) < self.radius**2).astype(float)

    def compensator(self, kernel, Y, eps):
        dirs, w = directions(kernel.dim, self.n_dirs)
        v = Y - self.center
        b = v @ dirs.T
        c = np.sum(v * v, axis=1)[:, None] - self.radius**2
        disc = b * b - c
        s = np.sqrt(np.maximum(disc, 0.0))
        lo = np.maximum(-b - s, eps)
        hi = np.maximum(-b + s, eps)
        hit = (disc > 0) & (hi > lo)
        T = np.where(hit, kernel.tail(lo) - kernel.tail(hi), 0.0)
        return kernel.kappa.constant * (T @ w)


def standard_payoffs(region: Region, dim: int) -> list:
    """The five payoffs of the Levy-system battery."""
    c = np.zeros(dim)
    c[0] = 0.5
    return [
        OutsidePayoff(region, name="exit_jump"),
        OutsidePayoff(Ball(np.zeros(dim), 2.0), name="beyond_2"),
        RadialPayoff(lambda r: np.minimum(r, 1.0), name="capped_length"),
        BallHitPayoff(c, 0.3, name="target_ball"),
        RadialPayoff(lambda r: np.minimum(r * r, 1.0), name="forward_square", forward_only=True),
    ]


@dataclass
class LevyResult:
    lhs: float
    rhs: float
    lhs_stderr: float
    rhs_stderr: float
    stderr: float
    n: int
    payoff: str = ""

    @property
    def z(self) -> float:
        diff = self.lhs - self.rhs
        if self.stderr == 0:
            return 0.0 if diff == 0 else math.inf
        return abs(diff) / self.stderr

    def passed(self, k: float = 3.0) -> bool:
        return self.z <= k


def levy_system_check(kernel: JumpKernel, region: Region, payoff: Payoff, x0, n_paths: int, scheme: SimScheme,
                      t_max: float = 1e3) -> LevyResult:
    """Compare ``E sum_{s <= tau} f(X_{s-}, X_s)`` with ``E int_0^tau int f J dz ds``.

    Both sides use the same paths of the ``eps``-truncated process (``drop``
    mode, factor 2 on ``J`` as in the process convention); the combined
    standard error is that of the per-path difference.
    """
    if scheme.small_jump_mode != "drop":
        raise ConfigError("the Levy-system check runs on the eps-truncated process (drop mode)",
                          path=("scheme", "small_jump_mode"))
    if not kernel.translation_invariant:
        raise ConfigError("levy_system_check needs a translation-invariant kernel")
    x0 = _check_start(region, x0)
    prop = _Proposal(kernel, scheme)
    contains, dist = _region_callables(region)
    lhs = np.zeros(n_paths)
    rhs = np.zeros(n_paths)
    seeds = np.random.SeedSequence(scheme.rng_seed).spawn((n_paths + STREAM_SIZE - 1) // STREAM_SIZE)
    for k, seed in enumerate(seeds):
        off = k * STREAM_SIZE
        m = min(STREAM_SIZE, n_paths - off)
        rng = np.random.Generator(np.random.PCG64(seed))

        def record(idx, xa, dt, y, jumped, off=off):
            g = 2.0 * payoff.compensator(kernel, xa, scheme.eps)
            rhs[off + idx] += g * dt
            if jumped.any():
                j = np.nonzero(jumped)[0]
                lhs[off + idx[j]] += payoff.value(xa[j], y[j])

        _corepy.lockstep(np.tile(x0, (m, 1)), prop.rate, 0.0, scheme.dt_max, t_max, prop.sampler(),
                         contains, dist, rng, record=record)
    a, sa = _mean_se(lhs)
    b, sb = _mean_se(rhs)
    _, sd = _mean_se(lhs - rhs)
    return LevyResult(a, b, sa, sb, sd, n_paths, payoff.name)
