"""Pure numpy implementation of the hot loops.

Mirrors the compiled module ``_core`` function for function; the Monte Carlo
engine here advances all live paths in lock step instead of looping over
paths, and also serves regions that the compiled module does not know.
"""

from __future__ import annotations

import math

import numpy as np


def pair_weights_power(X, alpha, gamma, c1, L1, chi0, kappa, vol, cutoff):
    """Dense ``kappa vol / (r^d r^alpha chi(r))`` over node pairs, zero diagonal."""
    X = np.ascontiguousarray(X, dtype=float)
    n, d = X.shape
    W = np.zeros((n, n))
    for s in range(0, n, 512):
        r = np.sqrt(np.sum((X[s:s + 512, None, :] - X[None, :, :]) ** 2, axis=-1))
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            if math.isinf(gamma):
                chi = np.where(r <= 1, chi0, np.inf)
            else:
                chi = np.where(r <= 1, chi0, L1 * np.exp(c1 * r ** gamma))
            blk = kappa * vol / (r ** d * r ** alpha * chi)
        blk[(r == 0) | (r > cutoff)] = 0.0
        W[s:s + 512] = blk
    return W


def radial_sampler(mode, alpha, chi0, t1, outer, cut, t_eps, table_lt, table_u):
    """Inverse of the radial tail, mapping uniforms in (0, 1] to jump lengths > eps."""
    if mode == 0:
        def sample(u):
            y = u * t_eps
            inner = (alpha * chi0 * (y - t1) + 1.0) ** (-1.0 / alpha)
            if cut:
                return inner
            with np.errstate(divide="ignore", invalid="ignore"):
                far = (outer * y) ** (-1.0 / alpha)
            return np.where(y >= t1, inner, far)
        return sample

    def sample(u):
        return np.exp(np.interp(-np.log(u * t_eps), table_lt, table_u))
    return sample


def uniform_directions(rng, n, d):
    if d == 1:
        return np.where(rng.random(n) < 0.5, -1.0, 1.0)[:, None]
    g = rng.standard_normal((n, d))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def lockstep(x0, rate, sigma2, dt_max, t_max, sample_radius, contains, dist, rng, accept=None, record=None):
    """Simulate exits of all paths at once.

    Returns ``(tau, exit_point, kind, n_jumps)`` with kind 0 = exit by jump,
    1 = exit by the Gaussian part, 2 = censored at ``t_max``.
    ``record(idx, x, dt, y, jumped)`` is called after every jump round.
    """
    x = np.array(x0, dtype=float)
    n, d = x.shape
    t = np.zeros(n)
    tau = np.full(n, np.nan)
    exitp = np.zeros((n, d))
    kind = np.full(n, -1, dtype=np.int8)
    nj = np.zeros(n, dtype=np.int64)
    alive = np.ones(n, dtype=bool)
    while alive.any():
        idx = np.nonzero(alive)[0]
        m = len(idx)
        hold = rng.exponential(1.0 / rate, m)
        xa = x[idx]
        ta = t[idx]
        dead = np.zeros(m, dtype=bool)
        if sigma2 > 0:
            rem = hold.copy()
            live = np.ones(m, dtype=bool)
            while live.any():
                j = np.nonzero(live)[0]
                dt = np.minimum(np.minimum(rem[j], dt_max), t_max - ta[j])
                xn = xa[j] + np.sqrt(sigma2 * dt)[:, None] * rng.standard_normal((len(j), d))
                inside = contains(xn)
                u = rng.random(len(j))
                crossed = ~inside
                if inside.any():
                    k = np.nonzero(inside)[0]
                    with np.errstate(divide="ignore", over="ignore"):
                        pc = np.exp(-2.0 * dist(xa[j[k]]) * dist(xn[k]) / (sigma2 * dt[k]))
                    crossed[k] = u[k] < pc
                ta[j] += dt
                rem[j] -= dt
                if crossed.any():
                    c = j[crossed]
                    gi = idx[c]
                    tau[gi] = ta[c]
                    exitp[gi] = xn[crossed]
                    kind[gi] = 1
                    dead[c] = True
                keep = ~crossed
                xa[j[keep]] = xn[keep]
                cens = keep & (ta[j] >= t_max)
                if cens.any():
                    c = j[cens]
                    gi = idx[c]
                    tau[gi] = t_max
                    exitp[gi] = xa[c]
                    kind[gi] = 2
                    dead[c] = True
                live[j] = keep & ~cens & (rem[j] > 0)
            dt_eff = hold
        else:
            dt_eff = np.minimum(hold, t_max - ta)
            ta = ta + hold
            cens = ta >= t_max
            if cens.any():
                gi = idx[cens]
                tau[gi] = t_max
                exitp[gi] = xa[cens]
                kind[gi] = 2
                dead |= cens
        go = ~dead
        y = xa.copy()
        jumped = np.zeros(m, dtype=bool)
        if go.any():
            g = np.nonzero(go)[0]
            r = sample_radius(1.0 - rng.random(len(g)))
            y[g] = xa[g] + r[:, None] * uniform_directions(rng, len(g), d)
            ok = np.ones(len(g), dtype=bool)
            if accept is not None:
                ok = rng.random(len(g)) < accept(xa[g], y[g])
            jumped[g] = ok
            out = np.zeros(m, dtype=bool)
            gj = g[ok]
            if len(gj):
                out[gj] = ~contains(y[gj])
            if out.any():
                gi = idx[out]
                tau[gi] = ta[out]
                exitp[gi] = y[out]
                kind[gi] = 0
                dead |= out
        if record is not None:
            record(idx, xa.copy(), dt_eff, y, jumped)
        nj[idx] += jumped
        stay = jumped & ~dead
        xa[stay] = y[stay]
        x[idx] = xa
        t[idx] = ta
        alive[idx[dead]] = False
    return tau, exitp, kind, nj


def _ball_callables(center, radius):
    def contains(P):
        return np.sum((P - center) ** 2, axis=1) < radius * radius

    def dist(P):
        return np.abs(radius - np.sqrt(np.sum((P - center) ** 2, axis=1)))
    return contains, dist


def _box_callables(lo, hi):
    def contains(P):
        return np.all((P > lo) & (P < hi), axis=1)

    def dist(P):
        return np.min(np.minimum(P - lo, hi - P), axis=1)
    return contains, dist


def simulate_exits(x0, n_paths, rate, sigma2, dt_max, t_max, mode, alpha, chi0, t1, outer, cut, t_eps,
                   table_lt, table_u, region_kind, ra, rb, rng):
    """Exit times from a ball (``region_kind`` 0: centre ``ra``, radius ``rb[0]``)
    or a box (1: corners ``ra``, ``rb``)."""
    ra = np.asarray(ra, dtype=float)
    rb = np.asarray(rb, dtype=float)
    contains, dist = _ball_callables(ra, float(rb[0])) if region_kind == 0 else _box_callables(ra, rb)
    sampler = radial_sampler(mode, alpha, chi0, t1, outer, cut, t_eps, table_lt, table_u)
    X0 = np.tile(np.asarray(x0, dtype=float), (n_paths, 1))
    return lockstep(X0, rate, sigma2, dt_max, t_max, sampler, contains, dist, rng)
