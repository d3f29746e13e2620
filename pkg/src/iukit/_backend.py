"""Selects the compiled core when it is importable, else the numpy fallback.

Set ``IUKIT_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import math
import os

import numpy as np

from . import _corepy

BACKEND = "python"
_impl = _corepy
if os.environ.get("IUKIT_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _core as _compiled  # type: ignore[attr-defined]

        _impl = _compiled
        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        pass


def implementation(name: str = None):
    """Module implementing the hot loops (``"cython"``, ``"python"`` or the active one)."""
    if name is None:
        return _impl
    if name == "python":
        return _corepy
    if name == "cython":
        from . import _core  # type: ignore[attr-defined]

        return _core
    raise ValueError(name)


def pair_weights(kernel, X, vol, cutoff, impl=None):
    """Far-field weights ``vol * J(x_i, x_j)`` for translation-invariant kernels."""
    chi = kernel.chi
    mod = implementation(impl)
    if kernel.phi.kind == "power":
        return mod.pair_weights_power(np.ascontiguousarray(X, dtype=float), float(kernel.phi.alpha),
                                      float(chi.gamma), float(chi.c1), float(chi.L1), float(chi.chi0),
                                      float(kernel.kappa.constant), float(vol), float(cutoff))
    n = len(X)
    W = np.zeros((n, n))
    for s in range(0, n, 512):
        r = np.sqrt(np.sum((X[s:s + 512, None, :] - X[None, :, :]) ** 2, axis=-1))
        blk = kernel.kappa.constant * vol * kernel.radial(r)
        blk[(r == 0) | (r > cutoff)] = 0.0
        W[s:s + 512] = blk
    return W


def radial_params(kernel, eps):
    """Arguments describing the jump-length distribution beyond ``eps``."""
    prof = kernel.profile
    t_eps = float(prof.tail(eps))
    if prof.closed:
        a = kernel.phi.alpha
        chi = kernel.chi
        cut = math.isinf(chi.gamma)
        outer = 0.0 if cut else a * chi.L1 * math.exp(chi.c1)
        return dict(mode=0, alpha=a, chi0=chi.chi0, t1=prof._t1, outer=outer, cut=cut, t_eps=t_eps,
                    table_lt=None, table_u=None)
    u = np.linspace(math.log(eps), float(prof._nodes[-1]), 4001)
    T = prof.tail(np.exp(u))
    ok = T > 1e-300
    ok[1:] &= np.diff(T) < 0
    return dict(mode=1, alpha=1.0, chi0=1.0, t1=0.0, outer=0.0, cut=False, t_eps=t_eps,
                table_lt=-np.log(T[ok]), table_u=u[ok])
