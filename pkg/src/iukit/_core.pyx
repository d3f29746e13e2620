# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: pairwise kernel weights and per-path exit simulation."""

import numpy as np
cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport sqrt, exp, log, pow, cos, sin, fabs, INFINITY
from numpy.random cimport bitgen_t

cnp.import_array()


def pair_weights_power(double[:, ::1] X, double alpha, double gamma, double c1, double L1, double chi0,
                       double kappa, double vol, double cutoff):
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1], i, j, k
    cdef double r2, r, chi, w, diff
    cdef bint cut = gamma == INFINITY
    W_arr = np.zeros((n, n))
    cdef double[:, ::1] W = W_arr
    with nogil:
        for i in range(n):
            for j in range(i + 1, n):
                r2 = 0.0
                for k in range(d):
                    diff = X[i, k] - X[j, k]
                    r2 += diff * diff
                r = sqrt(r2)
                if r == 0.0 or r > cutoff:
                    continue
                if r <= 1.0:
                    chi = chi0
                elif cut:
                    continue
                else:
                    chi = L1 * exp(c1 * pow(r, gamma))
                w = kappa * vol / (pow(r, <double>d) * pow(r, alpha) * chi)
                W[i, j] = w
                W[j, i] = w
    return W_arr


cdef inline double _unif(bitgen_t* rng) noexcept nogil:
    return rng.next_double(rng.state)


cdef inline double _normal(bitgen_t* rng) noexcept nogil:
    # Marsaglia polar method, one variate per call
    cdef double u, v, s
    while True:
        u = 2.0 * rng.next_double(rng.state) - 1.0
        v = 2.0 * rng.next_double(rng.state) - 1.0
        s = u * u + v * v
        if s > 0.0 and s < 1.0:
            return u * sqrt(-2.0 * log(s) / s)


cdef inline bint _inside(double* p, int kind, double* ra, double* rb, Py_ssize_t d) noexcept nogil:
    cdef Py_ssize_t k
    cdef double s = 0.0, diff
    if kind == 0:
        for k in range(d):
            diff = p[k] - ra[k]
            s += diff * diff
        return s < rb[0] * rb[0]
    for k in range(d):
        if not (p[k] > ra[k] and p[k] < rb[k]):
            return False
    return True


cdef inline double _dist(double* p, int kind, double* ra, double* rb, Py_ssize_t d) noexcept nogil:
    cdef Py_ssize_t k
    cdef double s = 0.0, diff, m = INFINITY
    if kind == 0:
        for k in range(d):
            diff = p[k] - ra[k]
            s += diff * diff
        return fabs(rb[0] - sqrt(s))
    for k in range(d):
        m = min(m, min(p[k] - ra[k], rb[k] - p[k]))
    return m


cdef inline double _radius(double u, int mode, double alpha, double chi0, double t1, double outer, bint cut,
                           double t_eps, double* lt, double* uu, Py_ssize_t nt) noexcept nogil:
    cdef double y = u * t_eps, z
    cdef Py_ssize_t lo, hi, mid
    if mode == 0:
        if cut or y >= t1:
            return pow(alpha * chi0 * (y - t1) + 1.0, -1.0 / alpha)
        return pow(outer * y, -1.0 / alpha)
    z = -log(y)
    if z <= lt[0]:
        return exp(uu[0])
    if z >= lt[nt - 1]:
        return exp(uu[nt - 1])
    lo = 0
    hi = nt - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if lt[mid] <= z:
            lo = mid
        else:
            hi = mid
    return exp(uu[lo] + (uu[hi] - uu[lo]) * (z - lt[lo]) / (lt[hi] - lt[lo]))


def simulate_exits(x0, Py_ssize_t n_paths, double rate, double sigma2, double dt_max, double t_max, int mode,
                   double alpha, double chi0, double t1, double outer, bint cut, double t_eps,
                   table_lt, table_u, int region_kind, ra, rb, rng):
    """Per-path loop; same contract as the numpy version."""
    cdef double[::1] x0v = np.ascontiguousarray(x0, dtype=float)
    cdef Py_ssize_t d = x0v.shape[0], p, k
    cdef double[::1] rav = np.ascontiguousarray(ra, dtype=float)
    cdef double[::1] rbv = np.ascontiguousarray(rb, dtype=float)
    cdef double[::1] ltv = np.ascontiguousarray(table_lt if table_lt is not None else np.zeros(1), dtype=float)
    cdef double[::1] uuv = np.ascontiguousarray(table_u if table_u is not None else np.zeros(1), dtype=float)
    cdef Py_ssize_t nt = ltv.shape[0]
    tau_a = np.empty(n_paths)
    exit_a = np.empty((n_paths, d))
    kind_a = np.empty(n_paths, dtype=np.int8)
    nj_a = np.zeros(n_paths, dtype=np.int64)
    cdef double[::1] tau = tau_a
    cdef double[:, ::1] ex = exit_a
    cdef signed char[::1] kind = kind_a
    cdef long long[::1] nj = nj_a
    x_a = np.empty(d)
    y_a = np.empty(d)
    cdef double[::1] x = x_a
    cdef double[::1] y = y_a
    cdef double t, hold, rem, dt, sd, dx, dy, pc, r, nrm, g
    cdef bint done
    capsule = rng.bit_generator.capsule
    cdef bitgen_t* bg = <bitgen_t*> PyCapsule_GetPointer(capsule, "BitGenerator")
    with rng.bit_generator.lock, nogil:
        for p in range(n_paths):
            for k in range(d):
                x[k] = x0v[k]
            t = 0.0
            done = False
            while not done:
                hold = -log(1.0 - _unif(bg)) / rate
                if sigma2 > 0.0:
                    rem = hold
                    while rem > 0.0 and not done:
                        dt = min(min(rem, dt_max), t_max - t)
                        sd = sqrt(sigma2 * dt)
                        for k in range(d):
                            y[k] = x[k] + sd * _normal(bg)
                        t += dt
                        rem -= dt
                        if not _inside(&y[0], region_kind, &rav[0], &rbv[0], d):
                            done = True
                            kind[p] = 1
                        else:
                            dx = _dist(&x[0], region_kind, &rav[0], &rbv[0], d)
                            dy = _dist(&y[0], region_kind, &rav[0], &rbv[0], d)
                            pc = exp(-2.0 * dx * dy / (sigma2 * dt))
                            if _unif(bg) < pc:
                                done = True
                                kind[p] = 1
                        if done:
                            tau[p] = t
                            for k in range(d):
                                ex[p, k] = y[k]
                            break
                        for k in range(d):
                            x[k] = y[k]
                        if t >= t_max:
                            done = True
                            kind[p] = 2
                            tau[p] = t_max
                            for k in range(d):
                                ex[p, k] = x[k]
                    if done:
                        break
                else:
                    t += hold
                    if t >= t_max:
                        kind[p] = 2
                        tau[p] = t_max
                        for k in range(d):
                            ex[p, k] = x[k]
                        break
                r = _radius(1.0 - _unif(bg), mode, alpha, chi0, t1, outer, cut, t_eps, &ltv[0], &uuv[0], nt)
                if d == 1:
                    y[0] = x[0] + (r if _unif(bg) < 0.5 else -r)
                else:
                    nrm = 0.0
                    for k in range(d):
                        g = _normal(bg)
                        y[k] = g
                        nrm += g * g
                    nrm = sqrt(nrm)
                    for k in range(d):
                        y[k] = x[k] + r * y[k] / nrm
                nj[p] += 1
                if not _inside(&y[0], region_kind, &rav[0], &rbv[0], d):
                    kind[p] = 0
                    tau[p] = t
                    for k in range(d):
                        ex[p, k] = y[k]
                    break
                for k in range(d):
                    x[k] = y[k]
    return tau_a, exit_a, kind_a, nj_a
