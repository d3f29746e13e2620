"""Lattice discretisation of the killed form and its spectral quantities.

Nodes are the points of ``h Z^d`` inside a box and inside the region,
in lexicographic order.  The discrete operator is

    (A f)_i = sum_j 2 w_ij (f_i - f_j) + k_i f_i,

with ``w_ij = h^d J(x_i, x_j)`` (cell averages of ``J`` for ``|x_i - x_j| <= 3h``)
and ``k_i = 2 (V_D(x_i) + T_i)``, where ``T_i`` collects the weight of lattice
sites of the region cut away by the box.  ``<A f, f> h^d`` is the discrete
version of ``E(f, f) = iint (f(x) - f(y))^2 J + 2 int f^2 V_D``.  The
process generated by ``-A`` therefore jumps at rate ``2 w_ij`` and is
killed at rate ``k_i``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse import csgraph

from . import _backend
from .errors import ConfigError, ConvergenceError, DiscretizationError
from .geometry import Region, killing_potential
from .kernels import JumpKernel

NEAR_CELLS = 3


@dataclass
class Grid:
    h: float
    box: np.ndarray
    nodes: np.ndarray
    index: np.ndarray

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]

    @property
    def n(self) -> int:
        return self.nodes.shape[0]


def build_grid(region: Region, h: float, box=None) -> Grid:
    """Lattice points ``h Z^d`` in the closed box and in the (open) region.

    ``box`` is a (d, 2) array of ``[lo, hi]`` rows; it defaults to the
    region's bounding box.
    """
    if h <= 0:
        raise ConfigError("grid spacing must be positive", path=("grid", "h"))
    if box is None:
        box = region.bounding_box()
        if box is None:
            raise ConfigError("unbounded region needs an explicit box", path=("grid", "box"))
    box = np.asarray(box, dtype=float).reshape(region.dim, 2)
    eps = 1e-9
    axes = [np.arange(math.ceil(lo / h - eps), math.floor(hi / h + eps) + 1) for lo, hi in box]
    mesh = np.meshgrid(*axes, indexing="ij")
    idx = np.stack([m.reshape(-1) for m in mesh], axis=1).astype(np.int64)
    pts = idx * h
    keep = region.contains(pts)
    if keep.sum() < 2:
        raise DiscretizationError(f"grid h={h} leaves {int(keep.sum())} node(s) in the region; refine h")
    return Grid(float(h), box, pts[keep], idx[keep])


def _stencil_table(kernel: JumpKernel, h: float, n_gl: int = 16, split: int = 2) -> dict:
    """``int_{cell(k h)} J(0, y) dy`` for lattice offsets with ``0 < |k| <= NEAR_CELLS``."""
    d = kernel.dim
    g, w = np.polynomial.legendre.leggauss(n_gl)
    # composite rule on [-1/2, 1/2] with ``split`` panels per axis
    sub = []
    subw = []
    for p in range(split):
        a = -0.5 + p / split
        sub.append(a + (g + 1) / (2 * split))
        subw.append(w / (2 * split))
    z = np.concatenate(sub)
    zw = np.concatenate(subw)
    grids = np.meshgrid(*([z] * d), indexing="ij")
    local = np.stack([gg.reshape(-1) for gg in grids], axis=1) * h
    lw = np.prod(np.stack(np.meshgrid(*([zw] * d), indexing="ij"), axis=0).reshape(d, -1), axis=0) * h**d
    table = {}
    origin = np.zeros(d)
    for off in product(range(-NEAR_CELLS, NEAR_CELLS + 1), repeat=d):
        off = np.array(off)
        if not off.any() or np.linalg.norm(off) > NEAR_CELLS + 1e-9:
            continue
        y = off * h + local
        table[tuple(off)] = float(np.dot(lw, kernel(origin, y)))
    return table


def _cell_average_pairs(kernel: JumpKernel, xi, xj, h, n_gl: int = 8):
    """Cell integrals ``int_{cell(x_j)} J(x_i, y) dy`` for arrays of pairs."""
    d = kernel.dim
    g, w = np.polynomial.legendre.leggauss(n_gl)
    grids = np.meshgrid(*([g / 2] * d), indexing="ij")
    local = np.stack([gg.reshape(-1) for gg in grids], axis=1) * h
    lw = np.prod(np.stack(np.meshgrid(*([w / 2] * d), indexing="ij"), axis=0).reshape(d, -1), axis=0) * h**d
    out = np.empty(len(xi))
    for s in range(0, len(xi), 256):
        a = xi[s:s + 256, None, :]
        b = xj[s:s + 256, None, :] + local[None, :, :]
        out[s:s + 256] = kernel(a, b) @ lw
    return out


@dataclass
class DirichletOperator:
    """Discrete killed generator on a :class:`Grid`."""

    grid: Grid
    weights: sp.csr_matrix
    kill: np.ndarray
    potential: np.ndarray
    truncation: np.ndarray
    kernel_hash: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def diagonal(self) -> np.ndarray:
        return 2.0 * np.asarray(self.weights.sum(axis=1)).ravel() + self.kill

    def matrix(self) -> sp.csr_matrix:
        return (sp.diags(self.diagonal) - 2.0 * self.weights).tocsr()

    def dense(self) -> np.ndarray:
        return self.matrix().toarray()

    def apply(self, f):
        f = np.asarray(f, dtype=float)
        return self.diagonal * f - 2.0 * (self.weights @ f)

    def energy(self, f) -> float:
        """``h^d [sum_{i,j} (f_i - f_j)^2 w_ij + sum_i k_i f_i^2]``."""
        f = np.asarray(f, dtype=float)
        W = self.weights.tocoo()
        pair = np.sum((f[W.row] - f[W.col]) ** 2 * W.data)
        return self.grid.h ** self.grid.dim * float(pair + np.dot(self.kill, f * f))


def assemble_generator(kernel: JumpKernel, region: Region, grid: Grid, jump_cutoff: Optional[float] = None,
                       trunc_extent: Optional[float] = None, n_dirs: Optional[int] = None) -> DirichletOperator:
    """Assemble the discrete killed generator.

    Parameters
    ----------
    jump_cutoff : float, optional
        Pairs farther apart are ignored; defaults to the box diameter.
    trunc_extent : float, optional
        Lattice sites of the region within this distance outside the box
        contribute to the truncation term; defaults to the box diameter
        (clipped to the kernel range).
    n_dirs : int, optional
        Angular rule for the killing potential (defaults: 1024 in d = 2,
        2048 in d = 3).
    """
    d, h = grid.dim, grid.h
    if kernel.dim != d or region.dim != d:
        raise ConfigError("kernel, region and grid dimensions differ")
    if grid.n == 0:
        raise DiscretizationError("grid has no nodes inside the region")
    X = grid.nodes
    diam = float(np.linalg.norm(grid.box[:, 1] - grid.box[:, 0]))
    cutoff = diam if jump_cutoff is None else float(jump_cutoff)
    cutoff = min(cutoff, kernel.range)
    vol = h**d

    # far field
    if kernel.translation_invariant:
        W = _backend.pair_weights(kernel, X, vol, cutoff)
    else:
        W = np.zeros((grid.n, grid.n))
        for s in range(0, grid.n, 256):
            xi = X[s:s + 256, None, :]
            with np.errstate(divide="ignore"):
                blk = kernel(xi, X[None, :, :]) * vol
            dist = np.linalg.norm(xi - X[None, :, :], axis=-1)
            blk[(dist == 0) | (dist > cutoff)] = 0.0
            W[s:s + 256] = blk
    # near field: cell averages
    Ii, Jj = _near_pairs(grid)
    if len(Ii):
        keep = Ii < Jj
        Ii, Jj = Ii[keep], Jj[keep]
        if kernel.translation_invariant:
            table = _stencil_table(kernel, h)
            off = grid.index[Jj] - grid.index[Ii]
            vals = np.array([table[tuple(o)] for o in off])
        else:
            vals = _cell_average_pairs(kernel, X[Ii], X[Jj], h)
        dist = np.linalg.norm(X[Ii] - X[Jj], axis=1)
        vals[dist > cutoff] = 0.0
        W[Ii, Jj] = vals
        W[Jj, Ii] = vals
    W = np.triu(W, 1)
    W = W + W.T

    # killing potential
    nd = n_dirs if n_dirs is not None else (1024 if d == 2 else 2048)
    V = np.array([killing_potential(kernel, region, x, n_dirs=nd) for x in X])

    # lattice sites of the region outside the box
    ext = min(diam if trunc_extent is None else float(trunc_extent), kernel.range + h)
    T = _truncation_sums(kernel, region, grid, ext, cutoff=max(cutoff, ext))
    kill = 2.0 * (V + T)
    Wcsr = sp.csr_matrix(W)
    Wcsr.eliminate_zeros()
    meta = {"h": h, "box": grid.box.tolist(), "kernel": kernel.digest(), "n": grid.n,
            "convention": "E(f,f) = sum (f_i-f_j)^2 w_ij + sum k_i f_i^2, k_i = 2(V_D + T_i)",
            "jump_cutoff": cutoff, "trunc_extent": ext, "n_dirs": nd, "backend": _backend.BACKEND}
    return DirichletOperator(grid, Wcsr, kill, V, T, kernel.digest(), meta)


def _near_pairs(grid: Grid):
    """Index pairs with lattice distance in (0, NEAR_CELLS]."""
    lookup = {tuple(k): i for i, k in enumerate(grid.index)}
    I, J = [], []
    offs = [np.array(o) for o in product(range(-NEAR_CELLS, NEAR_CELLS + 1), repeat=grid.dim)
            if any(o) and np.linalg.norm(o) <= NEAR_CELLS + 1e-9]
    for i, k in enumerate(grid.index):
        for o in offs:
            j = lookup.get(tuple(k + o))
            if j is not None:
                I.append(i)
                J.append(j)
    return np.array(I, dtype=np.int64), np.array(J, dtype=np.int64)


def _truncation_sums(kernel, region, grid, ext, cutoff):
    h, d = grid.h, grid.dim
    if ext <= 0:
        return np.zeros(grid.n)
    lo = grid.box[:, 0] - ext
    hi = grid.box[:, 1] + ext
    axes = [np.arange(math.ceil(a / h - 1e-9), math.floor(b / h + 1e-9) + 1) for a, b in zip(lo, hi)]
    total = int(np.prod([len(a) for a in axes]))
    if total > 4_000_000:
        raise DiscretizationError("truncation window too large; lower trunc_extent")
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.reshape(-1) for m in mesh], axis=1) * h
    inbox = np.all((pts >= grid.box[:, 0] - 1e-9 * h) & (pts <= grid.box[:, 1] + 1e-9 * h), axis=1)
    pts = pts[~inbox]
    pts = pts[region.contains(pts)] if len(pts) else pts
    if len(pts) == 0:
        return np.zeros(grid.n)
    out = np.zeros(grid.n)
    for s in range(0, grid.n, 128):
        xi = grid.nodes[s:s + 128, None, :]
        dist = np.linalg.norm(xi - pts[None, :, :], axis=-1)
        with np.errstate(divide="ignore"):
            j = kernel(xi, pts[None, :, :])
        j[(dist > cutoff) | (dist == 0)] = 0.0
        out[s:s + 128] = j.sum(axis=1) * h**d
    return out


# ---------------------------------------------------------------------------
# ground state
# ---------------------------------------------------------------------------
@dataclass
class SpectralResult:
    lambda1: float
    phi1: np.ndarray
    residual: float
    iterations: int
    h: float
    dim: int
    refined: int = 0

    @property
    def phi1_continuum(self) -> np.ndarray:
        """``phi1`` scaled to unit norm in ``L^2(h^d counting measure)``."""
        return self.phi1 / self.h ** (self.dim / 2)


def ground_state(op: DirichletOperator, tol: float = 1e-10, max_iter: int = 500, block: int = 4,
                 refine_tail: bool = True) -> SpectralResult:
    """Principal eigenpair of ``A`` by inverse subspace iteration.

    The block of ``block`` vectors is pushed through ``A^{-1}`` (Cholesky
    factor) and rotated by Rayleigh-Ritz until the first Ritz pair has
    residual ``<= tol * lambda1``.  Entries below ``1e-6 max(phi1)`` are then
    recomputed from the eigen-equation by a positive fixed-point iteration,
    which keeps their relative accuracy when they are far below machine
    precision relative to the maximum.

    Raises
    ------
    DiscretizationError
        The jump graph is disconnected, nothing is killed, or an entry of
        ``phi1`` is not strictly positive.
    ConvergenceError
        ``max_iter`` reached; ``partial`` holds the last iterate.
    """
    n = op.n
    if n == 0:
        raise DiscretizationError("empty operator")
    if n > 1:
        ncomp, _ = csgraph.connected_components(op.weights, directed=False)
        if ncomp > 1:
            raise DiscretizationError(
                f"phi1 is not strictly positive: the jump graph has {ncomp} components")
    if not np.any(op.kill > 0):
        raise DiscretizationError("no killing: the discrete operator is singular")
    A = op.dense() if n <= 6000 else op.matrix()
    if isinstance(A, np.ndarray):
        fac = sla.cho_factor(A)

        def solve(B):
            return sla.cho_solve(fac, B)
    else:
        from scipy.sparse.linalg import splu

        lu = splu(A.tocsc())

        def solve(B):
            return lu.solve(B)

    b = min(block, n)
    rng = np.random.default_rng(0)
    X = np.abs(rng.normal(size=(n, b))) + 1.0
    X, _ = np.linalg.qr(X)
    lam, v, res = math.nan, X[:, 0], math.inf
    for it in range(1, max_iter + 1):
        Y = solve(X)
        X, _ = np.linalg.qr(Y)
        AX = A @ X
        H = X.T @ AX
        H = 0.5 * (H + H.T)
        evals, evecs = np.linalg.eigh(H)
        X = X @ evecs
        AX = AX @ evecs
        lam = float(evals[0])
        v = X[:, 0]
        res = float(np.linalg.norm(AX[:, 0] - lam * v))
        if res <= tol * abs(lam):
            break
    else:
        raise ConvergenceError(f"inverse iteration did not converge (residual {res:.3g})",
                               partial=SpectralResult(lam, v, res, max_iter, op.grid.h, op.grid.dim))
    if v.sum() < 0:
        v = -v
    refined = 0
    if refine_tail and n > 1:
        v, refined = _refine_tail(op, v, lam)
    v = v / np.linalg.norm(v)
    if np.any(v <= 0):
        raise DiscretizationError("phi1 has a non-positive entry")
    res = float(np.linalg.norm(op.apply(v) - lam * v)) / lam
    return SpectralResult(lam, v, res, it, op.grid.h, op.grid.dim, refined)


def _refine_tail(op, v, lam, thresh=1e-6, max_sweeps=500):
    small = v < thresh * v.max()
    if not small.any():
        return v, 0
    W = op.weights.tocsr()
    S = np.nonzero(small)[0]
    diag = op.diagonal[S] - lam
    if np.any(diag <= 0):
        return v, 0
    W_SS = W[S][:, S].toarray()
    src = 2.0 * (W[S][:, ~small] @ v[~small])
    x = np.maximum(v[S], 0.0)
    for _ in range(max_sweeps):
        new = (src + 2.0 * W_SS @ x) / diag
        done = np.all(np.abs(new - x) <= 1e-15 * new)
        x = new
        if done:
            break
    v = v.copy()
    v[S] = x
    return v, int(len(S))


# ---------------------------------------------------------------------------
# heat kernel
# ---------------------------------------------------------------------------
@dataclass
class HeatKernel:
    t: float
    matrix: np.ndarray
    truncation_bound: float
    rank: int


def heat_kernel(op: DirichletOperator, t: float, rank: Optional[int] = None) -> HeatKernel:
    """``p(t, x_i, x_j) = sum_k exp(-lambda_k t) phi_k(i) phi_k(j) / h^d``.

    ``rank`` truncates the sum; ``truncation_bound`` is then
    ``exp(-lambda_{rank+1} t) / h^d``, a bound on each omitted entry.
    """
    if t <= 0:
        raise ConfigError("heat kernel time must be positive")
    A = op.dense()
    lam, U = np.linalg.eigh(A)
    n = len(lam)
    k = n if rank is None else min(int(rank), n)
    vol = op.grid.h ** op.grid.dim
    P = (U[:, :k] * np.exp(-lam[:k] * t)) @ U[:, :k].T / vol
    bound = 0.0 if k == n else float(math.exp(-lam[k] * t) / vol)
    return HeatKernel(t, 0.5 * (P + P.T), bound, k)


def heat_kernel_expm(op: DirichletOperator, t: float) -> np.ndarray:
    """Independent route: ``expm(-t A) / h^d``."""
    return sla.expm(-t * op.dense()) / op.grid.h ** op.grid.dim


@dataclass
class IURatio:
    max: float
    min: float
    argmax: tuple
    argmin: tuple
    excluded: int


def iu_ratio(op: DirichletOperator, t: float, gs: Optional[SpectralResult] = None,
             hk: Optional[HeatKernel] = None, floor: float = 1e-150) -> IURatio:
    """Extremes of ``p(t, x, y) / (phi1(x) phi1(y))`` over node pairs.

    ``phi1`` is taken in the continuum normalisation.  Pairs whose product
    ``phi1(x) phi1(y)`` falls below ``floor`` are excluded and counted.
    """
    gs = gs if gs is not None else ground_state(op)
    hk = hk if hk is not None else heat_kernel(op, t)
    phi = gs.phi1_continuum
    prod = np.outer(phi, phi)
    ok = prod > floor
    R = np.where(ok, hk.matrix / np.where(ok, prod, 1.0), np.nan)
    imax = np.unravel_index(np.nanargmax(R), R.shape)
    imin = np.unravel_index(np.nanargmin(R), R.shape)
    return IURatio(float(R[imax]), float(R[imin]), tuple(int(i) for i in imax), tuple(int(i) for i in imin),
                   int((~ok).sum()))


def mean_exit_time(op: DirichletOperator) -> np.ndarray:
    """Expected lifetime of the killed chain started at each node, ``A^{-1} 1``."""
    A = op.dense()
    return sla.cho_solve(sla.cho_factor(A), np.ones(op.n))


@dataclass
class Extrapolation:
    """Aitken extrapolation of a grid sequence ``v(h), v(h/2), v(h/4)``."""

    value: float
    correction: float
    order: float
    hs: tuple
    sequence: np.ndarray


def aitken(seq) -> tuple[float, float]:
    """Limit and observed order from three values on halving grids."""
    a, b, c = (float(v) for v in seq[-3:])
    if b == a or c == b:
        return c, math.inf
    q = (c - b) / (b - a)
    if not 0 < q < 1:
        raise ConvergenceError(f"grid sequence is not contracting (ratio {q:.3g})")
    return c + (c - b) * q / (1 - q), -math.log2(q)


def extrapolated_mean_exit_time(kernel: JumpKernel, region: Region, x0, h: float, levels: int = 3,
                                **assemble_kw) -> Extrapolation:
    """Mean exit time from ``x0`` on grids ``h, h/2, ...`` extrapolated to ``h -> 0``.

    ``x0`` must be a lattice point for every spacing.  ``correction`` is the
    distance between the extrapolated value and the finest grid.
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    hs, vals = [], []
    for k in range(levels):
        hk = h / 2**k
        grid = build_grid(region, hk)
        i = int(np.argmin(np.linalg.norm(grid.nodes - x0, axis=1)))
        if np.linalg.norm(grid.nodes[i] - x0) > 1e-9 * max(1.0, hk):
            raise ConfigError("x0 is not a lattice point of the grid", path=("x0",))
        op = assemble_generator(kernel, region, grid, **assemble_kw)
        hs.append(hk)
        vals.append(float(mean_exit_time(op)[i]))
    v, order = aitken(vals)
    return Extrapolation(v, abs(v - vals[-1]), order, tuple(hs), np.array(vals))


# ---------------------------------------------------------------------------
# dump
# ---------------------------------------------------------------------------
def dump_ground_state(path, op: DirichletOperator, res: SpectralResult, config_hash: str = "") -> None:
    """CSV with ``# key: value`` metadata lines, then ``x1..xd,phi1`` rows."""
    d = op.grid.dim
    with open(path, "w") as fh:
        fh.write(f"# config_hash: {config_hash}\n")
        fh.write(f"# kernel_hash: {op.kernel_hash}\n")
        fh.write(f"# h: {op.grid.h!r}\n")
        fh.write(f"# box: {op.grid.box.tolist()}\n")
        fh.write(f"# lambda1: {res.lambda1!r}\n")
        fh.write(f"# residual: {res.residual!r}\n")
        fh.write("# normalisation: sum phi1^2 = 1\n")
        fh.write(",".join([f"x{i+1}" for i in range(d)] + ["phi1"]) + "\n")
        for x, p in zip(op.grid.nodes, res.phi1):
            fh.write(",".join(repr(float(c)) for c in x) + f",{float(p)!r}\n")


def load_ground_state(path):
    """Inverse of :func:`dump_ground_state`: returns ``(meta, nodes, phi1)``."""
    meta = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                k, _, v = line[1:].partition(":")
                meta[k.strip()] = v.strip()
            elif line[0].isalpha():
                continue
            else:
                rows.append([float(c) for c in line.split(",")])
    arr = np.array(rows)
    return meta, arr[:, :-1], arr[:, -1]
