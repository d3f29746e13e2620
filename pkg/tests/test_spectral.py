import itertools
import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st
from scipy import linalg as sla

from iukit.errors import ConfigError, ConvergenceError, DiscretizationError
from iukit.geometry import Ball, Box, HalfSpace, Horn, ReferenceFunction
from iukit.kernels import JumpKernel, ScalingFunction, jump_kernel_eval
from iukit.spectral import (DirichletOperator, Grid, aitken, assemble_generator, build_grid, dump_ground_state,
                            ground_state, heat_kernel, heat_kernel_expm, iu_ratio, load_ground_state,
                            mean_exit_time)

K2 = JumpKernel(2, ScalingFunction.power(1.0))
K1 = JumpKernel(1, ScalingFunction.power(1.0))
BALL = Ball([0.0, 0.0], 1.0)


def manual_op(nodes, W, kill, h=1.0):
    nodes = np.asarray(nodes, dtype=float)
    g = Grid(h, np.array([[nodes[:, k].min(), nodes[:, k].max()] for k in range(nodes.shape[1])]), nodes,
             np.round(nodes / h).astype(np.int64))
    W = sp.csr_matrix(np.asarray(W, dtype=float))
    kill = np.asarray(kill, dtype=float)
    return DirichletOperator(g, W, kill, 0.5 * kill, np.zeros_like(kill))


@pytest.fixture(scope="module")
def small_op():
    g = build_grid(BALL, 0.25)
    return assemble_generator(K2, BALL, g)


# ---------------------------------------------------------------------------
# grid
# ---------------------------------------------------------------------------
def test_ball_grid_matches_enumeration():
    g = build_grid(BALL, 0.5)
    oracle = [(i * 0.5, j * 0.5) for i, j in itertools.product(range(-2, 3), repeat=2)
              if (i * 0.5) ** 2 + (j * 0.5) ** 2 < 1]
    assert g.n == len(oracle) == 9
    assert sorted(map(tuple, g.nodes)) == sorted(oracle)
    # lexicographic order
    assert [tuple(x) for x in g.nodes] == sorted(tuple(x) for x in g.nodes)


def test_thin_horn_keeps_axis_nodes():
    D = Horn(ReferenceFunction("expr", expr="0.4 + 0*s"), 2)
    g = build_grid(D, 0.5, box=[[0.0, 3.0], [-1.0, 1.0]])
    assert g.n == 6
    assert np.all(g.nodes[:, 1] == 0.0)


def test_grid_coarser_than_region_is_error():
    with pytest.raises(DiscretizationError):
        build_grid(Ball([0.5, 0.5], 0.3), 1.0)


def test_grid_rejects_nonpositive_h():
    with pytest.raises(ConfigError):
        build_grid(BALL, 0.0)


# ---------------------------------------------------------------------------
# operator
# ---------------------------------------------------------------------------
def test_two_node_difference_mode():
    w = 0.7
    op = manual_op([[0.0], [1.0]], [[0, w], [w, 0]], [0.0, 0.0])
    ev = np.linalg.eigvalsh(op.dense())
    assert ev == pytest.approx([0.0, 4 * w], abs=1e-14)


def test_assembled_matrix_symmetric_bit_exact(small_op):
    A = small_op.matrix()
    assert (A != A.T).nnz == 0
    assert np.all(small_op.weights.data >= 0)
    assert np.all(small_op.weights.diagonal() == 0)


def test_far_weights_are_kernel_times_cell_volume(small_op):
    g = small_op.grid
    W = small_op.weights.tocoo()
    h2 = g.h**2
    far = np.linalg.norm(g.nodes[W.row] - g.nodes[W.col], axis=1) > 3 * g.h + 1e-12
    assert far.any()
    for i, j, w in list(zip(W.row[far], W.col[far], W.data[far]))[:50]:
        assert w == pytest.approx(jump_kernel_eval(K2, g.nodes[i], g.nodes[j]) * h2, rel=1e-12)


def test_hat_function_energy_against_double_sum():
    D = Box([-1.05], [1.05])
    g = build_grid(D, 0.1)
    assert g.n == 21
    op = assemble_generator(K1, D, g)
    f = np.maximum(0.0, 1.0 - np.abs(g.nodes[:, 0]))
    W = op.weights.toarray()
    oracle = sum((f[i] - f[j]) ** 2 * W[i, j] for i in range(g.n) for j in range(g.n))
    oracle = g.h * (oracle + sum(op.kill[i] * f[i] ** 2 for i in range(g.n)))
    assert op.energy(f) == pytest.approx(oracle, rel=1e-12)
    assert float(f @ op.apply(f)) * g.h == pytest.approx(oracle, rel=1e-12)


def test_operator_metadata_records_convention(small_op):
    assert "convention" in small_op.meta


# ---------------------------------------------------------------------------
# ground state
# ---------------------------------------------------------------------------
def test_ground_state_two_node():
    w, k = 0.5, 1.0
    op = manual_op([[0.0], [1.0]], [[0, w], [w, 0]], [k, k])
    res = ground_state(op)
    assert res.lambda1 == pytest.approx(k, rel=1e-12)
    assert res.phi1 == pytest.approx([2**-0.5, 2**-0.5], rel=1e-10)


def test_disconnected_diagonal_operator_is_error():
    op = manual_op([[0.0], [1.0]], [[0, 0], [0, 0]], [3.0, 5.0])
    with pytest.raises(DiscretizationError):
        ground_state(op)


def test_ground_state_against_dense_eigensolver():
    g = build_grid(BALL, 0.1)
    assert g.n <= 2000
    op = assemble_generator(K2, BALL, g)
    res = ground_state(op)
    lam = sla.eigh(op.dense(), eigvals_only=True, subset_by_index=[0, 0])[0]
    assert res.lambda1 == pytest.approx(lam, rel=1e-8)
    assert np.all(res.phi1 > 0)
    assert np.linalg.norm(res.phi1) == pytest.approx(1.0, abs=1e-12)
    assert res.residual <= 1e-10


def test_refinement_stability():
    lams = [ground_state(assemble_generator(K2, BALL, build_grid(BALL, h))).lambda1 for h in (0.1, 0.05)]
    assert abs(lams[0] - lams[1]) / lams[1] < 0.05


def test_domain_monotonicity():
    big = Ball([0.0, 0.0], 1.0)
    small = Box([-0.6, -0.6], [0.6, 0.6])
    half = HalfSpace([1.0, 0.0], 0.3)
    h = 0.1
    from iukit.geometry import Intersection
    lam = []
    for D in (big, Intersection(big, half), small):
        lam.append(ground_state(assemble_generator(K2, D, build_grid(D, h, box=[[-1, 1], [-1, 1]]))).lambda1)
    assert lam[0] <= lam[1]
    assert lam[0] <= lam[2]


# ---------------------------------------------------------------------------
# heat kernel and IU ratio
# ---------------------------------------------------------------------------
def test_heat_kernel_matches_expm(small_op):
    P = heat_kernel(small_op, 0.3).matrix
    assert np.allclose(P, heat_kernel_expm(small_op, 0.3), rtol=1e-8, atol=1e-10)


def test_heat_kernel_symmetric_and_sub_markov(small_op):
    vol = small_op.grid.h**2
    for t in (0.01, 0.1, 1.0, 5.0):
        P = heat_kernel(small_op, t).matrix
        assert np.max(np.abs(P - P.T)) <= 1e-12 * np.max(np.abs(P))
        assert np.all(P.sum(axis=1) * vol <= 1 + 1e-8)


def test_semigroup_property(small_op):
    A = small_op.dense()
    P1, P2, P12 = (sla.expm(-t * A) for t in (0.2, 0.5, 0.7))
    assert np.allclose(P1 @ P2, P12, atol=1e-8)


def test_eigen_relation(small_op):
    res = ground_state(small_op)
    P = sla.expm(-0.5 * small_op.dense())
    err = np.linalg.norm(P @ res.phi1 - math.exp(-0.5 * res.lambda1) * res.phi1)
    assert err <= 1e-6


def test_rank_one_limit(small_op):
    res = ground_state(small_op)
    t = 2.0
    hk = heat_kernel(small_op, t, rank=1)
    vol = small_op.grid.h**2
    ratio = hk.matrix * math.exp(res.lambda1 * t) * vol
    assert np.allclose(ratio, np.outer(res.phi1, res.phi1), atol=1e-12)
    r = iu_ratio(small_op, t, res, hk)
    assert r.max == pytest.approx(r.min, rel=1e-8)
    assert r.max == pytest.approx(math.exp(-res.lambda1 * t), rel=1e-8)


def test_iu_ratio_spread_tends_to_one(small_op):
    res = ground_state(small_op)
    spreads = [(lambda r: r.max / r.min)(iu_ratio(small_op, t, res)) for t in (1.0, 3.0, 6.0)]
    assert spreads[0] > spreads[1] > spreads[2]
    assert spreads[2] < 1.01


def test_mean_exit_time_positive_and_peaks_inside(small_op):
    tau = mean_exit_time(small_op)
    assert np.all(tau > 0)
    i0 = int(np.argmin(np.linalg.norm(small_op.grid.nodes, axis=1)))
    assert tau[i0] == tau.max()


# ---------------------------------------------------------------------------
# aitken and dump
# ---------------------------------------------------------------------------
def test_aitken_geometric_sequence():
    seq = [1 + 0.5**k for k in (1, 2, 3)]
    lim, order = aitken(seq)
    assert lim == pytest.approx(1.0, abs=1e-14)
    assert order == pytest.approx(1.0)


def test_aitken_rejects_non_contracting():
    with pytest.raises(ConvergenceError):
        aitken([1.0, 2.0, 4.0])


def test_dump_roundtrip(tmp_path, small_op):
    res = ground_state(small_op)
    p = tmp_path / "gs.csv"
    dump_ground_state(p, small_op, res, "abc")
    meta, nodes, phi = load_ground_state(p)
    assert meta["config_hash"] == "abc"
    assert float(meta["lambda1"]) == res.lambda1
    assert np.array_equal(nodes, small_op.grid.nodes)
    assert np.array_equal(phi, res.phi1)


# ---------------------------------------------------------------------------
# properties
# ---------------------------------------------------------------------------
_OP = assemble_generator(K2, BALL, build_grid(BALL, 0.2))


@given(seed=st.integers(0, 2**32 - 1))
def test_form_consistency(seed):
    f = np.random.default_rng(seed).normal(size=_OP.n)
    W = _OP.weights.tocoo()
    direct = np.sum((f[W.row] - f[W.col]) ** 2 * W.data) + np.sum(_OP.kill * f**2)
    direct *= _OP.grid.h**2
    assert float(f @ _OP.apply(f)) * _OP.grid.h**2 == pytest.approx(direct, rel=1e-10)
    assert direct >= 0
