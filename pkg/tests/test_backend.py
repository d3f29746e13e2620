import math
import os
import subprocess
import sys

import numpy as np
import pytest
from scipy import stats

from iukit import _backend
from iukit.geometry import Ball, Box
from iukit.kernels import JumpKernel, ScalingFunction, TemperingFunction
from iukit.montecarlo import SimScheme, simulate_exits

cython = pytest.mark.skipif(_backend.BACKEND != "cython", reason="compiled core not built")


@cython
@pytest.mark.parametrize("chi", [TemperingFunction.none(), TemperingFunction.finite_range(),
                                 TemperingFunction(1.0, 0.5, 0.5, 1.0, 1.0)])
@pytest.mark.parametrize("d", [1, 2, 3])
def test_pair_weights_backends_agree(chi, d):
    k = JumpKernel(d, ScalingFunction.power(1.3), chi)
    X = np.random.default_rng(d).uniform(-2, 2, size=(150, d))
    a = _backend.pair_weights(k, X, 0.01, 2.5, impl="cython")
    b = _backend.pair_weights(k, X, 0.01, 2.5, impl="python")
    assert np.allclose(a, b, rtol=1e-13, atol=0)
    assert np.array_equal(a == 0, b == 0)


@cython
@pytest.mark.parametrize("region,x0", [(Ball([0.0, 0.0], 1.0), [0.3, 0.0]),
                                       (Box([-1.0, -0.5], [1.0, 0.5]), [0.0, 0.0])])
@pytest.mark.parametrize("mode", ["drop", "gauss"])
def test_exit_times_backends_same_law(region, x0, mode):
    k = JumpKernel(2, ScalingFunction.power(1.0))
    sch = SimScheme(eps=0.05, small_jump_mode=mode, rng_seed=21)
    a = simulate_exits(k, region, x0, 6000, sch, backend="cython")
    b = simulate_exits(k, region, x0, 6000, sch, backend="python")
    assert a.meta["backend"] == "cython" and b.meta["backend"] == "python"
    se = math.hypot(a.tau.std(ddof=1), b.tau.std(ddof=1)) / math.sqrt(6000)
    assert abs(a.tau.mean() - b.tau.mean()) <= 4 * se
    assert stats.ks_2samp(a.tau, b.tau).pvalue > 1e-3
    for s in (a, b):
        # bridge-detected Gaussian crossings may end inside; jump exits never do
        assert not np.any(region.contains(s.exit_point[s.kind == 0]))


@cython
def test_compiled_exits_reproducible():
    k = JumpKernel(2, ScalingFunction.power(1.0))
    sch = SimScheme(eps=0.05, rng_seed=4)
    a = simulate_exits(k, Ball([0.0, 0.0], 1.0), [0.0, 0.0], 3000, sch, backend="cython")
    b = simulate_exits(k, Ball([0.0, 0.0], 1.0), [0.0, 0.0], 3000, sch, backend="cython")
    assert np.array_equal(a.tau, b.tau)


def test_pure_python_switch():
    code = "from iukit import _backend; print(_backend.BACKEND)"
    env = {**os.environ, "IUKIT_PURE_PYTHON": "1"}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_implementation_lookup():
    assert _backend.implementation("python").__name__.endswith("_corepy")
    with pytest.raises(ValueError):
        _backend.implementation("fortran")
