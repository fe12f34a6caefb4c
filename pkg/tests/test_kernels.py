import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import ndimage
from scipy.optimize import linprog

from glvortex import _kernels_py, kernels

BACKENDS = [_kernels_py]
try:
    from glvortex import _kernels
    BACKENDS.append(_kernels)
except ImportError:  # pragma: no cover - extension not built
    pass


@pytest.mark.parametrize("impl", BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
@given(mask=arrays(bool, st.tuples(st.integers(1, 12), st.integers(1, 12))))
def test_label4_matches_ndimage(impl, mask):
    labels, count = impl.label4(mask)
    ref, nref = ndimage.label(mask)  # default structure is 4-connectivity
    assert count == nref
    assert np.array_equal(labels == 0, ~mask)
    # same partition, numbered by first row-major pixel
    seen = []
    for lab in labels.ravel():
        if lab and lab not in seen:
            seen.append(lab)
    assert seen == list(range(1, count + 1))
    for k in range(1, count + 1):
        assert len(np.unique(ref[labels == k])) == 1


def _random_flow_problem(rng, n=7, m=18):
    src = rng.integers(0, n, m)
    dst = rng.integers(0, n, m)
    keep = src != dst
    src, dst = src[keep], dst[keep]
    # a ring in both directions keeps the problem feasible
    ring = np.arange(n)
    src = np.r_[src, ring, (ring + 1) % n]
    dst = np.r_[dst, (ring + 1) % n, ring]
    cost = rng.integers(0, 6, src.size)
    supply = rng.normal(size=n)
    supply -= supply.mean()
    return n, src, dst, cost, supply


def _lp_cost(n, src, dst, cost, supply):
    A = np.zeros((n, src.size))
    A[src, np.arange(src.size)] += 1
    A[dst, np.arange(src.size)] -= 1
    res = linprog(cost, A_eq=A, b_eq=supply, bounds=(0, None), method="highs-ipm")
    return res.fun


@pytest.mark.parametrize("impl", BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
@pytest.mark.parametrize("seed", range(12))
def test_network_simplex_optimal_against_lp(impl, seed):
    n, src, dst, cost, supply = _random_flow_problem(np.random.default_rng(seed))
    flow, price, infeas, _ = impl.network_simplex(n, src, dst, cost, supply)
    assert infeas < 1e-9
    assert np.all(flow >= -1e-12)
    div = np.zeros(n)
    np.add.at(div, src, flow)
    np.add.at(div, dst, -flow)
    assert np.allclose(div, supply, atol=1e-9)
    assert flow @ cost == pytest.approx(_lp_cost(n, src, dst, cost, supply), abs=1e-7)
    # dual feasibility and complementary slackness
    price = np.asarray(price, float)
    red = cost - (price[src] - price[dst])
    assert red.min() >= -1e-9
    assert np.all(np.abs(red[flow > 1e-9]) < 1e-9)
    assert price @ supply == pytest.approx(flow @ cost, abs=1e-7)


def test_backends_agree_on_objective():
    if len(BACKENDS) < 2:
        pytest.skip("compiled kernels not built")
    rng = np.random.default_rng(5)
    for _ in range(10):
        prob = _random_flow_problem(rng, n=15, m=60)
        a = BACKENDS[0].network_simplex(*prob)
        b = BACKENDS[1].network_simplex(*prob)
        assert a[0] @ prob[3] == pytest.approx(b[0] @ prob[3], abs=1e-8)


def test_rejects_negative_costs():
    with pytest.raises(ValueError):
        kernels.network_simplex(2, np.array([0]), np.array([1]), np.array([-1]), np.array([1.0, -1.0]))


def test_pure_python_selected_by_environment():
    env = dict(os.environ, GLVORTEX_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from glvortex import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
