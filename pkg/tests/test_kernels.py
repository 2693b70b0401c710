import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tailflow import kernels
from tailflow.kernels import backends

IMPLS = backends()
NAMES = sorted(IMPLS)


def brute_inversions(seq):
    return sum(1 for i, j in itertools.combinations(range(len(seq)), 2) if seq[i] > seq[j])


def brute_cross(a, b):
    return float(sum(np.linalg.norm(x - y) for x in a for y in b))


def test_backend_names():
    assert kernels.BACKEND in IMPLS
    assert "python" in IMPLS


@pytest.mark.parametrize("name", NAMES)
def test_inversion_examples(name):
    f = IMPLS[name].count_inversions
    assert f(np.array([], dtype=np.int64)) == 0
    assert f(np.array([3], dtype=np.int64)) == 0
    assert f(np.arange(10, dtype=np.int64)) == 0
    assert f(np.arange(10, dtype=np.int64)[::-1].copy()) == 45
    assert f(np.array([2, 2, 1, 1], dtype=np.int64)) == 4


@pytest.mark.parametrize("name", NAMES)
@given(arrays(np.int64, st.integers(0, 60), elements=st.integers(-5, 5)))
@settings(max_examples=150, deadline=None)
def test_inversions_match_brute_force(name, seq):
    assert IMPLS[name].count_inversions(seq) == brute_inversions(seq.tolist())


@pytest.mark.parametrize("name", NAMES)
def test_inversions_large_random(name):
    seq = np.random.default_rng(0).integers(0, 1000, 5000)
    ref = IMPLS["python"].count_inversions(seq)
    assert IMPLS[name].count_inversions(seq) == ref
    # the inversion count of a random permutation has mean n(n-1)/4
    perm = np.random.default_rng(1).permutation(4000)
    assert abs(IMPLS[name].count_inversions(perm) / (4000 * 3999 / 4) - 1) < 0.02


@pytest.mark.parametrize("name", NAMES)
@given(st.integers(1, 12), st.integers(1, 12), st.integers(1, 4), st.integers(0, 10_000))
@settings(max_examples=60, deadline=None)
def test_distance_sums_match_brute_force(name, n, m, d, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal((n, d)), rng.standard_normal((m, d))
    impl = IMPLS[name]
    assert impl.pairwise_distance_sum(a, b) == pytest.approx(brute_cross(a, b), rel=1e-12)
    within = brute_cross(a, a) / 2
    assert impl.pairwise_distance_sum_within(a) == pytest.approx(within, rel=1e-12, abs=1e-12)


def test_backends_agree_on_large_input():
    rng = np.random.default_rng(2)
    a, b = rng.standard_normal((3000, 5)), rng.standard_normal((2500, 5))
    vals = [IMPLS[n].pairwise_distance_sum(a, b) for n in NAMES]
    assert all(v == pytest.approx(vals[0], rel=1e-12) for v in vals)
    vals = [IMPLS[n].pairwise_distance_sum_within(a) for n in NAMES]
    assert all(v == pytest.approx(vals[0], rel=1e-12) for v in vals)


def test_pure_python_switch():
    import subprocess
    import sys

    code = "from tailflow import kernels; print(kernels.BACKEND)"
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True,
                         env={"TAILFLOW_PURE_PYTHON": "1", "PATH": ""}, check=True)
    assert out.stdout.strip() == "python"
