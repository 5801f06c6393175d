"""Tests for implicit/explicit tensor contractions, objective, and gradient.

The explicit dense tensor and central finite differences serve as the two
independent oracles here; everything the fast implicit route computes is
checked against at least one of them.
"""

import itertools
import math

import numpy as np
import pytest

from tpi import (
    ComponentMatrix,
    DimensionMismatchError,
    InvalidDimensionError,
    contract_explicit,
    contract_implicit,
    gradient,
    materialize_tensor,
    objective,
    sample_components,
)


def _abs_scale(T, x):
    """Contraction of |T| with |x|: the natural error scale of the sum.

    Output-relative error is meaningless near cancellation points, so all
    equivalence checks normalize by this instead.
    """
    out = np.abs(T.entries)
    ax = np.abs(x)
    for _ in range(T.order - 1):
        out = out @ ax
    return np.maximum(out, 1e-300)


def test_explicit_tensor_is_symmetric():
    # Entries are products accumulated in index order, so permuted axes may
    # differ by reassociation rounding -- symmetric to machine precision.
    A = sample_components(3, 3, m=2, seed=2)
    T = materialize_tensor(A)
    scale = np.max(np.abs(T.entries))
    rng = np.random.default_rng(0)
    for _ in range(10):
        perm = rng.permutation(T.order)
        diff = np.max(np.abs(T.entries - np.transpose(T.entries, perm)))
        assert diff < 1e-14 * scale


def test_explicit_matches_outer_product_sum():
    # Spot-check one entry against the defining sum over components.
    A = sample_components(5, 4, m=2, seed=9)
    T = materialize_tensor(A)
    idx = (0, 1, 2, 3)
    want = sum(a[0] * a[1] * a[2] * a[3] for a in A.entries)
    assert abs(T.entries[idx] - want) < 1e-14


def test_implicit_matches_explicit_small():
    rng = np.random.default_rng(7)
    for m in (2, 3):
        for d in (2, 3):
            for k in (1, 4):
                A = sample_components(k, d, m=m, seed=100 * m + 10 * d + k)
                T = materialize_tensor(A)
                for _ in range(5):
                    x = rng.standard_normal(d)
                    fast = contract_implicit(A, x)
                    slow = contract_explicit(T, x)
                    err = np.max(np.abs(fast - slow) / _abs_scale(T, x))
                    assert err < 1e-12


def test_single_component_closed_form():
    # One component: contraction is <a, x>^(2m-1) a, objective is <a, x>^(2m).
    rng = np.random.default_rng(4)
    a = rng.standard_normal(6)
    x = rng.standard_normal(6)
    A = ComponentMatrix(entries=a[None, :], k=1, d=6, m=2, seed=0)
    ax = float(a @ x)
    np.testing.assert_allclose(contract_implicit(A, x), ax**3 * a, rtol=1e-12)
    assert abs(objective(A, x) - ax**4) < 1e-12 * abs(ax**4)
    np.testing.assert_allclose(gradient(A, x), 4 * ax**3 * a, rtol=1e-12)


def test_unit_basis_example():
    # A single component e1 with x = e1: S = 1 and grad S = 4 e1 exactly.
    d = 3
    A = ComponentMatrix(entries=np.eye(1, d), k=1, d=d, m=2, seed=0)
    x = np.eye(1, d)[0]
    assert objective(A, x) == 1.0
    assert np.array_equal(gradient(A, x), 4.0 * x)
    assert np.array_equal(contract_implicit(A, x), x)


def test_zero_vector_maps_to_zero():
    A = sample_components(6, 5, seed=1)
    z = np.zeros(5)
    assert objective(A, z) == 0.0
    assert np.array_equal(contract_implicit(A, z), z)
    assert np.array_equal(gradient(A, z), z)


def test_objective_scale_law():
    # S(c x) = c^(2m) S(x).
    rng = np.random.default_rng(12)
    for m in (2, 3):
        A = sample_components(9, 7, m=m, seed=m)
        x = rng.standard_normal(7)
        for c in (2.0, -1.5, 0.25):
            got = objective(A, c * x)
            want = c ** (2 * m) * objective(A, x)
            assert abs(got - want) < 1e-12 * abs(want)


def test_contraction_is_odd_in_x():
    # (2m-1) is odd, so negating x negates the contraction bit-for-bit.
    A = sample_components(11, 6, seed=8)
    x = np.random.default_rng(3).standard_normal(6)
    assert np.array_equal(contract_implicit(A, -x), -contract_implicit(A, x))


def test_objective_matches_compensated_sum():
    # Independent accumulation of the same terms with math.fsum.
    A = sample_components(5000, 40, seed=21)
    x = np.random.default_rng(5).standard_normal(40)
    y = A.entries @ x
    want = math.fsum(float(v) ** 4 for v in y)
    got = objective(A, x)
    assert abs(got - want) < 1e-12 * abs(want)


def test_gradient_matches_finite_differences():
    # Central differences at h = 1e-5 on a handful of random points.
    A = sample_components(11, 7, seed=13)
    rng = np.random.default_rng(6)
    h = 1e-5
    for _ in range(5):
        x = rng.standard_normal(7)
        g = gradient(A, x)
        fd = np.empty(7)
        for j in range(7):
            e = np.zeros(7)
            e[j] = h
            fd[j] = (objective(A, x + e) - objective(A, x - e)) / (2 * h)
        scale = max(np.linalg.norm(g), 1.0)
        assert np.linalg.norm(g - fd) / scale < 1e-7


def test_materialize_respects_entry_cap():
    # d^(2m) = 11^6 > 1e6 must be refused; 10^6 = 1e6 is the last allowed.
    A_big = sample_components(1, 11, m=3, seed=0)
    with pytest.raises(InvalidDimensionError):
        materialize_tensor(A_big)
    A_edge = sample_components(1, 10, m=3, seed=0)
    T = materialize_tensor(A_edge)
    assert T.entries.size == 1_000_000
    assert T.order == 6


def test_dimension_mismatch_rejected():
    A = sample_components(4, 5, seed=3)
    T = materialize_tensor(A)
    bad = np.zeros(6)
    for fn in (lambda: contract_implicit(A, bad),
               lambda: objective(A, bad),
               lambda: gradient(A, bad),
               lambda: contract_explicit(T, bad)):
        with pytest.raises(DimensionMismatchError):
            fn()


def test_objective_equals_explicit_full_contraction():
    # S(x) = <T, x^(x) 2m>: contract the dense tensor all the way down.
    for m in (2, 3):
        A = sample_components(6, 3, m=m, seed=m + 40)
        T = materialize_tensor(A)
        x = np.random.default_rng(m).standard_normal(3)
        full = T.entries
        for _ in range(T.order):
            full = full @ x
        want = objective(A, x)
        assert abs(full - want) < 1e-12 * max(abs(want), 1.0)
