import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shapleypce.basis import (
    BasisTooLargeError,
    PceBasis,
    Support,
    all_subsets,
    classify_index,
    enumerate_indices,
    n_terms,
    support_of,
)
from shapleypce.orthopoly import Normal, Uniform
from shapleypce.surrogate import tensor_grid


def test_two_by_two_index_set():
    idx = enumerate_indices(2, 2)
    assert len(idx) == 6
    assert idx[0] == (0, 0)
    assert set(idx) == {(0, 0), (1, 0), (0, 1), (1, 1), (2, 0), (0, 2)}
    # graded: total degree never decreases
    assert [sum(a) for a in idx] == sorted(sum(a) for a in idx)
    assert idx == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]


def test_count_three_nine():
    assert len(enumerate_indices(3, 9)) == 220


def test_constant_only():
    assert enumerate_indices(1, 0) == [(0,)]


@pytest.mark.parametrize("m", range(1, 7))
def test_counts_match_formula(m):
    for p in range(10):
        idx = enumerate_indices(m, p)
        assert len(idx) == n_terms(m, p) == math.factorial(m + p) // (math.factorial(m) * math.factorial(p))
        assert len(set(idx)) == len(idx)


def test_cap_rejects_large_basis():
    with pytest.raises(BasisTooLargeError):
        enumerate_indices(10, 10, max_terms=1000)
    with pytest.raises(ValueError):
        enumerate_indices(0, 2)
    with pytest.raises(ValueError):
        enumerate_indices(2, -1)


def test_classify_examples():
    # variable subsets are 0-based: {x1, x3} is (0, 2)
    assert classify_index((2, 0, 1), (0, 2)) is Support.EXACT
    assert classify_index((2, 0, 0), (0, 2)) is Support.PROPER_SUBSET
    assert classify_index((0, 1, 0), (0, 2)) is Support.OUTSIDE


def test_zero_index_classification():
    z = (0, 0, 0)
    assert classify_index(z, ()) is Support.EXACT
    for u in all_subsets(3):
        assert classify_index(z, u) is Support.PROPER_SUBSET


@settings(max_examples=50, deadline=None)
@given(m=st.integers(1, 5), p=st.integers(0, 6))
def test_supports_partition_the_basis(m, p):
    idx = enumerate_indices(m, p)
    subsets = all_subsets(m, include_empty=True)
    total = 0
    for alpha in idx:
        hits = [u for u in subsets if classify_index(alpha, u) is Support.EXACT]
        assert hits == [support_of(alpha)]
    for u in subsets:
        total += sum(classify_index(a, u) is Support.EXACT for a in idx)
    assert total == len(idx)


def test_subset_members_cover_positions():
    b = PceBasis([Uniform(-1, 1)] * 3, 4)
    seen = np.concatenate(list(b.subset_members.values()))
    assert sorted(seen.tolist()) == list(range(len(b)))
    assert b.subset_members[()].tolist() == [0]


def test_eval_multivariate_examples():
    b = PceBasis([Uniform(-1, 1)] * 2, 3)
    assert b.eval_multivariate((0, 0), (0.3, -0.9)) == 1.0
    assert b.eval_multivariate((1, 1), (0.5, -0.4)) == pytest.approx(-0.2, abs=1e-15)
    assert b.eval_multivariate((2, 0), (1.0, 0.123)) == 1.0


def test_norms_are_products():
    b = PceBasis([Uniform(0, 1), Normal(0, 1)], 3)
    for alpha, nrm in zip(b.indices, b.norms):
        assert nrm == pytest.approx((1 / (2 * alpha[0] + 1)) * math.factorial(alpha[1]), rel=1e-15)


@pytest.mark.parametrize("dists", [
    [Uniform(-1, 1)] * 3,
    [Uniform(0, 2), Normal(1, 3), Uniform(-5, 5)],
])
def test_multivariate_orthogonality(dists):
    b = PceBasis(dists, 5)
    z, w = tensor_grid(dists, 6)
    psi = b.design_matrix(z)
    gram = (psi * w[:, None]).T @ psi
    scale = np.sqrt(np.outer(b.norms, b.norms))
    off = (gram - np.diag(np.diag(gram))) / scale
    assert np.abs(off).max() <= 1e-11
    np.testing.assert_allclose(np.diag(gram), b.norms, rtol=1e-11)


def test_design_matrix_matches_pointwise_eval():
    b = PceBasis([Uniform(-1, 1), Normal(0, 1)], 3)
    rng = np.random.default_rng(0)
    z = b.sample_standard(rng, 5)
    psi = b.design_matrix(z)
    for r in range(5):
        for k, alpha in enumerate(b.indices):
            assert psi[r, k] == pytest.approx(b.eval_multivariate(alpha, z[r]), rel=1e-14, abs=1e-14)


def test_explicit_indices_validated():
    d = [Uniform(-1, 1)] * 2
    PceBasis(d, 2, indices=[(0, 0), (1, 0), (0, 2)])
    with pytest.raises(ValueError):
        PceBasis(d, 2, indices=[(1, 0), (0, 0)])
    with pytest.raises(ValueError):
        PceBasis(d, 2, indices=[(0, 0), (1, 0), (1, 0)])
    with pytest.raises(ValueError):
        PceBasis(d, 2, indices=[(0, 0), (2, 1)])


def test_physical_round_trip():
    b = PceBasis.uniform([(2.5, 5.5), (-np.pi, np.pi)], 2)
    x = np.array([[4.0, 0.0], [5.5, np.pi]])
    np.testing.assert_allclose(b.to_standard(x), [[0.0, 0.0], [1.0, 1.0]], atol=1e-15)
    np.testing.assert_allclose(b.to_physical(b.to_standard(x)), x, atol=1e-15)
