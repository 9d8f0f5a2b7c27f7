import io
from functools import reduce

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from blockade.errors import BasisError
from blockade.fock import (Boson, SparseOperator, TwoLevel, annihilation, build_basis,
                           commutator, creation, identity, lowering, number)


def dense_local(kind, n):
    """Reference local lowering matrix built independently of the package."""
    if kind == "twolevel":
        return np.array([[0, 1], [0, 0]], dtype=complex)
    return np.diag(np.sqrt(np.arange(1, n + 1)), 1).astype(complex)


def dense_embedded(sites, k):
    mats = []
    for idx, s in enumerate(sites):
        d = s.local_dim
        mats.append(dense_local(s.kind, s.cutoff) if idx == k else np.eye(d))
    return reduce(np.kron, mats)


site_st = st.one_of(st.integers(1, 3).map(Boson), st.just(TwoLevel()))


@pytest.mark.parametrize("sites, dim", [
    ([Boson(2), Boson(2)], 9),
    ([Boson(3), TwoLevel()], 8),
    ([Boson(2)] * 6, 729),
])
def test_dimension(sites, dim):
    assert build_basis(sites).dim == dim


def test_basis_errors():
    with pytest.raises(BasisError):
        build_basis([])
    with pytest.raises(BasisError, match="4096"):
        build_basis([Boson(3)] * 6, max_dim=1000)
    with pytest.raises(BasisError):
        Boson(0)


def test_ordering_last_site_fastest():
    b = build_basis([Boson(2), TwoLevel()])
    assert [b.state(k) for k in range(4)] == [(0, 0), (0, 1), (1, 0), (1, 1)]
    assert b.index((2, 1)) == 5


@given(st.lists(site_st, min_size=1, max_size=4))
def test_index_roundtrip(sites):
    b = build_basis(sites)
    for k in range(b.dim):
        assert b.index(b.state(k)) == k


def test_single_mode_ladder():
    b = build_basis([Boson(1)])
    np.testing.assert_array_equal(annihilation(b, 0).toarray(), [[0, 1], [0, 0]])
    b2 = build_basis([Boson(2)])
    a = annihilation(b2, 0)
    np.testing.assert_allclose((a.dag() @ a).toarray(), np.diag([0, 1, 2]), atol=1e-15)


def test_canonical_commutator_below_cutoff():
    b = build_basis([Boson(4)])
    a = annihilation(b, 0)
    c = commutator(a, a.dag()).toarray()
    # [a, a^dag] = 1 except on the top Fock state
    np.testing.assert_allclose(c[:4, :4], np.eye(4), atol=1e-14)
    assert abs(c[4, 4] - (-4)) < 1e-14


def test_number_commutator():
    b = build_basis([Boson(3), Boson(2)])
    a = annihilation(b, 0)
    N = number(b, 0)
    np.testing.assert_allclose(commutator(N, a).toarray(), -a.toarray(), atol=1e-14)


def test_two_level():
    b = build_basis([TwoLevel()])
    s = lowering(b, 0)
    np.testing.assert_array_equal(s.toarray(), [[0, 1], [0, 0]])
    np.testing.assert_array_equal((s.dag() @ s).toarray(), np.diag([0, 1]))
    assert (s @ s).nnz == 0


def test_wrong_site_kind():
    b = build_basis([Boson(2), TwoLevel()])
    with pytest.raises(BasisError):
        annihilation(b, 1)
    with pytest.raises(BasisError):
        lowering(b, 0)
    with pytest.raises(BasisError):
        annihilation(b, 5)


@settings(max_examples=30, deadline=None)
@given(st.lists(site_st, min_size=1, max_size=4), st.data())
def test_matches_kron_oracle(sites, data):
    b = build_basis(sites)
    k = data.draw(st.integers(0, len(sites) - 1))
    op = (annihilation if sites[k].is_boson else lowering)(b, k)
    np.testing.assert_allclose(op.toarray(), dense_embedded(sites, k), atol=0)


@given(st.lists(st.integers(1, 4), min_size=1, max_size=3), st.data())
def test_number_spectrum(cutoffs, data):
    b = build_basis([Boson(c) for c in cutoffs])
    k = data.draw(st.integers(0, len(cutoffs) - 1))
    eig = np.linalg.eigvalsh((creation(b, k) @ annihilation(b, k)).toarray())
    np.testing.assert_allclose(sorted(set(np.round(eig, 12))), range(cutoffs[k] + 1), atol=1e-12)


def test_disjoint_sites_commute():
    b = build_basis([Boson(2), Boson(3), TwoLevel()])
    ops = [annihilation(b, 0), creation(b, 1), lowering(b, 2)]
    for x in ops:
        for y in ops:
            if x is not y:
                assert commutator(x, y).nnz == 0


def random_op(basis, rng, density=0.2):
    d = basis.dim
    mask = rng.random((d, d)) < density
    vals = (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))) * mask
    r, c = np.nonzero(vals)
    return SparseOperator.from_entries(basis, r, c, vals[r, c])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_adjoint_properties(seed):
    rng = np.random.default_rng(seed)
    b = build_basis([Boson(2), TwoLevel()])
    X, Y = random_op(b, rng), random_op(b, rng)
    assert X.dag().dag() == X
    np.testing.assert_allclose((X @ Y).dag().toarray(), (Y.dag() @ X.dag()).toarray(), atol=1e-13)


def test_algebra_and_canonical_form():
    b = build_basis([Boson(2)])
    a = annihilation(b, 0)
    assert a @ identity(b) == a
    np.testing.assert_allclose((2 * a + a).toarray(), 3 * a.toarray())
    assert (a - a).nnz == 0  # exact zeros dropped
    op = SparseOperator.from_entries(b, [1, 0, 1], [2, 1, 2], [1.0, 2.0, 3.0])
    rows, cols, vals = op.entries()
    assert list(zip(rows, cols)) == [(0, 1), (1, 2)]
    assert vals[1] == 4.0
    other = build_basis([Boson(3)])
    with pytest.raises(BasisError):
        a + annihilation(other, 0)
    with pytest.raises(BasisError):
        SparseOperator.from_entries(b, [3], [0], [1.0])


def test_dump_load_roundtrip():
    b = build_basis([Boson(2), TwoLevel()])
    op = 0.3j * annihilation(b, 0) + lowering(b, 1).dag() * (1 / 3)
    buf = io.StringIO()
    op.dump(buf)
    assert buf.getvalue().startswith("# basis boson:2,twolevel dim 6")
    buf.seek(0)
    assert SparseOperator.load(b, buf) == op
