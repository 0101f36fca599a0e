import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from nodereg import _kernels, set_backend
from nodereg.linalg import (
    CsrMatrix, ShapeError, frobenius_row_norms, matmul, row_softmax, spmm,
    symmetric_eigenvalues, symmetric_eigh,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def dense_and_csr(draw, rows, cols):
    a = draw(hnp.arrays(np.float64, (rows, cols), elements=finite))
    keep = draw(hnp.arrays(np.bool_, (rows, cols)))
    return np.where(keep, a, 0.0)


@st.composite
def product_pair(draw):
    r, k, c = (draw(st.integers(0, 7)) for _ in range(3))
    a = dense_and_csr(draw, r, k)
    b = draw(hnp.arrays(np.float64, (k, c), elements=finite))
    return a, b


# --- CSR construction ---------------------------------------------------------

def test_from_coo_sums_duplicates_and_sorts():
    a = CsrMatrix.from_coo(2, 3, [1, 0, 1, 0], [2, 1, 2, 0], [1.0, 2.0, 3.0, 4.0])
    assert a.row_ptr.tolist() == [0, 2, 3]
    assert a.col_idx.tolist() == [0, 1, 2]
    assert a.values.tolist() == [4.0, 2.0, 4.0]


@pytest.mark.parametrize("kwargs", [
    dict(row_ptr=[1, 1], col_idx=[], values=[]),
    dict(row_ptr=[0, 2], col_idx=[1, 0], values=[1.0, 1.0]),
    dict(row_ptr=[0, 1], col_idx=[5], values=[1.0]),
    dict(row_ptr=[0, 1], col_idx=[0], values=[1.0, 2.0]),
])
def test_csr_rejects_non_canonical(kwargs):
    with pytest.raises(ValueError):
        CsrMatrix(1, 3, *(np.asarray(kwargs[k]) for k in ("row_ptr", "col_idx", "values")))


def test_from_coo_out_of_range():
    with pytest.raises(ValueError):
        CsrMatrix.from_coo(2, 2, [0], [2], [1.0])


@given(st.integers(0, 6), st.integers(0, 6), st.data())
def test_dense_round_trip(r, c, data):
    a = dense_and_csr(data.draw, r, c)
    m = CsrMatrix.from_dense(a)
    np.testing.assert_array_equal(m.to_dense(), a)
    assert m.row_ptr[0] == 0 and m.row_ptr[-1] == m.nnz
    assert np.all(np.diff(m.row_ptr) >= 0)
    np.testing.assert_array_equal(m.transpose().to_dense(), a.T)


# --- spmm / matmul ---------------------------------------------------------------

def test_spmm_examples(backend):
    b = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(spmm(CsrMatrix.identity(2), b), b)
    zero = CsrMatrix.from_coo(2, 2, [], [], [])
    np.testing.assert_array_equal(spmm(zero, b), np.zeros((2, 2)))
    half = CsrMatrix.from_dense(np.full((2, 2), 0.5))
    np.testing.assert_array_equal(spmm(half, np.eye(2)), np.full((2, 2), 0.5))


def test_spmm_dimension_mismatch():
    with pytest.raises(ShapeError):
        spmm(CsrMatrix.identity(3), np.ones((2, 2)))


@given(st.integers(0, 9), st.integers(0, 5), st.data())
def test_spmm_identity_property(n, c, data):
    b = data.draw(hnp.arrays(np.float64, (n, c), elements=finite))
    np.testing.assert_array_equal(spmm(CsrMatrix.identity(n), b), b)


@given(product_pair())
def test_spmm_matches_dense_on_every_backend(pair):
    a, b = pair
    csr = CsrMatrix.from_dense(a)
    expected = a @ b
    for name in _kernels.available_backends():
        prev = set_backend(name)
        try:
            got = spmm(csr, b)
        finally:
            set_backend(prev)
        assert got.shape == expected.shape
        np.testing.assert_allclose(got, expected, rtol=1e-12, atol=1e-9)


def test_spmm_non_contiguous_input(backend):
    b = np.arange(12.0).reshape(3, 4)[:, ::2]
    a = CsrMatrix.from_dense([[1.0, 0, 2.0], [0, 3.0, 0]])
    np.testing.assert_allclose(spmm(a, b), a.to_dense() @ b)


def test_matmul_examples():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(matmul(a, np.eye(2)), a)
    assert matmul([[1.0, 2.0]], [[3.0], [4.0]]).tolist() == [[11.0]]
    assert matmul(np.zeros((0, 3)), np.ones((3, 2))).shape == (0, 2)
    with pytest.raises(ShapeError):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


@given(st.integers(0, 2 ** 32 - 1))
def test_matmul_associative(seed):
    rng = np.random.default_rng(seed)
    a, b, c = rng.normal(size=(3, 4)), rng.normal(size=(4, 5)), rng.normal(size=(5, 2))
    np.testing.assert_allclose(matmul(matmul(a, b), c), matmul(a, matmul(b, c)), atol=1e-10)


# --- softmax and norms -----------------------------------------------------------

def test_row_softmax_examples():
    np.testing.assert_allclose(row_softmax([[0.0, 0.0, 0.0]]), [[1 / 3] * 3], atol=1e-15)
    big = row_softmax([[1000.0, 0.0]])
    assert np.all(np.isfinite(big)) and big[0, 0] == pytest.approx(1.0) and big[0, 1] < 1e-300
    np.testing.assert_allclose(row_softmax([[1.0, 2.0]]), [[0.26894, 0.73106]], atol=1e-5)


def test_row_softmax_rejects_nan():
    with pytest.raises(ValueError):
        row_softmax([[np.nan, 0.0]])


@given(hnp.arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)), elements=finite))
def test_row_softmax_is_a_distribution(z):
    p = row_softmax(z)
    assert np.all(p >= 0)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)


def test_row_norm_examples(backend):
    np.testing.assert_array_equal(frobenius_row_norms([[3.0, 4.0], [0.0, 0.0]]), [5.0, 0.0])
    assert frobenius_row_norms([[1.0, 1.0, 1.0, 1.0]])[0] == 2.0


@given(hnp.arrays(np.float64, st.tuples(st.integers(0, 6), st.integers(0, 6)), elements=finite))
def test_row_norms_match_numpy(z):
    np.testing.assert_allclose(frobenius_row_norms(z), np.linalg.norm(z, axis=1), rtol=1e-12)


# --- eigenvalues -----------------------------------------------------------------

def test_eigen_examples(backend):
    np.testing.assert_allclose(symmetric_eigenvalues(np.eye(3)), [1, 1, 1])
    np.testing.assert_allclose(symmetric_eigenvalues(np.diag([2.0, 5.0, 0.0])), [5, 2, 0])
    np.testing.assert_allclose(symmetric_eigenvalues([[2.0, 1.0], [1.0, 2.0]]), [3, 1], atol=1e-14)


@pytest.mark.parametrize("m", [np.ones((2, 3)), np.array([[1.0, 2.0], [0.0, 1.0]])])
def test_eigen_rejects_bad_input(m):
    with pytest.raises(ValueError):
        symmetric_eigenvalues(m)


@given(st.integers(1, 9), st.integers(0, 2 ** 32 - 1))
def test_eigen_recovers_known_spectrum(n, seed):
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    lam = np.sort(rng.uniform(-5, 5, size=n))[::-1]
    got = symmetric_eigenvalues(q @ np.diag(lam) @ q.T)
    np.testing.assert_allclose(got, lam, atol=1e-7)


@given(st.integers(2, 8), st.integers(0, 2 ** 32 - 1))
def test_eigen_backends_agree(n, seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, n))
    a = a + a.T
    ref = np.linalg.eigvalsh(a)[::-1]
    for name in _kernels.available_backends():
        prev = set_backend(name)
        try:
            vals, vecs = symmetric_eigh(a)
        finally:
            set_backend(prev)
        np.testing.assert_allclose(vals, ref, atol=1e-9 * max(1, np.abs(ref).max()))
        np.testing.assert_allclose(a @ vecs, vecs * vals, atol=1e-8)
        np.testing.assert_allclose(vecs.T @ vecs, np.eye(n), atol=1e-10)


def test_backend_switch_validates():
    with pytest.raises(ValueError):
        set_backend("fortran")
