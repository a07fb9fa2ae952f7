"""Pytest file for the dense tensor algebra"""

import numpy as np
import pytest

from tn.exceptions import NonFiniteError, SymmetryViolationError, TensorShapeError
from tn.tensor import (
    Tensor,
    contract,
    eigh_sym,
    label_operands,
    matricize,
    svd_truncate,
    truncated_svd,
)


def test_tensor_real_fast_path():
    """Complex input with zero imaginary parts is stored as a real array"""
    t = Tensor(np.array([[1 + 0j, 2], [3, 4]]))
    assert t.is_real
    assert t.array.dtype == float
    assert t.extents == (2, 2)


def test_tensor_is_read_only():
    """The element buffer cannot be modified"""
    t = Tensor([1.0, 2.0])
    with pytest.raises(ValueError):
        t.array[0] = 5.0


def test_tensor_rejects_non_finite():
    """NaN elements are refused"""
    with pytest.raises(NonFiniteError):
        Tensor([1.0, np.nan])


def test_contract_matrix_product():
    """A single index pair is an ordinary matrix product"""
    a = Tensor([[1, 2], [3, 4]])
    b = Tensor([[0, 1], [1, 0]])
    assert np.allclose(contract(a, b, [(1, 0)]).array, [[2, 1], [4, 3]])


def test_contract_extent_mismatch():
    """Pairs with different extents raise"""
    with pytest.raises(TensorShapeError):
        contract(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))), [(1, 1), (0, 1)])


def test_matricize_grouping():
    """Rows follow the given index order"""
    array = np.arange(24).reshape(2, 3, 4)
    matrix = matricize(array, [2, 0], [1])
    assert matrix.shape == (8, 3)
    assert matrix[1 * 2 + 1, 2] == array[1, 2, 1]


def test_truncated_svd_identity_no_truncation():
    """The identity keeps every unit singular value"""
    result = svd_truncate(Tensor(np.eye(4)), [0], [1], max_rank=4)
    assert np.allclose(result.s, np.ones(4))
    assert result.discarded_weight == 0.0


def test_truncated_svd_discarded_weight():
    """Dropping singular values reports their relative squared weight"""
    result = truncated_svd(np.diag([3.0, 2.0, 1.0]), max_rank=2)
    assert np.allclose(result.s, [3.0, 2.0])
    assert abs(result.discarded_weight - 1.0 / 14.0) < 1e-14


def test_truncated_svd_keeps_degenerate_multiplet():
    """A cut through a multiplet that fits the slack keeps the whole multiplet"""
    result = truncated_svd(np.diag([2.0, 1.0, 1.0, 1.0, 0.5]), max_rank=2)
    assert len(result.s) == 4
    assert not result.degeneracy_split


def test_truncated_svd_gauge_is_deterministic():
    """The largest entry of every left vector is real and positive"""
    rng = np.random.default_rng(7)
    matrix = rng.normal(size=(6, 5)) + 1j * rng.normal(size=(6, 5))
    result = truncated_svd(matrix, max_rank=5)
    pivots = result.u[np.argmax(np.abs(result.u), axis=0), np.arange(5)]
    assert np.allclose(pivots.imag, 0.0)
    assert np.all(pivots.real > 0)
    assert np.allclose((result.u * result.s) @ result.v, matrix)


def test_eigh_sym_sorted():
    """Eigenvalues come in ascending order"""
    values, vectors = eigh_sym(np.diag([3.0, 1.0, 2.0]))
    assert np.allclose(values, [1.0, 2.0, 3.0])
    assert np.allclose(vectors.T @ vectors, np.eye(3))


def test_eigh_sym_rejects_asymmetric():
    """A visibly asymmetric matrix raises"""
    with pytest.raises(SymmetryViolationError):
        eigh_sym(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_label_operands_integers():
    """Hashable labels become consecutive integers shared across operands"""
    args = label_operands([np.eye(2), [("a", 0), ("b", 0)], np.eye(2), [("b", 0), "c"]], [("a", 0), "c"])
    assert args[1] == [0, 1]
    assert args[3] == [1, 2]
    assert args[4] == [0, 2]
