"""Dense tensor algebra: contraction, matricization and the truncated factorizations used by every network routine"""

import logging
from typing import NamedTuple, Sequence

import numpy as np
import scipy.linalg

from .constants import (
    DEGENERACY_EXTRA,
    DEGENERACY_TOL,
    SYMMETRY_TOL,
)
from .exceptions import (
    NonFiniteError,
    SymmetryViolationError,
    TensorShapeError,
)

logger = logging.getLogger(__name__)


class Tensor():
    """ An immutable dense multi-index array.

        The elements are kept in a numpy array in row-major order with respect
        to the extents. A tensor whose imaginary parts are all exactly zero is
        stored as a real array, which every routine in this package treats as a
        fast path of the complex one.

        Parameters
        ----------
        array : array_like
            Nested sequence or numpy array holding the elements

        Returns
        -------
        Tensor
            An immutable tensor

        Example
        -------
            >>> t = Tensor([[1, 2], [3, 4]])
            >>> t.extents
            (2, 2)
    """

    def __init__(self, array):
        """Copies the elements, drops zero imaginary parts and freezes the buffer"""

        ##### Element Storage #####
        data = np.array(array)
        if data.ndim == 0:
            raise TensorShapeError("a tensor needs at least one index")
        if not np.all(np.isfinite(data)):
            raise NonFiniteError("tensor elements must be finite")

        self.is_real: bool = not np.iscomplexobj(data) or not np.any(data.imag)
        """True when all imaginary parts are exactly zero"""

        self.array: np.ndarray = np.ascontiguousarray(data.real if self.is_real else data, dtype=float if self.is_real else complex)
        """The element array, read only"""
        self.array.flags.writeable = False

    @property
    def extents(self) -> "tuple[int, ...]":
        """Extent of every index"""
        return self.array.shape

    @property
    def ndim(self) -> int:
        """Number of indices"""
        return self.array.ndim

    @property
    def elements(self) -> np.ndarray:
        """Flat complex view of the elements in row-major order"""
        return self.array.astype(complex).ravel()

    def __str__(self) -> str:
        return f"Tensor{self.extents}{'' if not self.is_real else ' real'}"

    def __repr__(self) -> str:
        return str(self)


class SvdResult(NamedTuple):
    """Outcome of a truncated singular value decomposition"""

    u: "Tensor | np.ndarray"
    """Left singular vectors, kept rank as the last index"""

    s: np.ndarray
    """Kept singular values in descending order"""

    v: "Tensor | np.ndarray"
    """Right singular vectors, kept rank as the first index"""

    discarded_weight: float
    """Squared weight of the dropped singular values relative to the total"""

    degeneracy_split: bool
    """True when the truncation cut through a degenerate multiplet"""


def contract(a: Tensor, b: Tensor, pairs: "Sequence[tuple[int, int]]") -> Tensor:
    """ Sums over the given index pairs of two tensors.

        Parameters
        ----------
        a, b : Tensor
            The tensors to contract
        pairs : list[tuple[int, int]]
            Pairs (index of a, index of b) to sum over

        Returns
        -------
        Tensor
            Uncontracted indices of ``a`` followed by those of ``b``, in their
            original order

        Example
        -------
            >>> contract(Tensor([[1, 2], [3, 4]]), Tensor([[0, 1], [1, 0]]), [(1, 0)]).array
            array([[2., 1.],
                   [4., 3.]])
    """
    a_axes = [i for i, _ in pairs]
    b_axes = [j for _, j in pairs]
    for axes, tensor, name in ((a_axes, a, "a"), (b_axes, b, "b")):
        if len(set(axes)) != len(axes):
            raise TensorShapeError(f"index of {name} repeated in contraction pairs")
        if any(k < 0 or k >= tensor.ndim for k in axes):
            raise TensorShapeError(f"index of {name} out of range in contraction pairs")
    for i, j in pairs:
        if a.extents[i] != b.extents[j]:
            raise TensorShapeError(f"extent mismatch between index {i} ({a.extents[i]}) and index {j} ({b.extents[j]})")
    result = np.tensordot(a.array, b.array, axes=(a_axes, b_axes))
    return Tensor(result if result.ndim else result.reshape(1))


def matricize(array: np.ndarray, row_indices: "Sequence[int]", col_indices: "Sequence[int]") -> np.ndarray:
    """Groups the row indices and the column indices of an array into a matrix"""
    row_indices, col_indices = list(row_indices), list(col_indices)
    if not row_indices or not col_indices:
        raise TensorShapeError("row and column index sets must be non-empty")
    if sorted(row_indices + col_indices) != list(range(array.ndim)):
        raise TensorShapeError("row and column indices must cover every index exactly once")
    rows = int(np.prod([array.shape[i] for i in row_indices]))
    return np.transpose(array, row_indices + col_indices).reshape(rows, -1)


def fix_gauge(u: np.ndarray, vh: np.ndarray) -> "tuple[np.ndarray, np.ndarray]":
    """Rotates each singular pair so the largest-magnitude entry of the left vector is real and positive"""
    pivots = np.argmax(np.abs(u), axis=0)
    entries = u[pivots, np.arange(u.shape[1])]
    phases = entries / np.where(np.abs(entries) > 0, np.abs(entries), 1.0)
    phases = np.where(np.abs(entries) > 0, phases, 1.0)
    return u * np.conj(phases)[None, :], vh * phases[:, None]


def truncated_svd(matrix: np.ndarray, max_rank: int, rel_cutoff: float = 0.0) -> SvdResult:
    """ Truncated, gauge-fixed singular value decomposition of a matrix.

        Singular values below ``rel_cutoff * s[0]`` are dropped and at most
        ``max_rank`` are kept, unless the boundary cuts a degenerate multiplet
        that fits within ``max_rank + 4``, in which case the multiplet is kept
        whole. At least one singular triplet is always returned.

        Parameters
        ----------
        matrix : np.ndarray
            Two-dimensional array
        max_rank : int
            Maximal kept rank
        rel_cutoff : float
            Relative singular value cutoff

        Returns
        -------
        SvdResult
            ``u`` of shape (rows, k), ``s`` of length k, ``v`` of shape (k, cols)
    """
    if max_rank < 1:
        raise TensorShapeError("max_rank must be positive")
    if not np.all(np.isfinite(matrix)):
        raise NonFiniteError("svd input contains non-finite values")
    try:
        u, s, vh = scipy.linalg.svd(matrix, full_matrices=False, lapack_driver='gesdd')
    except np.linalg.LinAlgError:
        u, s, vh = scipy.linalg.svd(matrix, full_matrices=False, lapack_driver='gesvd')

    ##### Kept Rank #####
    total = float(np.sum(s**2))
    above = int(np.count_nonzero(s > rel_cutoff * s[0])) if s[0] > 0 else 1
    keep = max(1, min(max_rank, above))
    split = False
    if keep < above:
        edge = keep
        while edge < above and s[keep - 1] - s[edge] <= DEGENERACY_TOL * s[0]:
            edge += 1
        if edge > keep:
            if edge <= max_rank + DEGENERACY_EXTRA:
                keep = edge
            else:
                split = True
                logger.debug("truncation at rank %d splits a degenerate multiplet of size %d", max_rank, edge - keep + 1)

    discarded = float(np.sum(s[keep:]**2)) / total if total > 0 else 0.0
    u, vh = fix_gauge(u[:, :keep], vh[:keep, :])
    return SvdResult(u, s[:keep], vh, discarded, split)


def svd_truncate(t: Tensor, row_indices: "Sequence[int]", col_indices: "Sequence[int]", max_rank: int, rel_cutoff: float = 0.0) -> SvdResult:
    """ Truncated singular value decomposition of a tensor across an index partition.

        Parameters
        ----------
        t : Tensor
            The tensor to factorize
        row_indices, col_indices : list[int]
            Partition of the indices of ``t`` into the two sides of the cut
        max_rank : int
            Maximal kept rank
        rel_cutoff : float
            Relative singular value cutoff

        Returns
        -------
        SvdResult
            ``u`` with the row extents followed by the kept rank, ``v`` with the
            kept rank followed by the column extents, both as Tensor

        Example
        -------
            >>> svd_truncate(Tensor(np.eye(4)), [0], [1], max_rank=4).s
            array([1., 1., 1., 1.])
    """
    matrix = matricize(t.array, row_indices, col_indices)
    result = truncated_svd(matrix, max_rank, rel_cutoff)
    rank = len(result.s)
    u = result.u.reshape([t.extents[i] for i in row_indices] + [rank])
    v = result.v.reshape([rank] + [t.extents[i] for i in col_indices])
    return SvdResult(Tensor(u), result.s, Tensor(v), result.discarded_weight, result.degeneracy_split)


def eigh_sym(m: "Tensor | np.ndarray") -> "tuple[np.ndarray, np.ndarray]":
    """ Eigen-decomposition of a real symmetric (or complex Hermitian) matrix.

        Parameters
        ----------
        m : Tensor or np.ndarray
            Square matrix whose deviation from its adjoint is below 1e-10 in max norm

        Returns
        -------
        tuple[np.ndarray, np.ndarray]
            Ascending eigenvalues and the orthonormal eigenvectors as columns

        Example
        -------
            >>> eigh_sym(np.diag([3.0, 1.0, 2.0]))[0]
            array([1., 2., 3.])
    """
    matrix = m.array if isinstance(m, Tensor) else np.asarray(m)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise TensorShapeError(f"eigh_sym needs a square matrix, got shape {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise NonFiniteError("eigh_sym input contains non-finite values")
    deviation = float(np.max(np.abs(matrix - matrix.conj().T))) if matrix.size else 0.0
    if deviation >= SYMMETRY_TOL:
        raise SymmetryViolationError(f"matrix asymmetry {deviation:.3e} exceeds {SYMMETRY_TOL:.0e}")
    hermitian = (matrix + matrix.conj().T) / 2
    if np.iscomplexobj(hermitian) and not np.any(hermitian.imag):
        hermitian = hermitian.real
    return scipy.linalg.eigh(hermitian)


def label_operands(operands: list, output: list) -> list:
    """ Interleaved contraction arguments with arbitrary hashable index labels mapped to integers.

        Parameters
        ----------
        operands : list
            Alternating arrays and lists of index labels
        output : list
            Labels of the result indices

        Returns
        -------
        list
            Arguments for ``opt_einsum.contract`` in the interleaved format

        Example
        -------
            >>> label_operands([np.eye(2), [("a", 0), ("b", 0)]], [("b", 0)])[1:]
            [[0, 1], [1]]
    """
    table: dict = {}
    converted = []
    for i, item in enumerate(operands):
        converted.append([table.setdefault(label, len(table)) for label in item] if i % 2 else item)
    converted.append([table.setdefault(label, len(table)) for label in output])
    return converted
