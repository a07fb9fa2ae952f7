"""Exact finite-torus backend: statevectors, reduced density matrices, structure factors and global operators"""

import logging
import math
from typing import Literal, NamedTuple, Sequence

import numpy as np
import opt_einsum as oe
import scipy.sparse
import scipy.sparse.linalg
from tqdm import tqdm

from .basis import (
    Momentum,
    OperatorBasis,
    PauliSum,
    check_hermitian,
)
from .constants import (
    HERMITIAN_TOL,
    MAX_FULL_SPECTRUM_DIM,
    MAX_INTERMEDIATE_SIZE,
    MAX_RDM_SITES,
    MAX_STATEVECTOR_DIM,
    PAULIS,
    ZERO_MODE_TOL,
)
from .exceptions import (
    BasisError,
    ConvergenceError,
    MemoryBudgetError,
    SymmetryViolationError,
    TensorShapeError,
    UnsupportedMomentumError,
)
from .extraction import (
    StructureFactorMatrix,
    assemble,
)
from .models import (
    FiniteTorus,
    PepsUnitCell,
)
from .tensor import (
    eigh_sym,
    label_operands,
)

logger = logging.getLogger(__name__)


##### Statevector #####

def _row_tensor(peps: PepsUnitCell, y: int, lx: int) -> np.ndarray:
    """Single-layer ring of one torus row as (physical, up bonds, down bonds)"""
    operands = []
    for x in range(lx):
        operands += [peps.array(x, y), [("s", x), ("h", x), ("u", x), ("h", (x + 1) % lx), ("d", x)]]
    output = [("s", x) for x in range(lx)] + [("u", x) for x in range(lx)] + [("d", x) for x in range(lx)]
    symbols = label_operands(operands, output)
    row = oe.contract(*symbols)
    physical = peps.physical_dim ** lx
    ups = int(np.prod([peps.site(x, y).extents[2] for x in range(lx)]))
    return row.reshape(physical, ups, -1)


def _check_torus(peps: PepsUnitCell, torus: FiniteTorus):
    """Raises when the torus does not tile the unit cell or has another physical dimension"""
    if torus.lx % peps.cell_width or torus.ly % peps.cell_height:
        raise TensorShapeError(f"torus {torus} is not tiled by the {peps.cell_width}x{peps.cell_height} unit cell")
    if torus.d != peps.physical_dim:
        raise TensorShapeError(f"torus physical dimension {torus.d} differs from the PEPS ({peps.physical_dim})")


def contract_torus_statevector(peps: PepsUnitCell, torus: FiniteTorus) -> np.ndarray:
    """ Exact amplitudes of a PEPS on a periodic torus.

        Rows are contracted into periodic row tensors, stacked into a top and
        a bottom strip, and the two strips are traced together.

        Parameters
        ----------
        peps : PepsUnitCell
            The state
        torus : FiniteTorus
            Torus tiled by the unit cell

        Returns
        -------
        np.ndarray
            Unnormalized amplitudes of length d^N, site n = y·Lx + x being the
            n-th tensor factor

        Example
        -------
            >>> psi = contract_torus_statevector(build_ising_peps(0.0), FiniteTorus(2, 2))
            >>> np.allclose(psi, psi[0])
            True
    """
    _check_torus(peps, torus)
    if torus.dimension > MAX_STATEVECTOR_DIM:
        raise MemoryBudgetError(f"statevector dimension {torus.dimension} exceeds {MAX_STATEVECTOR_DIM}")
    rows = [_row_tensor(peps, y, torus.lx) for y in range(torus.ly)]
    if torus.ly == 1:
        return np.einsum('paa->p', rows[0])

    ##### Top And Bottom Strips #####
    half = torus.ly // 2
    strips = []
    for block in (rows[:half], rows[half:]):
        strip = block[0]
        for row in block[1:]:
            if strip.shape[0] * row.shape[0] * strip.shape[1] * row.shape[2] > MAX_INTERMEDIATE_SIZE:
                raise MemoryBudgetError("row strip exceeds the intermediate size budget")
            strip = np.einsum('pab,qbc->pqac', strip, row).reshape(strip.shape[0] * row.shape[0], strip.shape[1], row.shape[2])
        strips.append(strip)
    top, bottom = strips
    return np.einsum('pab,qba->pq', top, bottom).reshape(-1)


def rdm_from_statevector(state: np.ndarray, torus: FiniteTorus, sites: "Sequence[int]") -> np.ndarray:
    """Normalized reduced density matrix of the given sites, ordered as listed"""
    sites = list(sites)
    psi = np.asarray(state).reshape((torus.d,) * torus.num_sites)
    moved = np.moveaxis(psi, sites, range(len(sites))).reshape(torus.d ** len(sites), -1)
    rho = moved @ moved.conj().T
    rho = (rho + rho.conj().T) / 2
    return rho / np.trace(rho).real


##### Double-Layer Contraction #####

def _double_layer(peps: PepsUnitCell, x: int, y: int, open_legs: bool = False) -> np.ndarray:
    """Ket and bra layers fused per leg as (ket, bra); physical indices kept when open"""
    a = peps.array(x, y)
    d, l, u, r, dn = a.shape
    if open_legs:
        fused = oe.contract('iabcd,jefgh->ijaebfcgdh', a, a.conj())
        return fused.reshape(d, d, l * l, u * u, r * r, dn * dn)
    fused = oe.contract('sabcd,sefgh->aebfcgdh', a, a.conj())
    return fused.reshape(l * l, u * u, r * r, dn * dn)


def _row_transfer(peps: PepsUnitCell, y: int, lx: int) -> np.ndarray:
    """Double-layer ring of one row as a matrix from up bonds to down bonds, scaled to unit max"""
    operands = []
    for x in range(lx):
        operands += [_double_layer(peps, x, y), [("h", x), ("u", x), ("h", (x + 1) % lx), ("d", x)]]
    output = [("u", x) for x in range(lx)] + [("d", x) for x in range(lx)]
    transfer = oe.contract(*label_operands(operands, output))
    ups = int(np.prod(transfer.shape[:lx]))
    transfer = transfer.reshape(ups, -1)
    return transfer / np.max(np.abs(transfer))


def rdm_on_support(
    peps: PepsUnitCell,
    torus: FiniteTorus,
    sites: "Sequence[int]",
    state: "np.ndarray | None" = None,
) -> np.ndarray:
    """ Normalized reduced density matrix of a few torus sites.

        The statevector is used when it fits the memory budget; otherwise the
        double-layer network is contracted with plain rows merged into
        transfer blocks and open sites kept as individual tensors.

        Parameters
        ----------
        peps : PepsUnitCell
            The state
        torus : FiniteTorus
            Torus tiled by the unit cell
        sites : list[int]
            Distinct site indices, at most four on the double-layer path
        state : np.ndarray, optional
            Precomputed statevector

        Returns
        -------
        np.ndarray
            Hermitian matrix of trace one, indices ordered like ``sites``
    """
    sites = list(sites)
    if len(set(sites)) != len(sites):
        raise TensorShapeError("reduced density matrix sites must be distinct")
    _check_torus(peps, torus)
    if state is not None or torus.dimension <= MAX_STATEVECTOR_DIM:
        if state is None:
            state = contract_torus_statevector(peps, torus)
        return rdm_from_statevector(state, torus, sites)

    if len(sites) > MAX_RDM_SITES:
        raise MemoryBudgetError(f"double-layer reduced density matrices support at most {MAX_RDM_SITES} sites")
    if torus.lx < 2 or torus.ly < 2:
        raise TensorShapeError("the double-layer contraction needs at least two rows and columns")
    bond = max(peps.max_bond_dim() ** 2, 1)
    if bond ** (2 * torus.lx) > MAX_INTERMEDIATE_SIZE:
        raise MemoryBudgetError(f"row transfer matrices of a {torus} torus exceed the intermediate size budget")

    ##### Open Rows And Plain Blocks #####
    lx, ly = torus.lx, torus.ly
    coords = {s: torus.coords(s) for s in sites}
    open_rows = sorted({y for _, y in coords.values()})
    operands = []
    start = open_rows[0]
    order = [(start + i) % ly for i in range(ly)]
    block: "list[int]" = []

    def flush(rows: "list[int]"):
        if not rows:
            return
        matrix = _row_transfer(peps, rows[0], lx)
        for row in rows[1:]:
            matrix = matrix @ _row_transfer(peps, row, lx)
            matrix = matrix / np.max(np.abs(matrix))
        up_dims = [peps.site(x, rows[0]).extents[2] ** 2 for x in range(lx)]
        down_dims = [peps.site(x, rows[-1]).extents[4] ** 2 for x in range(lx)]
        operands.extend([matrix.reshape(up_dims + down_dims),
                         [("v", (rows[0] - 1) % ly, x) for x in range(lx)] + [("v", rows[-1], x) for x in range(lx)]])

    for y in order:
        if y not in open_rows:
            block.append(y)
            continue
        flush(block)
        block = []
        for x in range(lx):
            n = torus.site_index(x, y)
            legs = [("h", y, x), ("v", (y - 1) % ly, x), ("h", y, (x + 1) % lx), ("v", y, x)]
            if n in coords:
                operands.extend([_double_layer(peps, x, y, open_legs=True), [("ket", n), ("bra", n)] + legs])
            else:
                operands.extend([_double_layer(peps, x, y), legs])
    flush(block)

    output = [("ket", n) for n in sites] + [("bra", n) for n in sites]
    rho = oe.contract(*label_operands(operands, output), optimize='auto-hq')
    dim = peps.physical_dim ** len(sites)
    rho = rho.reshape(dim, dim)
    rho = (rho + rho.conj().T) / 2
    return rho / np.trace(rho).real


##### Exact Structure Factor #####

def _site_stacks(basis: OperatorBasis) -> "tuple[np.ndarray, np.ndarray]":
    """Single-site stacks (μ, row, col) and products (μ, ν, row, col) of two single-site matrices"""
    stack = basis.site_stack
    products = np.einsum('mab,nbc->nmac', stack, stack)
    return stack, products


def _pair_correlations(rho: np.ndarray, merged: "list[int]", a_sites: "list[int]", b_sites: "list[int]", basis: OperatorBasis) -> np.ndarray:
    """⟨ô^α ô^β⟩ for every pair of product strings with α on a_sites and β on b_sites"""
    k, d = basis.geometry.k, basis.geometry.d
    m = len(merged)
    stack, products = _site_stacks(basis)
    tensor = rho.reshape((d,) * (2 * m))
    ket = list(range(m))
    bra = list(range(m, 2 * m))
    alpha = list(range(2 * m, 2 * m + k))
    beta = list(range(2 * m + k, 2 * m + 2 * k))
    operands = [tensor, ket + bra]
    for position, site in enumerate(merged):
        if site in a_sites and site in b_sites:
            operands += [products, [beta[b_sites.index(site)], alpha[a_sites.index(site)], bra[position], ket[position]]]
        elif site in a_sites:
            operands += [stack, [alpha[a_sites.index(site)], bra[position], ket[position]]]
        else:
            operands += [stack, [beta[b_sites.index(site)], bra[position], ket[position]]]
    operands.append(alpha + beta)
    n = (d * d) ** k
    return oe.contract(*operands).reshape(n, n)


def _placed_sites(torus: FiniteTorus, basis: OperatorBasis, x: int, y: int) -> "list[int]":
    """Torus sites of the support translated to (x, y)"""
    sites = [torus.site_index(x + ox, y + oy) for ox, oy in basis.geometry.offsets]
    if len(set(sites)) != len(sites):
        raise BasisError(f"the {basis.geometry.name} support wraps onto itself on a {torus} torus")
    return sites


def exact_structure_factor(
    peps: PepsUnitCell,
    torus: FiniteTorus,
    basis: OperatorBasis,
    q: Momentum,
    method: Literal["auto", "rdm", "statevector"] = "auto",
    state: "np.ndarray | None" = None,
    progress: bool = False,
) -> StructureFactorMatrix:
    """ Exact static structure factor matrix of a translation invariant PEPS on a torus.

        S_αβ = Σ_x e^{-iq·x} [⟨ô^α_x ô^β_0⟩ - ⟨ô^α_x⟩⟨ô^β_0⟩]. The reduced density
        matrix path pairs one merged-support density matrix per displacement
        against all product strings at once; the statevector path applies the
        basis elements to the state directly.

        Parameters
        ----------
        peps : PepsUnitCell
            The state
        torus : FiniteTorus
            Torus tiled by the unit cell
        basis : OperatorBasis
            Operator basis on a support that fits the torus
        q : Momentum
            Momentum commensurate with the torus
        method : Literal["auto", "rdm", "statevector"]
            Evaluation path
        state : np.ndarray, optional
            Precomputed statevector
        progress : bool
            Show a progress bar over displacements or elements

        Returns
        -------
        StructureFactorMatrix
            Raw and symmetrized matrices with quality metrics
    """
    if not q.commensurate_with(torus.lx, torus.ly):
        raise UnsupportedMomentumError(f"momentum {q} is incommensurate with the {torus} torus")
    if basis.geometry.d != peps.physical_dim:
        raise BasisError("basis and PEPS have different physical dimensions")
    if method == "auto":
        method = "rdm" if basis.num_product <= 1024 else "statevector"
    if state is None and torus.dimension <= MAX_STATEVECTOR_DIM:
        state = contract_torus_statevector(peps, torus)
    if method == "statevector" and state is None:
        raise MemoryBudgetError(f"statevector of dimension {torus.dimension} exceeds the budget")

    if method == "rdm":
        raw = _structure_factor_rdm(peps, torus, basis, q, state, progress)
    else:
        raw = _structure_factor_statevector(state, torus, basis, q, progress)
    provenance = {"backend": "oracle", "torus": str(torus), "method": method}
    return assemble(raw, basis, q, provenance)


def _structure_factor_rdm(peps, torus, basis, q, state, progress) -> np.ndarray:
    """Structure factor over product strings from merged-support density matrices, projected onto the basis"""
    beta_sites = _placed_sites(torus, basis, 0, 0)
    rho0 = rdm_on_support(peps, torus, beta_sites, state)
    parent_pairings = basis.trace_pairings(rho0) if basis.is_product else _product_pairings(basis, rho0)
    n = basis.num_product
    total = np.zeros((n, n), dtype=complex)
    displacements = [(x, y) for y in range(torus.ly) for x in range(torus.lx)]
    for x, y in tqdm(displacements, disable=not progress, desc="displacements"):
        alpha_sites = _placed_sites(torus, basis, x, y)
        merged = beta_sites + [s for s in alpha_sites if s not in beta_sites]
        rho = rdm_on_support(peps, torus, merged, state)
        total += np.conj(q.phase(x, y)) * _pair_correlations(rho, merged, alpha_sites, beta_sites, basis)
    if q.is_zero:
        total -= torus.num_sites * np.outer(parent_pairings, parent_pairings)
    if basis.is_product:
        return total
    return basis.coefficients @ total @ basis.coefficients.T


def _product_pairings(basis: OperatorBasis, matrix: np.ndarray) -> np.ndarray:
    """Tr(M ô) for every product string of the basis geometry"""
    k, d = basis.geometry.k, basis.geometry.d
    tensor = np.asarray(matrix).reshape((d,) * (2 * k))
    operands = [tensor, list(range(2 * k))]
    for site in range(k):
        operands += [basis.site_stack, [2 * k + site, k + site, site]]
    operands.append(list(range(2 * k, 3 * k)))
    return oe.contract(*operands).reshape(-1)


def _apply_local(state: np.ndarray, matrix: np.ndarray, sites: "list[int]", d: int, n: int) -> np.ndarray:
    """Applies a local matrix to the given tensor factors of a flat state"""
    k = len(sites)
    psi = state.reshape((d,) * n)
    local = matrix.reshape((d,) * (2 * k))
    result = np.tensordot(local, psi, axes=(list(range(k, 2 * k)), sites))
    return np.moveaxis(result, list(range(k)), sites).reshape(-1)


def _structure_factor_statevector(state, torus, basis, q, progress) -> np.ndarray:
    """Structure factor from overlaps of basis elements applied to the state"""
    psi = np.asarray(state, dtype=complex) / np.linalg.norm(state)
    n = torus.num_sites
    origin = _placed_sites(torus, basis, 0, 0)
    elements = [basis.element(i) for i in range(len(basis))]
    applied = np.array([_apply_local(psi, e, origin, torus.d, n) for e in elements])
    means = applied @ psi.conj()
    raw = np.zeros((len(basis), len(basis)), dtype=complex)
    placements = [(x, y, _placed_sites(torus, basis, x, y)) for y in range(torus.ly) for x in range(torus.lx)]
    for i, element in enumerate(tqdm(elements, disable=not progress, desc="elements")):
        chi = np.zeros_like(psi)
        for x, y, sites in placements:
            chi += q.phase(x, y) * _apply_local(psi, element, sites, torus.d, n)
        raw[i] = applied @ chi.conj()
    if q.is_zero:
        raw -= n * np.outer(means.conj(), means)
    return raw


##### Global Operators #####

class GlobalOperator():
    """ A sum of local terms on the tensor factors of a finite system.

        Parameters
        ----------
        num_factors : int
            Number of tensor factors (sites, or edges of an edge lattice)
        d : int
            Dimension per factor
        terms : list[tuple[tuple[int, ...], np.ndarray]]
            Factor indices and the local matrix of each term, phases included
        num_cells : int
            Number of translated placements, used for per-site quantities
        label : str
            Description of the operator

        Example
        -------
            >>> op = GlobalOperator(2, 2, [((0,), PAULIS['Z']), ((1,), PAULIS['Z'])], num_cells=2)
            >>> op.to_dense().diagonal().real
            array([ 2.,  0.,  0., -2.])
    """

    def __init__(self, num_factors: int, d: int, terms: "list[tuple[tuple[int, ...], np.ndarray]]", num_cells: int = 1, label: str = ""):
        """Stores the terms"""
        if d ** num_factors > MAX_STATEVECTOR_DIM:
            raise MemoryBudgetError(f"operator dimension {d ** num_factors} exceeds {MAX_STATEVECTOR_DIM}")
        for sites, matrix in terms:
            if matrix.shape != (d ** len(sites),) * 2:
                raise TensorShapeError(f"term on {len(sites)} factors has shape {matrix.shape}")
            if len(set(sites)) != len(sites) or any(s < 0 or s >= num_factors for s in sites):
                raise TensorShapeError(f"invalid term factors {sites}")

        self.num_factors: int = num_factors
        """Number of tensor factors"""

        self.d: int = d
        """Dimension per factor"""

        self.terms: "list[tuple[tuple[int, ...], np.ndarray]]" = [(tuple(s), np.asarray(m)) for s, m in terms]
        """Local terms"""

        self.num_cells: int = num_cells
        """Number of translated placements"""

        self.label: str = label
        """Description of the operator"""

    @property
    def dimension(self) -> int:
        """Hilbert space dimension"""
        return self.d ** self.num_factors

    @property
    def is_real(self) -> bool:
        """True when every term matrix is real"""
        return all(not np.iscomplexobj(m) or not np.any(m.imag) for _, m in self.terms)

    def matvec(self, vectors: np.ndarray) -> np.ndarray:
        """Applies the operator to a vector or to the columns of a matrix"""
        vectors = np.asarray(vectors)
        batch = vectors.ndim == 2
        columns = vectors.shape[1] if batch else 1
        psi = vectors.reshape((self.d,) * self.num_factors + (columns,))
        result = np.zeros(psi.shape, dtype=np.result_type(psi, *[m for _, m in self.terms]))
        for sites, matrix in self.terms:
            k = len(sites)
            local = matrix.reshape((self.d,) * (2 * k))
            applied = np.tensordot(local, psi, axes=(list(range(k, 2 * k)), list(sites)))
            result += np.moveaxis(applied, list(range(k)), list(sites))
        return result.reshape(vectors.shape[0], columns) if batch else result.reshape(-1)

    def to_sparse(self) -> scipy.sparse.csr_matrix:
        """Sparse matrix assembled by index arithmetic on the factor digits"""
        dim = self.dimension
        index = np.arange(dim)
        dtype = float if self.is_real else complex
        total = scipy.sparse.csr_matrix((dim, dim), dtype=dtype)
        for sites, matrix in self.terms:
            k = len(sites)
            strides = [self.d ** (self.num_factors - 1 - s) for s in sites]
            digits = [(index // stride) % self.d for stride in strides]
            local_in = np.zeros(dim, dtype=np.int64)
            for digit in digits:
                local_in = local_in * self.d + digit
            offsets = np.zeros(self.d ** k, dtype=np.int64)
            for j, stride in enumerate(strides):
                offsets += ((np.arange(self.d ** k) // self.d ** (k - 1 - j)) % self.d) * stride
            rows, cols, data = [], [], []
            for b in range(self.d ** k):
                columns = index[local_in == b]
                for a in np.flatnonzero(matrix[:, b]):
                    rows.append(columns - offsets[b] + offsets[a])
                    cols.append(columns)
                    data.append(np.full(len(columns), matrix[a, b]))
            if rows:
                values = np.concatenate(data)
                total = total + scipy.sparse.coo_matrix(
                    (values.real if dtype is float else values, (np.concatenate(rows), np.concatenate(cols))),
                    shape=(dim, dim),
                ).tocsr()
        return total

    def to_dense(self) -> np.ndarray:
        """Dense matrix, limited to the full-spectrum dimension budget"""
        if self.dimension > MAX_FULL_SPECTRUM_DIM:
            raise MemoryBudgetError(f"dense operator of dimension {self.dimension} exceeds {MAX_FULL_SPECTRUM_DIM}")
        return self.to_sparse().toarray()

    def as_linear_operator(self) -> scipy.sparse.linalg.LinearOperator:
        """Matrix-free linear operator"""
        dtype = float if self.is_real else complex
        return scipy.sparse.linalg.LinearOperator(
            (self.dimension, self.dimension),
            matvec=lambda v: self.matvec(np.asarray(v).reshape(-1)).astype(dtype, copy=False),
            matmat=lambda m: self.matvec(np.asarray(m)).astype(dtype, copy=False),
            dtype=dtype,
        )

    def hermiticity_error(self) -> float:
        """Largest deviation of the operator from its adjoint"""
        sparse = self.to_sparse()
        difference = sparse - sparse.conj().T
        return float(abs(difference).max()) if difference.nnz else 0.0

    def __add__(self, other: "GlobalOperator") -> "GlobalOperator":
        if (self.num_factors, self.d) != (other.num_factors, other.d):
            raise TensorShapeError("operators act on different spaces")
        return GlobalOperator(self.num_factors, self.d, self.terms + other.terms, self.num_cells, f"{self.label}+{other.label}")

    def __mul__(self, scalar: complex) -> "GlobalOperator":
        return GlobalOperator(self.num_factors, self.d, [(s, scalar * m) for s, m in self.terms], self.num_cells, self.label)

    __rmul__ = __mul__

    def __str__(self) -> str:
        return f"GlobalOperator({self.label or 'unnamed'}, {len(self.terms)} terms, dim {self.dimension})"

    def __repr__(self) -> str:
        return str(self)


def build_global_operator(h: np.ndarray, basis: OperatorBasis, torus: FiniteTorus, q: Momentum) -> GlobalOperator:
    """ Translated sum Σ_x e^{iq·x} ĥ_x of the local term with coefficients h.

        Parameters
        ----------
        h : np.ndarray
            Coefficient per basis element
        basis : OperatorBasis
            The basis of h
        torus : FiniteTorus
            Torus the support fits on
        q : Momentum
            Commensurate momentum

        Returns
        -------
        GlobalOperator
            The assembled operator
    """
    if len(h) != len(basis):
        raise BasisError(f"coefficient length {len(h)} does not match basis size {len(basis)}")
    if not q.commensurate_with(torus.lx, torus.ly):
        raise UnsupportedMomentumError(f"momentum {q} is incommensurate with the {torus} torus")
    if torus.dimension > MAX_STATEVECTOR_DIM:
        raise MemoryBudgetError(f"operator dimension {torus.dimension} exceeds {MAX_STATEVECTOR_DIM}")
    local = basis.local_matrix(np.asarray(h))
    if not np.any(local.imag):
        local = local.real
    terms = []
    for y in range(torus.ly):
        for x in range(torus.lx):
            terms.append((tuple(_placed_sites(torus, basis, x, y)), q.phase(x, y) * local))
    return GlobalOperator(torus.num_sites, torus.d, terms, torus.num_sites, f"{basis.name}@{q}")


def _pauli_terms(term: PauliSum, index_of) -> "list[tuple[tuple[int, ...], np.ndarray]]":
    """Local (factors, matrix) pairs of a Pauli polynomial, factors resolved by index_of"""
    terms = []
    for key, coefficient in term.terms.items():
        if not key:
            continue
        factors: "dict[int, np.ndarray]" = {}
        for position, label in key:
            n = index_of(position)
            factors[n] = factors[n] @ PAULIS[label] if n in factors else PAULIS[label]
        sites = tuple(factors)
        matrix = np.ones((1, 1), dtype=complex)
        for n in sites:
            matrix = np.kron(matrix, factors[n])
        terms.append((sites, coefficient * matrix))
    return terms


def build_pauli_operator(term: PauliSum, torus: FiniteTorus, q: "Momentum | None" = None, lattice: Literal["site", "edge"] = "site") -> GlobalOperator:
    """ Translated sum of a Pauli polynomial over the vertices of a torus.

        Identity strings are dropped. Positions are (x, y) sites or
        (x, y, 'h'|'v') edges relative to each vertex.

        Parameters
        ----------
        term : PauliSum
            Local polynomial
        torus : FiniteTorus
            Torus with d = 2
        q : Momentum, optional
            Commensurate momentum, zero by default
        lattice : Literal["site", "edge"]
            Whether the factors are the sites or the edges of the torus

        Returns
        -------
        GlobalOperator
            The translated operator
    """
    if q is not None and not q.commensurate_with(torus.lx, torus.ly):
        raise UnsupportedMomentumError(f"momentum {q} is incommensurate with the {torus} torus")
    terms = []
    for y in range(torus.ly):
        for x in range(torus.lx):
            phase = 1.0 if q is None else q.phase(x, y)
            shifted = term.translate(x, y)
            if lattice == "edge":
                index_of = lambda p: torus.edge_index(p[0], p[1], p[2])
            else:
                index_of = lambda p: torus.site_index(p[0], p[1])
            terms.extend((sites, phase * matrix) for sites, matrix in _pauli_terms(shifted, index_of))
    factors = torus.num_edges if lattice == "edge" else torus.num_sites
    terms = [(sites, matrix.real if not np.any(matrix.imag) else matrix) for sites, matrix in terms]
    return GlobalOperator(factors, 2, terms, torus.num_sites, f"pauli-{lattice}")


def build_edge_operator(term: PauliSum, torus: FiniteTorus) -> GlobalOperator:
    """Translated edge-lattice operator of a Pauli polynomial on edge positions"""
    return build_pauli_operator(term, torus, lattice="edge")


def gauge_projector(torus: FiniteTorus) -> np.ndarray:
    """Diagonal of Π_p (1 + B_p)/2 on the edge lattice in the Z basis, B_p being the Z product around plaquette p"""
    edges = torus.num_edges
    if 2 ** edges > MAX_STATEVECTOR_DIM:
        raise MemoryBudgetError(f"edge lattice dimension 2^{edges} exceeds the budget")
    index = np.arange(2 ** edges)
    keep = np.ones(2 ** edges, dtype=bool)
    for y in range(torus.ly):
        for x in range(torus.lx):
            parity = np.zeros(2 ** edges, dtype=np.int64)
            for e in torus.plaquette_edges(x, y):
                parity ^= (index >> (edges - 1 - e)) & 1
            keep &= parity == 0
    return keep.astype(float)


def ising_parent_hamiltonian(beta: float, torus: FiniteTorus) -> GlobalOperator:
    """ Frustration-free parent Hamiltonian Σ_i (-X_i + exp(-β Z_i Σ_{j∈∂i} Z_j)) of the deformed Ising state.

        Parameters
        ----------
        beta : float
            Deformation strength
        torus : FiniteTorus
            Torus with at least three sites in each direction

        Returns
        -------
        GlobalOperator
            Positive semidefinite operator annihilating the deformed Ising state
    """
    if torus.lx < 3 or torus.ly < 3:
        raise TensorShapeError("the parent Hamiltonian needs at least 3 sites in each direction")
    spins = np.array([1.0, -1.0])
    diagonal = np.zeros(32)
    for config in range(32):
        z = spins[[(config >> (4 - b)) & 1 for b in range(5)]]
        diagonal[config] = math.exp(-beta * z[0] * z[1:].sum())
    local = np.diag(diagonal) - np.kron(PAULIS["X"].real, np.eye(16))
    terms = []
    for n in range(torus.num_sites):
        terms.append(((n,) + torus.neighbors(n), local))
    return GlobalOperator(torus.num_sites, 2, terms, torus.num_sites, f"ising-parent(beta={beta})")


##### Expectation Values And Spectra #####

def apply_operator(operator: GlobalOperator, state: np.ndarray) -> np.ndarray:
    """H|ψ⟩"""
    if len(state) != operator.dimension:
        raise TensorShapeError(f"state of length {len(state)} does not match operator dimension {operator.dimension}")
    return operator.matvec(state)


def commutator_norm(a: GlobalOperator, b: GlobalOperator) -> float:
    """Largest element of [A, B] in absolute value"""
    sa, sb = a.to_sparse(), b.to_sparse()
    commutator = sa @ sb - sb @ sa
    return float(abs(commutator).max()) if commutator.nnz else 0.0


def expectation_and_variance(operator: GlobalOperator, state: np.ndarray) -> "tuple[float, float]":
    """ Energy and variance per site of an operator in a state.

        Parameters
        ----------
        operator : GlobalOperator
            Hermitian operator
        state : np.ndarray
            Nonzero state, normalized internally

        Returns
        -------
        tuple[float, float]
            ⟨H⟩/N and (⟨H²⟩ - ⟨H⟩²)/N
    """
    norm = np.linalg.norm(state)
    if norm == 0:
        raise TensorShapeError("state has zero norm")
    psi = np.asarray(state) / norm
    applied = apply_operator(operator, psi)
    energy = complex(np.vdot(psi, applied))
    variance = float(np.vdot(applied, applied).real - abs(energy) ** 2)
    return energy.real / operator.num_cells, variance / operator.num_cells


class SpectrumResult(NamedTuple):
    """Eigenvalues of a global operator"""

    eigenvalues: np.ndarray
    """Ascending eigenvalues"""

    vectors: "np.ndarray | None"
    """Eigenvectors as columns when requested"""

    zero_mode_count: int
    """Number of eigenvalues with modulus below the zero-mode threshold"""


def spectrum(
    operator: GlobalOperator,
    mode: Literal["full", "extremal"] = "full",
    k: int = 1,
    vectors: bool = False,
    zero_tol: float = ZERO_MODE_TOL,
) -> SpectrumResult:
    """ Eigenvalues of a Hermitian global operator.

        Parameters
        ----------
        operator : GlobalOperator
            The operator
        mode : Literal["full", "extremal"]
            Dense diagonalization, or the k smallest eigenvalues from the
            restarted Lanczos solver seeded with the normalized all-ones vector
        k : int
            Number of eigenvalues in extremal mode
        vectors : bool
            Return eigenvectors
        zero_tol : float
            Zero-mode threshold

        Returns
        -------
        SpectrumResult
            Sorted eigenvalues and the zero-mode count
    """
    if mode == "full":
        dense = operator.to_dense()
        values, vecs = eigh_sym(dense)
        zero_modes = int(np.count_nonzero(np.abs(values) < zero_tol))
        return SpectrumResult(values, vecs if vectors else None, zero_modes)

    if operator.dimension <= k + 1:
        raise TensorShapeError("extremal mode needs more dimensions than requested eigenvalues")
    error = operator.hermiticity_error() if operator.dimension <= MAX_FULL_SPECTRUM_DIM else 0.0
    if error > HERMITIAN_TOL:
        raise SymmetryViolationError(f"operator asymmetry {error:.3e}")
    seed = np.ones(operator.dimension) / math.sqrt(operator.dimension)
    try:
        values, vecs = scipy.sparse.linalg.eigsh(operator.as_linear_operator(), k=k, which='SA', v0=seed)
    except scipy.sparse.linalg.ArpackNoConvergence as exception:
        residual = float('nan')
        if len(exception.eigenvalues):
            v = exception.eigenvectors[:, 0]
            residual = float(np.linalg.norm(operator.matvec(v) - exception.eigenvalues[0] * v))
        raise ConvergenceError("sparse eigensolver did not converge", residual) from exception
    order = np.argsort(values)
    values, vecs = values[order], vecs[:, order]
    zero_modes = int(np.count_nonzero(np.abs(values) < zero_tol))
    return SpectrumResult(values, vecs if vectors else None, zero_modes)


def spectrum_histogram(eigenvalues: np.ndarray, bins: int = 100) -> "tuple[np.ndarray, np.ndarray]":
    """Density of states as (counts, bin edges)"""
    return np.histogram(np.asarray(eigenvalues).real, bins=bins)


def check_operator_hermitian(operator: GlobalOperator):
    """Raises when a global operator deviates from its adjoint"""
    if operator.dimension <= MAX_FULL_SPECTRUM_DIM:
        check_hermitian(operator.to_dense(), operator.label)
    elif operator.hermiticity_error() > HERMITIAN_TOL:
        raise SymmetryViolationError(f"{operator.label} is not Hermitian")
