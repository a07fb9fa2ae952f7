"""Structure factor assembly, deflation, the kernel eigenproblem and the interpretation of its solutions"""

import logging
from typing import Mapping, NamedTuple, Sequence

import numpy as np
import scipy.linalg

from .basis import (
    Momentum,
    OperatorBasis,
    SupportGeometry,
    embed_smaller_support,
    hermitian_site_basis,
    orthonormalize,
    product_basis,
    spin_matrices,
    trivial_subspace,
)
from .constants import (
    BLOCK_GAP,
    IMAG_TOL,
    MIN_EIGENVALUE_TOL,
    SENTINEL,
)
from .exceptions import (
    BasisError,
    ExtractionError,
)
from .tensor import eigh_sym

logger = logging.getLogger(__name__)


##### Structure Factor Matrix #####

class StructureFactorMatrix():
    """ Raw structure factor S(q) together with its real symmetric part.

        Parameters
        ----------
        raw : np.ndarray
            The n × n matrix S_αβ in the basis ordering
        basis : OperatorBasis
            Basis of the rows and columns
        momentum : Momentum
            Momentum of the Fourier sum
        provenance : dict
            Backend name and its parameters
    """

    def __init__(self, raw: np.ndarray, basis: OperatorBasis, momentum: Momentum, provenance: "dict | None" = None):
        """Symmetrizes and records the quality metrics"""
        raw = np.asarray(raw, dtype=complex)
        if raw.shape != (len(basis), len(basis)):
            raise ExtractionError(f"structure factor of shape {raw.shape} does not match basis size {len(basis)}")

        self.raw: np.ndarray = raw
        """Raw matrix S"""

        self.basis: OperatorBasis = basis
        """Basis of rows and columns"""

        self.momentum: Momentum = momentum
        """Momentum of the Fourier sum"""

        self.provenance: dict = dict(provenance or {})
        """Backend name and parameters"""

        symmetric = (raw + raw.T) / 2

        self.max_imag: float = float(np.max(np.abs(symmetric.imag))) if raw.size else 0.0
        """Largest imaginary part of (S + Sᵀ)/2"""

        self.asymmetry: float = float(np.max(np.abs(raw.real - raw.real.T))) if raw.size else 0.0
        """Largest asymmetry of the real part of S"""

        self.matrix: np.ndarray = symmetric.real
        """Real symmetric matrix 𝒮"""

        self.eigenvalues: np.ndarray = scipy.linalg.eigvalsh(self.matrix) if raw.size else np.zeros(0)
        """Ascending eigenvalues of 𝒮"""

        self.flags: "list[str]" = []
        """Quality flags"""

        backend = self.provenance.get("backend", "oracle")
        if len(self.eigenvalues) and self.eigenvalues[0] < MIN_EIGENVALUE_TOL.get(backend, MIN_EIGENVALUE_TOL["oracle"]):
            self.flags.append("negative-eigenvalue")
            logger.warning(f"structure factor has eigenvalue {self.eigenvalues[0]:.3e} below the {backend} tolerance")

    @property
    def min_eigenvalue(self) -> float:
        """Smallest eigenvalue of 𝒮"""
        return float(self.eigenvalues[0])

    def quality(self) -> dict:
        """Quality metrics as plain values"""
        return {
            "max_imag": self.max_imag,
            "asymmetry": self.asymmetry,
            "min_eigenvalue": self.min_eigenvalue,
            "flags": list(self.flags),
        }

    def __str__(self) -> str:
        return f"StructureFactorMatrix({self.basis.name}, q={self.momentum}, n={len(self.basis)})"

    def __repr__(self) -> str:
        return str(self)


def assemble(
    raw: "np.ndarray | Mapping[int, np.ndarray]",
    basis: OperatorBasis,
    q: Momentum,
    provenance: "dict | None" = None,
) -> StructureFactorMatrix:
    """ Builds a structure factor matrix from a full matrix or from rows keyed by basis index.

        Parameters
        ----------
        raw : np.ndarray or dict[int, np.ndarray]
            The matrix S, or its rows
        basis : OperatorBasis
            Basis of rows and columns
        q : Momentum
            Momentum
        provenance : dict, optional
            Backend name and parameters

        Returns
        -------
        StructureFactorMatrix
            Raw and symmetrized matrices
    """
    if isinstance(raw, Mapping):
        missing = sorted(set(range(len(basis))) - set(raw))
        if missing:
            raise ExtractionError(f"missing structure factor rows {missing[:10]}{'...' if len(missing) > 10 else ''}")
        raw = np.array([np.asarray(raw[i]) for i in range(len(basis))])
    raw = np.asarray(raw, dtype=complex)
    if not np.all(np.isfinite(raw)):
        raise ExtractionError("structure factor contains non-finite entries")
    matrix = StructureFactorMatrix(raw, basis, q, provenance)
    if q.is_real_phase and matrix.max_imag > IMAG_TOL:
        raise ExtractionError(f"imaginary part {matrix.max_imag:.3e} of the symmetrized structure factor exceeds {IMAG_TOL:.0e}")
    logger.info(f"assembled {matrix}: asymmetry {matrix.asymmetry:.2e}, min eigenvalue {matrix.min_eigenvalue:.3e}")
    return matrix


##### Deflation #####

class DeflatedMatrix():
    """ 𝒮 with deflated directions moved to the sentinel eigenvalue.

        Parameters
        ----------
        source : StructureFactorMatrix
            The undeflated matrix
        vectors : np.ndarray
            Orthonormal rows spanning the deflated directions
        record : dict[str, int]
            Number of vectors contributed by each named subspace
    """

    def __init__(self, source: StructureFactorMatrix, vectors: np.ndarray, record: "dict[str, int]"):
        self.source: StructureFactorMatrix = source
        """The undeflated matrix"""

        self.vectors: np.ndarray = vectors
        """Orthonormal deflation rows"""

        self.record: "dict[str, int]" = dict(record)
        """Requested vector count per named subspace"""

        n = len(source.basis)
        projector = np.eye(n) - vectors.T @ vectors
        matrix = projector @ source.matrix @ projector + SENTINEL * (vectors.T @ vectors)

        self.matrix: np.ndarray = (matrix + matrix.T) / 2
        """P𝒮P + sentinel·VVᵀ"""

    @property
    def rank(self) -> int:
        """Dimension of the deflated span"""
        return len(self.vectors)

    def spectrum(self) -> np.ndarray:
        """Ascending eigenvalues of the deflated matrix"""
        return scipy.linalg.eigvalsh(self.matrix)

    def summary(self) -> dict:
        """Deflation record with the total rank"""
        return {"subspaces": dict(self.record), "rank": self.rank}


def deflate(m: StructureFactorMatrix, subspaces: "Mapping[str, np.ndarray] | Sequence[np.ndarray]") -> DeflatedMatrix:
    """ Projects known solutions out of the kernel problem.

        Parameters
        ----------
        m : StructureFactorMatrix
            The matrix to deflate
        subspaces : dict[str, np.ndarray] or list[np.ndarray]
            Sets of row vectors in the basis ordering, possibly overlapping or
            rank deficient

        Returns
        -------
        DeflatedMatrix
            P𝒮P with P = 𝟙 - VVᵀ, the union V carrying the sentinel eigenvalue
    """
    if not isinstance(subspaces, Mapping):
        subspaces = {f"subspace-{i}": vectors for i, vectors in enumerate(subspaces)}
    n = len(m.basis)
    blocks = []
    record = {}
    for name, vectors in subspaces.items():
        vectors = np.atleast_2d(np.asarray(vectors, dtype=float)) if np.size(vectors) else np.zeros((0, n))
        if vectors.shape[1] != n:
            raise BasisError(f"deflation subspace {name} has vectors of length {vectors.shape[1]}, expected {n}")
        blocks.append(vectors)
        record[name] = len(vectors)
    union = orthonormalize(np.vstack(blocks)) if blocks and sum(len(b) for b in blocks) else np.zeros((0, n))
    logger.info(f"deflating {union.shape[0]} directions from {m}")
    return DeflatedMatrix(m, union, record)


def standard_deflation(
    basis: OperatorBasis,
    q: Momentum,
    smaller: "Sequence[tuple[OperatorBasis, np.ndarray]]" = (),
) -> "dict[str, np.ndarray]":
    """ Trivial solutions and embedded smaller-support solutions expressed in a basis.

        Parameters
        ----------
        basis : OperatorBasis
            Target basis
        q : Momentum
            Real-phase momentum
        smaller : list[tuple[OperatorBasis, np.ndarray]]
            Kernel solutions on smaller supports, rows in their own basis

        Returns
        -------
        dict[str, np.ndarray]
            Named subspaces ready for ``deflate``
    """
    geometry = basis.geometry
    if geometry.name in ("site", "pair", "plaquette"):
        trivial = basis.restrict(trivial_subspace(geometry, q))
    else:
        identity = np.zeros((1, basis.num_product))
        identity[0, 0] = 1.0
        trivial = basis.restrict(identity)
    subspaces = {"trivial": trivial}
    for source, vectors in smaller:
        if len(vectors) == 0:
            continue
        product_rows = source.product_vector(np.atleast_2d(vectors))
        _, span = embed_smaller_support(product_rows, source.geometry, geometry, q)
        subspaces[f"embedded-{source.geometry.name}"] = basis.restrict(span)
    return subspaces


##### Kernel Solutions #####

class ConservedOperatorSolution():
    """ An eigenpair (s, h) of the deflated structure factor read as a local term.

        Parameters
        ----------
        eigenvalue : float
            Fluctuation per site s = hᵀ𝒮h
        coefficients : np.ndarray
            Unit-norm real coefficients in the basis ordering
        basis : OperatorBasis
            Basis of the coefficients
        momentum : Momentum
            Momentum of the global operator Σ_x e^{iq·x} ĥ_x
        block : int
            Index of the degenerate block the solution belongs to
        block_size : int
            Dimension of that block
        deflation : dict
            Deflation record
        provenance : dict
            Backend name and parameters
    """

    def __init__(self,
        eigenvalue: float,
        coefficients: np.ndarray,
        basis: OperatorBasis,
        momentum: Momentum,
        block: int = 0,
        block_size: int = 1,
        deflation: "dict | None" = None,
        provenance: "dict | None" = None,
    ):
        self.eigenvalue: float = float(eigenvalue)
        """Fluctuation per site"""

        self.coefficients: np.ndarray = np.asarray(coefficients, dtype=float)
        """Unit-norm coefficient vector"""
        assert abs(np.linalg.norm(self.coefficients) - 1) < 1e-10

        self.basis: OperatorBasis = basis
        """Basis of the coefficients"""

        self.momentum: Momentum = momentum
        """Momentum"""

        self.block: int = block
        """Degenerate block index"""

        self.block_size: int = block_size
        """Degenerate block dimension"""

        self.deflation: dict = dict(deflation or {})
        """Deflation record"""

        self.provenance: dict = dict(provenance or {})
        """Backend name and parameters"""

        self.local_matrix: np.ndarray = basis.local_matrix(self.coefficients)
        """Local Hermitian term ĥ_x"""

    def labelled(self, tol: float = 1e-12) -> "dict[str, float]":
        """Nonzero coefficients keyed by element label"""
        return {label: float(c) for label, c in zip(self.basis.labels, self.coefficients) if abs(c) > tol}

    def __str__(self) -> str:
        return f"ConservedOperatorSolution(s={self.eigenvalue:.3e}, q={self.momentum}, block {self.block}/{self.block_size})"

    def __repr__(self) -> str:
        return str(self)


def _fix_sign(vector: np.ndarray) -> np.ndarray:
    """Flips the vector so its largest-magnitude entry is positive"""
    pivot = int(np.argmax(np.abs(vector)))
    return vector if vector[pivot] >= 0 else -vector


def canonical_span(vectors: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """ Canonical orthonormal rows of a subspace.

        Unit vectors e_0, e_1, ... are projected onto the span in basis order
        and Gram–Schmidt orthonormalized, skipping projections of norm below
        ``tol``, until the span dimension is reached. The result depends only
        on the span, not on the input rows.

        Parameters
        ----------
        vectors : np.ndarray
            Orthonormal rows
        tol : float
            Smallest accepted projection norm

        Returns
        -------
        np.ndarray
            Canonical orthonormal rows
    """
    vectors = np.atleast_2d(vectors)
    rank = len(vectors)
    canonical = []
    for j in range(vectors.shape[1]):
        if len(canonical) == rank:
            break
        candidate = vectors.T @ vectors[:, j]
        for row in canonical:
            candidate = candidate - (row @ candidate) * row
        norm = np.linalg.norm(candidate)
        if norm > tol:
            canonical.append(candidate / norm)
    assert len(canonical) == rank
    return np.array(canonical)


def span_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Sine of the largest principal angle between the row spans of a and b, 1 for different dimensions"""
    a, b = np.atleast_2d(a), np.atleast_2d(b)
    if len(a) != len(b):
        return 1.0
    angles = scipy.linalg.subspace_angles(a.T, b.T)
    return float(np.sin(np.max(angles))) if len(angles) else 0.0


def solve(m: "DeflatedMatrix | StructureFactorMatrix", count: int = 4, gap: float = BLOCK_GAP) -> "list[ConservedOperatorSolution]":
    """ Lowest eigenpairs of the (deflated) structure factor as conserved operators.

        Solutions come in ascending order of eigenvalue. A degenerate block
        reached within the first ``count`` eigenvalues is returned whole, its
        vectors canonicalized so only the span carries meaning.

        Parameters
        ----------
        m : DeflatedMatrix or StructureFactorMatrix
            The kernel problem
        count : int
            Minimal number of solutions
        gap : float
            Eigenvalue gap below which solutions share a block

        Returns
        -------
        list[ConservedOperatorSolution]
            Sign-fixed unit-norm solutions with eigenvalues hᵀ𝒮h
    """
    source = m.source if isinstance(m, DeflatedMatrix) else m
    deflation = m.summary() if isinstance(m, DeflatedMatrix) else {}
    values, vectors = eigh_sym(m.matrix)
    n = len(values)
    count = min(count, n)
    if count == 0:
        return []

    ##### Degenerate Blocks #####
    blocks = [[0]]
    for i in range(1, n):
        if values[i] - values[i - 1] < gap:
            blocks[-1].append(i)
        else:
            blocks.append([i])

    solutions = []
    for b, members in enumerate(blocks):
        if members[0] >= count:
            break
        span = vectors[:, members].T
        rows = canonical_span(span) if len(members) > 1 else span
        for row in rows:
            row = _fix_sign(row / np.linalg.norm(row))
            rayleigh = float(row @ source.matrix @ row)
            solutions.append(ConservedOperatorSolution(
                rayleigh, row, source.basis, source.momentum, b, len(members), deflation, source.provenance,
            ))
    logger.info(f"kept {len(solutions)} solutions, lowest eigenvalue {values[0]:.3e}")
    return solutions


def kernel_dimension(eigenvalues: np.ndarray, tol: float) -> int:
    """Number of eigenvalues below the kernel threshold"""
    return int(np.count_nonzero(np.asarray(eigenvalues) < tol))


##### RVB Ansatz Coefficients #####

class RvbAnsatzCoefficients(NamedTuple):
    """J1-normalized coefficients of the plaquette ansatz and their raw group averages"""

    j1: float
    j2: float
    q1: float
    q2: float
    raw_j1: float
    raw_j2: float
    raw_q1: float
    raw_q2: float
    variance_per_site: float


def rvb_coefficients(sol: ConservedOperatorSolution) -> RvbAnsatzCoefficients:
    """ Averages the solution over the symmetry-related strings and normalizes to J1.

        Parameters
        ----------
        sol : ConservedOperatorSolution
            Solution in the 39-string SU(2) plaquette basis

        Returns
        -------
        RvbAnsatzCoefficients
            J2 = J̃2/(2J̃1), Q1 = 4Q̃1/(2J̃1), Q2 = 4Q̃2/(2J̃1) and the variance
            per site s/(2J̃1)²
    """
    if sol.basis.name != "su2-39":
        raise BasisError(f"RVB coefficients need the su2-39 basis, got {sol.basis.name}")
    tags = np.array(sol.basis.tags)
    means = {tag: float(np.mean(sol.coefficients[tags == tag])) for tag in ("nn", "diag", "q1", "q2")}
    j1 = means["nn"]
    if abs(j1) < 1e-8:
        raise ExtractionError("nearest-neighbor coefficient vanishes; J1 normalization is undefined")
    scale = 2 * j1
    return RvbAnsatzCoefficients(
        1.0, means["diag"] / scale, 4 * means["q1"] / scale, 4 * means["q2"] / scale,
        j1, means["diag"], means["q1"], means["q2"], sol.eigenvalue / scale**2,
    )


def rvb_ansatz_vector(basis: OperatorBasis, j2: float, q1: float, q2: float) -> np.ndarray:
    """ Coefficient vector of the J1-normalized plaquette ansatz in the su2-39 basis.

        Inverse of ``rvb_coefficients`` up to normalization: the four-equal-Pauli
        strings receive the sum of the three pairings.
    """
    if basis.name != "su2-39":
        raise BasisError(f"the ansatz vector needs the su2-39 basis, got {basis.name}")
    raw = {"nn": 0.5, "diag": j2, "q1": q1 / 4, "q2": q2 / 4}
    raw["all"] = 2 * raw["q1"] + raw["q2"]
    return np.array([raw[tag] for tag in basis.tags])


##### AKLT Parent Family #####

class FamilyReport(NamedTuple):
    """Outcome of a parent-family membership test"""

    residual: float
    """Relative norm of the part outside the family"""

    in_family: bool
    """True when the residual is below the tolerance and the penalty is not negative"""

    penalty: float
    """Coefficient of the 𝟙 - P4 direction in the fit, solution oriented to overlap it positively"""


def spin2_pair_projector() -> "tuple[np.ndarray, np.ndarray]":
    """Projector onto total spin 4 of two spin-2 sites and an orthonormal basis of its range"""
    sx, sy, sz = spin_matrices(5)
    identity = np.eye(5)
    casimir = sum(
        (np.kron(s, identity) + np.kron(identity, s)) @ (np.kron(s, identity) + np.kron(identity, s))
        for s in (sx, sy, sz)
    )
    values, vectors = scipy.linalg.eigh((casimir + casimir.conj().T) / 2)
    top = vectors[:, np.abs(values - 20) < 1e-8]
    assert top.shape[1] == 9
    return top @ top.conj().T, top


def aklt_parent_family(basis: OperatorBasis) -> np.ndarray:
    """ Product-basis rows of the two-site frustration-free parent family.

        The first row is 𝟙 - P4, the remaining 81 are V4 E V4† for the
        Hermitian basis E of the total-spin-4 block.
    """
    if basis.geometry != SupportGeometry.pair(5):
        raise BasisError("the AKLT parent family lives on the d=5 horizontal pair")
    projector, top = spin2_pair_projector()
    matrices = [np.eye(25) - projector]
    block_basis = hermitian_site_basis(9).site_matrices
    matrices += [top @ e @ top.conj().T for e in block_basis]
    product = product_basis(basis.geometry)
    return np.array([product.trace_pairings(m).real for m in matrices])


def aklt_family_membership(
    sol: ConservedOperatorSolution,
    tolerance: float = 1e-7,
    deflation_vectors: "np.ndarray | None" = None,
) -> FamilyReport:
    """ Tests whether a pair solution lies in the AKLT parent family.

        The solution is oriented to a nonnegative overlap with 𝟙 - P4, which for
        family members is sixteen times the penalty, and fitted by least squares
        with the family members and the deflated directions, all in
        product-basis coefficients.

        Parameters
        ----------
        sol : ConservedOperatorSolution
            Solution on the d=5 pair
        tolerance : float
            Largest accepted relative residual
        deflation_vectors : np.ndarray, optional
            Deflated directions as rows in the solution basis

        Returns
        -------
        FamilyReport
            Residual, verdict and penalty coefficient
    """
    if sol.basis.geometry != SupportGeometry.pair(5):
        raise BasisError(f"AKLT family membership needs the d=5 pair, got {sol.basis.geometry}")
    family = aklt_parent_family(sol.basis)
    target = sol.basis.product_vector(sol.coefficients)
    if target @ family[0] < 0:
        target = -target
    columns = [family]
    if deflation_vectors is not None and len(deflation_vectors):
        # the identity is already spanned by the family
        extra = np.array(sol.basis.product_vector(np.atleast_2d(deflation_vectors)), dtype=float)
        extra[:, 0] = 0.0
        columns.append(extra[np.linalg.norm(extra, axis=1) > 1e-12])
    design = np.vstack(columns).T
    fit, *_ = scipy.linalg.lstsq(design, target)
    residual = float(np.linalg.norm(design @ fit - target) / np.linalg.norm(target))
    penalty = float(fit[0])
    return FamilyReport(residual, residual < tolerance and penalty >= -tolerance, penalty)


##### Solution Files #####

def solution_to_dict(sol: ConservedOperatorSolution) -> dict:
    """Serializable form of a solution, identical for both backends"""
    return {
        "eigenvalue": sol.eigenvalue,
        "basis": sol.basis.name,
        "geometry": sol.basis.geometry.name,
        "d": sol.basis.geometry.d,
        "labels": list(sol.basis.labels),
        "coefficients": [float(c) for c in sol.coefficients],
        "momentum": [sol.momentum.n, sol.momentum.m, sol.momentum.lx, sol.momentum.ly],
        "block": sol.block,
        "block_size": sol.block_size,
        "local_matrix": {"real": sol.local_matrix.real.tolist(), "imag": sol.local_matrix.imag.tolist()},
        "deflation": sol.deflation,
        "provenance": sol.provenance,
    }


def solution_from_dict(data: dict, basis: OperatorBasis) -> ConservedOperatorSolution:
    """Rebuilds a solution against the basis it was written with"""
    if data["labels"] != list(basis.labels):
        raise BasisError(f"solution labels do not match the {basis.name} basis")
    momentum = Momentum(*data["momentum"])
    return ConservedOperatorSolution(
        data["eigenvalue"], np.array(data["coefficients"]), basis, momentum,
        data.get("block", 0), data.get("block_size", 1), data.get("deflation"), data.get("provenance"),
    )
