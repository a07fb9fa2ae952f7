"""Structure factor rows in the thermodynamic limit from finite differences of a generating function"""

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, NamedTuple, Sequence

import numpy as np
import opt_einsum as oe
from tqdm import tqdm

from .basis import (
    Momentum,
    OperatorBasis,
)
from .constants import (
    CTM_MAX_ITER,
    CTM_TOL,
    DEFAULT_DELTA,
    STENCIL_EPS_FACTOR,
)
from .ctmrg import (
    CtmEnvironment,
    CtmNetwork,
    converge_environment,
    patch_matrix,
)
from .exceptions import (
    BasisError,
    NonFiniteError,
    UnsupportedMomentumError,
)
from .extraction import (
    StructureFactorMatrix,
    assemble,
    deflate,
    rvb_coefficients,
    solve,
    standard_deflation,
)
from .models import PepsUnitCell
from .tensor import label_operands

logger = logging.getLogger(__name__)

STENCIL: "tuple[float, ...]" = (2.0, 1.0, -1.0, -2.0)
"""Stencil points of the five-point derivative in units of δ"""

STENCIL_WEIGHTS: "tuple[float, ...]" = (-1.0, 8.0, -8.0, 1.0)
"""Weights of the stencil points, divided by 12δ"""

COLD_CHECK_TOL: float = 1e-3
"""Largest relative difference between warm- and cold-started rows before a branch switch is flagged"""


##### Operator Tensors #####

class GenFuncPepo():
    """ Operator tensors of G(μ) = Π_x (𝟙 + μ e^{-iq·x} ô_x) for a product string ô.

        The product may run over a sublattice of positions only; the
        placements then list where the support is evaluated and with which
        phase, so that the weighted sum over placements restores every
        position x.

        Parameters
        ----------
        tensors : dict[tuple[int, int], np.ndarray]
            Tensors (out, in, left, up, right, down) keyed by cell coordinates
        basis : OperatorBasis
            Basis the string belongs to
        alpha : int
            Product string index
        q : Momentum
            Momentum
        mu : float
            Generating function parameter
        placements : list[tuple[tuple[int, int], complex]], optional
            Support shifts and their weights, the origin alone by default
    """

    def __init__(
        self,
        tensors: "dict[tuple[int, int], np.ndarray]",
        basis: OperatorBasis,
        alpha: int,
        q: Momentum,
        mu: float,
        placements: "list[tuple[tuple[int, int], complex]] | None" = None,
    ):
        self.tensors: "dict[tuple[int, int], np.ndarray]" = tensors
        """Operator tensors of the unit cell"""

        self.basis: OperatorBasis = basis
        """Basis the string belongs to"""

        self.alpha: int = alpha
        """Product string index"""

        self.q: Momentum = q
        """Momentum"""

        self.mu: float = mu
        """Generating function parameter"""

        self.placements: "list[tuple[tuple[int, int], complex]]" = placements or [((0, 0), 1.0)]
        """Support shifts at which M is evaluated, with their weights"""

    @property
    def bond_dim(self) -> int:
        """Largest operator bond dimension"""
        return max(max(w.shape[2:]) for w in self.tensors.values())

    @property
    def cell_width(self) -> int:
        """Columns of the unit cell"""
        return 1 + max(x for x, _ in self.tensors)

    @property
    def cell_height(self) -> int:
        """Rows of the unit cell"""
        return 1 + max(y for _, y in self.tensors)

    def __str__(self) -> str:
        return (
            f"GenFuncPepo({self.basis.product_label(self.alpha)}, q={self.q}, mu={self.mu:g}, "
            f"D'={self.bond_dim}, cell {self.cell_width}x{self.cell_height})"
        )

    def __repr__(self) -> str:
        return str(self)


def _phase_cell(q: Momentum, minimum: int = 1) -> "tuple[int, int]":
    """Unit cell carrying the phase pattern of a real-phase momentum"""
    return math.lcm(minimum, 2 if q.n else 1), math.lcm(minimum, 2 if q.m else 1)


def _role(identity: np.ndarray, op: np.ndarray, weight: complex) -> np.ndarray:
    """Diagonal bond tensor δ(a, b) with the identity on 0 and weight·op on 1, index order (out, in, a, b)"""
    d = identity.shape[0]
    role = np.zeros((d, d, 2, 2), dtype=complex)
    role[:, :, 0, 0] = identity
    role[:, :, 1, 1] = weight * op
    return role


def _site_tensors(ops: "list[np.ndarray]", q: Momentum, mu: float) -> "dict[tuple[int, int], np.ndarray]":
    d = ops[0].shape[0]
    width, height = _phase_cell(q)
    return {
        (x, y): (np.eye(d) + mu * np.conj(q.phase(x, y)) * ops[0]).reshape(d, d, 1, 1, 1, 1)
        for y in range(height) for x in range(width)
    }


def _pair_tensors(ops: "list[np.ndarray]", q: Momentum, mu: float, vertical: bool) -> "dict[tuple[int, int], np.ndarray]":
    d = ops[0].shape[0]
    identity = np.eye(d)
    root = math.sqrt(abs(mu))
    width, height = _phase_cell(q)
    tensors = {}
    for y in range(height):
        for x in range(width):
            first = [identity, math.copysign(1.0, mu) * root * np.conj(q.phase(x, y)) * ops[0]]
            second = [identity, root * ops[1]]
            w = np.array([[second[a] @ first[b] for b in range(2)] for a in range(2)])
            w = w.transpose(2, 3, 0, 1)
            tensors[(x, y)] = w.reshape(d, d, 1, 2, 1, 2) if vertical else w.reshape(d, d, 2, 1, 2, 1)
    return tensors


def _plaquette_tensors(ops: "list[np.ndarray]", q: Momentum, mu: float) -> "dict[tuple[int, int], np.ndarray]":
    """ Four-site loops on the plaquettes whose top-left corner has even x+y.

        An even site is the top-left corner of one loop on its (right, down)
        legs and the bottom-right corner of another on (left, up); an odd site
        is a top-right corner on (left, down) and a bottom-left corner on
        (up, right). Every bond belongs to exactly one loop.
    """
    d = ops[0].shape[0]
    identity = np.eye(d)
    root = abs(mu) ** 0.25
    width, height = _phase_cell(q, 2)
    tr, bl, br = (_role(identity, op, root) for op in ops[1:])
    side = oe.contract('abld,bcur->aclurd', tr, bl)
    tensors = {}
    for y in range(height):
        for x in range(width):
            if (x + y) % 2:
                tensors[(x, y)] = side
                continue
            tl = _role(identity, ops[0], math.copysign(1.0, mu) * root * np.conj(q.phase(x, y)))
            tensors[(x, y)] = oe.contract('abrd,bclu->aclurd', tl, br)
    return tensors


def build_pepo(basis: OperatorBasis, alpha: int, mu: float, q: Momentum) -> GenFuncPepo:
    """ Operator tensors of the generating function of one basis element.

        Pair strings use a two-site bond of dimension two along the pair
        direction. Plaquette strings use loops on one checkerboard half of the
        plaquettes, bond dimension two and a 2×2 cell with two distinct
        tensors; the other half enters through a second placement of the
        support one site to the left. The weight |μ| is split evenly over the
        string's sites so every entry on operator index 1 vanishes at μ = 0.

        Parameters
        ----------
        basis : OperatorBasis
            Site, pair or plaquette basis
        alpha : int
            Basis element, a single product string
        mu : float
            Generating function parameter, |μ| ≤ 1
        q : Momentum
            Real-phase momentum

        Returns
        -------
        GenFuncPepo
            The operator tensors

        Example
        -------
            >>> basis = product_basis(SupportGeometry.pair(2))
            >>> build_pepo(basis, basis.labels.index("ZZ"), 0.1, Momentum(0, 0, 1, 1)).bond_dim
            2
    """
    if abs(mu) > 1:
        raise ValueError(f"generating function parameter {mu} outside [-1, 1]")
    if not q.is_real_phase:
        raise UnsupportedMomentumError(f"momentum {q.label} is not in the commensurate set")
    string = basis.string_index(alpha)
    ops = [basis.site_matrices[digit] for digit in basis.product_digits(string)]
    offsets = basis.geometry.offsets
    placements = None
    if offsets == [(0, 0)]:
        tensors = _site_tensors(ops, q, mu)
    elif offsets in ([(0, 0), (1, 0)], [(0, 0), (0, 1)]):
        tensors = _pair_tensors(ops, q, mu, vertical=offsets[1] == (0, 1))
    elif offsets == [(0, 0), (1, 0), (0, 1), (1, 1)]:
        tensors = _plaquette_tensors(ops, q, mu)
        placements = [((0, 0), 1.0), ((-1, 0), np.conj(q.phase(1, 0)))]
    else:
        raise BasisError(f"no generating function operator for the {basis.geometry.name} geometry")
    return GenFuncPepo(tensors, basis, string, q, mu, placements)


def pepo_patch_operator(pepo: GenFuncPepo, width: int, height: int, periodic: bool = True) -> np.ndarray:
    """ Dense operator encoded by the tensors on a width × height patch.

        Sites are ordered row-major; open patches close the outer operator
        bonds on index 0.
    """
    d = pepo.basis.geometry.d
    operands = []
    for y in range(height):
        for x in range(width):
            w = pepo.tensors[(x % pepo.cell_width, y % pepo.cell_height)]
            right = ("h", (x + 1) % width, y) if periodic else ("h", x + 1, y)
            down = ("v", x, (y + 1) % height) if periodic else ("v", x, y + 1)
            operands += [w, [("o", x, y), ("i", x, y), ("h", x, y), ("v", x, y), right, down]]
    if not periodic:
        for y in range(height):
            for x, leg, label in ((0, 2, ("h", 0, y)), (width - 1, 4, ("h", width, y))):
                operands += [np.eye(pepo.tensors[(x % pepo.cell_width, y % pepo.cell_height)].shape[leg])[0], [label]]
        for x in range(width):
            for y, leg, label in ((0, 3, ("v", x, 0)), (height - 1, 5, ("v", x, height))):
                operands += [np.eye(pepo.tensors[(x % pepo.cell_width, y % pepo.cell_height)].shape[leg])[0], [label]]
    sites = [(x, y) for y in range(height) for x in range(width)]
    output = [("o", x, y) for x, y in sites] + [("i", x, y) for x, y in sites]
    dim = d ** len(sites)
    return oe.contract(*label_operands(operands, output), optimize='auto').reshape(dim, dim)


##### Finite Differences #####

def five_point(values: "Sequence", delta: float):
    """Five-point derivative from values at μ = 2δ, δ, -δ, -2δ"""
    if delta <= 0:
        raise ValueError("finite difference step must be positive")
    values = [np.asarray(v) for v in values]
    if not all(np.all(np.isfinite(v)) for v in values):
        raise NonFiniteError("non-finite stencil evaluation")
    return sum(weight * v for weight, v in zip(STENCIL_WEIGHTS, values)) / (12 * delta)


def finite_diff_5pt(f: Callable, delta: float):
    """ Central five-point derivative at zero, exact for polynomials up to degree four.

        Example
        -------
            >>> finite_diff_5pt(lambda mu: mu**3 + mu, 0.1)
            1.0
    """
    if delta <= 0:
        raise ValueError("finite difference step must be positive")
    return five_point([f(point * delta) for point in STENCIL], delta)


def stencil_is_unstable(values: "Sequence[np.ndarray]") -> bool:
    """True when the ±δ evaluations differ by less than a few hundred machine epsilons"""
    values = np.asarray(values)
    scale = float(np.max(np.abs(values)))
    if scale == 0:
        return True
    spread = float(np.max(np.abs(values[1] - values[2])))
    return spread < STENCIL_EPS_FACTOR * np.finfo(float).eps * scale


##### Rows #####

class RowResult(NamedTuple):
    """One structure factor row with its stencil diagnostics"""

    alpha: int
    """Basis element of the row"""

    row: np.ndarray
    """S_{α,β} for every β"""

    converged: bool
    """True when every stencil environment converged"""

    drift: float
    """Largest final corner drift over the stencil"""

    flags: "tuple[str, ...]"
    """Quality flags"""

    cold_difference: "float | None" = None
    """Largest difference to the cold-started row at reduced χ"""


def m_matrix(
    peps: PepsUnitCell,
    pepo: GenFuncPepo,
    chi: int,
    tol: float = CTM_TOL,
    max_iter: int = CTM_MAX_ITER,
    initial: "CtmEnvironment | None" = None,
) -> "tuple[np.ndarray, CtmEnvironment]":
    """ The matrix M with Tr(M ô^β) = Σ_p w_p ⟨G|ô^β_p|Ψ⟩ / ⟨G|Ψ⟩ over the pepo placements p.

        With a single placement this is the support at the origin and M = ρ at
        μ = 0. Symmetry-broken cat states are evaluated with the fixed point
        symmetrized by their virtual symmetry matrix.

        Parameters
        ----------
        peps : PepsUnitCell
            The state
        pepo : GenFuncPepo
            Generating function operator
        chi : int
            Environment bond dimension
        tol : float
            CTMRG convergence threshold
        max_iter : int
            Maximal number of CTMRG sweeps
        initial : CtmEnvironment, optional
            Warm start

        Returns
        -------
        tuple[np.ndarray, CtmEnvironment]
            M, rows and columns ordered like the support offsets, and the environment
    """
    network = CtmNetwork(peps, pepo.tensors)
    symmetrize = peps.injectivity == "symmetry-broken-cat" and network.u_x is not None
    environment = converge_environment(network, chi, tol=tol, max_iter=max_iter, symmetrize=symmetrize, initial=initial)
    offsets = pepo.basis.geometry.offsets
    matrix = sum(
        weight * patch_matrix(environment, [(x + dx, y + dy) for x, y in offsets])
        for (dx, dy), weight in pepo.placements
    )
    return matrix, environment


def _stencil_row(peps, basis, string, q, chi, delta, tol, max_iter, initial, warm) -> "tuple[np.ndarray, list, CtmEnvironment]":
    """Trace pairings at every stencil point and the μ = 0 environment"""
    _, base = m_matrix(peps, build_pepo(basis, string, 0.0, q), chi, tol, max_iter, initial)
    values, reports = [], [base.report]
    for point in STENCIL:
        pepo = build_pepo(basis, string, point * delta, q)
        matrix, environment = m_matrix(peps, pepo, chi, tol, max_iter, base if warm else None)
        values.append(basis.trace_pairings(matrix))
        reports.append(environment.report)
    return np.array(values), reports, base


def structure_factor_row(
    peps: PepsUnitCell,
    basis: OperatorBasis,
    alpha: int,
    q: Momentum,
    chi: int,
    delta: "float | None" = None,
    tol: float = CTM_TOL,
    max_iter: int = CTM_MAX_ITER,
    initial: "CtmEnvironment | None" = None,
    cold_check: bool = False,
) -> "tuple[RowResult, CtmEnvironment]":
    """ Row S_{α,·} as the μ-derivative of every trace pairing at μ = 0.

        The four stencil environments warm-start from the converged μ = 0
        environment. Non-convergence is flagged on the row, not raised.

        Parameters
        ----------
        peps : PepsUnitCell
            The state
        basis : OperatorBasis
            Basis of rows and columns
        alpha : int
            Row element, a single product string
        q : Momentum
            Real-phase momentum
        chi : int
            Environment bond dimension
        delta : float, optional
            Finite difference step, the geometry default when omitted
        tol : float
            CTMRG convergence threshold
        max_iter : int
            Maximal number of CTMRG sweeps per stencil point
        initial : CtmEnvironment, optional
            Warm start of the μ = 0 environment
        cold_check : bool
            Recompute the row with cold starts at χ/2 and compare

        Returns
        -------
        tuple[RowResult, CtmEnvironment]
            The row and the μ = 0 environment
    """
    delta = DEFAULT_DELTA.get(basis.geometry.name, 1e-2) if delta is None else delta
    string = basis.string_index(alpha)
    sign = 1.0 if basis.coefficients is None else float(np.sign(basis.coefficients[alpha, string]))
    values, reports, base = _stencil_row(peps, basis, string, q, chi, delta, tol, max_iter, initial, warm=True)
    row = sign * five_point(values, delta)

    flags = []
    converged = all(report.converged for report in reports)
    if not converged:
        flags.append("not-converged")
    if stencil_is_unstable(values):
        flags.append("stencil-unstable")
        logger.warning(f"row {basis.labels[alpha]}: stencil evaluations agree to machine precision, delta={delta:g} is too small")

    cold_difference = None
    if cold_check:
        cold_values, _, _ = _stencil_row(peps, basis, string, q, max(1, chi // 2), delta, tol, max_iter, None, warm=False)
        cold_difference = float(np.max(np.abs(sign * five_point(cold_values, delta) - row)))
        if cold_difference > COLD_CHECK_TOL * max(1.0, float(np.max(np.abs(row)))):
            flags.append("branch-mismatch")
            logger.warning(f"row {basis.labels[alpha]}: cold start at chi={max(1, chi // 2)} differs by {cold_difference:.2e}")

    drift = max(report.drift for report in reports)
    logger.info(f"row {basis.labels[alpha]} at q={q}: chi={chi}, delta={delta:g}, drift {drift:.1e}, flags {flags}")
    return RowResult(alpha, row, converged, drift, tuple(flags), cold_difference), base


##### Row Cache #####

class RowCache():
    """ Structure factor rows stored as .npy files so interrupted builds resume.

        Parameters
        ----------
        directory : str
            Cache directory, created on demand
        model : str
            Model tag of the state
    """

    def __init__(self, directory: str, model: str):
        self.directory: str = directory
        """Cache directory"""

        self.model: str = model
        """Model tag of the state"""

    def path(self, basis: OperatorBasis, alpha: int, q: Momentum, chi: int, delta: float) -> str:
        """File of one row"""
        momentum = q.label.replace(",", "_").replace("/", "-")
        name = f"{self.model}_{basis.name}_{basis.geometry.name}_{alpha}_{momentum}_chi{chi}_d{delta:.0e}.npy"
        return os.path.join(self.directory, name)

    def get(self, basis: OperatorBasis, alpha: int, q: Momentum, chi: int, delta: float) -> "np.ndarray | None":
        """Cached row or None"""
        path = self.path(basis, alpha, q, chi, delta)
        if not os.path.exists(path):
            return None
        row = np.load(path)
        return row if row.shape == (len(basis),) else None

    def put(self, basis: OperatorBasis, alpha: int, q: Momentum, chi: int, delta: float, row: np.ndarray):
        """Stores a row"""
        os.makedirs(self.directory, exist_ok=True)
        np.save(self.path(basis, alpha, q, chi, delta), np.asarray(row))

    def __str__(self) -> str:
        return f"RowCache({self.directory}, {self.model})"

    def __repr__(self) -> str:
        return str(self)


##### Structure Factor #####

def _row_job(arguments: tuple) -> RowResult:
    """Worker entry point computing one row from scratch"""
    peps, basis, alpha, q, chi, delta, tol, max_iter, cold_check = arguments
    result, _ = structure_factor_row(peps, basis, alpha, q, chi, delta, tol, max_iter, cold_check=cold_check)
    return result


def genfunc_structure_factor(
    peps: PepsUnitCell,
    basis: OperatorBasis,
    q: Momentum,
    chi: int,
    delta: "float | None" = None,
    tol: float = CTM_TOL,
    max_iter: int = CTM_MAX_ITER,
    workers: int = 1,
    cache: "RowCache | None" = None,
    cold_check: bool = False,
    progress: bool = False,
) -> "tuple[StructureFactorMatrix, list[RowResult]]":
    """ The full structure factor matrix, one generating function row per basis element.

        Rows run in a process pool when ``workers`` > 1; sequential rows reuse
        the previous μ = 0 environment as warm start.

        Returns
        -------
        tuple[StructureFactorMatrix, list[RowResult]]
            The assembled matrix and the per-row diagnostics
    """
    delta = DEFAULT_DELTA.get(basis.geometry.name, 1e-2) if delta is None else delta
    rows: "dict[int, np.ndarray]" = {}
    results: "list[RowResult]" = []
    pending = []
    for alpha in range(len(basis)):
        cached = cache.get(basis, alpha, q, chi, delta) if cache is not None else None
        if cached is not None:
            rows[alpha] = cached
            results.append(RowResult(alpha, cached, True, 0.0, ("cached",)))
        else:
            pending.append(alpha)
    logger.info(f"structure factor of {len(basis)} rows at q={q}, chi={chi}: {len(rows)} cached, {len(pending)} to compute")

    def record(result: RowResult):
        rows[result.alpha] = result.row
        results.append(result)
        if cache is not None:
            cache.put(basis, result.alpha, q, chi, delta, result.row)

    with tqdm(total=len(pending), disable=not progress) as bar:
        if workers > 1 and len(pending) > 1:
            jobs = [(peps, basis, alpha, q, chi, delta, tol, max_iter, cold_check) for alpha in pending]
            with ProcessPoolExecutor(max_workers=workers) as pool:
                for result in pool.map(_row_job, jobs):
                    record(result)
                    bar.update(1)
        else:
            base = None
            for alpha in pending:
                result, base = structure_factor_row(peps, basis, alpha, q, chi, delta, tol, max_iter, base, cold_check)
                record(result)
                bar.update(1)

    results.sort(key=lambda result: result.alpha)
    flags = sorted({flag for result in results for flag in result.flags if flag != "cached"})
    provenance = {
        "backend": "genfunc",
        "chi": chi,
        "delta": delta,
        "converged": all(result.converged for result in results),
        "flags": flags,
    }
    return assemble(rows, basis, q, provenance), results


def chi_scan(
    peps: PepsUnitCell,
    basis: OperatorBasis,
    q: Momentum,
    chis: "Sequence[int]",
    delta: "float | None" = None,
    smaller: "Sequence[tuple[OperatorBasis, np.ndarray]]" = (),
    **kwargs,
) -> "list[dict]":
    """ Lowest deflated eigenvalue, and the plaquette ansatz couplings in the su2-39 basis, per χ.

        Example
        -------
            >>> records = chi_scan(build_rvb_peps(), su2_reduced_plaquette_basis(), Momentum(0, 0, 1, 1), [8, 16])
            >>> sorted(records[0])[:3]
            ['chi', 'converged', 'eigenvalue']
    """
    records = []
    for chi in chis:
        matrix, _ = genfunc_structure_factor(peps, basis, q, chi, delta, **kwargs)
        solutions = solve(deflate(matrix, standard_deflation(basis, q, smaller)), count=1)
        record = {"chi": chi, "converged": matrix.provenance["converged"], "eigenvalue": solutions[0].eigenvalue}
        if basis.name == "su2-39":
            couplings = rvb_coefficients(solutions[0])
            record.update({"J2": couplings.j2, "Q1": couplings.q1, "Q2": couplings.q2})
        logger.info(f"chi scan: {record}")
        records.append(record)
    return records
