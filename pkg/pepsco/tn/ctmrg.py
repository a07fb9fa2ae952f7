"""Corner transfer matrix renormalization group for double- and triple-layer networks"""

import logging
import math
from typing import NamedTuple, Sequence

import numpy as np
import opt_einsum as oe
import scipy.linalg

from .constants import (
    CTM_MAX_ITER,
    CTM_MONOTONE_WINDOW,
    CTM_SVD_CUTOFF,
    CTM_TOL,
)
from .exceptions import (
    CtmrgDivergenceError,
    NonFiniteError,
    TensorShapeError,
)
from .models import PepsUnitCell
from .tensor import (
    label_operands,
    truncated_svd,
)

logger = logging.getLogger(__name__)

ENV_KEYS: "tuple[str, ...]" = ("C1", "C2", "C3", "C4", "T1", "T2", "T3", "T4")
"""Environment tensor names: corners clockwise from top-left, then edges top, right, bottom, left"""

_ROTATED_NAME: "dict[str, str]" = {
    "C1": "C4", "C2": "C1", "C3": "C2", "C4": "C3",
    "T1": "T4", "T2": "T1", "T3": "T2", "T4": "T3",
}
"""Name each environment tensor takes after rotating the lattice by 90° counter-clockwise"""


##### Networks #####

def identity_pepo(d: int) -> np.ndarray:
    """Operator tensor of the identity with unit operator bonds, index order (out, in, left, up, right, down)"""
    return np.eye(d).reshape(d, d, 1, 1, 1, 1)


class CtmNetwork():
    """ The norm network ⟨Ψ|O|Ψ⟩ of a PEPS with an optional operator layer.

        Each site is fused into a closed tensor Σ_ab conj(A[a]) W[a,b] A[b]
        whose legs bundle (ket, operator, bra) bonds, and an open tensor that
        keeps the ket index and the operator input index.

        Parameters
        ----------
        peps : PepsUnitCell
            The state
        pepo : dict[tuple[int, int], np.ndarray], optional
            Operator tensors (out, in, left, up, right, down) keyed by cell
            coordinates; the identity when omitted
        u_x : np.ndarray, optional
            Virtual symmetry matrix used for fixed-point symmetrization

        Example
        -------
            >>> network = CtmNetwork(build_ising_peps(0.3))
            >>> network.closed((0, 0)).shape
            (4, 4, 4, 4)
    """

    def __init__(self, peps: PepsUnitCell, pepo: "dict[tuple[int, int], np.ndarray] | None" = None, u_x: "np.ndarray | None" = None):
        pepo = pepo or {(0, 0): identity_pepo(peps.physical_dim)}
        pepo_width = 1 + max(x for x, _ in pepo)
        pepo_height = 1 + max(y for _, y in pepo)

        self.peps: PepsUnitCell = peps
        """The state"""

        self.pepo: "dict[tuple[int, int], np.ndarray]" = pepo
        """Operator tensors"""

        self.width: int = math.lcm(peps.cell_width, pepo_width)
        """Columns of the network unit cell"""

        self.height: int = math.lcm(peps.cell_height, pepo_height)
        """Rows of the network unit cell"""

        self.u_x: "np.ndarray | None" = u_x if u_x is not None else peps.u_x
        """Virtual symmetry matrix"""

        self._pepo_cell = (pepo_width, pepo_height)
        self._closed: "dict[tuple[int, int], np.ndarray]" = {}
        self._open: "dict[tuple[int, int], np.ndarray]" = {}
        for y in range(self.height):
            for x in range(self.width):
                a, w = peps.array(x, y), self.operator(x, y)
                if w.shape[:2] != (peps.physical_dim, peps.physical_dim):
                    raise TensorShapeError(f"operator tensor at ({x}, {y}) has physical shape {w.shape[:2]}")
                closed = oe.contract('bAEIM,abBFJN,aCGKO->ABCEFGIJKMNO', a, w, a.conj())
                self._closed[(x, y)] = closed.reshape([a.shape[1 + i] * w.shape[2 + i] * a.shape[1 + i] for i in range(4)])

    def operator(self, x: int, y: int) -> np.ndarray:
        """Operator tensor at (x, y), wrapped into the operator cell"""
        return self.pepo[(x % self._pepo_cell[0], y % self._pepo_cell[1])]

    def closed(self, position: "tuple[int, int]") -> np.ndarray:
        """Closed tensor (left, up, right, down) at a lattice position"""
        return self._closed[(position[0] % self.width, position[1] % self.height)]

    def open(self, position: "tuple[int, int]") -> np.ndarray:
        """Open tensor (ket, operator input, left, up, right, down) at a lattice position"""
        key = (position[0] % self.width, position[1] % self.height)
        if key not in self._open:
            a, w = self.peps.array(*key), self.operator(*key)
            tensor = oe.contract('cAEIM,abBFJN,aCGKO->cbABCEFGIJKMNO', a, w, a.conj())
            d = a.shape[0]
            self._open[key] = tensor.reshape([d, d] + [a.shape[1 + i] * w.shape[2 + i] * a.shape[1 + i] for i in range(4)])
        return self._open[key]

    def leg_shape(self, position: "tuple[int, int]", leg: int) -> "tuple[int, int, int]":
        """(ket, operator, bra) extents of a leg (0 left, 1 up, 2 right, 3 down)"""
        a = self.peps.array(*position)
        w = self.operator(*position)
        return a.shape[1 + leg], w.shape[2 + leg], a.shape[1 + leg]

    def boundary_vector(self, position: "tuple[int, int]", leg: int, boundary: "np.ndarray | None" = None) -> np.ndarray:
        """Bundled vector B(ket, bra) ⊗ e_0(operator) closing a leg, B the identity by default"""
        ket, op, bra = self.leg_shape(position, leg)
        matrix = np.eye(ket) if boundary is None else np.asarray(boundary)
        if matrix.shape != (ket, bra):
            raise TensorShapeError(f"boundary matrix of shape {matrix.shape} does not fit a ({ket}, {bra}) leg")
        e0 = np.zeros(op)
        e0[0] = 1.0
        return np.einsum('kb,o->kob', matrix, e0).reshape(-1)

    def leg_symmetry(self, position: "tuple[int, int]", leg: int) -> np.ndarray:
        """U ⊗ 𝟙 ⊗ conj(U) on the bundled leg, U the virtual symmetry matrix"""
        if self.u_x is None:
            raise TensorShapeError("network has no virtual symmetry matrix")
        ket, op, bra = self.leg_shape(position, leg)
        if self.u_x.shape != (ket, ket):
            raise TensorShapeError(f"virtual symmetry of shape {self.u_x.shape} does not fit bond {ket}")
        return np.kron(np.kron(self.u_x, np.eye(op)), self.u_x.conj())

    def __str__(self) -> str:
        return f"CtmNetwork({self.width}x{self.height}, legs {self.closed((0, 0)).shape})"

    def __repr__(self) -> str:
        return str(self)


##### Environment #####

class ConvergenceReport(NamedTuple):
    """Outcome of a CTMRG run"""

    iterations: int
    """Number of sweeps performed"""

    drift: float
    """Corner spectrum change of the last sweep"""

    converged: bool
    """True when the drift fell below the tolerance"""

    history: "list[float]"
    """Drift of every sweep"""


class CtmEnvironment():
    """ Corner and edge tensors around every position of a network unit cell.

        Index conventions, with the site to the bottom-right of C1:
        C1[down, right], T1[left, mid, right], C2[left, down],
        T2[up, mid, down], C3[up, left], T3[right, mid, left],
        C4[right, up], T4[down, mid, up].

        Parameters
        ----------
        network : CtmNetwork
            The network the environment belongs to
        chi : int
            Environment bond dimension
        tensors : dict[str, dict[tuple[int, int], np.ndarray]]
            Environment tensors by name and position
    """

    def __init__(self, network: CtmNetwork, chi: int, tensors: "dict[str, dict[tuple[int, int], np.ndarray]]"):
        self.network: CtmNetwork = network
        """The network"""

        self.chi: int = chi
        """Environment bond dimension"""

        self.tensors: "dict[str, dict[tuple[int, int], np.ndarray]]" = tensors
        """Environment tensors by name and position"""

        self.report: ConvergenceReport = ConvergenceReport(0, float('inf'), False, [])
        """Convergence report"""

        self.symmetrize: bool = False
        """Evaluate observables with the symmetrized fixed point"""

    def get(self, name: str, position: "tuple[int, int]") -> np.ndarray:
        """Environment tensor at a lattice position, wrapped into the cell"""
        return self.tensors[name][(position[0] % self.network.width, position[1] % self.network.height)]

    def corner_spectra(self) -> "dict[tuple[str, int, int], np.ndarray]":
        """Normalized singular values of every corner, padded with zeros to χ"""
        spectra = {}
        for name in ("C1", "C2", "C3", "C4"):
            for (x, y), corner in self.tensors[name].items():
                s = scipy.linalg.svdvals(corner)
                s = s / s[0] if s[0] > 0 else s
                padded = np.zeros(max(self.chi, len(s)))
                padded[:len(s)] = s
                spectra[(name, x, y)] = padded
        return spectra

    def copy(self, network: "CtmNetwork | None" = None) -> "CtmEnvironment":
        """Copy of the tensors, optionally attached to another network with the same leg shapes"""
        tensors = {name: {key: t.copy() for key, t in group.items()} for name, group in self.tensors.items()}
        env = CtmEnvironment(network or self.network, self.chi, tensors)
        env.report = self.report
        env.symmetrize = self.symmetrize
        return env

    def __str__(self) -> str:
        return f"CtmEnvironment(chi={self.chi}, {self.network.width}x{self.network.height}, {self.report.iterations} sweeps)"

    def __repr__(self) -> str:
        return str(self)


def initial_environment(network: CtmNetwork, chi: int, boundary: "np.ndarray | None" = None) -> CtmEnvironment:
    """ Environment seeded by closing the outer legs of the neighboring closed tensors.

        Parameters
        ----------
        network : CtmNetwork
            The network
        chi : int
            Environment bond dimension
        boundary : np.ndarray, optional
            Matrix B(ket, bra) closing the outer legs; the identity (a partial
            trace) by default, a projector to bias a symmetry-broken branch

        Returns
        -------
        CtmEnvironment
            Deterministic starting point
    """
    tensors: "dict[str, dict[tuple[int, int], np.ndarray]]" = {name: {} for name in ENV_KEYS}

    def vector(position, leg):
        return network.boundary_vector(position, leg, boundary)

    for y in range(network.height):
        for x in range(network.width):
            key = (x, y)
            p = (x - 1, y - 1)
            tensors["C1"][key] = oe.contract('lurd,l,u->dr', network.closed(p), vector(p, 0), vector(p, 1))
            p = (x, y - 1)
            tensors["T1"][key] = oe.contract('lurd,u->ldr', network.closed(p), vector(p, 1))
            p = (x + 1, y - 1)
            tensors["C2"][key] = oe.contract('lurd,u,r->ld', network.closed(p), vector(p, 1), vector(p, 2))
            p = (x + 1, y)
            tensors["T2"][key] = oe.contract('lurd,r->uld', network.closed(p), vector(p, 2))
            p = (x + 1, y + 1)
            tensors["C3"][key] = oe.contract('lurd,r,d->ul', network.closed(p), vector(p, 2), vector(p, 3))
            p = (x, y + 1)
            tensors["T3"][key] = oe.contract('lurd,d->rul', network.closed(p), vector(p, 3))
            p = (x - 1, y + 1)
            tensors["C4"][key] = oe.contract('lurd,l,d->ru', network.closed(p), vector(p, 0), vector(p, 3))
            p = (x - 1, y)
            tensors["T4"][key] = oe.contract('lurd,l->dru', network.closed(p), vector(p, 0))
    for group in tensors.values():
        for key, t in group.items():
            group[key] = t / np.max(np.abs(t))
    return CtmEnvironment(network, chi, tensors)


##### Moves #####

def _rotate(sites: dict, env: dict, width: int, height: int) -> "tuple[dict, dict, int, int]":
    """Rotates the lattice and its environment by 90° counter-clockwise"""
    def moved(position):
        x, y = position
        return (y, width - 1 - x)

    new_sites = {moved(key): a.transpose(1, 2, 3, 0) for key, a in sites.items()}
    new_env = {_ROTATED_NAME[name]: {moved(key): t for key, t in group.items()} for name, group in env.items()}
    return new_sites, new_env, height, width


def _normalized(t: np.ndarray, sweep: int) -> np.ndarray:
    """Scales a tensor to unit largest magnitude"""
    scale = np.max(np.abs(t))
    if not np.isfinite(scale) or scale == 0:
        raise CtmrgDivergenceError("environment tensor became non-finite or zero", sweep)
    return t / scale


def _projectors(sites: dict, env: dict, x: int, y: int, width: int, height: int, chi: int, sweep: int) -> "tuple[np.ndarray, np.ndarray]":
    """ Projectors for the cut between rows y and y+1 at column x.

        Returns the projector applied to the legs of the upper half and the one
        applied to the legs of the lower half, both shaped (environment, bond, χ).
    """
    x1, y1 = (x + 1) % width, (y + 1) % height
    q1 = oe.contract('ab,bmc,dla,lmrD->dDcr', env["C1"][(x, y)], env["T1"][(x, y)], env["T4"][(x, y)], sites[(x, y)])
    q2 = oe.contract('cme,eg,grh,lmrD->clhD', env["T1"][(x1, y)], env["C2"][(x1, y)], env["T2"][(x1, y)], sites[(x1, y)])
    q3 = oe.contract('grh,hi,imj,lurm->gujl', env["T2"][(x1, y1)], env["C3"][(x1, y1)], env["T3"][(x1, y1)], sites[(x1, y1)])
    q4 = oe.contract('dla,kd,jmk,lurm->aujr', env["T4"][(x, y1)], env["C4"][(x, y1)], env["T3"][(x, y1)], sites[(x, y1)])
    cut = q1.shape[:2]
    q1 = _normalized(q1.reshape(cut[0] * cut[1], -1), sweep)
    q2 = _normalized(q2.reshape(q1.shape[1], -1), sweep)
    q3 = _normalized(q3.reshape(q3.shape[0] * q3.shape[1], -1), sweep)
    q4 = _normalized(q4.reshape(cut[0] * cut[1], -1), sweep)
    upper = q1 @ q2
    lower = q4 @ q3.T
    m = _normalized(upper.T @ lower, sweep)
    svd = truncated_svd(m, chi, CTM_SVD_CUTOFF)
    if svd.s[0] <= 0:
        raise CtmrgDivergenceError("half-system product vanished", sweep)
    inverse = 1 / np.sqrt(svd.s)
    upper_projector = (lower @ svd.v.conj().T) * inverse[None, :]
    lower_projector = (upper @ svd.u.conj()) * inverse[None, :]
    return upper_projector.reshape(cut[0], cut[1], -1), lower_projector.reshape(cut[0], cut[1], -1)


def _left_move(sites: dict, env: dict, width: int, height: int, chi: int, sweep: int):
    """Absorbs every column into the environment to its right, in place"""
    for x in range(width):
        upper, lower = {}, {}
        for y in range(height):
            upper[y], lower[y] = _projectors(sites, env, x, y, width, height, chi, sweep)
        x1 = (x + 1) % width
        updated: "dict[str, dict]" = {"C1": {}, "T4": {}, "C4": {}}
        for y in range(height):
            ym = (y - 1) % height
            updated["C1"][(x1, y)] = _normalized(oe.contract('ab,bmr,amk->kr', env["C1"][(x, y)], env["T1"][(x, y)], upper[ym]), sweep)
            updated["T4"][(x1, y)] = _normalized(
                oe.contract('dmu,mURD,uUk,dDj->jRk', env["T4"][(x, y)], sites[(x, y)], lower[ym], upper[y]), sweep,
            )
            updated["C4"][(x1, y)] = _normalized(oe.contract('ru,smr,umk->sk', env["C4"][(x, y)], env["T3"][(x, y)], lower[y]), sweep)
        for name, group in updated.items():
            env[name].update(group)


def ctm_sweep(environment: CtmEnvironment, sweep: int = 0):
    """One move in each of the four directions, updating the environment in place"""
    network = environment.network
    sites = {(x, y): network.closed((x, y)) for y in range(network.height) for x in range(network.width)}
    env = environment.tensors
    width, height = network.width, network.height
    for _ in range(4):
        _left_move(sites, env, width, height, environment.chi, sweep)
        sites, env, width, height = _rotate(sites, env, width, height)
    assert (width, height) == (network.width, network.height)
    environment.tensors = env


def _drift(old: dict, new: dict) -> float:
    """Largest change between two sets of corner spectra"""
    drift = 0.0
    for key, s in new.items():
        previous = old.get(key)
        if previous is None or len(previous) != len(s):
            return float('inf')
        drift = max(drift, float(np.max(np.abs(previous - s))))
    return drift


def converge_environment(
    network: CtmNetwork,
    chi: int,
    tol: float = CTM_TOL,
    max_iter: int = CTM_MAX_ITER,
    symmetrize: bool = False,
    initial: "CtmEnvironment | None" = None,
    boundary: "np.ndarray | None" = None,
) -> CtmEnvironment:
    """ Iterates directional CTMRG sweeps until the corner spectra stop moving.

        Parameters
        ----------
        network : CtmNetwork
            The network to contract
        chi : int
            Environment bond dimension
        tol : float
            Convergence threshold on the corner spectra
        max_iter : int
            Maximal number of sweeps; reaching it is reported, not raised
        symmetrize : bool
            Evaluate observables with the fixed point symmetrized by the
            network's virtual symmetry matrix
        initial : CtmEnvironment, optional
            Warm start with matching leg shapes
        boundary : np.ndarray, optional
            Outer-leg matrix of the initial environment

        Returns
        -------
        CtmEnvironment
            The environment with its convergence report
    """
    if chi < 1:
        raise TensorShapeError("chi must be positive")
    if symmetrize and network.u_x is None:
        raise TensorShapeError("symmetrization needs a virtual symmetry matrix")
    environment = initial.copy(network) if initial is not None else initial_environment(network, chi, boundary)
    environment.chi = chi
    environment.symmetrize = symmetrize
    spectra = environment.corner_spectra()
    history: "list[float]" = []
    drift = float('inf')
    warned = False
    for sweep in range(1, max_iter + 1):
        ctm_sweep(environment, sweep)
        updated = environment.corner_spectra()
        if not all(np.all(np.isfinite(s)) for s in updated.values()):
            raise CtmrgDivergenceError("corner spectra became non-finite", sweep)
        drift = _drift(spectra, updated)
        spectra = updated
        history.append(drift)
        logger.debug(f"sweep {sweep}: drift {drift:.3e}")
        window = history[-CTM_MONOTONE_WINDOW:]
        if not warned and len(window) == CTM_MONOTONE_WINDOW and any(b > a for a, b in zip(window, window[1:])):
            logger.warning(f"corner drift is not monotone over the last {CTM_MONOTONE_WINDOW} sweeps (sweep {sweep})")
            warned = True
        if drift < tol:
            environment.report = ConvergenceReport(sweep, drift, True, history)
            logger.info(f"CTMRG converged in {sweep} sweeps at chi={chi}, drift {drift:.2e}")
            return environment
    environment.report = ConvergenceReport(max_iter, drift, False, history)
    logger.warning(f"CTMRG did not converge in {max_iter} sweeps at chi={chi}, drift {drift:.2e}")
    return environment


##### Patch Contraction #####

def _patch_operands(environment: CtmEnvironment, x0: int, y0: int, w: int, h: int, open_sites: "Sequence[tuple[int, int]]", flipped: bool) -> list:
    """Interleaved operands of a w × h patch with its environment, open sites carrying (ket, in) legs"""
    network = environment.network
    get = environment.get
    operands = []
    right, bottom = x0 + w - 1, y0 + h - 1

    def edge(name, position, leg, tensor, axis):
        if not flipped:
            return tensor
        g = network.leg_symmetry(position, leg)
        return np.moveaxis(np.tensordot(g, tensor, axes=(1, axis)), 0, axis)

    operands += [get("C1", (x0, y0)), [("l", 0), ("t", 0)]]
    operands += [get("C2", (right, y0)), [("t", w), ("r", 0)]]
    operands += [get("C3", (right, bottom)), [("r", h), ("b", w)]]
    operands += [get("C4", (x0, bottom)), [("b", 0), ("l", h)]]
    for i in range(w):
        x = x0 + i
        operands += [edge("T1", (x, y0), 1, get("T1", (x, y0)), 1), [("t", i), ("v", x, y0), ("t", i + 1)]]
        operands += [edge("T3", (x, bottom), 3, get("T3", (x, bottom)), 1), [("b", i + 1), ("v", x, bottom + 1), ("b", i)]]
    for j in range(h):
        y = y0 + j
        operands += [edge("T4", (x0, y), 0, get("T4", (x0, y)), 1), [("l", j + 1), ("h", x0, y), ("l", j)]]
        operands += [edge("T2", (right, y), 2, get("T2", (right, y)), 1), [("r", j), ("h", right + 1, y), ("r", j + 1)]]
    for j in range(h):
        for i in range(w):
            x, y = x0 + i, y0 + j
            legs = [("h", x, y), ("v", x, y), ("h", x + 1, y), ("v", x, y + 1)]
            if (x, y) in open_sites:
                operands += [network.open((x, y)), [("ket", x, y), ("in", x, y)] + legs]
            else:
                operands += [network.closed((x, y)), legs]
    return operands


def contract_patch(
    environment: CtmEnvironment,
    x0: int,
    y0: int,
    w: int,
    h: int,
    open_sites: "Sequence[tuple[int, int]]" = (),
    flipped: bool = False,
) -> np.ndarray:
    """ Contracts a rectangular patch of the network with its environment.

        Parameters
        ----------
        environment : CtmEnvironment
            Converged environment
        x0, y0 : int
            Top-left position of the patch
        w, h : int
            Patch width and height
        open_sites : list[tuple[int, int]]
            Positions inside the patch whose ket and operator-input indices stay open
        flipped : bool
            Apply the virtual symmetry to every environment leg touching the patch

        Returns
        -------
        np.ndarray
            A matrix with rows (ket indices) and columns (input indices) over
            the open sites in the given order, or a one-element array
    """
    open_sites = [tuple(s) for s in open_sites]
    for x, y in open_sites:
        if not (x0 <= x < x0 + w and y0 <= y < y0 + h):
            raise TensorShapeError(f"open site ({x}, {y}) is outside the patch")
    operands = _patch_operands(environment, x0, y0, w, h, open_sites, flipped)
    output = [("ket",) + s for s in open_sites] + [("in",) + s for s in open_sites]
    result = oe.contract(*label_operands(operands, output), optimize='auto')
    if not open_sites:
        return np.asarray(result).reshape(1)
    d = environment.network.peps.physical_dim
    dim = d ** len(open_sites)
    return np.asarray(result).reshape(dim, dim)


def patch_matrix(environment: CtmEnvironment, sites: "Sequence[tuple[int, int]]") -> np.ndarray:
    """ Open-site patch contraction normalized to unit trace.

        On the double-layer network this is the reduced density matrix; with an
        operator layer it is the matrix M with Tr(M ô) = ⟨Ψ|O ô|Ψ⟩ / ⟨Ψ|O|Ψ⟩.
        The symmetrized fixed point adds the flipped environment to numerator
        and denominator alike.
    """
    sites = [tuple(s) for s in sites]
    if not sites:
        raise TensorShapeError("patch matrix needs at least one site")
    xs, ys = [x for x, _ in sites], [y for _, y in sites]
    x0, y0 = min(xs), min(ys)
    w, h = max(xs) - x0 + 1, max(ys) - y0 + 1
    matrix = contract_patch(environment, x0, y0, w, h, sites)
    if environment.symmetrize:
        matrix = matrix + contract_patch(environment, x0, y0, w, h, sites, flipped=True)
    trace = np.trace(matrix)
    if abs(trace) == 0 or not np.isfinite(trace):
        raise NonFiniteError("patch contraction has zero or non-finite norm")
    return matrix / trace


def reduced_density_matrix(environment: CtmEnvironment, sites: "Sequence[tuple[int, int]]") -> np.ndarray:
    """Hermitian reduced density matrix of a few sites from a double-layer environment"""
    rho = patch_matrix(environment, sites)
    return (rho + rho.conj().T) / 2


def local_expectation(environment: CtmEnvironment, operator: np.ndarray, sites: "Sequence[tuple[int, int]]") -> complex:
    """ Expectation value of a local operator from a converged environment.

        Parameters
        ----------
        environment : CtmEnvironment
            Converged environment
        operator : np.ndarray
            Matrix on the listed sites, rows ordered like ``sites``
        sites : list[tuple[int, int]]
            Lattice positions

        Returns
        -------
        complex
            Ratio of the operator-inserted contraction to the norm

        Example
        -------
            >>> env = converge_environment(CtmNetwork(build_ising_peps(0.0)), chi=8)
            >>> local_expectation(env, PAULI_X, [(0, 0)]).real
            1.0
    """
    rho = patch_matrix(environment, sites)
    if operator.shape != rho.shape:
        raise TensorShapeError(f"operator of shape {operator.shape} does not act on {len(sites)} sites")
    return complex(np.trace(rho @ operator))


##### Checkpoints #####

def save_environment(environment: CtmEnvironment, path: str):
    """Writes χ, the cell, every environment tensor and the report to a .npz file"""
    arrays = {
        f"{name}_{x}_{y}": t
        for name, group in environment.tensors.items()
        for (x, y), t in group.items()
    }
    report = environment.report
    np.savez(
        path,
        chi=environment.chi,
        cell=np.array([environment.network.width, environment.network.height]),
        report=np.array([report.iterations, report.drift, float(report.converged)]),
        history=np.array(report.history, dtype=float),
        symmetrize=environment.symmetrize,
        **arrays,
    )


def load_environment(path: str, network: CtmNetwork) -> CtmEnvironment:
    """Reads an environment written by ``save_environment`` and attaches it to a network"""
    with np.load(path) as data:
        width, height = (int(v) for v in data["cell"])
        if (width, height) != (network.width, network.height):
            raise TensorShapeError(f"checkpoint cell {width}x{height} does not match the network")
        tensors: "dict[str, dict[tuple[int, int], np.ndarray]]" = {name: {} for name in ENV_KEYS}
        for key in data.files:
            name, *coords = key.split("_")
            if name in tensors:
                tensors[name][(int(coords[0]), int(coords[1]))] = data[key]
        environment = CtmEnvironment(network, int(data["chi"]), tensors)
        iterations, drift, converged = data["report"]
        environment.report = ConvergenceReport(int(iterations), float(drift), bool(converged), list(data["history"]))
        environment.symmetrize = bool(data["symmetrize"])
    return environment
