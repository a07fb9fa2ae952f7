"""Benchmark states as PEPS unit cells, finite tori, and the deformed toric code statevector"""

import json
import math
from itertools import product
from typing import Literal

import numpy as np
import scipy.special

from .basis import (
    Momentum,
    PauliSum,
)
from .constants import (
    BETA_C,
    HORIZONTAL,
    MAX_TC_EDGES,
    PAULI_X,
    VERTICAL,
)
from .exceptions import (
    MemoryBudgetError,
    TensorShapeError,
)
from .tensor import Tensor

Injectivity = Literal["injective", "symmetry-broken-cat", "topological"]

PEPS_FORMAT: str = "pepsco-peps"
"""Format tag of the PEPS container file"""

PEPS_FORMAT_VERSION: int = 1
"""Version of the PEPS container file layout"""


class FiniteTorus():
    """ A periodic Lx × Ly square lattice.

        Sites are ordered row-major with x fastest, ``n = y * lx + x``, and y
        pointing down. The edge lattice attaches a horizontal edge
        ``(x, y, 'h')`` between (x, y) and (x+1, y) and a vertical edge
        ``(x, y, 'v')`` between (x, y) and (x, y+1) to every site.

        Parameters
        ----------
        lx, ly : int
            Width and height of the torus
        d : int
            Physical dimension per site

        Returns
        -------
        FiniteTorus
            The torus geometry

        Example
        -------
            >>> torus = FiniteTorus(4, 4)
            >>> torus.site_index(1, 2)
            9
    """

    def __init__(self, lx: int, ly: int, d: int = 2):
        """Stores the torus dimensions"""
        if lx < 1 or ly < 1 or d < 1:
            raise TensorShapeError(f"invalid torus {lx}x{ly} with d={d}")

        self.lx: int = lx
        """Width of the torus"""

        self.ly: int = ly
        """Height of the torus"""

        self.d: int = d
        """Physical dimension per site"""

    @property
    def num_sites(self) -> int:
        """Number of lattice sites"""
        return self.lx * self.ly

    @property
    def num_edges(self) -> int:
        """Number of edges of the edge lattice"""
        return 2 * self.lx * self.ly

    @property
    def dimension(self) -> int:
        """Hilbert space dimension of the site lattice"""
        return self.d ** self.num_sites

    def site_index(self, x: int, y: int) -> int:
        """Row-major index of the site at (x, y), wrapped onto the torus"""
        return (y % self.ly) * self.lx + (x % self.lx)

    def coords(self, n: int) -> "tuple[int, int]":
        """Coordinates (x, y) of the site with index n"""
        return n % self.lx, n // self.lx

    def neighbors(self, n: int) -> "tuple[int, int, int, int]":
        """Left, up, right and down neighbors of site n"""
        x, y = self.coords(n)
        return (self.site_index(x - 1, y), self.site_index(x, y - 1),
                self.site_index(x + 1, y), self.site_index(x, y + 1))

    def bonds(self) -> "list[tuple[int, int]]":
        """Nearest-neighbor bonds, all horizontal ones first, then all vertical ones"""
        horizontal = [(self.site_index(x, y), self.site_index(x + 1, y)) for y in range(self.ly) for x in range(self.lx)]
        vertical = [(self.site_index(x, y), self.site_index(x, y + 1)) for y in range(self.ly) for x in range(self.lx)]
        return horizontal + vertical

    def edge_index(self, x: int, y: int, orientation: str) -> int:
        """Index of an edge of the edge lattice, wrapped onto the torus"""
        if orientation not in (HORIZONTAL, VERTICAL):
            raise TensorShapeError(f"unknown edge orientation {orientation!r}")
        return 2 * self.site_index(x, y) + (0 if orientation == HORIZONTAL else 1)

    def star(self, x: int, y: int) -> "list[int]":
        """Edges incident to the vertex (x, y): right, left, down, up"""
        return [self.edge_index(x, y, HORIZONTAL), self.edge_index(x - 1, y, HORIZONTAL),
                self.edge_index(x, y, VERTICAL), self.edge_index(x, y - 1, VERTICAL)]

    def plaquette_edges(self, x: int, y: int) -> "list[int]":
        """Edges around the plaquette whose top-left corner is (x, y): top, bottom, left, right"""
        return [self.edge_index(x, y, HORIZONTAL), self.edge_index(x, y + 1, HORIZONTAL),
                self.edge_index(x, y, VERTICAL), self.edge_index(x + 1, y, VERTICAL)]

    def __str__(self) -> str:
        return f"{self.lx}x{self.ly}"

    def __repr__(self) -> str:
        return f"FiniteTorus({self.lx}, {self.ly}, d={self.d})"


class PepsUnitCell():
    """ A translationally repeated grid of PEPS site tensors.

        Every site tensor has the index order (physical, left, up, right, down).
        Bond matrices between sites are absorbed into the right and down legs of
        the left and upper site, so contracting right with left and down with up
        legs directly gives the state.

        Parameters
        ----------
        sites : dict[tuple[int, int], Tensor | np.ndarray]
            Site tensors keyed by cell coordinates (x, y)
        injectivity : Literal["injective", "symmetry-broken-cat", "topological"]
            Contraction hint for non-injective states
        u_x : np.ndarray, optional
            Virtual symmetry matrix used to symmetrize CTMRG fixed points

        Returns
        -------
        PepsUnitCell
            The validated unit cell

        Example
        -------
            >>> peps = build_ising_peps(0.3)
            >>> peps.cell_width, peps.physical_dim
            (1, 2)
    """

    def __init__(self,
        sites: "dict[tuple[int, int], Tensor | np.ndarray]",
        injectivity: Injectivity = "injective",
        u_x: "np.ndarray | None" = None,
    ):
        """Stores and validates the site tensors"""

        ##### Cell Geometry #####
        self.cell_width: int = 1 + max(x for x, _ in sites)
        """Number of distinct columns of the cell"""

        self.cell_height: int = 1 + max(y for _, y in sites)
        """Number of distinct rows of the cell"""

        self.sites: "dict[tuple[int, int], Tensor]" = {
            key: tensor if isinstance(tensor, Tensor) else Tensor(tensor) for key, tensor in sites.items()
        }
        """Site tensors keyed by cell coordinates"""

        self.injectivity: Injectivity = injectivity
        """Contraction hint for non-injective states"""

        self.u_x: "np.ndarray | None" = None if u_x is None else np.asarray(u_x)
        """Virtual symmetry matrix of symmetry-broken cat states"""

        self.validate()

    @property
    def physical_dim(self) -> int:
        """Physical dimension d"""
        return self.sites[(0, 0)].extents[0]

    @property
    def is_real(self) -> bool:
        """True when every site tensor is real"""
        return all(tensor.is_real for tensor in self.sites.values())

    def site(self, x: int, y: int) -> Tensor:
        """Site tensor at lattice coordinates (x, y), wrapped into the cell"""
        return self.sites[(x % self.cell_width, y % self.cell_height)]

    def array(self, x: int, y: int) -> np.ndarray:
        """Element array of the site tensor at (x, y)"""
        return self.site(x, y).array

    def bond_dims(self) -> "dict[tuple[int, int], tuple[int, int, int, int]]":
        """Extents of the left, up, right and down legs per cell site"""
        return {key: tuple(tensor.extents[1:]) for key, tensor in self.sites.items()}

    def max_bond_dim(self) -> int:
        """Largest virtual extent of the cell"""
        return max(max(dims) for dims in self.bond_dims().values())

    def validate(self):
        """Checks tensor ranks, the physical dimension and shared bond extents"""
        keys = set(product(range(self.cell_width), range(self.cell_height)))
        if set(self.sites) != keys:
            raise TensorShapeError("site tensors must fill a rectangular cell")
        d = self.sites[(0, 0)].extents[0]
        for (x, y), tensor in self.sites.items():
            if tensor.ndim != 5:
                raise TensorShapeError(f"site ({x}, {y}) has {tensor.ndim} indices instead of 5")
            if tensor.extents[0] != d:
                raise TensorShapeError(f"site ({x}, {y}) has physical dimension {tensor.extents[0]} instead of {d}")
            right = self.site(x + 1, y)
            below = self.site(x, y + 1)
            if tensor.extents[3] != right.extents[1]:
                raise TensorShapeError(f"horizontal bond mismatch right of site ({x}, {y})")
            if tensor.extents[4] != below.extents[2]:
                raise TensorShapeError(f"vertical bond mismatch below site ({x}, {y})")

    def __str__(self) -> str:
        return f"PEPS {self.cell_width}x{self.cell_height} d={self.physical_dim} D={self.max_bond_dim()} ({self.injectivity})"

    def __repr__(self) -> str:
        return str(self)


##### Benchmark States #####

def build_aklt_peps() -> PepsUnitCell:
    """ The spin-2 AKLT state on the square lattice.

        The vertex tensor is the symmetric projection of four virtual spin-1/2
        onto spin 2, with physical index i ordered by S^z = 2, 1, 0, -1, -2 and
        virtual index 0 meaning spin up. The bond singlet ``|↑↓) - |↓↑)`` is
        absorbed into the right and down legs.

        Returns
        -------
        PepsUnitCell
            1×1 cell, d=5, D=2, real
    """
    vertex = np.zeros((5, 2, 2, 2, 2))
    for legs in product((0, 1), repeat=4):
        downs = sum(legs)
        vertex[(downs,) + legs] = 1 / math.sqrt(math.comb(4, downs))
    singlet = np.array([[0.0, 1.0], [-1.0, 0.0]])
    site = np.einsum('iluab,ar,bd->ilurd', vertex, singlet, singlet)
    return PepsUnitCell({(0, 0): site})


def build_rvb_peps() -> PepsUnitCell:
    """ The nearest-neighbor resonating valence bond state on the square lattice.

        Virtual index 0 is the empty bond, 1 and 2 carry a spin up or down. The
        vertex tensor sends its physical spin through exactly one leg, and the
        bond matrix ``|00) + |↑↓) - |↓↑)`` is absorbed into the right and down
        legs.

        Returns
        -------
        PepsUnitCell
            1×1 cell, d=2, D=3, real
    """
    vertex = np.zeros((2, 3, 3, 3, 3))
    for spin in (0, 1):
        for leg in range(4):
            legs = [0, 0, 0, 0]
            legs[leg] = spin + 1
            vertex[(spin,) + tuple(legs)] = 1.0
    bond = np.zeros((3, 3))
    bond[0, 0] = 1.0
    bond[1, 2] = 1.0
    bond[2, 1] = -1.0
    site = np.einsum('iluab,ar,bd->ilurd', vertex, bond, bond)
    return PepsUnitCell({(0, 0): site})


def build_ising_peps(beta: float) -> PepsUnitCell:
    """ The deformed Ising state exp(β/2 Σ Z_i Z_j)|+···+⟩.

        Each site copies its spin z onto the left and up legs and emits the
        bond weights exp(β z z'/2) on the right and down legs, so contraction
        gives amplitudes exactly exp((β/2) Σ_⟨ij⟩ z_i z_j).

        Parameters
        ----------
        beta : float
            Deformation strength

        Returns
        -------
        PepsUnitCell
            1×1 cell, d=2, D=2; a symmetry-broken cat with U_X = X above the
            critical point
    """
    if not math.isfinite(beta):
        raise ValueError("beta must be finite")
    spins = np.array([1.0, -1.0])
    weight = np.exp(beta * np.outer(spins, spins) / 2)
    site = np.zeros((2, 2, 2, 2, 2))
    for s in (0, 1):
        site[s, s, s, :, :] = np.outer(weight[s], weight[s])
    if beta > BETA_C:
        return PepsUnitCell({(0, 0): site}, injectivity="symmetry-broken-cat", u_x=PAULI_X.real)
    return PepsUnitCell({(0, 0): site})


def ising_magnetization(beta: float) -> float:
    """Spontaneous magnetization (1 - sinh(2β)^-4)^(1/8) of the classical square-lattice Ising model"""
    if beta <= BETA_C:
        return 0.0
    return (1 - math.sinh(2 * beta) ** -4) ** 0.125


def ising_bond_correlation(beta: float) -> float:
    """Nearest-neighbor ⟨z_i z_j⟩ of the classical square-lattice Ising model from the exact internal energy"""
    if beta == 0:
        return 0.0
    kappa = 2 * math.sinh(2 * beta) / math.cosh(2 * beta) ** 2
    elliptic = float(scipy.special.ellipk(kappa**2))
    energy = -1 / math.tanh(2 * beta) * (1 + 2 / math.pi * (2 * math.tanh(2 * beta) ** 2 - 1) * elliptic)
    return -energy / 2


##### Deformed Ising Solution Family #####

PLAQUETTE_POSITIONS: "list[tuple[int, int]]" = [(0, 0), (1, 0), (0, 1), (1, 1)]
"""Vertex positions of a plaquette: top-left, top-right, bottom-left, bottom-right"""

_L_SHAPES: "dict[str, tuple[tuple[int, int], tuple[int, int], tuple[int, int], int]]" = {
    "BL": ((0, 0), (0, 1), (1, 1), 1),
    "TR": ((0, 0), (1, 0), (1, 1), 1),
    "TL": ((1, 0), (0, 0), (0, 1), -1),
    "BR": ((1, 0), (1, 1), (0, 1), -1),
}
"""Corner term Z_a (I - X_c) Z_b of a plaquette as (a, c, b, sign) keyed by the role of the center c"""


def _corner_term(a, c, b) -> PauliSum:
    """Z_a (I - X_c) Z_b"""
    return PauliSum.from_string([a, b], "ZZ") - PauliSum.from_string([a, c, b], "ZXZ")


def ising_vertex_term() -> PauliSum:
    """ Star-shaped local term of the deformed Ising conserved operator around the vertex (0, 0).

        Sum of Z_a (I - X_0) Z_b over the four perpendicular neighbor pairs,
        positive for (up, right) and (left, down) and negative for
        (right, down) and (up, left).
    """
    up, right, left, down = (0, -1), (1, 0), (-1, 0), (0, 1)
    center = (0, 0)
    return (_corner_term(up, center, right) + _corner_term(left, center, down)
            - _corner_term(right, center, down) - _corner_term(up, center, left))


def ising_plaquette_term(q: Momentum) -> PauliSum:
    """ Plaquette regrouping of the vertex term translated with momentum q.

        At q = (0, 0) this is 2 Z_TL Z_BR - 2 Z_TR Z_BL - Z_TL X_TR Z_BR
        - Z_TL X_BL Z_BR + X_TL Z_TR Z_BL + Z_TR X_BR Z_BL.

        Parameters
        ----------
        q : Momentum
            Real-phase momentum

        Returns
        -------
        PauliSum
            Term on the plaquette positions whose translated sum with phases
            e^{iq·x} equals that of the vertex term
    """
    q.require_real_phase()
    role_offsets = {"TL": (0, 0), "TR": (1, 0), "BL": (0, 1), "BR": (1, 1)}
    term = PauliSum()
    for role, (a, c, b, sign) in _L_SHAPES.items():
        term = term + _corner_term(a, c, b) * (sign * q.phase(*role_offsets[role]))
    return term


def dual_target_term() -> PauliSum:
    """ Edge-lattice local term of the dual model around the vertex (0, 0).

        With the incident edges ordered left, up, right, down this is
        2 Z_u Z_r - 2 Z_r Z_d + XYYX + YXXY - XXYY - YYXX.
    """
    left, up, right, down = (-1, 0, HORIZONTAL), (0, -1, VERTICAL), (0, 0, HORIZONTAL), (0, 0, VERTICAL)
    edges = [left, up, right, down]
    term = PauliSum.from_string([up, right], "ZZ", 2.0) - PauliSum.from_string([right, down], "ZZ", 2.0)
    for labels, sign in (("XYYX", 1.0), ("YXXY", 1.0), ("XXYY", -1.0), ("YYXX", -1.0)):
        term = term + PauliSum.from_string(edges, labels, sign)
    return term


def build_deformed_tc_state(beta: float, torus: FiniteTorus) -> np.ndarray:
    """ The deformed toric code state Π_e exp(β/2 Z_e)|TC⟩ on the edge lattice.

        The toric code ground state is the equal superposition of all
        configurations reached from the all-up state by applying vertex stars.
        Edge e is the e-th tensor factor of the returned vector.

        Parameters
        ----------
        beta : float
            Deformation strength
        torus : FiniteTorus
            Torus with at least 2 sites in each direction

        Returns
        -------
        np.ndarray
            Unnormalized statevector of length 2**(2·Lx·Ly)
    """
    edges = torus.num_edges
    if edges > MAX_TC_EDGES:
        raise MemoryBudgetError(f"{edges} edges exceed the limit of {MAX_TC_EDGES}")
    if torus.lx < 2 or torus.ly < 2:
        raise TensorShapeError("the edge lattice needs at least 2 sites in each direction")

    ##### Star Masks #####
    masks = []
    for y in range(torus.ly):
        for x in range(torus.lx):
            masks.append(sum(1 << (edges - 1 - e) for e in torus.star(x, y)))

    ##### Loop Configurations #####
    configurations = {0}
    for mask in masks[:-1]:
        configurations |= {config ^ mask for config in configurations}

    ##### Deformed Amplitudes #####
    state = np.zeros(2 ** edges)
    for config in configurations:
        state[config] = math.exp(beta / 2 * (edges - 2 * config.bit_count()))
    return state


##### PEPS Container #####

def save_peps(peps: PepsUnitCell, path: str):
    """Writes the unit cell into a self-describing JSON container with exact float round-trip"""
    document = {
        "format": PEPS_FORMAT,
        "version": PEPS_FORMAT_VERSION,
        "cell_width": peps.cell_width,
        "cell_height": peps.cell_height,
        "physical_dim": peps.physical_dim,
        "injectivity": peps.injectivity,
        "u_x": None if peps.u_x is None else {
            "extents": list(peps.u_x.shape),
            "elements": [[float(z.real), float(z.imag)] for z in peps.u_x.astype(complex).ravel()],
        },
        "sites": [
            {
                "x": x,
                "y": y,
                "extents": list(tensor.extents),
                "elements": [[float(z.real), float(z.imag)] for z in tensor.elements],
            }
            for (x, y), tensor in sorted(peps.sites.items(), key=lambda item: (item[0][1], item[0][0]))
        ],
    }
    with open(path, mode="w", encoding="UTF-8") as file:
        json.dump(document, file, indent=1, sort_keys=True)


def _array_from_pairs(extents: "list[int]", pairs: "list[list[float]]") -> np.ndarray:
    """Rebuilds a complex array from [re, im] pairs"""
    values = np.array([complex(re, im) for re, im in pairs])
    if len(values) != int(np.prod(extents)):
        raise TensorShapeError("element count does not match the extents")
    return values.reshape(extents)


def load_peps(path: str) -> PepsUnitCell:
    """Reads a unit cell written by save_peps"""
    with open(path, mode="r", encoding="UTF-8") as file:
        document = json.load(file)
    if document.get("format") != PEPS_FORMAT:
        raise TensorShapeError(f"{path} is not a {PEPS_FORMAT} container")
    sites = {
        (site["x"], site["y"]): Tensor(_array_from_pairs(site["extents"], site["elements"]))
        for site in document["sites"]
    }
    u_x = document["u_x"]
    u_x = None if u_x is None else Tensor(_array_from_pairs(u_x["extents"], u_x["elements"])).array
    return PepsUnitCell(sites, injectivity=document["injectivity"], u_x=u_x)
