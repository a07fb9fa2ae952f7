"""Orthonormal Hermitian operator bases on small lattice supports, trivial solutions, embeddings and the Wegner duality"""

import json
import math
from itertools import combinations, product
from typing import Sequence

import numpy as np
import opt_einsum as oe
import scipy.linalg

from .constants import (
    HERMITIAN_TOL,
    HORIZONTAL,
    PAULI_LABELS,
    PAULIS,
    RANK_TOL,
    VERTICAL,
)
from .exceptions import (
    BasisError,
    MemoryBudgetError,
    UnsupportedMomentumError,
)

MAX_PRODUCT_VECTOR_ENTRIES: int = 2**27
"""Largest number of stored entries of a stack of product basis coefficient vectors"""


class SupportGeometry():
    """ Lattice offsets of a k-site support and the physical dimension per site.

        Parameters
        ----------
        offsets : list[tuple[int, int]]
            Distinct offsets (x, y) with the first one equal to (0, 0)
        d : int
            Physical dimension per site
        name : str
            Short name of the geometry

        Returns
        -------
        SupportGeometry
            The support geometry

        Example
        -------
            >>> SupportGeometry.plaquette(2).offsets
            [(0, 0), (1, 0), (0, 1), (1, 1)]
    """

    def __init__(self, offsets: "Sequence[tuple[int, int]]", d: int, name: str = "custom"):
        """Validates and stores the offsets"""
        offsets = [tuple(offset) for offset in offsets]
        if not offsets or offsets[0] != (0, 0):
            raise BasisError("the first offset of a support must be (0, 0)")
        if len(set(offsets)) != len(offsets):
            raise BasisError("support offsets must be distinct")
        if d < 2:
            raise BasisError(f"physical dimension must be at least 2, got {d}")

        self.offsets: "list[tuple[int, int]]" = offsets
        """Ordered lattice offsets of the support"""

        self.d: int = d
        """Physical dimension per site"""

        self.name: str = name
        """Short name of the geometry"""

    @classmethod
    def site(cls, d: int) -> "SupportGeometry":
        """Single site"""
        return cls([(0, 0)], d, "site")

    @classmethod
    def pair(cls, d: int) -> "SupportGeometry":
        """Horizontal nearest-neighbor pair"""
        return cls([(0, 0), (1, 0)], d, "pair")

    @classmethod
    def plaquette(cls, d: int) -> "SupportGeometry":
        """2×2 plaquette ordered top-left, top-right, bottom-left, bottom-right"""
        return cls([(0, 0), (1, 0), (0, 1), (1, 1)], d, "plaquette")

    @classmethod
    def window_2x3(cls, d: int) -> "SupportGeometry":
        """Three columns by two rows, row-major"""
        return cls([(0, 0), (1, 0), (2, 0), (0, 1), (1, 1), (2, 1)], d, "window_2x3")

    @classmethod
    def from_name(cls, name: str, d: int) -> "SupportGeometry":
        """Geometry by its short name"""
        builders = {"site": cls.site, "pair": cls.pair, "plaquette": cls.plaquette, "window_2x3": cls.window_2x3}
        if name not in builders:
            raise BasisError(f"unknown support geometry {name!r}")
        return builders[name](d)

    @property
    def k(self) -> int:
        """Number of sites"""
        return len(self.offsets)

    @property
    def dimension(self) -> int:
        """Hilbert space dimension d^k of the support"""
        return self.d ** self.k

    @property
    def width(self) -> int:
        """Horizontal extent"""
        return 1 + max(x for x, _ in self.offsets) - min(x for x, _ in self.offsets)

    @property
    def height(self) -> int:
        """Vertical extent"""
        return 1 + max(y for _, y in self.offsets) - min(y for _, y in self.offsets)

    def placements_in(self, other: "SupportGeometry") -> "list[tuple[int, int]]":
        """Translations that map this support inside another one, sorted by (y, x)"""
        targets = set(other.offsets)
        shifts = {(tx - x0, ty - y0) for tx, ty in other.offsets for x0, y0 in self.offsets[:1]}
        placements = [
            (dx, dy) for dx, dy in shifts
            if all((x + dx, y + dy) in targets for x, y in self.offsets)
        ]
        return sorted(placements, key=lambda shift: (shift[1], shift[0]))

    def __eq__(self, other) -> bool:
        return isinstance(other, SupportGeometry) and self.offsets == other.offsets and self.d == other.d

    def __hash__(self) -> int:
        return hash((tuple(self.offsets), self.d))

    def __str__(self) -> str:
        return f"{self.name}(d={self.d})"

    def __repr__(self) -> str:
        return f"SupportGeometry({self.offsets}, d={self.d})"


class Momentum():
    """ Lattice momentum q = (2πn/Lx, 2πm/Ly).

        Parameters
        ----------
        n, m : int
            Momentum quantum numbers
        lx, ly : int
            Periods the momentum is commensurate with

        Example
        -------
            >>> Momentum(1, 1, 2, 2).phase(1, 0)
            -1.0
    """

    def __init__(self, n: int, m: int, lx: int, ly: int):
        """Validates the quantum numbers"""
        if lx < 1 or ly < 1:
            raise UnsupportedMomentumError("momentum periods must be positive")
        if not 0 <= n < lx or not 0 <= m < ly:
            raise UnsupportedMomentumError(f"momentum ({n}, {m}) outside [0, {lx}) x [0, {ly})")
        if (n and math.gcd(n, lx) != 1) or (m and math.gcd(m, ly) != 1):
            raise UnsupportedMomentumError(f"momentum ({n}/{lx}, {m}/{ly}) is not in lowest terms")

        self.n: int = n
        """Horizontal quantum number"""

        self.m: int = m
        """Vertical quantum number"""

        self.lx: int = lx
        """Horizontal period"""

        self.ly: int = ly
        """Vertical period"""

    @classmethod
    def from_label(cls, label: str) -> "Momentum":
        """Real-phase momentum from a label such as '0,0', 'pi,pi', 'pi,0' or '0,pi'"""
        parts = [part.strip().lower() for part in label.split(",")]
        if len(parts) != 2 or any(part not in ("0", "pi") for part in parts):
            raise UnsupportedMomentumError(f"unsupported momentum label {label!r}")
        qx, qy = (1 if part == "pi" else 0 for part in parts)
        return cls(qx, qy, 2 if qx else 1, 2 if qy else 1)

    @property
    def q(self) -> "tuple[float, float]":
        """Momentum components in radians"""
        return 2 * math.pi * self.n / self.lx, 2 * math.pi * self.m / self.ly

    @property
    def is_real_phase(self) -> bool:
        """True when every phase e^{iq·x} is ±1"""
        return (2 * self.n) % self.lx == 0 and (2 * self.m) % self.ly == 0

    @property
    def is_zero(self) -> bool:
        """True for q = (0, 0)"""
        return self.n == 0 and self.m == 0

    @property
    def label(self) -> str:
        """Label of a real-phase momentum"""
        if not self.is_real_phase:
            return f"{self.n}/{self.lx},{self.m}/{self.ly}"
        return ",".join("pi" if k else "0" for k in (self.n, self.m))

    def commensurate_with(self, lx: int, ly: int) -> bool:
        """True when the momentum is periodic on an lx × ly torus"""
        return (self.n * lx) % self.lx == 0 and (self.m * ly) % self.ly == 0

    def phase(self, x: int, y: int) -> complex:
        """The phase e^{iq·x}, as a float for real-phase momenta"""
        if self.is_real_phase:
            return float((-1) ** (((2 * self.n * x) // self.lx + (2 * self.m * y) // self.ly) % 2))
        qx, qy = self.q
        return complex(np.exp(1j * (qx * x + qy * y)))

    def require_real_phase(self):
        """Raises when the momentum has complex phases"""
        if not self.is_real_phase:
            raise UnsupportedMomentumError(f"momentum {self.label} has complex phases")

    def __eq__(self, other) -> bool:
        return isinstance(other, Momentum) and self.q == other.q

    def __hash__(self) -> int:
        return hash(self.q)

    def __str__(self) -> str:
        return self.label

    def __repr__(self) -> str:
        return f"Momentum({self.n}, {self.m}, {self.lx}, {self.ly})"


##### Single Site Bases #####

def gell_mann_matrices(d: int) -> "tuple[list[np.ndarray], list[str]]":
    """ Trace-orthonormal Hermitian basis of d × d matrices.

        The identity comes first, then the symmetric, antisymmetric and
        diagonal generalized Gell-Mann matrices. For d = 2 this is
        I, X, Y, Z divided by √2.

        Parameters
        ----------
        d : int
            Physical dimension, at least 2

        Returns
        -------
        tuple[list[np.ndarray], list[str]]
            The d² matrices and their labels
    """
    if d < 2:
        raise BasisError(f"physical dimension must be at least 2, got {d}")
    if d == 2:
        return [PAULIS[label] / math.sqrt(2) for label in PAULI_LABELS], list(PAULI_LABELS)

    elements = [np.eye(d, dtype=complex) / math.sqrt(d)]
    labels = ["I"]
    for j, k in combinations(range(d), 2):
        sym = np.zeros((d, d), dtype=complex)
        sym[j, k] = sym[k, j] = 1 / math.sqrt(2)
        elements.append(sym)
        labels.append(f"S{j}{k}")
    for j, k in combinations(range(d), 2):
        anti = np.zeros((d, d), dtype=complex)
        anti[j, k] = -1j / math.sqrt(2)
        anti[k, j] = 1j / math.sqrt(2)
        elements.append(anti)
        labels.append(f"A{j}{k}")
    for level in range(1, d):
        diag = np.zeros((d, d), dtype=complex)
        diag[np.arange(level), np.arange(level)] = 1.0
        diag[level, level] = -level
        elements.append(diag / math.sqrt(level * (level + 1)))
        labels.append(f"D{level}")
    return elements, labels


def spin_matrices(d: int) -> "tuple[np.ndarray, np.ndarray, np.ndarray]":
    """Spin operators S^x, S^y, S^z of spin (d-1)/2 with index i holding S^z = S - i"""
    spin = (d - 1) / 2
    m = spin - np.arange(d)
    raising = np.zeros((d, d), dtype=complex)
    for i in range(1, d):
        raising[i - 1, i] = math.sqrt(spin * (spin + 1) - m[i] * (m[i] + 1))
    lowering = raising.conj().T
    return (raising + lowering) / 2, (raising - lowering) / 2j, np.diag(m).astype(complex)


def orthonormalize(vectors: np.ndarray) -> np.ndarray:
    """Rank-revealing orthonormalization of the rows of a matrix, returned as rows"""
    vectors = np.atleast_2d(np.asarray(vectors))
    if vectors.size == 0:
        return np.zeros((0, vectors.shape[-1]))
    return scipy.linalg.orth(vectors.T, rcond=RANK_TOL).T


class OperatorBasis():
    """ An orthonormal Hermitian operator basis on a support geometry.

        Product bases are stored implicitly: element i is the tensor product
        of single-site matrices whose labels are the base-d² digits of i, most
        significant digit on the first offset. Derived bases carry a real
        coefficient matrix whose orthonormal rows express every element in the
        product basis of the same geometry.

        Parameters
        ----------
        geometry : SupportGeometry
            The support
        labels : list[str]
            Human readable label per element
        coefficients : np.ndarray, optional
            Row i holds element i in the product basis; None for the product basis itself
        tags : list[str], optional
            Family tag per element
        name : str
            Short name of the basis

        Example
        -------
            >>> basis = product_basis(SupportGeometry.pair(2))
            >>> len(basis), basis.labels[5]
            (16, 'XX')
    """

    def __init__(self,
        geometry: SupportGeometry,
        labels: "list[str]",
        coefficients: "np.ndarray | None" = None,
        tags: "list[str] | None" = None,
        name: str = "product",
    ):
        """Stores the basis and checks the coefficient matrix"""
        self.geometry: SupportGeometry = geometry
        """Support of every element"""

        self.site_matrices, self.site_labels = gell_mann_matrices(geometry.d)
        """Single-site basis matrices and labels"""

        self.site_stack: np.ndarray = np.array(self.site_matrices)
        """Single-site matrices stacked as (label, row, column)"""

        self.labels: "list[str]" = list(labels)
        """Element labels"""

        self.coefficients: "np.ndarray | None" = None if coefficients is None else np.asarray(coefficients, dtype=float)
        """Product basis coefficients of the elements, one row per element"""

        self.tags: "list[str]" = list(tags) if tags is not None else [""] * len(self.labels)
        """Family tag per element"""

        self.name: str = name
        """Short name of the basis"""

        if self.coefficients is not None:
            if self.coefficients.shape != (len(self.labels), self.num_product):
                raise BasisError("coefficient matrix does not match the labels and the product basis size")
            gram = self.coefficients @ self.coefficients.T
            if np.max(np.abs(gram - np.eye(len(self.labels)))) > 1e-10:
                raise BasisError("derived basis elements are not orthonormal")
        elif len(self.labels) != self.num_product:
            raise BasisError("a product basis needs one label per product string")

    @property
    def num_product(self) -> int:
        """Size (d²)^k of the product basis on the same geometry"""
        return (self.geometry.d ** 2) ** self.geometry.k

    @property
    def is_product(self) -> bool:
        """True for the full product basis"""
        return self.coefficients is None

    def __len__(self) -> int:
        return len(self.labels)

    def product_digits(self, index: int) -> "tuple[int, ...]":
        """Single-site label indices of a product string"""
        return tuple(int(digit) for digit in np.unravel_index(index, (self.geometry.d ** 2,) * self.geometry.k))

    def product_index(self, digits: "Sequence[int]") -> int:
        """Product string index of single-site label indices"""
        return int(np.ravel_multi_index(tuple(digits), (self.geometry.d ** 2,) * self.geometry.k))

    def product_label(self, index: int) -> str:
        """Label of a product string"""
        separator = "" if self.geometry.d == 2 else "."
        return separator.join(self.site_labels[digit] for digit in self.product_digits(index))

    def product_matrix(self, index: int) -> np.ndarray:
        """Dense matrix of a product string"""
        matrix = np.ones((1, 1), dtype=complex)
        for digit in self.product_digits(index):
            matrix = np.kron(matrix, self.site_matrices[digit])
        return matrix

    def string_index(self, i: int) -> int:
        """Product string index of element i, which must be a single product string"""
        if self.coefficients is None:
            return i
        support = np.flatnonzero(np.abs(self.coefficients[i]) > 1e-12)
        if len(support) != 1 or abs(abs(self.coefficients[i, support[0]]) - 1) > 1e-12:
            raise BasisError(f"element {self.labels[i]} is not a single product string")
        return int(support[0])

    def product_vector(self, h: np.ndarray) -> np.ndarray:
        """Coefficients of an element combination in the product basis"""
        h = np.asarray(h)
        if h.shape[-1] != len(self):
            raise BasisError(f"coefficient length {h.shape[-1]} does not match basis size {len(self)}")
        return h if self.coefficients is None else h @ self.coefficients

    def local_matrix(self, h: np.ndarray) -> np.ndarray:
        """ Dense d^k × d^k matrix Σ_α h_α ô^α.

            Parameters
            ----------
            h : np.ndarray
                Coefficient per basis element

            Returns
            -------
            np.ndarray
                The local operator, rows and columns ordered like the support offsets
        """
        k, d = self.geometry.k, self.geometry.d
        hp = self.product_vector(h).reshape((d * d,) * k)
        operands = [hp, list(range(k))]
        for site in range(k):
            operands += [self.site_stack, [site, k + site, 2 * k + site]]
        operands.append(list(range(k, 3 * k)))
        tensor = oe.contract(*operands)
        return tensor.reshape(d**k, d**k)

    def element(self, i: int) -> np.ndarray:
        """Dense matrix of element i"""
        if self.coefficients is None:
            return self.product_matrix(i)
        return self.local_matrix(np.eye(len(self))[i])

    def trace_pairings(self, matrix: np.ndarray) -> np.ndarray:
        """ Tr(M ô^β) for every element β.

            Parameters
            ----------
            matrix : np.ndarray
                A d^k × d^k matrix on the support

            Returns
            -------
            np.ndarray
                One complex value per element
        """
        k, d = self.geometry.k, self.geometry.d
        tensor = np.asarray(matrix).reshape((d,) * (2 * k))
        operands = [tensor, list(range(k)) + list(range(k, 2 * k))]
        for site in range(k):
            operands += [self.site_stack, [2 * k + site, k + site, site]]
        operands.append(list(range(2 * k, 3 * k)))
        pairings = oe.contract(*operands).reshape(-1)
        return pairings if self.coefficients is None else self.coefficients @ pairings

    def gram(self) -> np.ndarray:
        """Gram matrix Tr(ô^α ô^β) of the elements"""
        if self.coefficients is None:
            return np.eye(len(self))
        return self.coefficients @ self.coefficients.T

    def restrict(self, vectors: np.ndarray) -> np.ndarray:
        """ Intersection of the span of product basis vectors with the span of this basis.

            Parameters
            ----------
            vectors : np.ndarray
                Rows of product basis coefficients

            Returns
            -------
            np.ndarray
                Orthonormal rows expressed in this basis spanning the intersection
        """
        vectors = orthonormalize(vectors)
        if self.coefficients is None:
            return vectors
        if len(vectors) == 0:
            return np.zeros((0, len(self)))
        overlap = self.coefficients @ vectors.T
        u, s, _ = scipy.linalg.svd(overlap, full_matrices=False)
        return u[:, s > 1 - 1e-8].T

    def export_manifest(self, path: str):
        """Writes ordered labels and the real and imaginary matrix elements of every element to JSON"""
        manifest = {
            "name": self.name,
            "geometry": {"name": self.geometry.name, "offsets": self.geometry.offsets, "d": self.geometry.d},
            "elements": [
                {
                    "label": label,
                    "tag": tag,
                    "real": self.element(i).real.tolist(),
                    "imag": self.element(i).imag.tolist(),
                }
                for i, (label, tag) in enumerate(zip(self.labels, self.tags))
            ],
        }
        with open(path, mode="w", encoding="UTF-8") as file:
            json.dump(manifest, file, indent=1)

    def __str__(self) -> str:
        return f"{self.name} basis on {self.geometry} with {len(self)} elements"

    def __repr__(self) -> str:
        return str(self)


def product_basis(geometry: SupportGeometry) -> OperatorBasis:
    """All tensor products of the single-site basis, ordered lexicographically by site then label"""
    _, site_labels = gell_mann_matrices(geometry.d)
    separator = "" if geometry.d == 2 else "."
    labels = [separator.join(digits) for digits in product(site_labels, repeat=geometry.k)]
    return OperatorBasis(geometry, labels)


def hermitian_site_basis(d: int) -> OperatorBasis:
    """ Single-site operator basis of the d² trace-orthonormal Hermitian matrices.

        Example
        -------
            >>> hermitian_site_basis(2).labels
            ['I', 'X', 'Y', 'Z']
    """
    if d < 2:
        raise BasisError(f"physical dimension must be at least 2, got {d}")
    return product_basis(SupportGeometry.site(d))


def subset_basis(geometry: SupportGeometry, strings: "Sequence[int]", tags: "Sequence[str] | None" = None, name: str = "subset") -> OperatorBasis:
    """Basis made of selected product strings"""
    parent = product_basis(geometry)
    coefficients = np.zeros((len(strings), parent.num_product))
    coefficients[np.arange(len(strings)), list(strings)] = 1.0
    return OperatorBasis(geometry, [parent.labels[s] for s in strings], coefficients, list(tags) if tags else None, name)


##### Trivial Solutions #####

def _subshapes(geometry: SupportGeometry) -> "list[list[tuple[int, int]]]":
    """Distinct sub-shapes of a support up to translation, normalized to start at (0, 0)"""
    shapes = []
    seen = set()
    for size in range(1, geometry.k + 1):
        for subset in combinations(geometry.offsets, size):
            x0, y0 = subset[0]
            shape = tuple((x - x0, y - y0) for x, y in subset)
            if shape not in seen:
                seen.add(shape)
                shapes.append(list(shape))
    return shapes


def trivial_vectors(geometry: SupportGeometry, q: Momentum) -> np.ndarray:
    """ Raw product basis vectors whose translated sum vanishes or is proportional to identity.

        Every sub-shape with at least two placements inside the support
        contributes O at the first placement minus the phase-shifted O at each
        other placement, for every string O that is non-identity on all sites
        of the sub-shape. The identity comes first.

        Parameters
        ----------
        geometry : SupportGeometry
            Site, pair or plaquette support
        q : Momentum
            Real-phase momentum

        Returns
        -------
        np.ndarray
            One product basis vector per row, not orthonormalized
    """
    q.require_real_phase()
    if geometry.name not in ("site", "pair", "plaquette"):
        raise BasisError(f"trivial solutions are not tabulated for the {geometry.name} support")
    parent = product_basis(geometry)
    positions = {offset: i for i, offset in enumerate(geometry.offsets)}
    d2 = geometry.d ** 2

    ##### Shape Placements #####
    families = []
    for shape in _subshapes(geometry):
        shape_geometry = SupportGeometry(shape, geometry.d)
        placements = shape_geometry.placements_in(geometry)
        if len(placements) >= 2:
            families.append((shape, placements))
    count = 1 + sum((d2 - 1) ** len(shape) * (len(placements) - 1) for shape, placements in families)
    if count * parent.num_product > MAX_PRODUCT_VECTOR_ENTRIES:
        raise MemoryBudgetError(f"{count} trivial vectors of length {parent.num_product} exceed the storage budget")

    ##### Difference Vectors #####
    vectors = np.zeros((count, parent.num_product))
    vectors[0, 0] = 1.0
    row = 1
    for shape, placements in families:
        for labels in product(range(1, d2), repeat=len(shape)):
            first = _placed_index(parent, positions, shape, labels, placements[0])
            for shift in placements[1:]:
                relative = (shift[0] - placements[0][0], shift[1] - placements[0][1])
                vectors[row, first] += 1.0
                vectors[row, _placed_index(parent, positions, shape, labels, shift)] -= q.phase(*relative)
                row += 1
    assert row == count
    return vectors


def _placed_index(parent: OperatorBasis, positions: "dict[tuple[int, int], int]", shape, labels, shift) -> int:
    """Product index of a string on a translated sub-shape, identity elsewhere"""
    digits = [0] * parent.geometry.k
    for (x, y), label in zip(shape, labels):
        digits[positions[(x + shift[0], y + shift[1])]] = label
    return parent.product_index(digits)


def trivial_subspace(geometry: SupportGeometry, q: Momentum) -> np.ndarray:
    """Orthonormal rows spanning the trivial solutions of a support at momentum q"""
    return orthonormalize(trivial_vectors(geometry, q))


def embed_smaller_support(
    coefficients: np.ndarray,
    source: SupportGeometry,
    target: SupportGeometry,
    q: Momentum,
) -> "tuple[np.ndarray, np.ndarray]":
    """ Embeds solutions of a smaller support into every placement inside a larger one.

        Each placement Δ carries the phase e^{iq·Δ} and identity on the
        remaining sites, rescaled so that the translated global operators of
        the embedded vectors equal the original one.

        Parameters
        ----------
        coefficients : np.ndarray
            Product basis rows on the source support
        source, target : SupportGeometry
            Smaller and larger supports with equal physical dimension
        q : Momentum
            Real-phase momentum

        Returns
        -------
        tuple[np.ndarray, np.ndarray]
            The embedded rows (placement-major) and an orthonormal span of them
    """
    q.require_real_phase()
    if source.d != target.d:
        raise BasisError("supports have different physical dimensions")
    placements = source.placements_in(target)
    if not placements:
        raise BasisError(f"{source} does not fit inside {target}")
    coefficients = np.atleast_2d(np.asarray(coefficients, dtype=float))
    small, large = product_basis(source), product_basis(target)
    if coefficients.shape[1] != small.num_product:
        raise BasisError("coefficient length does not match the source product basis")
    positions = {offset: i for i, offset in enumerate(target.offsets)}
    scale = math.sqrt(source.d) ** (target.k - source.k)

    embedded = np.zeros((len(placements) * len(coefficients), large.num_product))
    for p, (dx, dy) in enumerate(placements):
        sites = [positions[(x + dx, y + dy)] for x, y in source.offsets]
        phase = q.phase(dx, dy) * scale
        for s in range(small.num_product):
            digits = [0] * target.k
            for site, digit in zip(sites, small.product_digits(s)):
                digits[site] = digit
            embedded[p * len(coefficients):(p + 1) * len(coefficients), large.product_index(digits)] += phase * coefficients[:, s]
    return embedded, orthonormalize(embedded)


##### Reduced Bases #####

def su2_reduced_plaquette_basis() -> OperatorBasis:
    """ The 39 spin-1/2 plaquette strings spanning SU(2) and C4v symmetric plaquette terms.

        Tags: ``nn`` nearest-neighbor pairs, ``diag`` diagonal pairs, ``all``
        four equal Paulis, ``q1`` horizontal or vertical pairs of two
        different Paulis, ``q2`` diagonal pairs of two different Paulis.

        Returns
        -------
        OperatorBasis
            Subset of the d=2 plaquette product basis
    """
    geometry = SupportGeometry.plaquette(2)
    parent = product_basis(geometry)
    tl, tr, bl, br = range(4)
    entries: "list[tuple[list[int], str]]" = []

    def string(assignment: "dict[int, int]") -> "list[int]":
        digits = [0, 0, 0, 0]
        for site, label in assignment.items():
            digits[site] = label
        return digits

    for a, b in ((tl, tr), (bl, br), (tl, bl), (tr, br)):
        for alpha in (1, 2, 3):
            entries.append((string({a: alpha, b: alpha}), "nn"))
    for a, b in ((tl, br), (tr, bl)):
        for alpha in (1, 2, 3):
            entries.append((string({a: alpha, b: alpha}), "diag"))
    for alpha in (1, 2, 3):
        entries.append((string({tl: alpha, tr: alpha, bl: alpha, br: alpha}), "all"))
    for first, second in (((tl, tr), (bl, br)), ((tl, bl), (tr, br)), ((tl, br), (tr, bl))):
        for alpha, beta in product((1, 2, 3), repeat=2):
            if alpha != beta:
                tag = "q2" if first == (tl, br) else "q1"
                entries.append((string({first[0]: alpha, first[1]: alpha, second[0]: beta, second[1]: beta}), tag))

    strings = [parent.product_index(digits) for digits, _ in entries]
    assert len(set(strings)) == 39
    return subset_basis(geometry, strings, [tag for _, tag in entries], name="su2-39")


def medial_restricted_basis() -> OperatorBasis:
    """ Strings on the 2×3 window matching the vertex or the plaquette pattern.

        The vertex pattern acts on columns 0 and 1 and the plaquette pattern on
        columns 1 and 2; strings supported on column 1 only belong to both
        patterns and appear once, tagged ``vertex``.

        Returns
        -------
        OperatorBasis
            Subset of the d=2 window product basis
    """
    geometry = SupportGeometry.window_2x3(2)
    parent = product_basis(geometry)
    vertex_sites = [0, 1, 3, 4]
    plaquette_sites = [1, 2, 4, 5]
    chosen: "dict[int, str]" = {}
    for sites, tag in ((vertex_sites, "vertex"), (plaquette_sites, "plaquette")):
        for labels in product(range(4), repeat=4):
            digits = [0] * 6
            for site, label in zip(sites, labels):
                digits[site] = label
            chosen.setdefault(parent.product_index(digits), tag)
    strings = sorted(chosen)
    return subset_basis(geometry, strings, [chosen[s] for s in strings], name="medial")


##### Pauli Polynomials #####

class PauliSum():
    """ A polynomial in Pauli strings on labelled lattice positions.

        Keys are lattice positions: (x, y) vertex offsets or (x, y, 'h'|'v')
        edges. Each term maps a sorted tuple of (position, label) pairs with
        labels in 'XYZ' to its coefficient; the empty tuple is the identity.

        Example
        -------
            >>> term = PauliSum.from_string([(0, 0), (1, 0)], "ZZ", 0.5)
            >>> term.terms
            {(((0, 0), 'Z'), ((1, 0), 'Z')): 0.5}
    """

    def __init__(self, terms: "dict | None" = None):
        """Stores the terms, dropping identity factors and zero coefficients"""
        self.terms: "dict[tuple, complex]" = {}
        """Coefficient per Pauli string"""
        for key, coefficient in (terms or {}).items():
            self._add(key, coefficient)

    def _add(self, key, coefficient):
        key = tuple(sorted(((position, label) for position, label in key if label != "I"), key=lambda pair: str(pair[0])))
        value = self.terms.get(key, 0) + coefficient
        if abs(value) > 1e-15:
            self.terms[key] = value
        else:
            self.terms.pop(key, None)

    @classmethod
    def from_string(cls, positions: "Sequence", labels: str, coefficient: complex = 1.0) -> "PauliSum":
        """Single string with one label per position"""
        if len(positions) != len(labels):
            raise BasisError("one label per position is required")
        return cls({tuple(zip((tuple(p) for p in positions), labels)): coefficient})

    @classmethod
    def from_strings(cls, positions: "Sequence", strings: "dict[str, complex]") -> "PauliSum":
        """Sum of strings on a common ordered list of positions"""
        total = cls()
        for labels, coefficient in strings.items():
            total = total + cls.from_string(positions, labels, coefficient)
        return total

    @classmethod
    def from_vector(cls, vector: np.ndarray, geometry: SupportGeometry) -> "PauliSum":
        """Pauli polynomial of a d=2 product basis coefficient vector"""
        if geometry.d != 2:
            raise BasisError("Pauli polynomials need d = 2")
        basis = product_basis(geometry)
        scale = math.sqrt(2) ** -geometry.k
        total = cls()
        for index in np.flatnonzero(np.abs(vector) > 1e-14):
            total = total + cls.from_string(geometry.offsets, basis.labels[index], scale * vector[index])
        return total

    def positions(self) -> "set":
        """Positions acted on by at least one term"""
        return {position for key in self.terms for position, _ in key}

    def has_label(self, label: str) -> bool:
        """True when any term contains the given Pauli label"""
        return any(any(l == label for _, l in key) for key in self.terms)

    def translate(self, dx: int, dy: int) -> "PauliSum":
        """Shifts every position by (dx, dy)"""
        return PauliSum({
            tuple(((p[0] + dx, p[1] + dy) + tuple(p[2:]), label) for p, label in key): c
            for key, c in self.terms.items()
        })

    def to_vector(self, geometry: SupportGeometry) -> np.ndarray:
        """Coefficients in the d=2 product basis of a geometry whose offsets contain every position"""
        basis = product_basis(geometry)
        positions = {offset: i for i, offset in enumerate(geometry.offsets)}
        vector = np.zeros(basis.num_product, dtype=complex)
        for key, coefficient in self.terms.items():
            digits = [0] * geometry.k
            for position, label in key:
                if position not in positions:
                    raise BasisError(f"position {position} is outside the {geometry.name} support")
                digits[positions[position]] = PAULI_LABELS.index(label)
            vector[basis.product_index(digits)] += coefficient * math.sqrt(2) ** geometry.k
        return vector.real if not np.any(vector.imag) else vector

    def to_matrix(self, positions: "Sequence") -> np.ndarray:
        """Dense matrix on the given ordered positions"""
        order = {tuple(p): i for i, p in enumerate(positions)}
        size = 2 ** len(order)
        matrix = np.zeros((size, size), dtype=complex)
        for key, coefficient in self.terms.items():
            factors = [PAULIS["I"]] * len(order)
            for position, label in key:
                if position not in order:
                    raise BasisError(f"position {position} is not among the matrix positions")
                factors[order[position]] = PAULIS[label]
            term = np.ones((1, 1), dtype=complex)
            for factor in factors:
                term = np.kron(term, factor)
            matrix += coefficient * term
        return matrix

    def __add__(self, other: "PauliSum") -> "PauliSum":
        total = PauliSum(self.terms)
        for key, coefficient in other.terms.items():
            total._add(key, coefficient)
        return total

    def __sub__(self, other: "PauliSum") -> "PauliSum":
        return self + other * -1

    def __mul__(self, scalar: complex) -> "PauliSum":
        return PauliSum({key: scalar * c for key, c in self.terms.items()})

    __rmul__ = __mul__

    def __neg__(self) -> "PauliSum":
        return self * -1

    def __str__(self) -> str:
        parts = []
        for key, c in sorted(self.terms.items(), key=lambda item: str(item[0])):
            string = " ".join(f"{label}{position}" for position, label in key) or "I"
            parts.append(f"{c:+.6g} {string}")
        return " ".join(parts) or "0"

    def __repr__(self) -> str:
        return f"PauliSum({len(self.terms)} terms)"


##### Wegner Duality #####

def _z_path(vertex: "tuple[int, int]") -> "set[tuple[int, int, str]]":
    """Edges of the path from (0, 0) to a vertex, horizontal steps first"""
    vx, vy = vertex
    edges = set()
    step = 1 if vx >= 0 else -1
    for x in range(0, vx, step):
        edges.add((min(x, x + step), 0, HORIZONTAL))
    step = 1 if vy >= 0 else -1
    for y in range(0, vy, step):
        edges.add((vx, min(y, y + step), VERTICAL))
    return edges


def _star(vertex: "tuple[int, int]") -> "set[tuple[int, int, str]]":
    """Edges incident to a vertex"""
    x, y = vertex
    return {(x, y, HORIZONTAL), (x - 1, y, HORIZONTAL), (x, y, VERTICAL), (x, y - 1, VERTICAL)}


def wegner_dual(term: PauliSum) -> PauliSum:
    """ Maps a Z2 symmetric vertex-spin polynomial onto edge spins.

        X on a vertex becomes the product of X over its four incident edges,
        and a product of an even number of Z becomes Z on the symmetric
        difference of the paths joining each vertex to the origin. Where X and
        Z meet on one edge the product X·Z = -iY is used.

        Parameters
        ----------
        term : PauliSum
            Polynomial in I, X and Z on vertex positions (x, y)

        Returns
        -------
        PauliSum
            Polynomial on edge positions (x, y, 'h'|'v')
    """
    if term.has_label("Y"):
        raise BasisError("the duality map accepts I, X and Z strings only")
    dual = PauliSum()
    for key, coefficient in term.terms.items():
        x_edges: "set" = set()
        z_edges: "set" = set()
        z_count = 0
        for vertex, label in key:
            if label == "X":
                x_edges ^= _star(vertex)
            else:
                z_edges ^= _z_path(vertex)
                z_count += 1
        if z_count % 2:
            raise BasisError("input commutes with the global spin flip only with an even number of Z per string")
        phase = (-1j) ** len(x_edges & z_edges)
        labels = [(edge, "X") for edge in x_edges - z_edges]
        labels += [(edge, "Z") for edge in z_edges - x_edges]
        labels += [(edge, "Y") for edge in x_edges & z_edges]
        dual = dual + PauliSum({tuple(labels): coefficient * phase})
    return dual


def check_hermitian(matrix: np.ndarray, name: str = "operator"):
    """Raises when a matrix deviates from its adjoint by more than the tolerance"""
    deviation = float(np.max(np.abs(matrix - matrix.conj().T))) if matrix.size else 0.0
    if deviation > HERMITIAN_TOL * max(1.0, float(np.max(np.abs(matrix)))):
        raise BasisError(f"{name} is not Hermitian (deviation {deviation:.3e})")
