"""Constant variables used across the program source files"""

import math

import numpy as np

##### Pauli Matrices #####
PAULI_I = np.eye(2, dtype=complex)
"""Single-qubit identity"""

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
"""Pauli X matrix"""

PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
"""Pauli Y matrix"""

PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
"""Pauli Z matrix"""

PAULIS: "dict[str, np.ndarray]" = {
    'I': PAULI_I,
    'X': PAULI_X,
    'Y': PAULI_Y,
    'Z': PAULI_Z,
}
"""Dictionary of Pauli label to matrix, in basis order"""

PAULI_LABELS: str = "IXYZ"
"""Pauli labels in the order used by the d=2 single-site basis"""

##### Lattice Geometry #####
DIRECTIONS: "tuple[str, ...]" = ("left", "up", "right", "down")
"""Virtual leg order of every site tensor after the physical index"""

HORIZONTAL, VERTICAL = 'h', 'v'
"""Edge orientation tags on the edge lattice"""

##### Ising Model #####
BETA_C: float = math.log(1 + math.sqrt(2)) / 2
"""Critical inverse temperature of the square-lattice classical Ising model"""

##### Numerical Tolerances #####
HERMITIAN_TOL: float = 1e-12
"""Largest tolerated deviation from hermiticity for operators and density matrices"""

SYMMETRY_TOL: float = 1e-10
"""Largest tolerated asymmetry of a matrix handed to the symmetric eigensolver"""

ORTHONORMAL_TOL: float = 1e-12
"""Largest tolerated deviation of an operator basis Gram matrix from identity"""

RANK_TOL: float = 1e-10
"""Relative singular value threshold used by rank-revealing orthonormalization"""

DEGENERACY_TOL: float = 1e-12
"""Relative gap below which two singular values count as one multiplet"""

DEGENERACY_EXTRA: int = 4
"""Extra rank allowed to keep a degenerate singular value multiplet whole"""

IMAG_TOL: float = 1e-6
"""Largest tolerated imaginary part of a structure factor at real-phase momenta"""

##### Structure Factor Kernel Thresholds #####
SENTINEL: float = 1e6
"""Eigenvalue assigned to deflated directions"""

BLOCK_GAP: float = 1e-9
"""Eigenvalue gap below which kernel solutions form one degenerate block"""

ZERO_MODE_TOL: float = 1e-10
"""Zero-mode threshold for exact spectra"""

ZERO_MODE_TOL_CTM: float = 1e-7
"""Zero-mode threshold for matrices derived from CTMRG environments"""

KERNEL_TOL: "dict[str, float]" = {
    'site': 1e-9,
    'pair': 1e-7,
    'plaquette': 1e-7,
    'genfunc': 1e-6,
}
"""Kernel thresholds per support (exact oracle) and for the generating-function backend"""

MIN_EIGENVALUE_TOL: "dict[str, float]" = {
    'oracle': -1e-10,
    'genfunc': -1e-8,
}
"""Smallest eigenvalue of the symmetrized structure factor accepted without a quality flag"""

##### CTMRG Defaults #####
CTM_TOL: float = 1e-10
"""Convergence threshold on the corner singular spectra"""

CTM_MAX_ITER: int = 5000
"""Maximal number of CTMRG sweeps"""

CTM_SVD_CUTOFF: float = 1e-12
"""Relative singular value cutoff of the projector SVD"""

CTM_MONOTONE_WINDOW: int = 10
"""Number of trailing sweeps checked for a monotone drift"""

##### Generating Function Defaults #####
DEFAULT_DELTA: "dict[str, float]" = {
    'site': 1e-4,
    'pair': 1e-4,
    'plaquette': 1e-2,
}
"""Finite difference step per support geometry"""

STENCIL_EPS_FACTOR: float = 100.0
"""Stencil evaluations closer than this many machine epsilons are flagged unstable"""

##### Memory Budgets #####
MAX_STATEVECTOR_DIM: int = 2**22
"""Largest Hilbert space dimension handled by the exact oracle"""

MAX_FULL_SPECTRUM_DIM: int = 4096
"""Largest dimension diagonalized with the dense solver"""

MAX_INTERMEDIATE_SIZE: int = 2**28
"""Largest number of elements of an intermediate tensor in exact contractions"""

MAX_TC_EDGES: int = 24
"""Largest number of edges of the deformed toric code statevector"""

MAX_RDM_SITES: int = 4
"""Largest support of a reduced density matrix from the double-layer contraction"""

##### Output #####
OUTPUT_ROOT_ENV: str = "PEPSCO_OUTPUT_ROOT"
"""Environment variable overriding the output root directory"""
