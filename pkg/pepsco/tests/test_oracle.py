"""Pytest file for the finite-torus oracle"""

import math

import numpy as np
import pytest

from tn.basis import Momentum, PauliSum, SupportGeometry, product_basis, wegner_dual
from tn.exceptions import MemoryBudgetError, UnsupportedMomentumError
from tn.extraction import kernel_dimension
from tn.models import (
    FiniteTorus,
    build_aklt_peps,
    build_deformed_tc_state,
    build_ising_peps,
    ising_plaquette_term,
    ising_vertex_term,
)
from tn.oracle import (
    GlobalOperator,
    build_edge_operator,
    build_global_operator,
    build_pauli_operator,
    commutator_norm,
    contract_torus_statevector,
    exact_structure_factor,
    expectation_and_variance,
    ising_parent_hamiltonian,
    rdm_from_statevector,
    rdm_on_support,
    spectrum,
)

ZERO = Momentum(0, 0, 1, 1)


def _zz_bonds() -> PauliSum:
    """Σ Z_i Z_j over the right and down bonds of a vertex"""
    return PauliSum.from_string([(0, 0), (1, 0)], "ZZ") + PauliSum.from_string([(0, 0), (0, 1)], "ZZ")


def test_statevector_ising_weights():
    """Flipping one spin of the ordered configuration costs exp(-4β) in amplitude"""
    beta = 0.3
    psi = contract_torus_statevector(build_ising_peps(beta), FiniteTorus(3, 3))
    assert psi.shape == (512,)
    assert abs(psi[0] / psi[256] - math.exp(4 * beta)) < 1e-12


def test_rdm_is_normalized():
    """The single-site density matrix has unit trace and is Hermitian"""
    torus = FiniteTorus(3, 3)
    rho = rdm_from_statevector(contract_torus_statevector(build_ising_peps(0.4), torus), torus, [4])
    assert abs(np.trace(rho) - 1) < 1e-12
    assert np.allclose(rho, rho.conj().T)


def test_rdm_double_layer_path(monkeypatch):
    """Contracting the double-layer network reproduces the statevector density matrix"""
    peps, torus = build_ising_peps(0.4), FiniteTorus(3, 3)
    state = contract_torus_statevector(peps, torus)
    expected = rdm_from_statevector(state, torus, [0, 1, 4])
    monkeypatch.setattr("tn.oracle.MAX_STATEVECTOR_DIM", 1)
    rho = rdm_on_support(peps, torus, [0, 1, 4])
    assert rho.shape == (8, 8)
    assert np.allclose(rho, expected, atol=1e-10)


def test_structure_factor_product_state():
    """For |+···+⟩ only Y and Z fluctuate, each with weight 1/2"""
    basis = product_basis(SupportGeometry.site(2))
    m = exact_structure_factor(build_ising_peps(0.0), FiniteTorus(3, 3), basis, ZERO)
    assert np.allclose(m.matrix, np.diag([0.0, 0.0, 0.5, 0.5]), atol=1e-12)
    assert m.provenance["backend"] == "oracle"


def test_structure_factor_paths_agree():
    """The density-matrix and statevector paths give the same pair matrix"""
    peps, torus = build_ising_peps(0.3), FiniteTorus(3, 3)
    basis = product_basis(SupportGeometry.pair(2))
    rdm = exact_structure_factor(peps, torus, basis, ZERO, method="rdm")
    statevector = exact_structure_factor(peps, torus, basis, ZERO, method="statevector")
    assert np.allclose(rdm.raw, statevector.raw, atol=1e-11)
    assert rdm.asymmetry < 1e-12
    assert rdm.min_eigenvalue > -1e-10


def test_structure_factor_incommensurate_momentum():
    """A π momentum does not fit an odd torus"""
    basis = product_basis(SupportGeometry.site(2))
    with pytest.raises(UnsupportedMomentumError):
        exact_structure_factor(build_ising_peps(0.3), FiniteTorus(3, 3), basis, Momentum.from_label("pi,0"))


def test_global_operator_identity_direction():
    """The identity element sums to N/√d times the identity"""
    basis = product_basis(SupportGeometry.site(2))
    h = np.zeros(4)
    h[0] = 1.0
    operator = build_global_operator(h, basis, FiniteTorus(2, 2), ZERO)
    assert np.allclose(operator.to_dense(), 4 / math.sqrt(2) * np.eye(16))


def test_global_operator_budget():
    """Operators beyond the dimension budget are refused"""
    with pytest.raises(MemoryBudgetError):
        GlobalOperator(23, 2, [])


def test_ising_term_structural_identities():
    """The regrouped term commutes with Σ ZZ and annihilates |+···+⟩"""
    torus = FiniteTorus(3, 3)
    h = build_pauli_operator(ising_plaquette_term(ZERO), torus)
    assert commutator_norm(h, build_pauli_operator(_zz_bonds(), torus)) < 1e-12
    plus = np.ones(torus.dimension) / math.sqrt(torus.dimension)
    assert np.linalg.norm(h.matvec(plus)) < 1e-12


def test_ising_term_variance_vanishes():
    """The deformed Ising state is a zero mode of the regrouped term"""
    torus = FiniteTorus(3, 3)
    h = build_pauli_operator(ising_plaquette_term(ZERO), torus)
    state = contract_torus_statevector(build_ising_peps(0.4), torus)
    energy, variance = expectation_and_variance(h, state)
    assert abs(energy) < 1e-12
    assert abs(variance) < 1e-12


def test_parent_hamiltonian_annihilates_state():
    """The frustration-free parent Hamiltonian has the deformed state as a zero mode"""
    torus = FiniteTorus(3, 3)
    state = contract_torus_statevector(build_ising_peps(0.4), torus)
    operator = ising_parent_hamiltonian(0.4, torus)
    assert np.linalg.norm(operator.matvec(state)) / np.linalg.norm(state) < 1e-12


def test_spectrum_modes_agree():
    """The sparse solver finds the lowest eigenvalues of the dense spectrum"""
    operator = ising_parent_hamiltonian(0.4, FiniteTorus(3, 3))
    full = spectrum(operator)
    extremal = spectrum(operator, "extremal", k=2)
    assert abs(full.eigenvalues[0]) < 1e-10
    assert np.allclose(extremal.eigenvalues, full.eigenvalues[:2], atol=1e-8)
    assert full.zero_mode_count >= 1


def test_eigenvector_has_no_variance():
    """An eigenvector of the operator has vanishing variance"""
    operator = ising_parent_hamiltonian(0.4, FiniteTorus(3, 3))
    result = spectrum(operator, vectors=True)
    _, variance = expectation_and_variance(operator, result.vectors[:, 5])
    assert abs(variance) < 1e-12


@pytest.mark.parametrize("beta", [0.0, 0.4, 1.0])
def test_dual_term_annihilates_deformed_toric_code(beta):
    """The dual of the Ising vertex term annihilates the deformed toric code"""
    torus = FiniteTorus(2, 2)
    dual = build_edge_operator(wegner_dual(ising_vertex_term()), torus)
    state = build_deformed_tc_state(beta, torus)
    assert np.linalg.norm(dual.matvec(state)) / np.linalg.norm(state) < 1e-10


@pytest.mark.slow
def test_scar_zero_modes():
    """The Ising vertex Hamiltonian on the 3×4 torus has 1160 zero modes and a symmetric spectrum"""
    operator = build_pauli_operator(ising_vertex_term(), FiniteTorus(3, 4))
    result = spectrum(operator)
    assert result.zero_mode_count == 1160
    assert np.allclose(result.eigenvalues, -result.eigenvalues[::-1], atol=1e-10)


@pytest.mark.slow
def test_aklt_site_kernel():
    """The AKLT state on the 4×4 torus conserves the identity and the three total spin components"""
    basis = product_basis(SupportGeometry.site(5))
    m = exact_structure_factor(build_aklt_peps(), FiniteTorus(4, 4, 5), basis, ZERO)
    assert kernel_dimension(m.eigenvalues, 1e-9) == 4
