"""Pytest file for corner transfer matrix contraction"""

import logging

import numpy as np
import pytest

from tn.constants import PAULI_X, PAULI_Z
from tn.ctmrg import (
    CtmNetwork,
    converge_environment,
    load_environment,
    local_expectation,
    reduced_density_matrix,
    save_environment,
)
from tn.exceptions import TensorShapeError
from tn.models import build_aklt_peps, build_ising_peps, ising_bond_correlation, ising_magnetization


def test_network_leg_shapes():
    """Closed Ising tensors bundle ket, operator and bra bonds"""
    network = CtmNetwork(build_ising_peps(0.3))
    assert network.closed((0, 0)).shape == (4, 4, 4, 4)
    assert network.open((5, -2)).shape == (2, 2, 4, 4, 4, 4)


def test_product_state_expectation():
    """At β = 0 every spin points along +x"""
    env = converge_environment(CtmNetwork(build_ising_peps(0.0)), chi=4)
    assert env.report.converged
    assert abs(local_expectation(env, PAULI_X, [(0, 0)]) - 1.0) < 1e-12


def test_bond_correlation_disordered_phase():
    """Nearest-neighbor ⟨ZZ⟩ matches the exact classical internal energy"""
    beta = 0.3
    env = converge_environment(CtmNetwork(build_ising_peps(beta)), chi=16)
    zz = local_expectation(env, np.kron(PAULI_Z, PAULI_Z), [(0, 0), (1, 0)])
    assert abs(zz.real - ising_bond_correlation(beta)) < 1e-5
    assert abs(local_expectation(env, PAULI_Z, [(0, 0)])) < 1e-8


def test_reduced_density_matrix_hermitian():
    """The AKLT single-site density matrix is Hermitian with unit trace and full spin symmetry"""
    env = converge_environment(CtmNetwork(build_aklt_peps()), chi=8)
    rho = reduced_density_matrix(env, [(0, 0)])
    assert np.allclose(rho, rho.conj().T)
    assert abs(np.trace(rho) - 1) < 1e-10
    assert np.allclose(rho, np.eye(5) / 5, atol=1e-6)


@pytest.mark.slow
def test_ordered_magnetization():
    """A biased boundary selects the up branch whose magnetization is the closed form"""
    beta = 0.5
    env = converge_environment(CtmNetwork(build_ising_peps(beta)), chi=32, boundary=np.diag([1.0, 0.0]))
    assert abs(local_expectation(env, PAULI_Z, [(0, 0)]).real - ising_magnetization(beta)) < 1e-6


def test_invalid_chi():
    """χ must be positive"""
    with pytest.raises(TensorShapeError):
        converge_environment(CtmNetwork(build_ising_peps(0.3)), chi=0)


def test_symmetrize_needs_symmetry():
    """Symmetrization without a virtual symmetry raises"""
    with pytest.raises(TensorShapeError):
        converge_environment(CtmNetwork(build_ising_peps(0.3)), chi=4, symmetrize=True)


def test_non_convergence_is_reported():
    """Running out of sweeps is recorded instead of raised"""
    env = converge_environment(CtmNetwork(build_ising_peps(0.4)), chi=8, max_iter=2)
    assert not env.report.converged
    assert env.report.iterations == 2
    assert len(env.report.history) == 2


def test_environment_checkpoint(tmp_path):
    """A saved environment loads back with its tensors and report"""
    network = CtmNetwork(build_ising_peps(0.3))
    env = converge_environment(network, chi=8)
    path = str(tmp_path / "env.npz")
    save_environment(env, path)
    loaded = load_environment(path, network)
    assert loaded.chi == 8
    assert np.array_equal(loaded.get("C1", (0, 0)), env.get("C1", (0, 0)))
    assert loaded.report.converged == env.report.converged
    assert loaded.report.iterations == env.report.iterations


def test_symmetrized_cat_state():
    """Symmetrizing the up branch removes the magnetization and keeps symmetric observables"""
    network = CtmNetwork(build_ising_peps(0.6))
    up = np.diag([1.0, 0.0])
    broken = converge_environment(network, chi=8, boundary=up)
    symmetric = converge_environment(network, chi=8, boundary=up, symmetrize=True)
    assert abs(local_expectation(broken, PAULI_Z, [(0, 0)])) > 0.5
    assert abs(local_expectation(symmetric, PAULI_Z, [(0, 0)])) < 1e-10
    x_broken = local_expectation(broken, PAULI_X, [(0, 0)])
    assert abs(local_expectation(symmetric, PAULI_X, [(0, 0)]) - x_broken) < 1e-10


def test_non_monotone_drift_warns(monkeypatch, caplog):
    """A drift that goes up and down inside the window is logged as a warning"""
    drifts = iter([1e-2, 1e-3] * 5 + [1e-12])
    monkeypatch.setattr("tn.ctmrg._drift", lambda old, new: next(drifts))
    with caplog.at_level(logging.WARNING, logger="tn.ctmrg"):
        env = converge_environment(CtmNetwork(build_ising_peps(0.3)), chi=4)
    assert env.report.converged
    assert env.report.iterations == 11
    assert any(r.levelno == logging.WARNING and "not monotone" in r.getMessage() for r in caplog.records)
