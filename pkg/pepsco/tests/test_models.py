"""Pytest file for the benchmark states and finite tori"""

import math

import numpy as np
import pytest

from tn.basis import Momentum
from tn.constants import BETA_C, PAULI_X
from tn.exceptions import MemoryBudgetError, TensorShapeError
from tn.models import (
    FiniteTorus,
    PepsUnitCell,
    build_aklt_peps,
    build_deformed_tc_state,
    build_ising_peps,
    build_rvb_peps,
    ising_bond_correlation,
    ising_magnetization,
    ising_plaquette_term,
    ising_vertex_term,
    load_peps,
    save_peps,
)


def test_torus_site_order():
    """Sites are row-major with x fastest"""
    torus = FiniteTorus(4, 3)
    assert torus.site_index(1, 2) == 9
    assert torus.coords(9) == (1, 2)
    assert torus.site_index(-1, 3) == 3


def test_torus_neighbors_wrap():
    """Neighbors of the corner site wrap around the torus"""
    torus = FiniteTorus(3, 3)
    assert torus.neighbors(0) == (2, 6, 1, 3)
    assert len(torus.bonds()) == 18


def test_torus_edges():
    """Each vertex owns one horizontal and one vertical edge"""
    torus = FiniteTorus(2, 2)
    assert torus.num_edges == 8
    assert sorted(torus.star(0, 0)) == sorted({0, 2, 1, 5})


def test_aklt_shape():
    """The AKLT cell is 1×1 with d=5 and D=2"""
    peps = build_aklt_peps()
    assert peps.physical_dim == 5
    assert peps.max_bond_dim() == 2
    assert peps.is_real


def test_rvb_shape():
    """The RVB cell is 1×1 with d=2 and D=3"""
    peps = build_rvb_peps()
    assert peps.physical_dim == 2
    assert peps.bond_dims()[(0, 0)] == (3, 3, 3, 3)


def test_ising_injectivity():
    """Above the critical point the Ising state is a cat with U_X = X"""
    assert build_ising_peps(0.3).injectivity == "injective"
    ordered = build_ising_peps(0.6)
    assert ordered.injectivity == "symmetry-broken-cat"
    assert np.allclose(ordered.u_x, PAULI_X.real)


def test_ising_rejects_non_finite_beta():
    """Infinite β is refused"""
    with pytest.raises(ValueError):
        build_ising_peps(float('inf'))


def test_peps_bond_mismatch():
    """Neighboring legs with different extents are refused"""
    sites = {(0, 0): np.ones((2, 2, 2, 3, 2)), (1, 0): np.ones((2, 2, 2, 3, 2))}
    with pytest.raises(TensorShapeError):
        PepsUnitCell(sites)


def test_magnetization_closed_form():
    """The magnetization vanishes below β_c and approaches one deep in the ordered phase"""
    assert ising_magnetization(0.3) == 0.0
    assert ising_magnetization(BETA_C + 1e-6) < 0.3
    assert abs(ising_magnetization(2.0) - 1.0) < 1e-6


def test_bond_correlation_high_temperature():
    """At weak coupling the bond correlation follows tanh β + 2 tanh³ β"""
    t = math.tanh(0.05)
    assert abs(ising_bond_correlation(0.05) - (t + 2 * t**3)) < 1e-5
    assert ising_bond_correlation(0.0) == 0.0


def test_vertex_and_plaquette_terms_have_same_strings():
    """The plaquette regrouping at q = 0 has the six expected strings"""
    plaquette = ising_plaquette_term(Momentum(0, 0, 1, 1))
    assert len(plaquette.terms) == 6
    assert len(ising_vertex_term().terms) == 8


def test_deformed_tc_state_undeformed():
    """At β = 0 the toric code on a 2×2 torus is an equal superposition of 2^(4-1) loop patterns"""
    state = build_deformed_tc_state(0.0, FiniteTorus(2, 2))
    assert np.count_nonzero(state) == 8
    assert np.allclose(state[state != 0], 1.0)


def test_deformed_tc_state_budget():
    """Too many edges are refused"""
    with pytest.raises(MemoryBudgetError):
        build_deformed_tc_state(0.1, FiniteTorus(4, 4))


def test_peps_container_round_trip(tmp_path):
    """A saved cell loads back with identical elements and symmetry data"""
    peps = build_ising_peps(0.7)
    path = tmp_path / "ising.json"
    save_peps(peps, str(path))
    loaded = load_peps(str(path))
    assert loaded.injectivity == peps.injectivity
    assert np.array_equal(loaded.array(0, 0), peps.array(0, 0))
    assert np.array_equal(loaded.u_x, peps.u_x)
