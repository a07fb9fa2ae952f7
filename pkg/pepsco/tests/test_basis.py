"""Pytest file for operator bases, trivial solutions and the duality map"""

import numpy as np
import pytest

from tn.basis import (
    Momentum,
    PauliSum,
    SupportGeometry,
    check_hermitian,
    embed_smaller_support,
    hermitian_site_basis,
    medial_restricted_basis,
    product_basis,
    spin_matrices,
    su2_reduced_plaquette_basis,
    trivial_subspace,
    wegner_dual,
)
from tn.constants import HORIZONTAL
from tn.exceptions import BasisError, UnsupportedMomentumError


@pytest.mark.parametrize("d", [2, 3, 5])
def test_site_basis_orthonormal(d):
    """Tr(a b) = δ over the single-site basis, identity first"""
    basis = hermitian_site_basis(d)
    assert basis.geometry == SupportGeometry.site(d)
    assert len(basis) == d * d and basis.labels[0] == "I"
    matrices = basis.site_matrices
    gram = np.array([[np.trace(a @ b) for b in matrices] for a in matrices])
    assert np.allclose(gram, np.eye(d * d), atol=1e-12)
    assert all(np.allclose(m, m.conj().T, atol=1e-14) for m in matrices)
    assert np.allclose(basis.element(1), matrices[1])


def test_site_basis_needs_two_levels():
    """A one-level site has no operator basis"""
    with pytest.raises(BasisError):
        hermitian_site_basis(1)


def test_spin_matrices_commutator():
    """[S^x, S^y] = i S^z for spin 2"""
    sx, sy, sz = spin_matrices(5)
    assert np.allclose(sx @ sy - sy @ sx, 1j * sz)
    assert np.allclose(np.diag(sz).real, [2, 1, 0, -1, -2])


def test_product_basis_labels():
    """Pair labels are written site by site"""
    basis = product_basis(SupportGeometry.pair(2))
    assert len(basis) == 16
    assert basis.labels[5] == "XX"
    assert basis.product_digits(7) == (1, 3)


def test_trace_pairings_of_elements():
    """Pairing an element with the basis picks out its own coefficient"""
    basis = product_basis(SupportGeometry.pair(2))
    pairings = basis.trace_pairings(basis.element(11))
    expected = np.zeros(16)
    expected[11] = 1.0
    assert np.allclose(pairings, expected)


def test_local_matrix_matches_elements():
    """Σ h_α ô^α agrees with the dense elements"""
    basis = su2_reduced_plaquette_basis()
    h = np.linspace(-1, 1, len(basis))
    dense = sum(c * basis.element(i) for i, c in enumerate(h))
    assert np.allclose(basis.local_matrix(h), dense)


@pytest.mark.parametrize("label", ["0,0", "pi,pi", "pi,0"])
def test_trivial_subspace_plaquette(label):
    """The d=2 plaquette has 28 trivial solutions at every real-phase momentum"""
    assert trivial_subspace(SupportGeometry.plaquette(2), Momentum.from_label(label)).shape == (28, 256)


def test_trivial_subspace_pair():
    """The d=2 pair has 4 trivial solutions"""
    assert trivial_subspace(SupportGeometry.pair(2), Momentum(0, 0, 1, 1)).shape[0] == 4


@pytest.mark.slow
def test_trivial_subspace_plaquette_spin_one():
    """The d=3 plaquette has 153 trivial solutions"""
    assert trivial_subspace(SupportGeometry.plaquette(3), Momentum(0, 0, 1, 1)).shape[0] == 153


def test_trivial_subspace_needs_real_phase():
    """Complex momenta are refused"""
    with pytest.raises(UnsupportedMomentumError):
        trivial_subspace(SupportGeometry.pair(2), Momentum(1, 0, 3, 1))


def test_su2_basis_families():
    """The SU(2) reduced plaquette basis has 39 strings in five families"""
    basis = su2_reduced_plaquette_basis()
    assert len(basis) == 39
    counts = {tag: basis.tags.count(tag) for tag in set(basis.tags)}
    assert counts == {"nn": 12, "diag": 6, "all": 3, "q1": 12, "q2": 6}
    assert basis.string_index(0) == basis.product_index((1, 1, 0, 0))


def test_medial_basis_size():
    """Vertex and plaquette patterns share the 16 strings on the middle column"""
    assert len(medial_restricted_basis()) == 256 + 256 - 16


def test_restrict_identity_out_of_su2():
    """The identity has no component inside the SU(2) reduced basis"""
    basis = su2_reduced_plaquette_basis()
    identity = np.zeros((1, 256))
    identity[0, 0] = 1.0
    assert basis.restrict(identity).shape == (0, 39)


def test_embed_site_into_pair():
    """A site term lands on both pair placements with identity on the other site"""
    site, pair = SupportGeometry.site(2), SupportGeometry.pair(2)
    z = np.zeros(4)
    z[3] = 1.0
    embedded, span = embed_smaller_support(z, site, pair, Momentum(0, 0, 1, 1))
    basis = product_basis(pair)
    assert embedded.shape == (2, 16)
    assert np.allclose(np.linalg.norm(embedded, axis=1), np.sqrt(2))
    assert embedded[0, basis.labels.index("ZI")] != 0 and embedded[1, basis.labels.index("IZ")] != 0
    assert span.shape == (2, 16)


def test_pauli_vector_round_trip():
    """A Pauli polynomial survives conversion to plaquette coefficients"""
    geometry = SupportGeometry.plaquette(2)
    term = PauliSum.from_string([(0, 0), (1, 1)], "ZZ", 2.0) - PauliSum.from_string([(0, 0), (1, 0), (1, 1)], "ZXZ")
    back = PauliSum.from_vector(term.to_vector(geometry), geometry)
    assert back.terms.keys() == term.terms.keys()
    assert all(abs(back.terms[k] - term.terms[k]) < 1e-12 for k in term.terms)


def test_wegner_dual_star_and_path():
    """X becomes a star of X and a horizontal ZZ bond becomes Z on the edge between"""
    star = wegner_dual(PauliSum.from_string([(0, 0)], "X"))
    assert len(star.terms) == 1 and len(next(iter(star.terms))) == 4
    bond = wegner_dual(PauliSum.from_string([(0, 0), (1, 0)], "ZZ"))
    assert bond.terms == {(((0, 0, HORIZONTAL), "Z"),): 1.0}


def test_wegner_dual_rejects_y():
    """Y strings have no dual"""
    with pytest.raises(BasisError):
        wegner_dual(PauliSum.from_string([(0, 0)], "Y"))


def test_check_hermitian():
    """A non-Hermitian matrix raises"""
    check_hermitian(np.eye(2))
    with pytest.raises(BasisError):
        check_hermitian(np.array([[0.0, 1.0], [0.0, 0.0]]))
