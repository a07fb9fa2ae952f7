"""Pytest file for the generating function backend"""

from functools import reduce

import numpy as np
import pytest

from tn.basis import Momentum, SupportGeometry, product_basis
from tn.constants import PAULI_Z
from tn.exceptions import NonFiniteError, UnsupportedMomentumError
from tn.extraction import kernel_dimension
from tn.genfunc import (
    RowCache,
    build_pepo,
    finite_diff_5pt,
    five_point,
    genfunc_structure_factor,
    m_matrix,
    pepo_patch_operator,
    stencil_is_unstable,
    structure_factor_row,
)
from tn.models import FiniteTorus, build_aklt_peps, build_ising_peps
from tn.oracle import exact_structure_factor

ZERO = Momentum(0, 0, 1, 1)


def _kron(*matrices) -> np.ndarray:
    return reduce(np.kron, matrices)


def test_pepo_identity_at_zero():
    """At μ = 0 the operator is the identity"""
    basis = product_basis(SupportGeometry.plaquette(2))
    pepo = build_pepo(basis, basis.labels.index("XZYZ"), 0.0, ZERO)
    assert np.allclose(pepo_patch_operator(pepo, 2, 2), np.eye(16))


def test_pepo_bond_dimensions():
    """Pairs and plaquettes both carry operator bonds of dimension two"""
    pair = product_basis(SupportGeometry.pair(2))
    plaquette = product_basis(SupportGeometry.plaquette(2))
    assert build_pepo(pair, 5, 0.1, ZERO).bond_dim == 2
    pepo = build_pepo(plaquette, 255, 0.1, Momentum.from_label("pi,pi"))
    assert pepo.bond_dim == 2
    assert all(w.shape == (2, 2, 2, 2, 2, 2) for w in pepo.tensors.values())
    assert len(pepo.placements) == 2
    assert (pepo.cell_width, pepo.cell_height) == (2, 2)


def test_site_pepo_momentum_phase():
    """A π momentum along x alternates the sign of the string"""
    basis = product_basis(SupportGeometry.site(2))
    pepo = build_pepo(basis, 3, 0.2, Momentum.from_label("pi,0"))
    assert pepo.cell_width == 2
    z = basis.site_matrices[3]
    assert np.allclose(pepo.tensors[(0, 0)].reshape(2, 2), np.eye(2) + 0.2 * z)
    assert np.allclose(pepo.tensors[(1, 0)].reshape(2, 2), np.eye(2) - 0.2 * z)


def test_pair_pepo_on_torus():
    """The ZZ pair operator on a 2×2 torus is the product over its four horizontal bonds"""
    basis = product_basis(SupportGeometry.pair(2))
    mu = 0.1
    dense = pepo_patch_operator(build_pepo(basis, basis.labels.index("ZZ"), mu, ZERO), 2, 2)
    eye = np.eye(2)
    bond_top = np.eye(16) + mu / 2 * _kron(PAULI_Z, PAULI_Z, eye, eye)
    bond_bottom = np.eye(16) + mu / 2 * _kron(eye, eye, PAULI_Z, PAULI_Z)
    expected = bond_top @ bond_top @ bond_bottom @ bond_bottom
    assert np.allclose(dense, expected)


def test_plaquette_pepo_single_loop():
    """An open 2×2 patch holds exactly one complete loop"""
    basis = product_basis(SupportGeometry.plaquette(2))
    alpha = basis.labels.index("ZXYZ")
    mu = -0.3
    dense = pepo_patch_operator(build_pepo(basis, alpha, mu, ZERO), 2, 2, periodic=False)
    ops = [basis.site_matrices[digit] for digit in basis.product_digits(alpha)]
    assert np.allclose(dense, np.eye(16) + mu * _kron(*ops))


def test_plaquette_pepo_on_torus():
    """On the 2×2 torus the two even-corner loops carry opposite phases at momentum (π, 0)"""
    basis = product_basis(SupportGeometry.plaquette(2))
    mu = 0.4
    dense = pepo_patch_operator(build_pepo(basis, basis.labels.index("ZZZZ"), mu, Momentum.from_label("pi,0")), 2, 2)
    loop = _kron(*[basis.site_matrices[3]] * 4)
    assert np.allclose(dense, (np.eye(16) + mu * loop) @ (np.eye(16) - mu * loop))


def test_pepo_parameter_range():
    """μ outside [-1, 1] and complex phases are refused"""
    basis = product_basis(SupportGeometry.site(2))
    with pytest.raises(ValueError):
        build_pepo(basis, 1, 1.5, ZERO)
    with pytest.raises(UnsupportedMomentumError):
        build_pepo(basis, 1, 0.1, Momentum(1, 0, 3, 1))


def test_five_point_polynomial():
    """The stencil is exact for cubic polynomials"""
    assert abs(finite_diff_5pt(lambda mu: mu**3 + mu, 0.1) - 1.0) < 1e-12


def test_five_point_exponential():
    """The stencil error is fourth order in the step"""
    assert abs(finite_diff_5pt(np.exp, 1e-2) - 1.0) < 1e-8


def test_five_point_errors():
    """Non-positive steps and non-finite evaluations raise"""
    with pytest.raises(ValueError):
        finite_diff_5pt(np.exp, 0.0)
    with pytest.raises(NonFiniteError):
        five_point([1.0, np.nan, 0.0, 0.0], 0.1)


def test_stencil_instability():
    """Identical ±δ evaluations are flagged"""
    assert stencil_is_unstable([np.ones(3)] * 4)
    assert not stencil_is_unstable([np.full(3, v) for v in (2.0, 1.0, -1.0, -2.0)])


def test_row_of_product_state():
    """For |+···+⟩ the Z row has weight 1/2 on Z only"""
    basis = product_basis(SupportGeometry.site(2))
    result, base = structure_factor_row(build_ising_peps(0.0), basis, 3, ZERO, chi=4)
    assert np.allclose(result.row.real, [0.0, 0.0, 0.0, 0.5], atol=1e-8)
    assert result.converged
    assert result.flags == ()
    assert base.report.converged


def test_m_matrix_at_zero_is_density_matrix():
    """Without a source term M is the density matrix of the support"""
    peps = build_ising_peps(0.0)
    site = product_basis(SupportGeometry.site(2))
    matrix, environment = m_matrix(peps, build_pepo(site, 3, 0.0, ZERO), chi=4)
    assert np.allclose(matrix, np.full((2, 2), 0.5), atol=1e-8)
    assert environment.report.converged
    pair = product_basis(SupportGeometry.pair(2))
    matrix, _ = m_matrix(peps, build_pepo(pair, pair.labels.index("ZZ"), 0.0, ZERO), chi=4)
    assert np.allclose(matrix, np.full((4, 4), 0.25), atol=1e-8)


def test_plaquette_m_matrix_sums_placements():
    """The plaquette M adds the density matrices of both placements"""
    basis = product_basis(SupportGeometry.plaquette(2))
    pepo = build_pepo(basis, basis.labels.index("ZZZZ"), 0.0, ZERO)
    matrix, _ = m_matrix(build_ising_peps(0.0), pepo, chi=4)
    assert np.allclose(matrix, np.full((16, 16), 2 / 16), atol=1e-8)


def test_cat_state_m_matrix_is_symmetrized():
    """Above the transition the environment is symmetrized and ⟨Z⟩ vanishes"""
    peps = build_ising_peps(0.6)
    assert peps.injectivity == "symmetry-broken-cat"
    basis = product_basis(SupportGeometry.site(2))
    matrix, environment = m_matrix(peps, build_pepo(basis, 3, 0.0, ZERO), chi=8)
    assert environment.symmetrize
    assert abs(np.trace(matrix @ PAULI_Z)) < 1e-10
    _, environment = m_matrix(build_ising_peps(0.3), build_pepo(basis, 3, 0.0, ZERO), chi=8)
    assert not environment.symmetrize


def test_structure_factor_with_cache(tmp_path):
    """Rows come back from the cache on the second run"""
    peps = build_ising_peps(0.0)
    basis = product_basis(SupportGeometry.site(2))
    cache = RowCache(str(tmp_path), "ising")
    first, _ = genfunc_structure_factor(peps, basis, ZERO, chi=4, cache=cache)
    assert np.allclose(first.matrix, np.diag([0.0, 0.0, 0.5, 0.5]), atol=1e-8)
    assert first.provenance["backend"] == "genfunc"
    assert first.provenance["converged"]
    second, results = genfunc_structure_factor(peps, basis, ZERO, chi=4, cache=cache)
    assert all(result.flags == ("cached",) for result in results)
    assert np.allclose(second.matrix, first.matrix)


@pytest.mark.slow
def test_rows_match_finite_torus_at_high_temperature():
    """At β = 0.05 the site structure factor agrees with the 5×5 torus, whose corrections start with winding graphs"""
    peps = build_ising_peps(0.05)
    basis = product_basis(SupportGeometry.site(2))
    genfunc, results = genfunc_structure_factor(peps, basis, ZERO, chi=8)
    assert all(result.converged for result in results)
    oracle = exact_structure_factor(peps, FiniteTorus(5, 5), basis, ZERO)
    assert genfunc.matrix[3, 3] > 0.6
    assert np.allclose(genfunc.matrix, oracle.matrix, atol=1e-4)


@pytest.mark.slow
def test_plaquette_row_matches_pair_row():
    """A plaquette string padded with identities reproduces a quarter of the pair entry"""
    peps = build_ising_peps(0.3)
    pair = product_basis(SupportGeometry.pair(2))
    plaquette = product_basis(SupportGeometry.plaquette(2))
    pair_row, _ = structure_factor_row(peps, pair, pair.labels.index("ZZ"), ZERO, chi=16)
    plaquette_row, _ = structure_factor_row(peps, plaquette, plaquette.labels.index("ZZII"), ZERO, chi=16)
    expected = pair_row.row[pair.labels.index("ZZ")].real / 4
    assert expected > 0.05
    assert abs(plaquette_row.row[plaquette.labels.index("ZZII")].real - expected) < 1e-5
    assert abs(plaquette_row.row[plaquette.labels.index("IIZZ")].real - expected) < 1e-5


@pytest.mark.slow
def test_aklt_site_kernel():
    """The AKLT site structure factor has the identity and the three total spin components as kernel"""
    basis = product_basis(SupportGeometry.site(5))
    m, results = genfunc_structure_factor(build_aklt_peps(), basis, ZERO, chi=24)
    assert all(result.converged for result in results)
    assert kernel_dimension(m.eigenvalues, 1e-6) == 4
