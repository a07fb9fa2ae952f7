"""Pytest file for deflation, kernel extraction and solution analysis"""

import numpy as np
import pytest

from tn.basis import (
    Momentum,
    SupportGeometry,
    product_basis,
    su2_reduced_plaquette_basis,
)
from tn.constants import SENTINEL
from tn.exceptions import BasisError, ExtractionError
from tn.extraction import (
    ConservedOperatorSolution,
    StructureFactorMatrix,
    aklt_family_membership,
    aklt_parent_family,
    assemble,
    canonical_span,
    deflate,
    kernel_dimension,
    rvb_ansatz_vector,
    rvb_coefficients,
    solution_from_dict,
    solution_to_dict,
    solve,
    span_distance,
    spin2_pair_projector,
    standard_deflation,
)
from tn.models import FiniteTorus, build_aklt_peps, build_ising_peps, build_rvb_peps, ising_plaquette_term
from tn.oracle import exact_structure_factor

ZERO = Momentum(0, 0, 1, 1)


def _rotation(angle: float) -> np.ndarray:
    return np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])


def test_assemble_missing_rows():
    """Row dictionaries must cover the basis"""
    basis = product_basis(SupportGeometry.site(2))
    with pytest.raises(ExtractionError):
        assemble({0: np.zeros(4), 1: np.zeros(4)}, basis, ZERO)


def test_assemble_non_finite():
    """NaN entries are refused"""
    basis = product_basis(SupportGeometry.site(2))
    raw = np.eye(4)
    raw[1, 2] = np.nan
    with pytest.raises(ExtractionError):
        assemble(raw, basis, ZERO)


def test_structure_factor_shape_mismatch():
    """The matrix must match the basis size"""
    with pytest.raises(ExtractionError):
        StructureFactorMatrix(np.eye(3), product_basis(SupportGeometry.site(2)), ZERO)


def test_symmetrization_and_flags():
    """The real symmetric part is kept and negative eigenvalues are flagged"""
    basis = product_basis(SupportGeometry.site(2))
    raw = np.diag([-1.0, 1.0, 2.0, 3.0])
    raw[1, 2] = 0.5
    m = StructureFactorMatrix(raw, basis, ZERO)
    assert m.matrix[1, 2] == m.matrix[2, 1] == 0.25
    assert m.asymmetry == 0.5
    assert "negative-eigenvalue" in m.flags


def test_deflation_is_idempotent():
    """Deflating a span twice changes nothing and puts it at the sentinel"""
    basis = product_basis(SupportGeometry.site(2))
    m = StructureFactorMatrix(np.diag([0.0, 1.0, 2.0, 3.0]), basis, ZERO)
    vectors = np.array([[1.0, 1.0, 0.0, 0.0]]) / np.sqrt(2)
    once = deflate(m, {"a": vectors})
    twice = deflate(m, {"a": vectors, "b": 2 * vectors})
    assert np.allclose(once.matrix, twice.matrix)
    assert np.allclose(once.matrix @ vectors[0], SENTINEL * vectors[0])
    assert twice.summary() == {"subspaces": {"a": 1, "b": 1}, "rank": 1}


def test_deflation_length_mismatch():
    """Subspace vectors must match the basis size"""
    m = StructureFactorMatrix(np.eye(4), product_basis(SupportGeometry.site(2)), ZERO)
    with pytest.raises(BasisError):
        deflate(m, [np.ones((1, 3))])


def test_solve_lowest_solution():
    """The kernel vector comes first, sign fixed and with its Rayleigh quotient"""
    basis = product_basis(SupportGeometry.site(2))
    m = StructureFactorMatrix(np.diag([2.0, 0.0, 1.0, 3.0]), basis, ZERO)
    solutions = solve(m, count=2)
    assert np.allclose([s.eigenvalue for s in solutions], [0.0, 1.0])
    assert np.allclose(solutions[0].coefficients, [0.0, 1.0, 0.0, 0.0])
    assert list(solutions[0].labelled()) == ["X"]


def test_solve_degenerate_block_is_canonical():
    """A degenerate kernel is returned whole in a rotation independent form"""
    basis = product_basis(SupportGeometry.site(2))
    rotation = np.eye(4)
    rotation[:2, :2] = _rotation(0.7)
    m = StructureFactorMatrix(rotation @ np.diag([0.0, 0.0, 1.0, 2.0]) @ rotation.T, basis, ZERO)
    solutions = solve(m, count=1)
    assert len(solutions) == 2
    assert all(s.block_size == 2 for s in solutions)
    assert np.allclose(np.array([s.coefficients for s in solutions]), np.eye(4)[:2], atol=1e-10)


def test_canonical_span():
    """Rows spanning the same plane map to the same canonical rows"""
    plane = np.eye(3)[:2]
    rotated = _rotation(1.1) @ plane
    assert np.allclose(canonical_span(rotated), plane)
    assert span_distance(plane, rotated) < 1e-12
    assert span_distance(plane, plane[:1]) == 1.0


def test_kernel_dimension():
    """Eigenvalues strictly below the threshold count"""
    assert kernel_dimension(np.array([1e-14, 1e-11, 1e-3]), 1e-10) == 2


def test_standard_deflation_plaquette():
    """Trivial and embedded site solutions are deflated by name"""
    basis = product_basis(SupportGeometry.plaquette(2))
    site = product_basis(SupportGeometry.site(2))
    subspaces = standard_deflation(basis, ZERO, [(site, np.eye(4)[:1])])
    assert subspaces["trivial"].shape == (28, 256)
    assert subspaces["embedded-site"].shape[1] == 256


def test_rvb_coefficients_invert_ansatz():
    """Reading the couplings of the ansatz vector gives the couplings back"""
    basis = su2_reduced_plaquette_basis()
    vector = rvb_ansatz_vector(basis, 0.33, -0.17, 0.36)
    norm = np.linalg.norm(vector)
    couplings = rvb_coefficients(ConservedOperatorSolution(1e-3, vector / norm, basis, ZERO))
    assert abs(couplings.j2 - 0.33) < 1e-12
    assert abs(couplings.q1 + 0.17) < 1e-12
    assert abs(couplings.q2 - 0.36) < 1e-12
    assert abs(couplings.variance_per_site - 1e-3 * norm**2) < 1e-12


def test_rvb_coefficients_need_su2_basis():
    """Other bases are refused"""
    basis = product_basis(SupportGeometry.site(2))
    with pytest.raises(BasisError):
        rvb_coefficients(ConservedOperatorSolution(0.0, np.eye(4)[1], basis, ZERO))


def test_spin2_pair_projector():
    """The total spin 4 block of two spin-2 sites has dimension 9"""
    projector, top = spin2_pair_projector()
    assert top.shape == (25, 9)
    assert np.allclose(projector @ projector, projector)
    assert abs(np.trace(projector).real - 9) < 1e-10


def test_aklt_family_membership():
    """Members of the parent family pass and a generic operator fails"""
    basis = product_basis(SupportGeometry.pair(5))
    family = aklt_parent_family(basis)
    assert family.shape == (82, 625)
    member = family[0] + 0.5 * family[3]
    report = aklt_family_membership(ConservedOperatorSolution(0.0, member / np.linalg.norm(member), basis, ZERO))
    assert report.in_family
    generic = np.random.default_rng(3).normal(size=625)
    report = aklt_family_membership(ConservedOperatorSolution(0.0, generic / np.linalg.norm(generic), basis, ZERO))
    assert not report.in_family


def test_aklt_family_penalty_orientation():
    """A member and its negative report the same nonnegative penalty, with or without the identity deflated"""
    basis = product_basis(SupportGeometry.pair(5))
    family = aklt_parent_family(basis)
    member = 2.0 * family[0] - 0.5 * family[3]
    member = member / np.linalg.norm(member)
    reports = [aklt_family_membership(ConservedOperatorSolution(0.0, sign * member, basis, ZERO)) for sign in (1.0, -1.0)]
    assert all(report.in_family for report in reports)
    assert reports[0].penalty > 0
    assert abs(reports[0].penalty - reports[1].penalty) < 1e-10
    identity = np.eye(625)[:1]
    deflated = aklt_family_membership(ConservedOperatorSolution(0.0, -member, basis, ZERO), deflation_vectors=identity)
    assert deflated.in_family
    assert abs(deflated.penalty - reports[0].penalty) < 1e-10
    assert identity[0, 0] == 1.0


def test_solution_file_round_trip():
    """A written solution reads back against its basis and refuses another"""
    basis = su2_reduced_plaquette_basis()
    vector = rvb_ansatz_vector(basis, 0.4, -0.1, 0.2)
    sol = ConservedOperatorSolution(2e-3, vector / np.linalg.norm(vector), basis, ZERO, provenance={"backend": "oracle"})
    data = solution_to_dict(sol)
    back = solution_from_dict(data, basis)
    assert np.array_equal(back.coefficients, sol.coefficients)
    assert back.provenance == {"backend": "oracle"}
    with pytest.raises(BasisError):
        solution_from_dict(data, product_basis(SupportGeometry.plaquette(2)))


@pytest.mark.slow
def test_ising_plaquette_solution():
    """The deformed Ising state on the 4×4 torus has a single deflated conserved plaquette term"""
    basis = product_basis(SupportGeometry.plaquette(2))
    m = exact_structure_factor(build_ising_peps(0.3), FiniteTorus(4, 4), basis, ZERO)
    deflated = deflate(m, standard_deflation(basis, ZERO))
    assert kernel_dimension(deflated.spectrum(), 1e-12) == 1
    target = ising_plaquette_term(ZERO).to_vector(basis.geometry)
    target = target - deflated.vectors.T @ (deflated.vectors @ target)
    target = target / np.linalg.norm(target)
    solution = solve(deflated, count=1)[0]
    assert abs(solution.coefficients @ target) > 1 - 1e-10


@pytest.mark.slow
def test_aklt_pair_kernel_is_parent_family():
    """With the trivial and embedded total spin solutions deflated, the AKLT pair kernel is the 81 parent terms"""
    peps = build_aklt_peps()
    torus = FiniteTorus(4, 4, 5)
    site = product_basis(SupportGeometry.site(5))
    site_m = exact_structure_factor(peps, torus, site, ZERO)
    values, vectors = np.linalg.eigh(site_m.matrix)
    site_kernel = vectors[:, values < 1e-9].T
    assert len(site_kernel) == 4

    pair = product_basis(SupportGeometry.pair(5))
    m = exact_structure_factor(peps, torus, pair, ZERO)
    penalty = aklt_parent_family(pair)[0]
    penalty = penalty / np.linalg.norm(penalty)
    assert penalty @ m.matrix @ penalty < 1e-9
    deflated = deflate(m, standard_deflation(pair, ZERO, [(site, site_kernel)]))
    assert kernel_dimension(deflated.spectrum(), 1e-7) == 81
    kernel = [sol for sol in solve(deflated, count=81) if sol.eigenvalue < 1e-7]
    assert len(kernel) == 81
    reports = [aklt_family_membership(sol, deflation_vectors=deflated.vectors) for sol in kernel]
    assert all(report.in_family for report in reports)


@pytest.mark.slow
def test_rvb_couplings_on_torus():
    """The lowest deflated su2-39 solution of the RVB state on the 4×4 torus has the known couplings"""
    basis = su2_reduced_plaquette_basis()
    m = exact_structure_factor(build_rvb_peps(), FiniteTorus(4, 4), basis, ZERO)
    deflated = deflate(m, standard_deflation(basis, ZERO))
    solution = solve(deflated, count=1)[0]
    couplings = rvb_coefficients(solution)
    assert abs(couplings.j2 - 0.3317) < 2e-3
    assert abs(couplings.q1 + 0.1698) < 2e-3
    assert abs(couplings.q2 - 0.3562) < 2e-3
    assert 0 < solution.eigenvalue < 5e-3
