import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dwnls.branch import BranchSolver, mass_slope
from dwnls.errors import ValidationError


def test_symmetric_branch_solves_the_stationary_equation(pair_L3):
    s = BranchSolver(pair_L3)
    om = s.omega_symmetric(0.3)
    bp = s.make_point(0.3, 0.0, om)
    assert bp.residual < 1e-11
    assert s.pde_residual(bp) < 1e-9
    # even profile on the symmetric branch
    assert np.allclose(pair_L3.grid.reflect(bp.phi), bp.phi, atol=1e-12)


def test_symmetric_branch_leading_order(pair_L3):
    # ω - ω0 ≈ ρ0⁴ I60 for small ρ0 (independent scalar check)
    s = BranchSolver(pair_L3)
    I60 = pair_L3.inner(pair_L3.psi0**6, np.ones_like(pair_L3.psi0))
    for r in (0.05, 0.1):
        assert (s.omega_symmetric(r) - pair_L3.omega0) / (r**4 * I60) == pytest.approx(1.0, abs=2e-3)


def test_bifurcation_point_is_where_G_vanishes(branch_L6):
    sp, h4, s, bif, _ = branch_L6
    F, _, G, _ = s.residual_FG(bif.rho0_star, 0.0, bif.omega_star)
    assert abs(F) < 1e-10 and abs(G) < 1e-10
    assert bif.relative_prediction_error < 0.1


def test_asymmetric_points_are_ground_states(branch_L6):
    sp, _, s, _, br = branch_L6
    for bp in br:
        assert s.pde_residual(bp) < 1e-8
        assert bp.rho1 > 0
    # ω increases away from the pitchfork
    om = [bp.omega for bp in br]
    assert all(b > a for a, b in zip(om, om[1:]))


def test_mirror_image_is_also_a_solution(branch_L6):
    sp, _, s, _, br = branch_L6
    bp = br[-1]
    mirrored = sp.grid.reflect(bp.phi)
    r = sp.op.apply(mirrored) + bp.omega * mirrored - mirrored**5
    assert np.sqrt(sp.inner(r, r)) < 1e-8
    q = s.point_from_phi(mirrored, bp.omega)
    assert q.rho1 == pytest.approx(-bp.rho1, rel=1e-10)
    assert q.rho0 == pytest.approx(bp.rho0, rel=1e-10)


@settings(max_examples=5, deadline=None)
@given(scale=st.floats(-1e-3, 1e-3))
def test_full_newton_returns_to_branch(branch_L6, scale):
    sp, _, s, _, br = branch_L6
    bp = br[1]
    bump = np.exp(-((sp.grid.x - 6.0) ** 2))
    phi = s.newton_full(bp.phi + scale * bump, bp.omega)
    assert np.max(np.abs(phi - bp.phi)) < 1e-9


def test_omega_continuation_matches_rho1_branch(branch_L6):
    sp, _, s, _, br = branch_L6
    out = s.continue_in_omega(br[0], [br[1].omega, br[2].omega])
    for a, b in zip(out, br[1:3]):
        assert a.rho1 == pytest.approx(b.rho1, rel=1e-8)
        assert np.max(np.abs(a.phi - b.phi)) < 1e-8


def test_mass_increases_with_omega(branch_L6):
    *_, br = branch_L6
    assert np.all(mass_slope(br) > 0)


def test_mass_slope_validation(branch_L6):
    *_, br = branch_L6
    with pytest.raises(ValidationError):
        mass_slope(br[:2])
    with pytest.raises(ValidationError):
        mass_slope([br[0], br[2], br[1]])


def test_eta_rejects_bad_omega(pair_L3):
    with pytest.raises(ValidationError):
        BranchSolver(pair_L3).solve_eta(0.1, 0.0, -0.5)


def test_eta_is_orthogonal_to_bound_states(pair_L3):
    eta = BranchSolver(pair_L3).solve_eta(0.3, 0.1, pair_L3.omega0 + 0.01)
    assert abs(pair_L3.inner(eta, pair_L3.psi0)) < 1e-13
    assert abs(pair_L3.inner(eta, pair_L3.psi1)) < 1e-13
