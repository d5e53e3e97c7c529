import numpy as np
import pytest

from dwnls.errors import SpectralStructureError
from dwnls.linstab import (
    apply_H,
    build_Lpm,
    direct_eigs,
    internal_mode,
    kernel_structure,
    lplus_spectrum,
    quadruple_defect,
    rayleigh_bound,
)


@pytest.fixture(scope="module")
def mode(branch_L6):
    sp, h4, s, bif, br = branch_L6
    bp = br[-1]
    return sp, bp, internal_mode(bp, sp)


def test_internal_mode_is_an_eigenvector(mode):
    sp, bp, ls = mode
    h1, h2 = apply_H(ls.xi1, ls.xi2, bp, sp)
    scale = np.max(np.abs(ls.xi1))
    assert np.max(np.abs(h1 - ls.lam * ls.xi1)) < 1e-7 * scale
    assert np.max(np.abs(h2 - ls.lam * ls.xi2)) < 1e-7 * scale


def test_internal_mode_normalization(mode):
    sp, _, ls = mode
    assert sp.inner(ls.xi1, ls.xi1) - sp.inner(ls.xi2, ls.xi2) == pytest.approx(1.0, abs=1e-12)


def test_internal_mode_symplectically_orthogonal_to_phi(mode):
    sp, bp, ls = mode
    # p = ξ1 + ξ2 lies in the range of L₋L₊ restricted to φ⊥
    assert abs(sp.inner(ls.xi1 + ls.xi2, bp.phi)) < 1e-8


def test_routes_agree(mode):
    _, _, ls = mode
    assert abs(ls.lam_direct / ls.lam - 1) < 1e-6


def test_internal_mode_below_continuum(mode):
    _, bp, ls = mode
    assert 0 < ls.lam < bp.omega


def test_spectrum_has_hamiltonian_symmetry(mode):
    sp, bp, ls = mode
    Lp, Lm = build_Lpm(bp, sp)
    vals, _ = direct_eigs(Lp, Lm, k=4, sigma=0.5j * ls.lam)
    assert quadruple_defect(vals) < 1e-8


def test_rayleigh_lower_bound(mode):
    sp, bp, ls = mode
    ok, bound = rayleigh_bound(bp, sp, ls.lam)
    assert ok


def test_one_negative_direction_on_asymmetric_branch(branch_L6):
    sp, *_, br = branch_L6
    for bp in br:
        Lp, _ = build_Lpm(bp, sp)
        mu0, mu1, rest = lplus_spectrum(Lp, bp.omega)
        assert mu0 > 0 and mu1 > 0


def test_symmetric_branch_past_bifurcation_has_two_negative_directions(branch_L6):
    sp, h4, s, bif, _ = branch_L6
    r0 = 1.2 * bif.rho0_star
    bp = s.make_point(r0, 0.0, s.omega_symmetric(r0))
    Lp, _ = build_Lpm(bp, sp)
    with pytest.raises(SpectralStructureError):
        lplus_spectrum(Lp, bp.omega)


def test_mu1_matches_consistent_curvature(branch_L6):
    # μ1 ≈ (ρ0*)² ρ1² · 20 h4b / I60 near the pitchfork
    sp, h4, s, bif, br = branch_L6
    bp = br[0]
    ls = internal_mode(bp, sp, cross_check=False)
    pred = 0.5 * bif.rho0_star**2 * h4.mu1_curvature() * bp.rho1**2
    assert ls.mu1 / pred == pytest.approx(1.0, abs=0.03)


def test_kernel_parities_at_bifurcation(branch_L6):
    sp, _, _, bif, _ = branch_L6
    kr = kernel_structure(bif.point, sp)
    assert kr.generalized == 4 and kr.conclusive
    assert kr.parity == {"phi": "even", "beta": "odd", "alpha": "even", "gamma": "odd"}
