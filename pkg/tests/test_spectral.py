import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dwnls.errors import H1ViolationError, ValidationError
from dwnls.spectral import (
    GaussianDoubleWell,
    PoschlTeller,
    build_grid,
    default_pair,
    discretize,
    graded_grid,
    lowest_eigenpairs,
    make_potential,
    spectral_pair,
)


@pytest.mark.parametrize("m, expected", [(1.0, [-1.0]), (2.0, [-4.0, -1.0]), (3.0, [-9.0, -4.0, -1.0])])
def test_poschl_teller_levels(m, expected):
    # exact bound states at -(m-k)^2
    g = build_grid(-20, 20, 4000)
    vals = [e for e, _ in lowest_eigenpairs(discretize(make_potential(PoschlTeller(m), g), g), len(expected))]
    assert np.allclose(vals, expected, atol=5e-3)


def test_ground_state_matches_sech_profile():
    g = build_grid(-20, 20, 4000)
    _, psi = lowest_eigenpairs(discretize(make_potential(PoschlTeller(1.0), g), g), 1)[0]
    exact = 1 / np.cosh(g.x) / math.sqrt(2)
    psi = psi / math.sqrt(np.dot(g.weights, psi**2))
    assert np.max(np.abs(np.abs(psi) - exact)) < 1e-4


def test_single_bound_state_is_rejected():
    g = build_grid(-20, 20, 800)
    with pytest.raises(H1ViolationError):
        spectral_pair(make_potential(PoschlTeller(1.0), g), g)


def test_three_bound_states_are_rejected():
    g = build_grid(-20, 20, 800)
    with pytest.raises(H1ViolationError):
        spectral_pair(make_potential(PoschlTeller(3.0), g), g)


@settings(max_examples=12, deadline=None)
@given(sigma=st.floats(0.3, 0.8), L=st.floats(1.5, 5.0))
def test_pair_parity_and_orthonormality(sigma, L):
    try:
        sp = default_pair(sigma=sigma, L=L, x_max=30, n=799)
    except H1ViolationError:
        return
    g = sp.grid
    w = g.weights
    assert abs(np.dot(w, sp.psi0**2) - 1) < 1e-12
    assert abs(np.dot(w, sp.psi1**2) - 1) < 1e-12
    assert abs(np.dot(w, sp.psi0 * sp.psi1)) < 1e-12
    assert np.allclose(g.reflect(sp.psi0), sp.psi0, atol=1e-10)
    assert np.allclose(g.reflect(sp.psi1), -sp.psi1, atol=1e-10)
    assert sp.omega0 > sp.omega1 > 0


def test_eigen_residual(pair_L3):
    sp = pair_L3
    for om, psi in ((sp.omega0, sp.psi0), (sp.omega1, sp.psi1)):
        r = sp.op.apply(psi) + om * psi
        assert np.max(np.abs(r)) < 1e-8


def test_gap_shrinks_with_separation():
    gaps = [default_pair(L=L, x_max=40, n=1599).gap for L in (2.0, 3.0, 4.0)]
    assert gaps[0] > gaps[1] > gaps[2] > 0


def test_graded_grid_contains_centres_and_is_mirror_symmetric():
    g = graded_grid(20.0, [5.0], 0.01, 0.1)
    assert np.any(np.isclose(g.x, 5.0)) and np.any(np.isclose(g.x, -5.0))
    assert np.allclose(g.x, -g.x[::-1])
    assert np.all(np.diff(g.x) > 0)


def test_graded_grid_converges_in_h_min():
    # with a fixed grading ratio the refinement is first order in h_min
    vals = []
    for hmin in (0.004, 0.002, 0.001):
        g = graded_grid(40.0, [3.0], hmin, 0.05)
        vals.append(spectral_pair(make_potential(GaussianDoubleWell(0.05, 3.0, -1.0), g), g).omega0)
    d1, d2 = abs(vals[0] - vals[1]), abs(vals[1] - vals[2])
    assert d1 / d2 > 1.8
    assert d2 < 1e-3 * vals[2]


def test_underresolved_well_warns():
    g = build_grid(-10, 10, 200)
    with pytest.warns(RuntimeWarning, match="under-resolved"):
        make_potential(GaussianDoubleWell(0.01, 3.0, -1.0), g)


@pytest.mark.parametrize("args", [(-1, 1, 8), (1, -1, 100), (0, 0, 100)])
def test_bad_grid(args):
    with pytest.raises(ValidationError):
        build_grid(*args)


def test_bad_potential_params():
    with pytest.raises(ValidationError):
        GaussianDoubleWell(0.0, 1.0)
    with pytest.raises(ValidationError):
        GaussianDoubleWell(0.5, -1.0)


def test_tridiagonal_solve_matches_dense(pair_L3):
    op = pair_L3.op
    rng = np.random.default_rng(1)
    b = rng.standard_normal(op.diag.size)
    x = op.solve(b, 0.7)
    # apply() works on ψ-space vectors
    assert np.allclose(op.apply(x) + 0.7 * x, b, atol=1e-9)
