import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dwnls.errors import ValidationError
from dwnls.fdsim import (
    FDParams,
    FDState,
    alpha_critical,
    classify,
    critical_mass,
    equilibria,
    fd_rhs,
    integrate_fd,
    integrate_many,
    is_reversible,
    jacobian,
    phase_portrait,
    poincare_return,
    stability_threshold,
    time_reversal_error,
)

BASE = FDParams(1.0, 0.9, 0.2)


def _fd_jacobian(a, b, p, h=1e-6):
    J = np.empty((2, 2))
    for k, (ea, eb) in enumerate(((h, 0), (0, h))):
        fp = fd_rhs(FDState(a + ea, b + eb), p)
        fm = fd_rhs(FDState(a - ea, b - eb), p)
        J[:, k] = [(fp[0] - fm[0]) / (2 * h), (fp[1] - fm[1]) / (2 * h)]
    return J


@settings(max_examples=40, deadline=None)
@given(N=st.floats(0.05, 1.0), r=st.floats(0.0, 0.9), ang=st.floats(0, 2 * math.pi))
def test_analytic_jacobian_matches_finite_differences(N, r, ang):
    p = BASE.with_mass(N)
    a, b = r * math.sqrt(N) * math.cos(ang), r * math.sqrt(N) * math.sin(ang)
    assert np.allclose(jacobian(a, b, p), _fd_jacobian(a, b, p), atol=1e-7, rtol=1e-6)


@settings(max_examples=40, deadline=None)
@given(N=st.floats(0.05, 1.0), r=st.floats(0.0, 0.95), ang=st.floats(0, 2 * math.pi), variant=st.sampled_from(["unit", "projected"]))
def test_reversible_symmetry(N, r, ang, variant):
    p = FDParams(1.0, 0.9, N, variant=variant)
    a, b = r * math.sqrt(N) * math.cos(ang), r * math.sqrt(N) * math.sin(ang)
    assert is_reversible(p, a, b, tol=1e-10)


def test_stability_flip_is_analytic():
    # det J(0,0) = P(0) Q(0) with P(0) = gap, Q(0) = gap - 4N²
    gap = BASE.gap
    assert stability_threshold(BASE) == pytest.approx(math.sqrt(gap / 4), abs=1e-12)
    assert classify(jacobian(0, 0, BASE.with_mass(0.1))) == "elliptic"
    assert classify(jacobian(0, 0, BASE.with_mass(0.2))) == "hyperbolic"


def test_critical_mass_formula():
    assert critical_mass(BASE) == (0.1 / 4) ** 0.25
    with pytest.raises(ValidationError):
        critical_mass(-1.0)


@pytest.mark.parametrize("N", [0.2, 0.5])
def test_asymmetric_equilibria_are_fixed_points(N):
    p = BASE.with_mass(N)
    eqs = equilibria(p)
    asym = [e for e in eqs if e.alpha != 0]
    assert len(asym) == 2
    for e in asym:
        da, db, _ = fd_rhs(FDState(e.alpha, e.beta), p)
        assert abs(da) < 1e-12 and abs(db) < 1e-12
        assert e.kind == "elliptic"
    assert alpha_critical(p) == pytest.approx(abs(asym[0].alpha))


def test_only_origin_at_small_mass():
    eqs = equilibria(BASE.with_mass(0.1))
    assert [e.alpha for e in eqs] == [0.0]
    assert math.isnan(alpha_critical(BASE.with_mass(0.1)))


def test_uncoupled_projected_flow_is_a_rotation():
    # without nonlinearity α + iβ rotates at the gap frequency
    p = FDParams(1.0, 0.9, 0.3, couplings=(0.0, 0.0, 0.0, 0.0), variant="projected")
    c0 = 0.3 + 0.1j
    tr = integrate_fd(FDState(c0.real, c0.imag), p, 20.0, dt=1e-2)
    c = tr.alpha + 1j * tr.beta
    assert np.max(np.abs(c - c0 * np.exp(-1j * p.gap * tr.t))) < 1e-9
    assert np.allclose(tr.theta, p.omega0 * tr.t, atol=1e-9)


def test_batch_integration_matches_single():
    tr = integrate_many([0.1, 0.2], [0.0, 0.05], BASE, 30.0, dt=0.01, sample_every=100)
    one = integrate_fd(FDState(0.2, 0.05), BASE, 30.0, dt=0.01, sample_every=100)
    assert np.array_equal(tr.alpha[:, 1], one.alpha)


def test_closed_orbit_returns():
    p = BASE.with_mass(0.1)
    a1, period = poincare_return(0.1, p)
    assert abs(a1 - 0.1) < 1e-10
    assert period > 0


def test_time_reversal():
    assert time_reversal_error(FDState(0.2, 0.1), BASE.with_mass(0.2), 20.0, dt=1e-2) < 1e-12


def test_portrait_rows():
    rows = phase_portrait(BASE.with_mass(0.2), T=10.0, sample_every=100)
    ids = {r[0] for r in rows}
    assert len(ids) >= 9  # radial fan, β-axis points, separatrix straddlers
    for _, _, a, b in rows:
        assert a * a + b * b <= 0.2 + 1e-12


def test_validation():
    with pytest.raises(ValidationError):
        FDParams(0.9, 1.0, 0.1)
    with pytest.raises(ValidationError):
        FDParams(1.0, 0.9, -0.1)
    with pytest.raises(ValidationError):
        FDParams(1.0, 0.9, 0.1, couplings=(1, 2, 3, 4))
    with pytest.raises(ValidationError):
        fd_rhs(FDState(1.0, 0.0), BASE.with_mass(0.1))
    with pytest.raises(ValidationError):
        integrate_fd(FDState(0.1, 0.0), BASE, 0.0)


def test_three_variable_form_drifts_in_mass():
    # the tabulated β-equation is not the projection, so A² + α² + β² is not conserved
    tr = integrate_fd(FDState(0.3, 0.2), BASE.with_mass(0.2), 10.0, dt=1e-3, three_variable=True)
    assert tr.mass_drift > 1e-6
