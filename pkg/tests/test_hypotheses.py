import math

import numpy as np
import pytest
from scipy.integrate import quad

from dwnls.errors import ValidationError
from dwnls.hypotheses import h4_report, inner_product
from dwnls.spectral import PoschlTeller, build_grid, default_pair, make_potential, spectral_pair


def test_sech_sixth_moment():
    g = build_grid(-30, 30, 6000)
    psi = 1 / np.cosh(g.x) / math.sqrt(2)
    for rule in ("trapezoid", "simpson"):
        assert abs(inner_product(psi**6, np.ones_like(psi), g, rule) - 2 / 15) < 1e-6


def test_length_mismatch():
    g = build_grid(-5, 5, 100)
    with pytest.raises(ValidationError):
        inner_product(np.ones(100), np.ones(99), g)
    with pytest.raises(ValidationError):
        inner_product(np.ones(100), np.ones(100), g, rule="gauss")


def test_integrals_against_quadrature_oracle():
    # -6 sech^2: ψ0 = √3/2 sech², ψ1 = √(3/2) sech·tanh, integrals by adaptive quadrature
    g = build_grid(-20, 20, 4000)
    sp = spectral_pair(make_potential(PoschlTeller(2.0), g), g)
    r = h4_report(sp)
    p0 = lambda x: math.sqrt(3) / 2 / math.cosh(x) ** 2
    p1 = lambda x: math.sqrt(1.5) * math.tanh(x) / math.cosh(x)
    oracle = {
        "I60": quad(lambda x: p0(x) ** 6, -30, 30, epsabs=1e-14)[0],
        "I42": quad(lambda x: p0(x) ** 4 * p1(x) ** 2, -30, 30, epsabs=1e-14)[0],
        "I24": quad(lambda x: p0(x) ** 2 * p1(x) ** 4, -30, 30, epsabs=1e-14)[0],
        "I06": quad(lambda x: p1(x) ** 6, -30, 30, epsabs=1e-14)[0],
    }
    for k, v in oracle.items():
        assert abs(getattr(r, k) - v) < 1e-4 * v, k


def test_separated_wells_limit():
    # far-apart wells: ψ0, ψ1 ≈ (g_R ± g_L)/√2 so all four integrals coincide,
    # h4a → 4 I60 and h4b → 4 I60²; the defect decays with the overlap
    defects = []
    for L in (8.0, 10.0, 12.0):
        r = h4_report(default_pair(L=L, x_max=50, n=2999))
        defects.append(max(abs(r.I42 / r.I60 - 1), abs(r.I24 / r.I60 - 1), abs(r.h4a / (4 * r.I60) - 1), abs(r.h4b / (4 * r.I60**2) - 1)))
    assert defects[0] > 3 * defects[1] > 9 * defects[2]
    assert defects[2] < 3e-3


def test_default_margin_and_pass(pair_L3):
    r = h4_report(pair_L3)
    assert r.passed and r.h4a > 0 and r.h4b > 0
    assert r.a0 == pytest.approx(0.5 * min(r.h4a, r.h4b))
    assert r.passes(r.a0) and not r.passes(10.0)


def test_derived_coefficients(pair_L3):
    r = h4_report(pair_L3)
    assert r.omega2_coeff() == pytest.approx(20 * r.h4b / r.h4a)
    assert r.rho0_2_coeff() == pytest.approx(5 * (r.I42 - r.I24) / r.h4a)
    assert r.mu1_curvature() == pytest.approx(40 * r.h4b / r.I60)
    assert r.predicted_rho0_star(pair_L3.gap) == pytest.approx((pair_L3.gap / r.h4a) ** 0.25)
