import math

import numpy as np
import pytest

from dwnls.errors import BlowUpError, OutOfBasinError, ValidationError
from dwnls.fdsim import FDParams, FDState, integrate_fd
from dwnls.hypotheses import h4_report
from dwnls.nlssim import (
    BranchTable,
    Stepper,
    evolve,
    extract_mode,
    fgr_decay_fit,
    fit_ground_state,
    initial_data,
    interior_slice,
    mass,
    relaxation_experiment,
    resonance_order,
    sponge_profile,
    synthetic_decay,
    trend_fraction,
    omega_settles,
)
from dwnls.repro import RELAXATION_DEFAULTS, ground_state_table
from dwnls.spectral import build_grid, default_pair

OMEGA = RELAXATION_DEFAULTS["omega"]


@pytest.fixture(scope="module")
def table():
    cfg = dict(RELAXATION_DEFAULTS, x_max=30.0, n=599, table_nodes=9, table_half_width_frac=0.05)
    sp, _, centre, tab = ground_state_table(cfg)
    return tab


def _perturbed(table, z0=0.02):
    return initial_data(table, OMEGA, z0)


def test_ground_state_is_stationary(table):
    u0 = table.phi(OMEGA).astype(complex)
    T = 5 * 2 * math.pi / OMEGA
    ts, us, _ = evolve(u0, table.sp, T, 0.0025, sample_every=200, scheme="yoshida4")
    assert max(np.max(np.abs(np.abs(u) - np.abs(u0))) for u in us) < 1e-6
    # and the phase advances at rate ω: u = e^{iωt} φ
    phase = np.angle(np.vdot(u0, us[-1]))
    assert math.remainder(phase - OMEGA * ts[-1], 2 * math.pi) == pytest.approx(0.0, abs=1e-4)


def test_splitting_orders():
    # Strang is second order and the triple jump fourth order in dt
    sp = default_pair(L=2.0, x_max=30, n=599)
    u0 = (0.8 * sp.psi0 + 0.5 * sp.psi1).astype(complex)
    ref = evolve(u0, sp, 2.0, 0.00125, sample_every=10**9, scheme="yoshida4")[1][-1]
    for scheme, order in (("strang", 2), ("yoshida4", 4)):
        e = [np.max(np.abs(evolve(u0, sp, 2.0, dt, sample_every=10**9, scheme=scheme)[1][-1] - ref)) for dt in (0.02, 0.01)]
        assert math.log2(e[0] / e[1]) == pytest.approx(order, abs=0.3)


def test_mass_conserved_without_sponge(table):
    u0 = _perturbed(table)
    _, us, _ = evolve(u0, table.sp, 50.0, 0.01, sample_every=500)
    m0 = mass(u0, table.sp.grid)
    assert max(abs(mass(u, table.sp.grid) - m0) for u in us) < 1e-10 * m0


def test_sponge_mass_nonincreasing_and_localized(table):
    sp = table.sp
    u0 = _perturbed(table, 0.05)
    _, us, st = evolve(u0, sp, 60.0, 0.01, sponge=1.0, sample_every=50, track_interior=True)
    ms = [mass(u, sp.grid) for u in us]
    assert all(b <= a + 1e-13 for a, b in zip(ms, ms[1:]))
    # interior mass changes only by the discrete flux through its edges
    sl = interior_slice(sp.grid)
    w = sp.grid.weights[sl]
    dm = float(np.dot(w, np.abs(us[-1][sl]) ** 2) - np.dot(w, np.abs(u0[sl]) ** 2))
    assert abs(dm - st.flux_integral) < 1e-6
    assert np.all(sponge_profile(sp.grid)[sl] == 0)


def test_decomposition_is_exact(table):
    u = _perturbed(table, 0.03) * np.exp(0.7j)
    u = evolve(u, table.sp, 3.0, 0.01, sample_every=10**9)[1][-1]
    fit = fit_ground_state(u, table, guess=(OMEGA, 0.7 + 3.0 * OMEGA))
    x1, x2 = table.xi(fit.omega)
    z, f, _ = extract_mode(fit.r, x1, x2, table.sp.grid)
    rebuilt = np.exp(1j * fit.theta) * (table.phi(fit.omega) + z * x1 + np.conj(z) * x2 + f)
    assert np.max(np.abs(rebuilt - u)) < 1e-10
    assert fit.orth_residual < 1e-10


def test_fit_recovers_exact_ground_state(table):
    u = np.exp(0.3j) * table.phi(OMEGA)
    fit = fit_ground_state(u, table)
    assert fit.omega == pytest.approx(OMEGA, abs=1e-9)
    assert fit.theta == pytest.approx(0.3, abs=1e-9)
    z, _, _ = extract_mode(fit.r, *table.xi(fit.omega), table.sp.grid)
    assert abs(z) < 1e-8


@pytest.mark.parametrize("delta", [0.4, -2.0, 3.0])
def test_gauge_invariance(table, delta):
    u = _perturbed(table, 0.03)
    a = fit_ground_state(u, table, guess=(OMEGA, 0.0))
    b = fit_ground_state(np.exp(1j * delta) * u, table, guess=(OMEGA, delta))
    assert b.omega == pytest.approx(a.omega, abs=1e-11)
    assert math.remainder(b.theta - a.theta - delta, 2 * math.pi) == pytest.approx(0.0, abs=1e-11)
    za = extract_mode(a.r, *table.xi(a.omega), table.sp.grid)
    zb = extract_mode(b.r, *table.xi(b.omega), table.sp.grid)
    assert abs(zb[0]) == pytest.approx(abs(za[0]), abs=1e-11)
    assert zb[2] == pytest.approx(za[2], abs=1e-11)


def test_mirror_experiment_gives_identical_modulation(table):
    # reflect both the data and the branch table: the problem is mirror symmetric
    g = table.sp.grid
    mirrored = BranchTable(
        table.sp,
        table.omegas,
        np.array([g.reflect(p) for p in table.phis]),
        np.array([g.reflect(p) for p in table.xi1s]),
        np.array([g.reflect(p) for p in table.xi2s]),
        table.lams,
    )
    a, _ = relaxation_experiment(table, OMEGA, 0.02, 20.0, 0.01, sample_every=200)
    b, _ = relaxation_experiment(mirrored, OMEGA, 0.02, 20.0, 0.01, sample_every=200)
    assert np.allclose(np.abs(a.z), np.abs(b.z), atol=1e-10)
    assert np.allclose(a.omega, b.omega, atol=1e-10)


def test_fit_rejects_far_data(table):
    with pytest.raises(OutOfBasinError):
        fit_ground_state(0.3 * table.phi(OMEGA).astype(complex), table)


def test_blowup_guard(table):
    with pytest.raises(BlowUpError):
        evolve(_perturbed(table, 0.05), table.sp, 5.0, 0.01, sample_every=1, blowup_factor=0.5)


def test_dt_validation(table):
    with pytest.raises(ValidationError):
        evolve(table.phi(OMEGA).astype(complex), table.sp, 5.0, 1.0)
    with pytest.raises(ValidationError):
        Stepper(table.sp, 0.01, scheme="leapfrog")


def test_nonuniform_grid_rejected():
    from dwnls.spectral import GaussianDoubleWell, graded_grid, make_potential, spectral_pair

    g = graded_grid(20.0, [2.0], 0.01, 0.1)
    sp = spectral_pair(make_potential(GaussianDoubleWell(0.5, 2.0), g), g)
    with pytest.raises(ValidationError):
        Stepper(sp, 0.01)


def test_fgr_fit_exact_and_noisy():
    t = np.linspace(0, 50, 400)
    for n_res in (1, 2):
        z = synthetic_decay(t, 0.3, 2.0, n_res)
        g, r2, ok = fgr_decay_fit(t, z, n_res)
        assert g == pytest.approx(2.0, abs=1e-6) and ok
    z = synthetic_decay(t, 0.3, 2.0, 1)
    errs = []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        errs.append(abs(fgr_decay_fit(t, z * (1 + 0.05 * rng.standard_normal(t.size)), 1)[0] / 2 - 1))
    assert max(errs) < 0.1


def test_resonance_order():
    assert resonance_order(1.48, 1.17) == 1
    assert resonance_order(1.0, 0.3) == 3
    with pytest.raises(ValidationError):
        resonance_order(1.0, 0.5)
    with pytest.raises(ValidationError):
        resonance_order(1.0, 0.0)


def test_trend_and_settling_statistics():
    assert trend_fraction(np.linspace(1, 0, 200)) == 1.0
    assert trend_fraction(np.linspace(0, 1, 200)) == 0.0
    ok, spread, exc = omega_settles(1 - np.exp(-np.linspace(0, 10, 400)))
    assert ok and spread < 0.1 * exc
    assert not omega_settles(np.sin(np.linspace(0, 20, 400)))[0]


@pytest.fixture(scope="module")
def two_mode_pair():
    return default_pair(L=2.0, x_max=30, n=599)


def _tracking_error(sp, N):
    h = h4_report(sp)
    p = FDParams(sp.omega0, sp.omega1, N, (h.I60, h.I42, h.I24, h.I06), "projected")
    a0 = 0.6 * math.sqrt(N)
    T = 2 * math.pi / sp.gap
    u0 = (math.sqrt(N - a0 * a0) * sp.psi0 + a0 * sp.psi1).astype(complex)
    ts, us, _ = evolve(u0, sp, T, 0.01, sample_every=100)
    tr = integrate_fd(FDState(a0, 0.0), p, T, 0.01, sample_every=100)
    assert np.allclose(tr.t, ts)
    w = sp.grid.weights
    err = 0.0
    for k, u in enumerate(us):
        r0, r1 = np.dot(w, sp.psi0 * u), np.dot(w, sp.psi1 * u)
        c = r1 * np.exp(-1j * np.angle(r0))
        err = max(err, abs(c - (tr.alpha[k] + 1j * tr.beta[k])) / math.sqrt(N))
    return err


def test_two_mode_tracking_improves_like_mass_squared(two_mode_pair):
    # one beat period; halving N must shrink the error at least fourfold
    big = _tracking_error(two_mode_pair, 0.4)
    small = _tracking_error(two_mode_pair, 0.2)
    assert big < 1e-2
    assert small < big / 4
