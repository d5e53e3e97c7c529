"""Acceptance computations shared by ``repro`` and the acceptance tests.

Each ``criterion_*`` function takes a profile mapping and returns
``(checks, tables)``: a list of :class:`Check` rows and a mapping from
table name to ``(schema_name, rows)`` for the CSV writer.  Nothing here
reads the clock, so tables are reproducible bit for bit.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .branch import BranchSolver, mass_slope, second_derivatives_at_bifurcation
from .errors import DwnlsError
from .fdsim import (
    FDParams,
    FDState,
    alpha_critical,
    classify,
    critical_mass,
    equilibria,
    is_reversible,
    jacobian,
    phase_portrait,
    poincare_return,
    stability_threshold,
)
from .hypotheses import h4_report, inner_product
from .linstab import internal_mode, kernel_structure, lplus_spectrum, build_Lpm
from .nlssim import (
    build_table,
    energy,
    evolve,
    fgr_decay_fit,
    mass,
    relaxation_experiment,
    synthetic_decay,
)
from .spectral import (
    GaussianDoubleWell,
    PoschlTeller,
    build_grid,
    discretize,
    graded_grid,
    lowest_eigenpairs,
    make_potential,
    spectral_pair,
)


@dataclass(frozen=True)
class Check:
    criterion: int
    name: str
    value: float
    target: str
    passed: bool
    note: str = ""


# Pinned relaxation defaults.  Bump the version whenever any value changes;
# golden files record it.
RELAXATION_DEFAULTS_VERSION = 1
RELAXATION_DEFAULTS = {
    "sigma": 0.5,
    "L": 2.0,
    "depth": -1.0,
    "x_max": 60.0,
    "n": 2399,
    "omega": 1.48,
    "z0_frac": 0.1,
    "T": 4000.0,
    "dt": 0.01,
    "sponge": 1.0,
    "table_half_width_frac": 0.2,
    "table_nodes": 41,
    "sample_every": 100,
}

PROFILES = {
    "quick": {
        "c1_n": 4000,
        "c4_n": 1499,
        "c6_L": 16.0,
        "c6_n": 1999,
        "c7_L": 6.0,
        "c7_n": (1499, 1999),
        "c9_T_periods": 2,
        "c10_persist_n": 599,
        "c10_relaxation": False,
    },
    "full": {
        "c1_n": 4000,
        "c4_n": 2999,
        "c6_L": 16.0,
        "c6_n": 2999,
        "c7_L": 6.0,
        "c7_n": (1999, 2999),
        "c9_T_periods": 6,
        "c10_persist_n": 599,
        "c10_relaxation": True,
    },
}


def _rel(a: float, b: float) -> float:
    return abs(a - b) / abs(b)


def _double_well(sigma, L, depth, x_max, n):
    g = build_grid(-x_max, x_max, n)
    return spectral_pair(make_potential(GaussianDoubleWell(sigma, L, depth), g), g)


# ---------------------------------------------------------------------------


def criterion_1(prof):
    """Pöschl-Teller eigenvalues and second-order convergence."""
    checks, rows = [], []
    g = build_grid(-20.0, 20.0, prof["c1_n"])
    op = discretize(make_potential(PoschlTeller(1.0), g), g)
    e = lowest_eigenpairs(op, 1)[0][0]
    checks.append(Check(1, "m=1 lowest eigenvalue", e, "-1 +- 1e-3", abs(e + 1) < 1e-3))
    op = discretize(make_potential(PoschlTeller(2.0), g), g)
    e0, e1 = (v for v, _ in lowest_eigenpairs(op, 2))
    err = max(abs(e0 + 4), abs(e1 + 1))
    checks.append(Check(1, "m=2 eigenvalues {-4,-1}", err, "max error < 5e-3", err < 5e-3, f"{e0:.9f}, {e1:.9f}"))
    errs = []
    for n in (399, 799, 1599):
        gg = build_grid(-20.0, 20.0, n)
        v = lowest_eigenpairs(discretize(make_potential(PoschlTeller(2.0), gg), gg), 1)[0][0]
        errs.append(abs(v + 4))
        rows.append({"h": gg.h, "eigenvalue": v, "error": abs(v + 4)})
    ratios = [errs[i] / errs[i + 1] for i in range(2)]
    ok = all(3.6 < r < 4.4 for r in ratios)
    checks.append(Check(1, "error ratio under h halving", ratios[-1], "about 4 (3.6..4.4)", ok, f"ratios {ratios[0]:.4f}, {ratios[1]:.4f}"))
    return checks, {"c1_convergence": ("convergence", rows)}


def criterion_2(prof):
    g = build_grid(-30.0, 30.0, 6000)
    psi = 1.0 / np.cosh(g.x) / math.sqrt(2.0)
    val = inner_product(psi**6, np.ones_like(psi), g)
    err = abs(val - 2.0 / 15.0)
    return [Check(2, "<psi0^6,1> for sech/sqrt2", err, "|I - 2/15| < 1e-6", err < 1e-6, f"I = {val:.12f}")], {}


def criterion_3(prof):
    """Narrow-well interaction integrals on a graded grid.

    The reference values are reproduced with the well depth -2 (two
    unit-mass Gaussians of strength 2).  Depth -1 is archived next to it.
    """
    checks, rows = [], []
    g = graded_grid(60.0, [7.5], 0.001 / 20, 0.02)
    for depth in (-2.0, -1.0):
        sp = spectral_pair(make_potential(GaussianDoubleWell(0.001, 7.5, depth), g), g)
        h = h4_report(sp)
        rows.append({"sigma": 0.001, "L": 7.5, "depth": depth, "n": g.n, "omega0": sp.omega0, "omega1": sp.omega1, "h4a": h.h4a, "mu2_combo": h.mu2_combo})
        if depth == -2.0:
            checks.append(Check(3, "h4a (depth -2)", h.h4a, "within 10% of 0.3305", _rel(h.h4a, 0.3305) < 0.1))
            checks.append(Check(3, "mu2_combo (depth -2)", h.mu2_combo, "within 10% of 9.9143", _rel(h.mu2_combo, 9.9143) < 0.1))
    # fallback parameter set, archived for reference
    for L in (3.0, 4.0, 5.0):
        sp = _double_well(0.5, L, -1.0, 40.0, 2399)
        h = h4_report(sp)
        rows.append({"sigma": 0.5, "L": L, "depth": -1.0, "n": 2399, "omega0": sp.omega0, "omega1": sp.omega1, "h4a": h.h4a, "mu2_combo": h.mu2_combo})
    return checks, {"c3_interaction": ("interaction", rows)}


def criterion_4(prof):
    sp = _double_well(0.5, 3.0, -1.0, 30.0, prof["c4_n"])
    h4 = h4_report(sp)
    s = BranchSolver(sp)
    bif = s.find_bifurcation(h4)
    r = 0.3 * bif.rho0_star
    om = s.omega_symmetric(r)
    ratio = (om - sp.omega0) / (r**4 * h4.I60)
    return [Check(4, "symmetric-branch ratio at 0.3 rho0*", ratio, "[0.95, 1.05]", 0.95 <= ratio <= 1.05)], {}


def criterion_5(prof):
    checks, rows = [], []
    errs = []
    for L in (3.0, 4.0):
        sp = _double_well(0.5, L, -1.0, 40.0, prof["c4_n"])
        h4 = h4_report(sp)
        bif = BranchSolver(sp).find_bifurcation(h4)
        err = abs(bif.rho0_star**4 * h4.h4a - sp.gap) / sp.gap
        errs.append(err)
        rows.append({"L": L, "gap": sp.gap, "rho0_star": bif.rho0_star, "omega_star": bif.omega_star, "rel_error": err})
        checks.append(Check(5, f"rho0*^4 h4a vs gap at L={L:g}", err, "< 0.10", err < 0.1))
    checks.append(Check(5, "error shrinks from L=3 to L=4", errs[1] / errs[0], "< 1", errs[1] < errs[0]))
    return checks, {"c5_bifurcation": ("bifurcation", rows)}


def criterion_6(prof):
    """Curvatures at the bifurcation, evaluated at large well separation.

    The leading-order formulas neglect corrections of relative size
    (I42 - I24)^{-1} ρ0*⁴ I42, which only become small once the wells are
    far apart; see the ``c6_curvature`` table for the approach.
    """
    checks, rows = [], []
    L = prof["c6_L"]
    for LL, n in ((4.0, 2399), (L, prof["c6_n"])):
        sp = _double_well(0.5, LL, -1.0, 60.0, n)
        h4 = h4_report(sp)
        s = BranchSolver(sp)
        bif = s.find_bifurcation(h4)
        r0 = bif.rho0_star
        om2, r02, _ = second_derivatives_at_bifurcation(s, bif, 0.02 * r0)
        om_pred = h4.omega2_coeff() * r0**2
        r0_pred = h4.rho0_2_coeff() / r0
        e_om, e_r0 = _rel(om2, om_pred), _rel(r02, r0_pred)
        rows.append({"L": LL, "omega2": om2, "omega2_pred": om_pred, "rho02": r02, "rho02_pred": r0_pred, "omega2_rel_err": e_om, "rho02_rel_err": e_r0})
        if LL == L:
            checks.append(Check(6, f"omega''(0) at L={L:g}", e_om, "rel err < 0.10", e_om < 0.1))
            checks.append(Check(6, f"rho0''(0) at L={L:g}", e_r0, "rel err < 0.15", e_r0 < 0.15))
            checks.append(Check(6, "omega''(0) > 0", om2, "> 0", om2 > 0))
    return checks, {"c6_curvature": ("curvature", rows)}


_C7_FRACTIONS = (0.01, 0.02, 0.03, 0.04, 0.05)


def _linearize_small(L, n):
    sp = _double_well(0.5, L, -1.0, 60.0, n)
    h4 = h4_report(sp)
    s = BranchSolver(sp)
    bif = s.find_bifurcation(h4)
    r0 = bif.rho0_star
    br = s.asymmetric_branch([f * r0 for f in _C7_FRACTIONS], bif)
    return sp, h4, bif, br


def criterion_7(prof):
    checks, rows = [], []
    L = prof["c7_L"]
    lam_const = {}
    for n in prof["c7_n"]:
        sp, h4, bif, br = _linearize_small(L, n)
        r0 = bif.rho0_star
        mu0_pred = 4 * r0**4 * h4.I60
        mu1_combo = 0.5 * r0**2 * h4.mu2_combo
        mu1_consistent = 0.5 * r0**2 * h4.mu1_curvature()
        slopes = mass_slope(br)
        recs = []
        for bp, dq in zip(br, slopes):
            ls = internal_mode(bp, sp, cross_check=True)
            Lp, _ = build_Lpm(bp, sp)
            mu0, mu1, _ = lplus_spectrum(Lp, bp.omega)
            recs.append((bp, dq, ls))
            rows.append(
                {
                    "n": n,
                    "rho1": bp.rho1,
                    "omega": bp.omega,
                    "dq_domega": dq,
                    "mu0": ls.mu0,
                    "mu1": ls.mu1,
                    "lambda": ls.lam,
                    "lambda_direct": ls.lam_direct,
                    "lambda_over_rho1rho0star": ls.lam / (bp.rho1 * r0),
                    "mu0_ratio": ls.mu0 / mu0_pred,
                    "mu1_ratio_combo": ls.mu1 / bp.rho1**2 / mu1_combo,
                    "mu1_ratio_consistent": ls.mu1 / bp.rho1**2 / mu1_consistent,
                }
            )
        lam_const[n] = min(ls.lam / (bp.rho1 * r0) for bp, _, ls in recs)
        if n != prof["c7_n"][-1]:
            continue
        dq_min = float(min(slopes))
        checks.append(Check(7, "dq/domega > 0 on every sampled point", dq_min, "> 0", dq_min > 0))
        mu0_err = max(abs(ls.mu0 / mu0_pred - 1) for _, _, ls in recs)
        checks.append(Check(7, "mu0 vs 4 rho0*^4 I60", mu0_err, "max rel err < 0.20", mu0_err < 0.2))
        bp, _, ls = recs[0]
        r_combo = ls.mu1 / bp.rho1**2 / mu1_combo
        r_cons = ls.mu1 / bp.rho1**2 / mu1_consistent
        checks.append(
            Check(7, "mu1/rho1^2 vs mu2_combo rho0*^2/2 (smallest rho1)", abs(r_combo - 1), "rel err < 0.15", abs(r_combo - 1) < 0.15,
                  f"ratio {r_combo:.4f}; consistent coefficient 20 rho0*^2 h4b/I60 gives {r_cons:.4f}")
        )
        checks.append(Check(7, "mu1/rho1^2 vs 20 rho0*^2 h4b/I60 (informational)", abs(r_cons - 1), "rel err < 0.15", abs(r_cons - 1) < 0.15))
        agree = max(abs(ls.lam_direct / ls.lam - 1) for _, _, ls in recs)
        checks.append(Check(7, "lambda: pencil vs Arnoldi", agree, "rel diff < 1e-6", agree < 1e-6))
    n_lo, n_hi = prof["c7_n"]
    c_lo, c_hi = lam_const[n_lo], lam_const[n_hi]
    drift = abs(c_hi / c_lo - 1)
    checks.append(Check(7, "min lambda/(rho1 rho0*) positive", c_hi, "> 0", c_hi > 0))
    checks.append(Check(7, "min lambda/(rho1 rho0*) grid-stable", drift, f"rel change n={n_lo}->{n_hi} < 0.02", drift < 0.02))
    return checks, {"c7_linearization": ("linearization", rows)}


def criterion_8(prof):
    checks, rows = [], []
    sp = _double_well(0.5, 6.0, -1.0, 60.0, 2999)
    h4 = h4_report(sp)
    s = BranchSolver(sp)
    bif = s.find_bifurcation(h4)
    at = kernel_structure(bif.point, sp)
    past_bp = s.asymmetric_branch(np.linspace(0, 0.2 * bif.rho0_star, 6)[1:], bif)[-1]
    past = kernel_structure(past_bp, sp)
    for tag, kr, bp in (("bifurcation", at, bif.point), ("past", past, past_bp)):
        rows.append(
            {
                "point": tag,
                "omega": bp.omega,
                "rho1": bp.rho1,
                "threshold": kr.threshold,
                "geometric": kr.geometric,
                "generalized": kr.generalized,
                "below_continuum": kr.below_continuum,
                "conclusive": int(kr.conclusive),
                "parity": ";".join(f"{k}={v}" for k, v in sorted(kr.parity.items())),
            }
        )
    checks.append(Check(8, "zero cluster size at omega*", at.generalized, "4", at.generalized == 4, f"threshold {at.threshold:.3e}"))
    want = {"phi": "even", "beta": "odd", "alpha": "even", "gamma": "odd"}
    checks.append(Check(8, "parity tags at omega*", float(at.parity == want), str(want), at.parity == want))
    checks.append(Check(8, "zero cluster size past omega*", past.generalized, "2", past.generalized == 2, f"threshold {past.threshold:.3e}"))
    checks.append(
        Check(8, "discrete points below omega past omega*", past.below_continuum, "3 (zero cluster, +i lambda, -i lambda)",
              past.below_continuum == 3, "the zero cluster counts as one point")
    )
    checks.append(Check(8, "cluster separated from rest of spectrum", float(at.conclusive and past.conclusive), "1", at.conclusive and past.conclusive))
    return checks, {"c8_kernel": ("kernel", rows)}


def _orbit_start(p: FDParams) -> float:
    """A β = 0 crossing of a closed orbit around a centre."""
    a = alpha_critical(p)
    r = math.sqrt(p.N)
    if math.isnan(a):
        return 0.5 * r
    return a + 0.3 * (r - a)


def criterion_9(prof):
    checks, tables = [], {}
    base = FDParams(1.0, 0.9, 0.1)
    n_cr = critical_mass(base)
    exact = (0.1 / 4) ** 0.25
    checks.append(Check(9, "N_cr formula", n_cr, f"== {exact!r}", n_cr == exact))
    flip = stability_threshold(base)
    lo_kind = classify(jacobian(0, 0, base.with_mass(flip * (1 - 1e-9))))
    hi_kind = classify(jacobian(0, 0, base.with_mass(flip * (1 + 1e-9))))
    checks.append(Check(9, "origin flips elliptic->hyperbolic", flip, "elliptic below, hyperbolic above", (lo_kind, hi_kind) == ("elliptic", "hyperbolic")))
    checks.append(Check(9, "flip located at N_cr", abs(flip - n_cr), "< 1e-10", abs(flip - n_cr) < 1e-10, f"flip at N={flip:.15g}, formula {n_cr:.15g}"))
    eq_rows = []
    for N in (0.1, 0.2, 0.5):
        p = base.with_mass(N)
        T = prof["c9_T_periods"] * 2 * math.pi / p.gap
        tables[f"c9_portrait_N{N:g}"] = ("portrait", [dict(zip(("traj", "t", "alpha", "beta"), r)) for r in phase_portrait(p, T=T)])
        eqs = equilibria(p)
        asym = [e for e in eqs if e.alpha != 0]
        for e in eqs:
            eq_rows.append({"N": N, "alpha": e.alpha, "beta": e.beta, "kind": e.kind})
        a0 = _orbit_start(p)
        a1, period = poincare_return(a0, p)
        err = abs(a1 - a0)
        checks.append(Check(9, f"closed-orbit return error N={N:g}", err, "< 1e-6", err < 1e-6, f"period {period:.6g}"))
        want = N > n_cr
        checks.append(
            Check(9, f"asymmetric equilibria present iff N > N_cr (N={N:g})", float(len(asym)), "present" if want else "absent", bool(asym) == want)
        )
        checks.append(Check(9, f"reversibility N={N:g}", 1.0, "symmetric", is_reversible(p, 0.3 * math.sqrt(N), 0.1 * math.sqrt(N))))
    tables["c9_equilibria"] = ("equilibria", eq_rows)
    return checks, tables


# ---------------------------------------------------------------------------
# full NLS


def ground_state_table(cfg: dict):
    """Branch table around the pinned ω for the relaxation experiment."""
    sp = _double_well(cfg["sigma"], cfg["L"], cfg["depth"], cfg["x_max"], cfg["n"])
    s = BranchSolver(sp)
    bif = s.find_bifurcation(h4_report(sp))
    start = s.asymmetric_branch([0.3 * bif.rho0_star], bif)[-1]
    target = cfg["omega"]
    centre = s.continue_in_omega(start, np.linspace(start.omega, target, 30))[-1]
    table = build_table(s, centre, cfg["table_half_width_frac"] * target, cfg["table_nodes"])
    return sp, s, centre, table


def _persistence_setup(n: int, omega: float):
    cfg = dict(RELAXATION_DEFAULTS, x_max=30.0, n=n)
    sp = _double_well(cfg["sigma"], cfg["L"], cfg["depth"], cfg["x_max"], cfg["n"])
    s = BranchSolver(sp)
    bif = s.find_bifurcation(h4_report(sp))
    start = s.asymmetric_branch([0.3 * bif.rho0_star], bif)[-1]
    bp = s.continue_in_omega(start, np.linspace(start.omega, omega, 30))[-1]
    return sp, bp


def fgr_self_test(seeds=range(20), noise=0.05):
    t = np.linspace(0, 50, 400)
    z = synthetic_decay(t, 0.3, 2.0, 1)
    exact, _, _ = fgr_decay_fit(t, z, 1)
    worst = 0.0
    for seed in seeds:
        rng = np.random.default_rng(seed)
        g, _, _ = fgr_decay_fit(t, z * (1 + noise * rng.standard_normal(t.size)), 1)
        worst = max(worst, abs(g / 2 - 1))
    return exact, worst


def criterion_10(prof):
    checks, tables = [], {}
    omega = RELAXATION_DEFAULTS["omega"]
    sp, bp = _persistence_setup(prof["c10_persist_n"], omega)
    u0 = bp.phi.astype(complex)
    T = 50 * 2 * math.pi / omega
    _, us, _ = evolve(u0, sp, T, 0.0025, sample_every=400, scheme="yoshida4")
    dev = max(float(np.max(np.abs(np.abs(u) - np.abs(u0)))) for u in us)
    checks.append(Check(10, "ground state |u| stationary over 50 periods", dev, "< 1e-6", dev < 1e-6, "fourth-order splitting, dt=0.0025"))

    # perturbed data: ground state plus 5% of an odd bump
    pert = u0 + 0.05 * np.max(np.abs(u0)) * sp.grid.x * np.exp(-(sp.grid.x**2) / 4)
    m0 = mass(pert, sp.grid)
    _, us, _ = evolve(pert, sp, 100.0, 0.01, sample_every=10**9)
    drift = abs(mass(us[-1], sp.grid) - m0) / m0
    checks.append(Check(10, "mass drift without sponge", drift, "< 1e-10", drift < 1e-10))
    e0 = energy(pert, sp)
    drifts, rows = [], []
    for dt in (0.02, 0.01, 0.005):
        _, us, _ = evolve(pert, sp, 10.0, dt, sample_every=10**9)
        d = abs(energy(us[-1], sp) - e0)
        drifts.append(d)
        rows.append({"dt": dt, "energy_drift": d})
    ratios = [drifts[i] / drifts[i + 1] for i in range(2)]
    ok = all(3.0 < r < 5.0 for r in ratios)
    checks.append(Check(10, "energy drift order under dt halving", ratios[-1], "about 4 (3..5)", ok, f"ratios {ratios[0]:.3f}, {ratios[1]:.3f}"))
    tables["c10_energy"] = ("energy_order", rows)

    exact, worst = fgr_self_test()
    checks.append(Check(10, "FGR fit on exact synthetic series", abs(exact - 2), "|Gamma - 2| < 1e-6", abs(exact - 2) < 1e-6))
    checks.append(Check(10, "FGR fit under 5% noise (20 seeds, worst)", worst, "rel err < 0.10", worst < 0.1))

    if prof["c10_relaxation"]:
        rep, series = run_relaxation(RELAXATION_DEFAULTS)
        tables["c10_modulation"] = ("modulation", list(series.rows()))
        checks.append(Check(10, "|z(T)|/|z(0)|", rep.z_ratio, "< 0.5", rep.z_ratio < 0.5))
        checks.append(Check(10, "monotone-trend fraction", rep.trend_fraction, "> 0.8", rep.trend_fraction > 0.8))
        checks.append(
            Check(10, "omega settles", rep.omega_tail_spread / rep.omega_excursion, "tail spread < 0.1 x excursion", rep.omega_settled,
                  f"omega_plus {rep.omega_plus:.6g}")
        )
        checks.append(Check(10, "Gamma_eff > 0", rep.gamma_eff, "> 0", rep.gamma_eff > 0, f"R^2 {rep.r2:.3f}"))
    return checks, tables


def run_relaxation(cfg: dict):
    sp, _, centre, table = ground_state_table(cfg)
    z0 = cfg["z0_frac"] * math.sqrt(float(np.dot(sp.grid.weights, centre.phi**2)))
    series, rep = relaxation_experiment(table, cfg["omega"], z0, cfg["T"], cfg["dt"], sponge=cfg["sponge"], sample_every=cfg["sample_every"])
    return rep, series


CRITERIA = {
    1: criterion_1,
    2: criterion_2,
    3: criterion_3,
    4: criterion_4,
    5: criterion_5,
    6: criterion_6,
    7: criterion_7,
    8: criterion_8,
    9: criterion_9,
    10: criterion_10,
}


def run_suite(profile: str = "quick", only=None):
    """Run the selected criteria; a criterion that raises is recorded as failed."""
    prof = PROFILES[profile]
    checks, tables = [], {}
    for k, fn in CRITERIA.items():
        if only and k not in only:
            continue
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                c, t = fn(prof)
        except DwnlsError as exc:
            c, t = [Check(k, "criterion raised", math.nan, "no error", False, f"{type(exc).__name__}: {exc}")], {}
        checks.extend(c)
        tables.update(t)
    return checks, tables
