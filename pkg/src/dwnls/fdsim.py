"""Two-mode reduced dynamics: ρ0 = A e^{iθ}, ρ1 = (α + iβ) e^{iθ}, N = A² + α² + β².

Two right-hand sides are available:

* ``unit``: the closed planar system with every coupling integral set to 1,
  exactly as tabulated (A² := N - α² - β² is substituted, so N is fixed by
  construction).
* ``projected``: the flow of the complex two-mode equations
  i ρ̇_j = -ω_j ρ_j - ⟨ψ_j, |φ|⁴φ⟩ with φ = ρ0ψ0 + ρ1ψ1 and arbitrary coupling
  integrals, rewritten in the same (α, β, θ) frame.  It conserves
  |ρ0|² + |ρ1|² exactly and is the variant to use with measured integrals.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import NumericalError, ValidationError

VARIANTS = ("unit", "projected")


@dataclass(frozen=True)
class FDParams:
    omega0: float
    omega1: float
    N: float
    # (I60, I42, I24, I06)
    couplings: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)
    variant: str = "unit"

    def __post_init__(self):
        if not self.N > 0:
            raise ValidationError(f"mass N must be positive, got {self.N}")
        if not self.omega0 > self.omega1:
            raise ValidationError(f"need omega0 > omega1, got {self.omega0} <= {self.omega1}")
        if self.variant not in VARIANTS:
            raise ValidationError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.variant == "unit" and tuple(self.couplings) != (1.0, 1.0, 1.0, 1.0):
            raise ValidationError("the unit variant requires all couplings equal to 1; use variant='projected'")

    @property
    def gap(self) -> float:
        return self.omega0 - self.omega1

    def with_mass(self, N: float) -> "FDParams":
        return FDParams(self.omega0, self.omega1, N, self.couplings, self.variant)


@dataclass(frozen=True)
class FDState:
    alpha: float
    beta: float
    theta: float = 0.0
    t: float = 0.0


def amplitude_sq(alpha, beta, N):
    return N - alpha * alpha - beta * beta


# ---------------------------------------------------------------------------
# right-hand sides


def _brackets(alpha, beta, A2, gap):
    s = alpha * alpha + beta * beta
    d = alpha * alpha - beta * beta
    P = gap + 4 * A2 * alpha * alpha + 2 * s * s + 2 * s * d
    Q = gap - 4 * A2 * A2 - 4 * A2 * beta * beta + A2 * alpha * alpha + 2 * s * s + 2 * s * d
    return P, Q, s, d


def _unit_rhs(alpha, beta, A2, p: FDParams):
    P, Q, s, d = _brackets(alpha, beta, A2, p.gap)
    dtheta = p.omega0 + A2 * A2 + 10 * A2 * alpha * alpha + 2 * A2 * beta * beta + 2 * s * d + 3 * s * s
    return P * beta, -Q * alpha, dtheta


def _nonlinear_projections(r0, r1, couplings):
    """(⟨ψ0, |φ|⁴φ⟩, ⟨ψ1, |φ|⁴φ⟩) for φ = r0ψ0 + r1ψ1; works elementwise on arrays."""
    I60, I42, I24, I06 = couplings
    c0, c1 = np.conj(r0), np.conj(r1)
    # coefficients of ψ0^{5-k} ψ1^k in φ³ φ̄²
    C0 = r0**3 * c0**2
    C1 = 2 * r0**3 * c0 * c1 + 3 * r0**2 * r1 * c0**2
    C2 = r0**3 * c1**2 + 6 * r0**2 * r1 * c0 * c1 + 3 * r0 * r1**2 * c0**2
    C3 = 3 * r0**2 * r1 * c1**2 + 6 * r0 * r1**2 * c0 * c1 + r1**3 * c0**2
    C4 = 3 * r0 * r1**2 * c1**2 + 2 * r1**3 * c0 * c1
    C5 = r1**3 * c1**2
    return C0 * I60 + C2 * I42 + C4 * I24, C1 * I42 + C3 * I24 + C5 * I06


def _projected_rhs(alpha, beta, A2, p: FDParams):
    A = np.sqrt(A2)
    c = alpha + 1j * beta
    X0, X1 = _nonlinear_projections(A + 0j, c, p.couplings)
    d0 = 1j * (p.omega0 * A + X0)
    d1 = 1j * (p.omega1 * c + X1)
    # θ is undefined at A = 0; freeze the frame there
    safe = np.where(A > 0, A, 1.0)
    dtheta = np.where(A > 0, (d0 / safe).imag, p.omega0)
    dc = d1 - 1j * dtheta * c
    return dc.real, dc.imag, dtheta


def _rhs(alpha, beta, p: FDParams):
    A2 = amplitude_sq(alpha, beta, p.N)
    if p.variant == "unit":
        return _unit_rhs(alpha, beta, A2, p)
    return _projected_rhs(alpha, beta, np.maximum(A2, 0.0), p)


def fd_rhs(s: FDState, p: FDParams) -> tuple[float, float, float]:
    """(α̇, β̇, θ̇) of the closed planar system."""
    A2 = amplitude_sq(s.alpha, s.beta, p.N)
    if A2 < 0:
        raise ValidationError(f"state outside the mass disk: alpha^2 + beta^2 = {p.N - A2:.6g} > N = {p.N}")
    da, db, dth = _rhs(s.alpha, s.beta, p)
    return float(da), float(db), float(dth)


def rhs_three_variable(alpha, beta, A, p: FDParams):
    """Unit-coupling (α̇, β̇, Ȧ) with A kept as an independent variable (does not conserve N)."""
    P, Q, s, _ = _brackets(alpha, beta, A * A, p.gap)
    dA = -4 * A * (A * A + s) * alpha * beta
    return P * beta, -Q * alpha, dA


# ---------------------------------------------------------------------------
# integration


@dataclass
class Trajectory:
    """Samples of one or several trajectories; arrays have shape (samples,) or (samples, k)."""

    t: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    theta: np.ndarray
    A: np.ndarray
    mass_drift: float = 0.0
    clamped: int = 0
    extras: dict = field(default_factory=dict)

    def final_state(self) -> FDState:
        return FDState(float(self.alpha[-1]), float(self.beta[-1]), float(self.theta[-1]), float(self.t[-1]))


def _clamp(alpha, beta, N):
    r2 = alpha * alpha + beta * beta
    over = r2 > N
    if not np.any(over):
        return alpha, beta, 0
    f = np.where(over, np.sqrt(N / np.where(over, r2, 1.0)), 1.0)
    return alpha * f, beta * f, int(np.count_nonzero(over))


def default_dt(p: FDParams) -> float:
    return 1e-3 / p.gap


def integrate_many(alpha0, beta0, p: FDParams, T: float, dt: float | None = None, sample_every: int = 1,
                   strict: bool = False, three_variable: bool = False, theta0=0.0) -> Trajectory:
    """Fixed-step RK4 for a batch of initial points, integrated in lockstep.

    A negative ``dt`` integrates backward in time.  In the closed planar form
    N is exact by construction; any RK4 stage that leaves the disk α²+β² ≤ N
    is pulled back radially (counted in ``clamped``) or aborts when strict.
    """
    dt = default_dt(p) if dt is None else dt
    if dt == 0 or not T > 0:
        raise ValidationError(f"need T > 0 and dt != 0, got T={T}, dt={dt}")
    nsteps = int(round(T / abs(dt)))
    if nsteps < 1:
        raise ValidationError(f"T={T} is shorter than one step dt={dt}")
    a = np.array(alpha0, dtype=float, ndmin=1)
    b = np.array(beta0, dtype=float, ndmin=1)
    if np.any(amplitude_sq(a, b, p.N) < 0):
        raise ValidationError("initial state outside the mass disk")
    if three_variable and p.variant != "unit":
        raise ValidationError("the three-variable form exists only for the unit variant")
    th = np.zeros_like(a) + theta0
    A = np.sqrt(np.maximum(amplitude_sq(a, b, p.N), 0.0))

    sample_every = max(1, min(sample_every, nsteps))
    m = nsteps // sample_every + 2
    k = a.size
    ts = np.empty(m)
    al, be, tt, am = (np.empty((m, k)) for _ in range(4))
    ts[0], al[0], be[0], tt[0], am[0] = 0.0, a, b, th, A
    clamped = 0
    worst = 0.0
    h = dt
    j = 0
    for i in range(1, nsteps + 1):
        if three_variable:
            k1 = rhs_three_variable(a, b, A, p)
            k2 = rhs_three_variable(a + 0.5 * h * k1[0], b + 0.5 * h * k1[1], A + 0.5 * h * k1[2], p)
            k3 = rhs_three_variable(a + 0.5 * h * k2[0], b + 0.5 * h * k2[1], A + 0.5 * h * k2[2], p)
            k4 = rhs_three_variable(a + h * k3[0], b + h * k3[1], A + h * k3[2], p)
            a = a + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
            b = b + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
            A = A + h / 6 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
            worst = max(worst, float(np.abs(A * A + a * a + b * b - p.N).max()))
        else:
            k1 = _rhs(a, b, p)
            a2, b2, c2 = _clamp(a + 0.5 * h * k1[0], b + 0.5 * h * k1[1], p.N)
            k2 = _rhs(a2, b2, p)
            a3, b3, c3 = _clamp(a + 0.5 * h * k2[0], b + 0.5 * h * k2[1], p.N)
            k3 = _rhs(a3, b3, p)
            a4, b4, c4 = _clamp(a + h * k3[0], b + h * k3[1], p.N)
            k4 = _rhs(a4, b4, p)
            a = a + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
            b = b + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
            th = th + h / 6 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
            a, b, c5 = _clamp(a, b, p.N)
            if c2 or c3 or c4 or c5:
                if strict:
                    raise NumericalError(f"trajectory left the mass disk at t={i * h:.6g}")
                clamped += 1
            A = np.sqrt(np.maximum(amplitude_sq(a, b, p.N), 0.0))
        if i % sample_every == 0 or i == nsteps:
            j += 1
            ts[j], al[j], be[j], tt[j], am[j] = i * h, a, b, th, A
    if clamped:
        warnings.warn(f"{clamped} RK4 steps clamped back into the mass disk", RuntimeWarning, stacklevel=2)
    sl = slice(0, j + 1)
    return Trajectory(ts[sl], al[sl], be[sl], tt[sl], am[sl], mass_drift=worst, clamped=clamped)


def integrate_fd(s0: FDState, p: FDParams, T: float, dt: float | None = None, sample_every: int = 1,
                 strict: bool = False, three_variable: bool = False) -> Trajectory:
    """Single trajectory from ``s0``; see :func:`integrate_many`."""
    tr = integrate_many(s0.alpha, s0.beta, p, T, dt, sample_every, strict, three_variable, theta0=s0.theta)
    return Trajectory(tr.t + s0.t, tr.alpha[:, 0], tr.beta[:, 0], tr.theta[:, 0], tr.A[:, 0], tr.mass_drift, tr.clamped)


# ---------------------------------------------------------------------------
# equilibria and their type


def jacobian(alpha: float, beta: float, p: FDParams, h: float = 1e-7) -> np.ndarray:
    """2×2 Jacobian of the planar (α, β) field."""
    if p.variant == "unit":
        A2 = amplitude_sq(alpha, beta, p.N)
        P, Q, s, d = _brackets(alpha, beta, A2, p.gap)
        a, b = alpha, beta
        P_a = -8 * a**3 + 8 * A2 * a + 12 * s * a + 4 * a * d
        P_b = -8 * a * a * b + 4 * s * b + 4 * b * d
        Q_a = 18 * A2 * a + 8 * a * b * b - 2 * a**3 + 12 * s * a + 4 * a * d
        Q_b = 8 * A2 * b + 8 * b**3 - 2 * a * a * b + 4 * s * b + 4 * b * d
        return np.array([[P_a * b, P_b * b + P], [-Q_a * a - Q, -Q_b * a]])
    J = np.empty((2, 2))
    for k, (ea, eb) in enumerate(((h, 0.0), (0.0, h))):
        fp = fd_rhs(FDState(alpha + ea, beta + eb), p)
        fm = fd_rhs(FDState(alpha - ea, beta - eb), p)
        J[0, k] = (fp[0] - fm[0]) / (2 * h)
        J[1, k] = (fp[1] - fm[1]) / (2 * h)
    return J


def classify(J: np.ndarray, tol: float = 1e-12) -> str:
    det = float(np.linalg.det(J))
    tr = float(np.trace(J))
    scale = max(1.0, float(np.abs(J).max()) ** 2)
    if abs(det) <= tol * scale:
        return "degenerate"
    if det < 0:
        return "hyperbolic"
    if abs(tr) <= 1e-9 * math.sqrt(det):
        return "elliptic"
    return "focus"


def critical_mass(p: FDParams | float) -> float:
    """((ω0 - ω1)/4)^{1/4}, the tabulated critical mass."""
    gap = p.gap if isinstance(p, FDParams) else float(p)
    if not gap > 0:
        raise ValidationError(f"gap must be positive, got {gap}")
    return (gap / 4.0) ** 0.25


def origin_determinant(p: FDParams, N: float) -> float:
    return float(np.linalg.det(jacobian(0.0, 0.0, p.with_mass(N))))


def stability_threshold(p: FDParams, lo: float = 1e-8, hi: float | None = None, tol: float = 1e-13) -> float:
    """Mass at which the origin turns from elliptic to hyperbolic, by bisection on det J."""
    hi = hi if hi is not None else max(4.0, 4 * critical_mass(p) ** 2)
    f_lo, f_hi = origin_determinant(p, lo), origin_determinant(p, hi)
    if f_lo * f_hi > 0:
        raise NumericalError(f"no sign change of det J(0,0) on N in [{lo}, {hi}]: {f_lo:.3e}, {f_hi:.3e}")
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        fm = origin_determinant(p, mid)
        if (fm > 0) == (f_lo > 0):
            lo, f_lo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class Equilibrium:
    alpha: float
    beta: float
    kind: str
    eigenvalues: tuple[complex, complex]


def _beta_bracket(alpha: float, p: FDParams) -> float:
    """-β̇/α on the α-axis; its positive roots are the asymmetric equilibria."""
    if p.variant == "unit":
        _, Q, _, _ = _brackets(alpha, 0.0, p.N - alpha * alpha, p.gap)
        return Q
    return -fd_rhs(FDState(alpha, 0.0), p)[1] / alpha


def equilibria(p: FDParams, n_scan: int = 4000) -> list[Equilibrium]:
    """Origin plus (±α_cr, 0) wherever the β-bracket changes sign on (0, √N)."""
    out = []

    def add(a):
        J = jacobian(a, 0.0, p)
        ev = np.linalg.eigvals(J)
        out.append(Equilibrium(a, 0.0, classify(J), (complex(ev[0]), complex(ev[1]))))

    add(0.0)
    rmax = math.sqrt(p.N)
    xs = np.linspace(rmax * 1e-6, rmax * (1 - 1e-12), n_scan)
    vals = np.array([_beta_bracket(x, p) for x in xs])
    roots = []
    for i in np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]:
        roots.append(brentq(_beta_bracket, xs[i], xs[i + 1], args=(p,), xtol=1e-15, rtol=1e-15))
    for r in roots:
        add(r)
        add(-r)
    return out


def alpha_critical(p: FDParams) -> float:
    """Smallest positive α_cr, or nan when only the origin is an equilibrium."""
    pts = [e.alpha for e in equilibria(p) if e.alpha > 0]
    return min(pts) if pts else math.nan


# ---------------------------------------------------------------------------
# orbit diagnostics


def _rk4_planar(a, b, dt, p):
    f = lambda x, y: fd_rhs(FDState(x, y), p)[:2]
    k1 = f(a, b)
    k2 = f(a + 0.5 * dt * k1[0], b + 0.5 * dt * k1[1])
    k3 = f(a + 0.5 * dt * k2[0], b + 0.5 * dt * k2[1])
    k4 = f(a + dt * k3[0], b + dt * k3[1])
    return a + dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]), b + dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])


def _step_onto_section(a, b, p):
    """One RK4 step in β as independent variable, landing exactly on β = 0."""

    def g(x, y):
        da, db = fd_rhs(FDState(x, y), p)[:2]
        return da / db

    h = -b
    k1 = g(a, b)
    k2 = g(a + 0.5 * h * k1, b + 0.5 * h)
    k3 = g(a + 0.5 * h * k2, b + 0.5 * h)
    k4 = g(a + h * k3, b + h)
    return a + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def poincare_return(alpha0: float, p: FDParams, dt: float | None = None, max_time: float | None = None):
    """First return to the section β = 0 (same crossing direction) from (α0, 0).

    Returns (α_return, period).  The crossing is located exactly with a
    change of independent variable, so the error is that of RK4 alone.
    """
    dt = default_dt(p) if dt is None else dt
    max_time = max_time or 1e4 / p.gap
    a, b = alpha0, 0.0
    direction = np.sign(fd_rhs(FDState(a, b), p)[1])
    if direction == 0:
        raise NumericalError("initial point is an equilibrium or tangent to the section")
    t = 0.0
    left = False
    while t < max_time:
        a_new, b_new = _rk4_planar(a, b, dt, p)
        if not left and np.sign(b_new) == -direction:
            left = True
        if left and np.sign(b_new) == direction and np.sign(b) != direction:
            # crossed β = 0 in the original direction between t and t + dt
            da, db = fd_rhs(FDState(a, b), p)[:2]
            a_sec = _step_onto_section(a, b, p)
            tau = -b / db if db != 0 else 0.0
            return a_sec, t + tau
        a, b = a_new, b_new
        t += dt
    raise NumericalError(f"no return to the section within t={max_time}")


def time_reversal_error(s0: FDState, p: FDParams, T: float, dt: float | None = None) -> float:
    dt = default_dt(p) if dt is None else dt
    fwd = integrate_fd(s0, p, T, dt, sample_every=10**9)
    end = fwd.final_state()
    back = integrate_fd(FDState(end.alpha, end.beta), p, T, -dt, sample_every=10**9)
    return math.hypot(back.alpha[-1] - s0.alpha, back.beta[-1] - s0.beta)


def default_ic_grid(p: FDParams, n_radial: int = 6, eps: float = 1e-3) -> list[FDState]:
    """Radial fan of starting points plus, when the origin is a saddle, four
    points straddling its separatrices."""
    r = math.sqrt(p.N)
    ics = [FDState(f * r, 0.0) for f in np.linspace(0.1, 0.9, n_radial)]
    ics += [FDState(0.0, f * r) for f in np.linspace(0.15, 0.75, max(2, n_radial // 2))]
    J = jacobian(0.0, 0.0, p)
    if classify(J) == "hyperbolic":
        _, vecs = np.linalg.eig(J)
        for k in range(2):
            v = np.real(vecs[:, k])
            v = v / np.linalg.norm(v)
            for sgn in (1, -1):
                ics.append(FDState(sgn * eps * r * v[0], sgn * eps * r * v[1]))
    return ics


def phase_portrait(p: FDParams, ics: list[FDState] | None = None, T: float | None = None, dt: float | None = None, sample_every: int = 50):
    """Rows (traj_id, t, alpha, beta) for every initial condition.

    Default window: six periods of the slow beat, 2π/gap each.
    """
    ics = default_ic_grid(p) if ics is None else ics
    T = T if T is not None else 6 * 2 * math.pi / p.gap
    dt = default_dt(p) if dt is None else dt
    for k, s0 in enumerate(ics):
        if amplitude_sq(s0.alpha, s0.beta, p.N) < 0:
            raise ValidationError(f"initial condition {k} lies outside the mass disk")
    tr = integrate_many([s.alpha for s in ics], [s.beta for s in ics], p, T, dt, sample_every)
    rows = []
    for k in range(len(ics)):
        rows.extend((k, float(t), float(a), float(b)) for t, a, b in zip(tr.t, tr.alpha[:, k], tr.beta[:, k]))
    return rows


def is_reversible(p: FDParams, alpha: float, beta: float, tol: float = 1e-12) -> bool:
    """(α, β, t) ↦ (α, -β, -t) symmetry: α̇ odd in β, β̇ even in β."""
    fa, fb, _ = fd_rhs(FDState(alpha, beta), p)
    ga, gb, _ = fd_rhs(FDState(alpha, -beta), p)
    scale = max(1.0, abs(fa), abs(fb))
    return abs(fa + ga) <= tol * scale and abs(fb - gb) <= tol * scale
