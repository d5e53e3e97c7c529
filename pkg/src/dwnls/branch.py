"""Nonlinear ground states of (-∂² + V + ω)φ = φ⁵ near the two-mode bifurcation.

A ground state is written φ = ρ0 ψ0 + ρ1 ψ1 + η with η orthogonal to both
bound states.  η solves the projected equation

    (H + ω) η = P_c (ρ0 ψ0 + ρ1 ψ1 + η)^5

and the two remaining scalar equations are

    F(ρ0, ρ1, ω) = (ω - ω0) ρ0 - <ψ0, φ^5>
    G(ρ0, ρ1, ω) = (ω - ω1) - <ψ1, φ^5> / ρ1.

G at ρ1 = 0 is taken as its analytic limit, a derivative in ρ1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps
from scipy.optimize import brentq
from scipy.sparse.linalg import spsolve

from .errors import (
    AmplitudeTooLargeError,
    BifurcationNotFoundError,
    ContinuationError,
    ValidationError,
)
from .hypotheses import h4_report
from .spectral import SpectralPair

RHO1_LIMIT = 1e-9


@dataclass(frozen=True, eq=False)
class BranchPoint:
    rho0: float
    rho1: float
    omega: float
    eta: np.ndarray
    phi: np.ndarray
    q: float
    residual: float

    def asymmetry(self, grid) -> float:
        """∫_{x>0} φ² - ∫_{x<0} φ²."""
        w = grid.weights
        right = grid.x > 0
        left = grid.x < 0
        return float(np.dot(w[right], self.phi[right] ** 2) - np.dot(w[left], self.phi[left] ** 2))


@dataclass(frozen=True)
class BifurcationPoint:
    rho0_star: float
    omega_star: float
    predicted_rho0_star: float
    point: BranchPoint | None = None

    @property
    def relative_prediction_error(self) -> float:
        return abs(self.rho0_star - self.predicted_rho0_star) / self.rho0_star


def _bordered_solve(sp: SpectralPair, diag_shift: np.ndarray, omega: float, rhs: np.ndarray) -> np.ndarray:
    """Solve (H + ω - diag_shift) δ + Σ c_j ψ_j = rhs with <ψ_j, δ> = 0.

    On Ran P_c this inverts (H + ω - P_c diag_shift); the border makes it well
    posed even where H + ω - diag_shift itself is singular.
    """
    op = sp.op
    sw = op.sqrt_w
    n = sw.size
    A = op.sparse() + sps.diags(omega - diag_shift)
    B = np.column_stack([sw * sp.psi0, sw * sp.psi1])
    Bs = sps.csc_matrix(B)
    K = sps.bmat([[A, Bs], [Bs.T, None]], format="csc")
    sol = spsolve(K, np.concatenate([sw * rhs, [0.0, 0.0]]))
    return sol[:n] / sw


@dataclass
class BranchSolver:
    """Continuation context: spectral data plus warm starts for η."""

    sp: SpectralPair
    tol: float = 1e-13
    picard_max: int = 60
    newton_max: int = 30
    _warm: dict = field(default_factory=dict, repr=False)

    # ------------------------------------------------------------------ η
    def solve_eta(self, rho0: float, rho1: float, omega: float, eta0: np.ndarray | None = None) -> np.ndarray:
        """Fixed point of η ↦ (H+ω)^{-1} P_c (ρ0ψ0 + ρ1ψ1 + η)^5.

        Picard iteration first; Newton on the bordered system if the
        contraction is slow or diverging.
        """
        sp = self.sp
        if not omega > 0:
            raise ValidationError(f"need omega > 0 (below the continuum edge), got {omega}")
        base = rho0 * sp.psi0 + rho1 * sp.psi1
        if rho0 == 0 and rho1 == 0:
            return np.zeros_like(base)
        eta = np.zeros_like(base) if eta0 is None else sp.project_c(np.array(eta0, dtype=float))
        scale = float(np.max(np.abs(base))) ** 5 + 1e-300
        prev = math.inf
        for _ in range(self.picard_max):
            new = sp.project_c(sp.op.solve(sp.project_c((base + eta) ** 5), omega))
            step = float(np.max(np.abs(new - eta)))
            eta = new
            if step <= self.tol * scale:
                return eta
            if step > 0.7 * prev or not np.isfinite(step):
                break
            prev = step
        return self._eta_newton(base, omega, eta if np.all(np.isfinite(eta)) else np.zeros_like(base), scale)

    def _eta_newton(self, base, omega, eta, scale):
        sp = self.sp
        for _ in range(self.newton_max):
            phi = base + eta
            res = sp.op.apply(eta) + omega * eta - sp.project_c(phi**5)
            delta = _bordered_solve(sp, 5.0 * phi**4, omega, -res)
            eta = sp.project_c(eta + delta)
            if float(np.max(np.abs(delta))) <= self.tol * scale:
                return eta
            if not np.all(np.isfinite(eta)):
                break
        raise AmplitudeTooLargeError(
            f"continuous-spectrum correction did not converge at omega={omega:.6g}; amplitude too large"
        )

    def _eta(self, rho0, rho1, omega):
        key = (round(rho1, 12) != 0.0,)
        eta = self.solve_eta(rho0, rho1, omega, self._warm.get(key))
        self._warm[key] = eta
        return eta

    # ------------------------------------------------------------------ F, G
    def residual_FG(self, rho0: float, rho1: float, omega: float):
        """Return (F, ρ1·G, G, η)."""
        sp = self.sp
        eta = self._eta(rho0, rho1, omega)
        phi = rho0 * sp.psi0 + rho1 * sp.psi1 + eta
        p5 = phi**5
        F = (omega - sp.omega0) * rho0 - sp.inner(sp.psi0, p5)
        rho1G = (omega - sp.omega1) * rho1 - sp.inner(sp.psi1, p5)
        if abs(rho1) < RHO1_LIMIT:
            G = self.g_limit(phi, omega)
        else:
            G = rho1G / rho1
        return F, rho1G, G, eta

    def d_eta_d_rho1(self, phi: np.ndarray, omega: float) -> np.ndarray:
        """∂η/∂ρ1 at fixed (ρ0, ω), from the linearized η equation."""
        sp = self.sp
        w4 = 5.0 * phi**4
        return _bordered_solve(sp, w4, omega, sp.project_c(w4 * sp.psi1))

    def g_limit(self, phi: np.ndarray, omega: float) -> float:
        """ρ1 → 0 limit of G: ω - ω1 - 5<ψ1, φ⁴(ψ1 + ∂η/∂ρ1)>."""
        sp = self.sp
        deta = self.d_eta_d_rho1(phi, omega)
        return omega - sp.omega1 - 5.0 * sp.inner(sp.psi1, phi**4 * (sp.psi1 + deta))

    def make_point(self, rho0, rho1, omega, eta=None) -> BranchPoint:
        sp = self.sp
        if eta is None:
            eta = self.solve_eta(rho0, rho1, omega)
        phi = rho0 * sp.psi0 + rho1 * sp.psi1 + eta
        p5 = phi**5
        F = (omega - sp.omega0) * rho0 - sp.inner(sp.psi0, p5)
        rho1G = (omega - sp.omega1) * rho1 - sp.inner(sp.psi1, p5)
        return BranchPoint(rho0, rho1, omega, eta, phi, sp.inner(phi, phi), max(abs(F), abs(rho1G)))

    def pde_residual(self, bp: BranchPoint) -> float:
        """‖(H + ω)φ - φ⁵‖_{L²} of the assembled ground state."""
        r = self.sp.op.apply(bp.phi) + bp.omega * bp.phi - bp.phi**5
        return math.sqrt(self.sp.inner(r, r))

    # ------------------------------------------------------------------ full-equation continuation
    def point_from_phi(self, phi: np.ndarray, omega: float) -> BranchPoint:
        """Decompose a stationary solution into (ρ0, ρ1, η); exact for any φ."""
        sp = self.sp
        r0 = sp.inner(sp.psi0, phi)
        r1 = sp.inner(sp.psi1, phi)
        eta = phi - r0 * sp.psi0 - r1 * sp.psi1
        p5 = phi**5
        F = (omega - sp.omega0) * r0 - sp.inner(sp.psi0, p5)
        rho1G = (omega - sp.omega1) * r1 - sp.inner(sp.psi1, p5)
        return BranchPoint(r0, r1, omega, eta, phi, sp.inner(phi, phi), max(abs(F), abs(rho1G)))

    def newton_full(self, phi: np.ndarray, omega: float, tol: float = 1e-12, maxit: int = 40) -> np.ndarray:
        """Newton on (H + ω)φ - φ⁵ = 0 with Jacobian L₊ = H + ω - 5φ⁴."""
        op = self.sp.op
        phi = np.array(phi, dtype=float)
        for _ in range(maxit):
            res = op.apply(phi) + omega * phi - phi**5
            delta = op.plus_diagonal(-5.0 * phi**4).solve(-res, omega)
            phi = phi + delta
            if not np.all(np.isfinite(phi)):
                break
            if float(np.max(np.abs(delta))) <= tol * max(1.0, float(np.max(np.abs(phi)))):
                return phi
        raise ContinuationError(f"full-equation Newton failed at omega={omega:.6g}")

    def continue_in_omega(self, start: BranchPoint, omegas, max_halvings: int = 10) -> list[BranchPoint]:
        """Follow the branch through ``start`` to each ω in ``omegas`` (monotone).

        Uses the full stationary equation, so it is not limited to the small
        amplitudes where the two-mode reduction converges.  Secant predictor
        in ω, step halving on failure.
        """
        om = [float(v) for v in omegas]
        if any((b - a) * (om[-1] - om[0]) < 0 for a, b in zip(om, om[1:])):
            raise ValidationError("omega values must be monotone")
        hist = [(start.omega, start.phi)]
        out = []
        for target in om:
            cur = hist[-1][0]
            step = target - cur
            halvings = 0
            while (target - cur) * math.copysign(1.0, step) > 1e-15 if step else False:
                nxt = cur + step if abs(step) < abs(target - cur) else target
                if len(hist) >= 2:
                    (o1, p1), (o2, p2) = hist[-2], hist[-1]
                    guess = p2 + (p2 - p1) * (nxt - o2) / (o2 - o1)
                else:
                    guess = hist[-1][1]
                try:
                    phi = self.newton_full(guess, nxt)
                except ContinuationError:
                    halvings += 1
                    if halvings > max_halvings:
                        raise ContinuationError(f"omega continuation stalled near omega={nxt:.6g}") from None
                    step *= 0.5
                    continue
                hist.append((nxt, phi))
                cur = nxt
            out.append(self.point_from_phi(hist[-1][1], target))
        return out

    # ------------------------------------------------------------------ symmetric branch
    def omega_symmetric(self, rho0: float, guess: float | None = None) -> float:
        """Solve F(ρ0, 0, ω) = 0 for ω (secant on F/ρ0)."""
        sp = self.sp
        if rho0 == 0:
            return sp.omega0

        def f(om):
            F, _, _, _ = self.residual_FG(rho0, 0.0, om)
            return F / rho0

        I60 = sp.inner(sp.psi0**6, np.ones_like(sp.psi0))
        x0 = guess if guess is not None else sp.omega0 + rho0**4 * I60
        x1 = x0 + max(1e-7, 1e-3 * rho0**4 * I60)
        f0, f1 = f(x0), f(x1)
        for _ in range(60):
            if f1 == f0:
                break
            x2 = x1 - f1 * (x1 - x0) / (f1 - f0)
            x0, f0 = x1, f1
            x1 = x2
            f1 = f(x1)
            if abs(f1) < 1e-15 * max(1.0, abs(x1)) or abs(x1 - x0) < 1e-15 * abs(x1):
                return x1
        if abs(f1) < 1e-12:
            return x1
        raise ContinuationError(f"symmetric-branch Newton failed at rho0={rho0}")

    def symmetric_branch(self, rho0_values) -> list[BranchPoint]:
        out = []
        guess = None
        for r0 in rho0_values:
            om = self.omega_symmetric(float(r0), guess)
            out.append(self.make_point(float(r0), 0.0, om))
            guess = om
        return out

    # ------------------------------------------------------------------ bifurcation
    def g_symmetric(self, rho0: float) -> tuple[float, float]:
        om = self.omega_symmetric(rho0)
        _, _, G, _ = self.residual_FG(rho0, 0.0, om)
        return G, om

    def find_bifurcation(self, h4=None, scan=(0.3, 3.0), n_scan: int = 28) -> BifurcationPoint:
        """Root ρ0* of ρ0 ↦ G(ρ0, 0, ω(ρ0)) on the symmetric branch."""
        sp = self.sp
        h4 = h4 or h4_report(sp)
        if not h4.h4a > 0:
            raise BifurcationNotFoundError("5<ψ0⁴,ψ1²> - <ψ0⁶,1> <= 0: no bifurcation predicted")
        pred = (sp.gap / h4.h4a) ** 0.25
        rs = np.linspace(scan[0] * pred, scan[1] * pred, n_scan)
        prev_r, prev_g = None, None
        seen = []
        for r in rs:
            try:
                g, _ = self.g_symmetric(float(r))
            except (AmplitudeTooLargeError, ContinuationError):
                break
            seen.append((float(r), g))
            if prev_g is not None and np.sign(g) != np.sign(prev_g):
                root = brentq(lambda t: self.g_symmetric(t)[0], prev_r, float(r), xtol=1e-15, rtol=1e-15, maxiter=200)
                om = self.omega_symmetric(root)
                return BifurcationPoint(root, om, pred, self.make_point(root, 0.0, om))
            prev_r, prev_g = float(r), g
        raise BifurcationNotFoundError(f"no sign change of G along the symmetric branch; scanned {seen}")

    # ------------------------------------------------------------------ asymmetric branch
    def _newton_asym(self, rho1, rho0, omega, tol=1e-13, maxit=25):
        def fg(r0, om):
            F, _, G, _ = self.residual_FG(r0, rho1, om)
            return np.array([F, G])

        x = np.array([rho0, omega], dtype=float)
        val = fg(*x)
        for _ in range(maxit):
            hr = 1e-6 * max(abs(x[0]), 1e-3)
            ho = 1e-6 * max(abs(x[1]), 1e-3)
            J = np.empty((2, 2))
            J[:, 0] = (fg(x[0] + hr, x[1]) - fg(x[0] - hr, x[1])) / (2 * hr)
            J[:, 1] = (fg(x[0], x[1] + ho) - fg(x[0], x[1] - ho)) / (2 * ho)
            if not np.all(np.isfinite(J)) or abs(np.linalg.det(J)) < 1e-300:
                raise ContinuationError("singular Jacobian near the bifurcation; refine the first step")
            dx = np.linalg.solve(J, -val)
            x = x + dx
            val = fg(*x)
            if np.max(np.abs(val)) < tol * max(1.0, abs(x[1])) and np.max(np.abs(dx / np.maximum(np.abs(x), 1e-300))) < 1e-10:
                return x
        if np.max(np.abs(val)) < 1e-11:
            return x
        raise ContinuationError(f"asymmetric-branch Newton failed at rho1={rho1}")

    def asymmetric_point(self, rho1, guess) -> BranchPoint:
        r0, om = self._newton_asym(rho1, guess[0], guess[1])
        return self.make_point(float(r0), float(rho1), float(om))

    def asymmetric_branch(self, rho1_values, bif: BifurcationPoint, max_halvings: int = 12) -> list[BranchPoint]:
        """Continue (F, G) = 0 in (ρ0, ω) along increasing ρ1 from the bifurcation.

        Step control: on Newton failure the step is halved (intermediate points
        are solved but not returned).
        """
        vals = [float(v) for v in rho1_values]
        if any(b < a for a, b in zip(vals, vals[1:])):
            raise ValidationError("rho1 values must be non-decreasing")
        h4 = h4_report(self.sp)
        c_om = h4.omega2_coeff() * bif.rho0_star**2
        c_r0 = h4.rho0_2_coeff() / bif.rho0_star
        hist = [(0.0, bif.rho0_star, bif.omega_star)]
        out = []
        for target in vals:
            if target == 0.0:
                out.append(self.make_point(bif.rho0_star, 0.0, bif.omega_star))
                continue
            cur = abs(hist[-1][0])
            step = abs(target) - cur
            halvings = 0
            while cur < abs(target):
                nxt = min(cur + step, abs(target))
                guess = self._predict(hist, nxt, c_r0, c_om)
                try:
                    r0, om = self._newton_asym(math.copysign(nxt, target), guess[0], guess[1])
                except (ContinuationError, AmplitudeTooLargeError, ValidationError):
                    halvings += 1
                    if halvings > max_halvings:
                        raise ContinuationError(f"continuation stalled near rho1={nxt}") from None
                    step *= 0.5
                    continue
                hist.append((nxt, r0, om))
                cur = nxt
            out.append(self.make_point(hist[-1][1], target, hist[-1][2]))
        return out

    @staticmethod
    def _predict(hist, r1, c_r0, c_om):
        if len(hist) >= 3:
            # quadratic extrapolation in ρ1 through the last three points
            (a, ra, oa), (b, rb, ob), (c, rc, oc) = hist[-3:]
            xs = np.array([a, b, c])
            return (
                float(np.polyval(np.polyfit(xs, [ra, rb, rc], 2), r1)),
                float(np.polyval(np.polyfit(xs, [oa, ob, oc], 2), r1)),
            )
        r0s, om_s = hist[0][1], hist[0][2]
        return r0s + 0.5 * c_r0 * r1**2, om_s + 0.5 * c_om * r1**2


def second_derivatives_at_bifurcation(solver: BranchSolver, bif: BifurcationPoint, eps: float):
    """Richardson-extrapolated ω''(0) and ρ0''(0) from branch points at ρ1 = ε, 2ε.

    The branch is even in ρ1 (mirror symmetry), so the centered second
    difference reduces to 2 [f(ρ1) - f(0)] / ρ1².
    """
    p1, p2 = solver.asymmetric_branch([eps, 2 * eps], bif)

    def d2(value, base, e):
        return 2.0 * (value - base) / e**2

    om2 = (4 * d2(p1.omega, bif.omega_star, eps) - d2(p2.omega, bif.omega_star, 2 * eps)) / 3
    r02 = (4 * d2(p1.rho0, bif.rho0_star, eps) - d2(p2.rho0, bif.rho0_star, 2 * eps)) / 3
    return om2, r02, (p1, p2)


def mass_slope(branch: list[BranchPoint]) -> np.ndarray:
    """Centered finite-difference dq/dω along a branch (one-sided at the ends)."""
    if len(branch) < 3:
        raise ValidationError("need at least 3 branch points")
    om = np.array([b.omega for b in branch])
    q = np.array([b.q for b in branch])
    d = np.diff(om)
    if not (np.all(d > 0) or np.all(d < 0)):
        raise ValidationError("omega is not strictly monotone along the branch; reparameterize")
    return np.gradient(q, om)
