"""Linearization about a ground state φ_ω.

    L₊ = -∂² + V + ω - 5φ⁴,   L₋ = -∂² + V + ω - φ⁴,
    𝓛 = [[0, L₋], [-L₊, 0]].

An eigenvalue ±iλ of 𝓛 corresponds to L₋L₊ u = λ² u with u ⟂ φ.  Two
independent routes compute λ: a symmetric-definite pencil built from L₋ and
L₊, and a shift-invert Arnoldi solve of the full nonsymmetric 𝓛.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps
from scipy.optimize import brentq
from scipy.sparse.linalg import LinearOperator, eigs, eigsh, splu, spsolve

from .branch import BranchPoint
from .errors import InstabilityError, SpectralStructureError
from .spectral import SpectralPair, TridiagOperator, lowest_eigenpairs


@dataclass(frozen=True, eq=False)
class LinSpectrum:
    mu0: float
    mu1: float
    lam: float
    xi1: np.ndarray
    xi2: np.ndarray
    lam_direct: float = math.nan
    kernel_dims: tuple[int, int] | None = None
    extras: dict = field(default_factory=dict)

    @property
    def xi(self) -> np.ndarray:
        """Internal mode as a (2, n) array; H_ω ξ = λ ξ."""
        return np.vstack([self.xi1, self.xi2])


def build_Lpm(bp: BranchPoint, sp: SpectralPair) -> tuple[TridiagOperator, TridiagOperator]:
    p4 = bp.phi**4
    base = sp.op.plus_diagonal(bp.omega)
    return base.plus_diagonal(-5.0 * p4), base.plus_diagonal(-p4)


def lplus_spectrum(L_plus: TridiagOperator, omega: float, tol: float = 1e-10, strict: bool = True):
    """(μ0, μ1, rest_positive): eigenvalues -μ0 < 0 < μ1 of L₊ below the continuum ω.

    ``rest_positive`` is True when no further eigenvalue lies below ω.
    """
    pairs = lowest_eigenpairs(L_plus, 3)
    vals = [e for e, _ in pairs]
    neg = [e for e in vals if e < -tol]
    below = [e for e in vals if e < omega]
    if strict and len(neg) != 1:
        raise SpectralStructureError(f"L+ has {len(neg)} negative eigenvalues (expected 1): {vals}")
    return -vals[0], vals[1], len(below) <= 2


def _secular_min(op: TridiagOperator, phi: np.ndarray) -> float:
    """min <L f, f>/‖f‖² over f ⟂ φ (weighted), via the secular equation."""
    vals, vecs = sla.eigh_tridiagonal(op.diag, op.off)
    b = vecs.T @ (op.sqrt_w * phi)
    b /= np.linalg.norm(b)
    b2 = b * b
    tiny = 1e-28
    k = next(i for i in range(1, vals.size) if b2[i] > tiny)
    if b2[0] <= tiny:
        return float(vals[0])

    def sec(x):
        return float(np.sum(b2 / (vals - x)))

    lo = vals[0] + 1e-14 * max(1.0, abs(vals[0]))
    hi = vals[k] - 1e-14 * max(1.0, abs(vals[k]))
    if vals[k] - vals[0] < 1e-13:
        return float(vals[0])
    # sec increases on (vals[0], vals[k]); if it is still negative at hi the
    # root lies within roundoff of vals[k] (φ is then an eigenvector)
    if sec(hi) <= 0:
        return float(vals[k])
    return brentq(sec, lo, hi, xtol=1e-15, rtol=1e-14, maxiter=500)


def constrained_minima(bp: BranchPoint, sp: SpectralPair) -> tuple[float, float]:
    Lp, Lm = build_Lpm(bp, sp)
    return _secular_min(Lp, bp.phi), _secular_min(Lm, bp.phi)


def _bordered_lu(op: TridiagOperator, border: np.ndarray):
    """Factor [[op, b], [bᵀ, 0]] (y-coordinates); returns x ↦ solution of op x + s b = P x, x ⟂ b."""
    n = border.size
    K = sps.bmat([[op.sparse(), sps.csc_matrix(border[:, None])], [sps.csc_matrix(border[None, :]), None]], format="csc")
    lu = splu(K)

    def solve(rhs):
        rhs = rhs - border * np.dot(border, rhs)
        return lu.solve(np.concatenate([rhs, [0.0]]))[:n]

    return solve


def _lambda_symmetric(Lp: TridiagOperator, Lm: TridiagOperator, phi: np.ndarray, omega: float):
    """Smallest λ² via the symmetric-definite pencil  P L₊ P p = λ² P L₋⁻¹ P p  on φ^⊥.

    Solved as the top eigenvalue 1/λ² of (K, G) by Lanczos, with
    G = P L₊ P + ω φφᵀ (positive definite for a stable state) and
    K = P L₋⁻¹ P.  Every operator application is a sparse bordered solve.
    """
    y = Lm.sqrt_w * phi
    y /= np.linalg.norm(y)
    n = y.size
    Ap = Lp.sparse()
    solve_m = _bordered_lu(Lm, y)
    solve_p = _bordered_lu(Lp, y)

    def proj(v):
        return v - y * np.dot(y, v)

    def G(v):
        return proj(Ap @ proj(v)) + omega * y * np.dot(y, v)

    def Ginv(v):
        return solve_p(v) + y * (np.dot(y, v) / omega)

    Kop = LinearOperator((n, n), matvec=solve_m, dtype=float)
    Gop = LinearOperator((n, n), matvec=G, dtype=float)
    Gi = LinearOperator((n, n), matvec=Ginv, dtype=float)
    v0 = proj(np.cos(np.arange(n) * 0.37 + 0.1))
    vals, vecs = eigsh(Kop, k=2, M=Gop, Minv=Gi, which="LA", v0=v0, tol=1e-14, maxiter=5000)
    order = np.argsort(vals)[::-1]
    vals = vals[order]
    if not vals[0] > 0:
        return -math.inf, vecs[:, order[0]] / Lm.sqrt_w, 1.0 / vals
    lam2 = 1.0 / vals[0]
    u = proj(vecs[:, order[0]])
    return lam2, u / Lm.sqrt_w, 1.0 / vals


def _calL_sparse(Lp: TridiagOperator, Lm: TridiagOperator) -> sps.csc_matrix:
    """𝓛 in y-coordinates (similar to the ψ-space operator)."""
    return sps.bmat([[None, Lm.sparse()], [-Lp.sparse(), None]], format="csc")


def direct_eigs(Lp: TridiagOperator, Lm: TridiagOperator, k: int = 6, sigma: complex = 0.0):
    """Eigenvalues of 𝓛 nearest ``sigma`` by shift-invert Arnoldi."""
    M = _calL_sparse(Lp, Lm)
    n2 = M.shape[0]
    v0 = np.cos(np.arange(n2) * 0.37 + 0.1)  # deterministic start vector
    vals, vecs = eigs(M.astype(complex), k=k, sigma=sigma, v0=v0.astype(complex), tol=1e-13, maxiter=5000)
    order = np.argsort(np.abs(vals - sigma))
    return vals[order], vecs[:, order]


def internal_mode(bp: BranchPoint, sp: SpectralPair, cross_check: bool = True, strict: bool = True) -> LinSpectrum:
    """μ0, μ1, λ and the internal mode ξ = (ξ1, ξ2) of H_ω, with <ξ, σ3 ξ> = 1.

    ξ is real here, so <ξ, σ3 ξ> = ∫ ξ1² - ξ2² = <p, m> with p = ξ1 + ξ2,
    m = ξ1 - ξ2.  The direct route shifts Arnoldi just above iλ and keeps the
    nearest eigenvalue; it shares no code with the symmetric route.
    """
    Lp, Lm = build_Lpm(bp, sp)
    mu0, mu1, _ = lplus_spectrum(Lp, bp.omega, strict=strict)
    lam2, p, _ = _lambda_symmetric(Lp, Lm, bp.phi, bp.omega)
    if not lam2 > 0:
        raise InstabilityError(f"λ² = {lam2:.3e} <= 0 at omega={bp.omega}: internal mode unstable")
    lam = math.sqrt(lam2)
    w = sp.grid.weights
    # H ξ = λ ξ with ξ1 ± ξ2 = p, m and L₊ p = λ m, L₋ m = λ p
    m = Lp.apply(p) / lam
    s = float(np.dot(w, p * m))
    if s <= 0:
        p, m = -p, -m
        s = -s
    p /= math.sqrt(s)
    m /= math.sqrt(s)
    # fix the sign: p positive where |p| peaks
    i = int(np.argmax(np.abs(p)))
    if p[i] < 0:
        p, m = -p, -m
    xi1 = 0.5 * (p + m)
    xi2 = 0.5 * (p - m)
    lam_direct = math.nan
    if cross_check:
        vals, _ = direct_eigs(Lp, Lm, k=2, sigma=1j * lam * (1 + 1e-3))
        lam_direct = float(abs(vals[0].imag))
    return LinSpectrum(mu0, mu1, lam, xi1, xi2, lam_direct)


def apply_H(xi1, xi2, bp: BranchPoint, sp: SpectralPair):
    """H_ω (ξ1, ξ2) with H_ω = [[h - 3φ⁴, -2φ⁴], [2φ⁴, -(h - 3φ⁴)]], h = -∂² + V + ω."""
    p4 = bp.phi**4
    h1 = sp.op.apply(xi1) + bp.omega * xi1 - 3 * p4 * xi1
    h2 = sp.op.apply(xi2) + bp.omega * xi2 - 3 * p4 * xi2
    return h1 - 2 * p4 * xi2, 2 * p4 * xi1 - h2


# ---------------------------------------------------------------------------
# kernel structure


@dataclass(frozen=True)
class KernelReport:
    geometric: int
    generalized: int
    below_continuum: int
    threshold: float
    eigenvalues: tuple
    parity: dict
    conclusive: bool


def _parity_tag(f: np.ndarray, grid, tol: float = 1e-6) -> str:
    r = grid.reflect(f)
    s = np.abs(f).max()
    if np.abs(f - r).max() < tol * s:
        return "even"
    if np.abs(f + r).max() < tol * s:
        return "odd"
    return "mixed"


def kernel_structure(bp: BranchPoint, sp: SpectralPair, threshold: float | None = None, k: int = 10) -> KernelReport:
    """Size of the near-zero eigenvalue cluster of 𝓛_ω.

    Cluster threshold defaults to 1e-3·ω.  The geometric count comes from
    the null directions of L₊ and L₋ (eigenvalues below the threshold); the
    generalized count from the 𝓛 eigenvalues inside the threshold disk.
    ``below_continuum`` counts distinct discrete points of 𝓛 with |Im| < ω.
    Parity tags of α = L₊⁻¹φ and γ = L₋⁻¹β are only computed when the zero
    cluster has four members, i.e. at the bifurcation.
    """
    thr = 1e-3 * bp.omega if threshold is None else threshold
    Lp, Lm = build_Lpm(bp, sp)
    vals, _ = direct_eigs(Lp, Lm, k=k, sigma=1e-2 * thr)
    vals = np.asarray(vals)
    in_cluster = np.abs(vals) < thr
    generalized = int(np.sum(in_cluster))
    # distinct discrete points inside the gap: the zero cluster counts once
    outside = vals[~in_cluster & (np.abs(vals.imag) < bp.omega * (1 - 1e-9))]
    below = int(generalized > 0) + outside.size
    ep = [e for e, _ in lowest_eigenpairs(Lp, 3)]
    em = [e for e, _ in lowest_eigenpairs(Lm, 2)]
    geometric = sum(abs(e) < thr for e in ep) + sum(abs(e) < thr for e in em)
    far = np.abs(vals)[np.abs(vals) >= thr]
    near = np.abs(vals)[np.abs(vals) < thr]
    conclusive = bool(far.size == 0 or near.size == 0 or far.min() > 10 * near.max())

    # explicit generalized-kernel vectors
    parity = {"phi": _parity_tag(bp.phi, sp.grid)}
    pairs = lowest_eigenpairs(Lp, 2)
    beta = pairs[1][1]
    parity["beta"] = _parity_tag(beta, sp.grid)
    if generalized >= 4:
        alpha = _solve_orthogonal(Lp, bp.phi, beta, sp)
        gamma = _solve_orthogonal(Lm, beta, bp.phi, sp)
        parity["alpha"] = _parity_tag(alpha, sp.grid)
        parity["gamma"] = _parity_tag(gamma, sp.grid)
    return KernelReport(geometric, generalized, below, thr, tuple(complex(v) for v in vals), parity, conclusive)


def _solve_orthogonal(op: TridiagOperator, rhs: np.ndarray, null: np.ndarray, sp: SpectralPair) -> np.ndarray:
    """Solve op·x = rhs with x ⟂ null, where null spans the (near-)kernel of op."""
    sw = op.sqrt_w
    n = sw.size
    b = (sw * null) / np.linalg.norm(sw * null)
    K = sps.bmat([[op.sparse(), sps.csc_matrix(b[:, None])], [sps.csc_matrix(b[None, :]), None]], format="csc")
    sol = spsolve(K, np.concatenate([sw * rhs, [0.0]]))
    return sol[:n] / sw


def rayleigh_bound(bp: BranchPoint, sp: SpectralPair, lam: float) -> tuple[bool, float]:
    """Check λ² ≥ min⟨L₊f,f⟩·min⟨L₋f,f⟩ over unit f ⟂ φ; returns (holds, bound)."""
    a, b = constrained_minima(bp, sp)
    bound = a * b
    return bool(lam * lam >= bound * (1 - 1e-9)), bound


def quadruple_defect(vals) -> float:
    """Largest distance from each eigenvalue's mirror images -ν, ν̄ to the computed set."""
    vals = np.asarray(vals, dtype=complex)
    worst = 0.0
    for v in vals:
        for img in (-v, np.conj(v)):
            worst = max(worst, float(np.min(np.abs(vals - img))))
    return worst


def linearize_branch(branch: list[BranchPoint], sp: SpectralPair, rho0_star: float, cross_check: bool = True) -> list[dict]:
    """One record per asymmetric-branch point with ρ₁ > 0."""
    rows = []
    for bp in branch:
        if bp.rho1 <= 0:
            continue
        ls = internal_mode(bp, sp, cross_check=cross_check)
        kr = kernel_structure(bp, sp)
        rows.append(
            {
                "rho1": bp.rho1,
                "omega": bp.omega,
                "mu0": ls.mu0,
                "mu1": ls.mu1,
                "lambda": ls.lam,
                "lambda_direct": ls.lam_direct,
                "lambda_over_rho1rho0star": ls.lam / (bp.rho1 * rho0_star),
                "kernel_geometric": kr.geometric,
                "kernel_generalized": kr.generalized,
            }
        )
    return rows
