"""Discretized linear Schrödinger operator -d²/dx² + V on a truncated line.

Everything here works on a possibly nonuniform node set with Dirichlet ends.
The operator is stored in its symmetric form

    A = W^{-1/2} K W^{-1/2} + diag(V),

with K the P1 stiffness matrix and W the lumped mass (trapezoid weights).
On a uniform grid this is the usual second-order central difference with
diagonal 2/h² + V and off-diagonal -1/h².  Grid functions are always held in
"ψ-space"; the symmetric coordinates y = W^{1/2} ψ are only used internally.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sps
from scipy.linalg import eigh_tridiagonal, solve_banded

from .errors import H1ViolationError, SolverError, ValidationError

MIN_NODES = 16


# --------------------------------------------------------------------------
# grids


@dataclass(frozen=True, eq=False)
class Grid:
    """Interior nodes of a Dirichlet-truncated interval.

    ``spacing`` has n+1 entries (gaps between consecutive nodes including the
    two boundary nodes); ``weights`` are the trapezoid weights of the interior
    nodes.  ``h`` is the uniform spacing, or the coarsest spacing of a graded
    grid.
    """

    x_min: float
    x_max: float
    n: int
    x: np.ndarray
    spacing: np.ndarray
    weights: np.ndarray
    uniform: bool = True

    @property
    def h(self) -> float:
        if self.uniform:
            return (self.x_max - self.x_min) / (self.n + 1)
        return float(self.spacing.max())

    @property
    def symmetric(self) -> bool:
        return bool(np.allclose(self.x, -self.x[::-1], rtol=0, atol=1e-12 * max(1.0, self.x_max)))

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    def reflect(self, f: np.ndarray) -> np.ndarray:
        """Return f(-x) on the grid nodes (interpolated if the grid is not symmetric)."""
        f = np.asarray(f)
        if self.symmetric:
            return f[::-1].copy()
        xs = np.concatenate([[self.x_min], self.x, [self.x_max]])
        fs = np.concatenate([[0.0], f, [0.0]])
        if np.iscomplexobj(f):
            return np.interp(-self.x, xs, fs.real, left=0, right=0) + 1j * np.interp(
                -self.x, xs, fs.imag, left=0, right=0
            )
        return np.interp(-self.x, xs, fs, left=0.0, right=0.0)

    def integrate(self, f: np.ndarray) -> float:
        return float(np.dot(self.weights, f))


def build_grid(x_min: float, x_max: float, n: int) -> Grid:
    """Uniform grid of n interior nodes on (x_min, x_max)."""
    if not x_min < x_max:
        raise ValidationError(f"inverted domain: x_min={x_min} >= x_max={x_max}")
    if int(n) != n or n < MIN_NODES:
        raise ValidationError(f"n too small: need n >= {MIN_NODES}, got {n}")
    n = int(n)
    h = (x_max - x_min) / (n + 1)
    x = x_min + h * np.arange(1, n + 1)
    if math.isclose(x_min, -x_max):
        # exact mirror symmetry of the node set
        x = 0.5 * (x - x[::-1])
    return Grid(x_min, x_max, n, x, np.full(n + 1, h), np.full(n, h), True)


def _fan(start: float, direction: int, reach: float, h_min: float, h_max: float, ratio: float) -> list[float]:
    # nodes start + direction*s_k, spacing growing geometrically from h_min up to h_max
    out, s, step = [], 0.0, h_min
    while s + step < reach:
        s += step
        out.append(start + direction * s)
        step = min(step * ratio, h_max)
    return out


def graded_grid(
    x_max: float,
    centers,
    h_min: float,
    h_max: float,
    ratio: float = 1.05,
) -> Grid:
    """Grid on (-x_max, x_max), refined geometrically around ±c for c in ``centers``.

    The node set is mirror symmetric and contains 0 and every ±c.
    """
    if x_max <= 0:
        raise ValidationError("x_max must be positive")
    if not 0 < h_min <= h_max:
        raise ValidationError("need 0 < h_min <= h_max")
    if ratio <= 1.0:
        raise ValidationError("grading ratio must exceed 1")
    cs = sorted({abs(float(c)) for c in centers})
    if any(c >= x_max for c in cs):
        raise ValidationError("refinement centre outside the domain")
    anchors = sorted({0.0, *cs, x_max})
    pos: list[float] = []
    for a, b in zip(anchors[:-1], anchors[1:]):
        both = (a in cs) and (b in cs)
        reach = 0.5 * (b - a) if both else (b - a)
        left = _fan(a, +1, reach, h_min, h_max, ratio) if a in cs else []
        right = _fan(b, -1, reach, h_min, h_max, ratio) if b in cs else []
        lo = left[-1] if left else a
        hi = right[-1] if right else b
        m = max(1, math.ceil((hi - lo) / h_max - 1e-9))
        fill = [lo + (hi - lo) * j / m for j in range(1, m)]
        pos.extend(([a] if a > 0 else []) + left + fill + right[::-1])
    pos_arr = np.array(sorted(set(pos)))
    nodes = np.concatenate([-pos_arr[::-1], [0.0], pos_arr])
    spacing = np.diff(np.concatenate([[-x_max], nodes, [x_max]]))
    if np.any(spacing <= 0):
        raise ValidationError("graded grid construction produced non-increasing nodes")
    weights = 0.5 * (spacing[:-1] + spacing[1:])
    n = nodes.size
    if n < MIN_NODES:
        raise ValidationError(f"n too small: need n >= {MIN_NODES}, got {n}")
    return Grid(-x_max, x_max, n, nodes, spacing, weights, False)


# --------------------------------------------------------------------------
# potentials


@dataclass(frozen=True)
class GaussianDoubleWell:
    """depth * (g_σ(x-L) + g_σ(x+L)) with g_σ the unit-mass Gaussian."""

    sigma: float
    L: float
    depth: float = -1.0
    kind: str = field(default="gaussian_double_well", init=False)

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValidationError(f"sigma must be positive, got {self.sigma}")
        if self.L < 0:
            raise ValidationError(f"L must be non-negative, got {self.L}")

    even = True

    def __call__(self, x):
        s2 = 2.0 * self.sigma**2
        norm = 1.0 / math.sqrt(math.pi * s2)
        if self.L == 0:
            return self.depth * norm * np.exp(-(x**2) / s2)
        return self.depth * norm * (np.exp(-((x - self.L) ** 2) / s2) + np.exp(-((x + self.L) ** 2) / s2))

    def params(self) -> dict:
        return {"sigma": self.sigma, "L": self.L, "depth": self.depth}


@dataclass(frozen=True)
class PoschlTeller:
    """-m(m+1) sech²x; bound states at -(m-k)², k = 0..m-1."""

    m: float
    kind: str = field(default="poschl_teller", init=False)
    even = True

    def __call__(self, x):
        return -self.m * (self.m + 1.0) / np.cosh(x) ** 2

    def params(self) -> dict:
        return {"m": self.m}


@dataclass(frozen=True)
class CustomPotential:
    func: Callable[[np.ndarray], np.ndarray]
    even: bool = False
    kind: str = field(default="custom", init=False)

    def __call__(self, x):
        return np.asarray(self.func(x), dtype=float)

    def params(self) -> dict:
        return {"even": self.even}


def descriptor_from_dict(d: dict):
    """Build a potential descriptor from a ``{"kind": ..., **params}`` mapping."""
    d = dict(d)
    kind = d.pop("kind", None)
    if kind == "gaussian_double_well":
        return GaussianDoubleWell(float(d["sigma"]), float(d["L"]), float(d.get("depth", -1.0)))
    if kind == "poschl_teller":
        return PoschlTeller(float(d["m"]))
    raise ValidationError(f"unknown potential kind {kind!r}")


@dataclass(frozen=True, eq=False)
class Potential:
    samples: np.ndarray
    descriptor: object
    parity_flag: bool


def make_potential(descriptor, grid: Grid) -> Potential:
    """Sample ``descriptor`` on ``grid``.

    Warns when a Gaussian well is narrower than the local mesh can resolve.
    """
    samples = np.asarray(descriptor(grid.x), dtype=float)
    even = bool(getattr(descriptor, "even", False))
    if isinstance(descriptor, GaussianDoubleWell):
        sig = descriptor.sigma
        for c in {descriptor.L, -descriptor.L}:
            i = int(np.clip(np.searchsorted(grid.x, c), 1, grid.n - 1))
            h_loc = max(grid.spacing[i - 1 : i + 2])
            if h_loc > 0.5 * sig:
                warnings.warn(
                    f"σ under-resolved, use adaptive grid (σ={sig:g}, local spacing {h_loc:g})",
                    RuntimeWarning,
                    stacklevel=2,
                )
                break
    if even and grid.symmetric:
        samples = 0.5 * (samples + samples[::-1])
    return Potential(samples, descriptor, even)


# --------------------------------------------------------------------------
# operator


@dataclass(frozen=True, eq=False)
class TridiagOperator:
    """Symmetric tridiagonal operator in W^{1/2}-scaled coordinates.

    ``apply``/``solve`` take and return ψ-space grid functions.
    """

    diag: np.ndarray
    off: np.ndarray
    grid: Grid

    @property
    def sqrt_w(self) -> np.ndarray:
        return np.sqrt(self.grid.weights)

    def plus_diagonal(self, v) -> "TridiagOperator":
        return TridiagOperator(self.diag + v, self.off, self.grid)

    def apply(self, psi: np.ndarray) -> np.ndarray:
        sw = self.sqrt_w
        y = sw * psi
        out = self.diag * y
        out[:-1] += self.off * y[1:]
        out[1:] += self.off * y[:-1]
        return out / sw

    def solve(self, rhs: np.ndarray, shift: float = 0.0) -> np.ndarray:
        """Solve (H + shift) ψ = rhs."""
        sw = self.sqrt_w
        ab = np.zeros((3, self.diag.size))
        ab[0, 1:] = self.off
        ab[1] = self.diag + shift
        ab[2, :-1] = self.off
        return solve_banded((1, 1), ab, sw * rhs, check_finite=False) / sw

    def sparse(self) -> sps.csc_matrix:
        """Symmetric form A as a sparse matrix (acts on y = W^{1/2} ψ)."""
        return sps.diags([self.off, self.diag, self.off], [-1, 0, 1], format="csc")

    def dense(self) -> np.ndarray:
        return self.sparse().toarray()

    def transpose(self) -> "TridiagOperator":
        return self

    def norm_estimate(self) -> float:
        return float(np.max(np.abs(self.diag)) + 2 * np.max(np.abs(self.off)))


def discretize(potential: Potential, grid: Grid) -> TridiagOperator:
    """-d²/dx² + V with Dirichlet truncation."""
    v = np.asarray(potential.samples if isinstance(potential, Potential) else potential, dtype=float)
    if v.shape != (grid.n,):
        raise ValidationError(f"potential has shape {v.shape}, grid has {grid.n} nodes")
    s, w = grid.spacing, grid.weights
    diag = (1.0 / s[:-1] + 1.0 / s[1:]) / w + v
    off = -1.0 / (s[1:-1] * np.sqrt(w[:-1] * w[1:]))
    return TridiagOperator(diag, off, grid)


def _sign_fix(psi: np.ndarray) -> np.ndarray:
    # the first lobe (from the left) carrying visible amplitude is positive
    amp = np.abs(psi)
    i = int(np.argmax(amp > 1e-3 * amp.max()))
    return psi if psi[i] > 0 else -psi


def lowest_eigenpairs(op: TridiagOperator, k: int, tol: float = 1e-8) -> list[tuple[float, np.ndarray]]:
    """k algebraically smallest eigenpairs, ψ normalized in the trapezoid norm.

    Uses Sturm-count bisection for the eigenvalues and inverse iteration for
    the vectors (LAPACK stebz/stein).
    """
    if k < 1:
        raise ValidationError("k must be >= 1")
    k = min(k, op.diag.size)
    try:
        vals, vecs = eigh_tridiagonal(
            op.diag, op.off, select="i", select_range=(0, k - 1), lapack_driver="stebz"
        )
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise SolverError(f"tridiagonal eigensolver failed: {exc}") from exc
    sw = op.sqrt_w
    out = []
    scale = op.norm_estimate()
    for j in range(vals.size):
        y = vecs[:, j]
        res = np.linalg.norm(_apply_sym(op, y) - vals[j] * y)
        if res > tol * max(1.0, scale) * np.linalg.norm(y):
            raise SolverError(f"eigenpair {j} residual {res:.3e} exceeds tolerance")
        out.append((float(vals[j]), _sign_fix(y / sw)))
    return out


def _apply_sym(op: TridiagOperator, y: np.ndarray) -> np.ndarray:
    out = op.diag * y
    out[:-1] += op.off * y[1:]
    out[1:] += op.off * y[:-1]
    return out


# --------------------------------------------------------------------------
# the two bound states


@dataclass(frozen=True, eq=False)
class SpectralPair:
    """Two lowest bound states; eigenvalues are -omega0 < -omega1 < 0."""

    omega0: float
    omega1: float
    psi0: np.ndarray
    psi1: np.ndarray
    grid: Grid
    op: TridiagOperator
    potential: Potential | None = None

    @property
    def gap(self) -> float:
        return self.omega0 - self.omega1

    def inner(self, f, g) -> float:
        return float(np.dot(self.grid.weights, f * g))

    def project_c(self, f: np.ndarray) -> np.ndarray:
        """Projection onto the continuous spectral subspace (off span{ψ0, ψ1})."""
        w = self.grid.weights
        return f - self.psi0 * np.dot(w, self.psi0 * f) - self.psi1 * np.dot(w, self.psi1 * f)

    def resample(self, grid: Grid) -> "SpectralPair":
        """Interpolate onto another grid (e.g. graded → uniform) and re-orthonormalize."""
        xs = np.concatenate([[self.grid.x_min], self.grid.x, [self.grid.x_max]])
        p0 = np.interp(grid.x, xs, np.concatenate([[0], self.psi0, [0]]), left=0, right=0)
        p1 = np.interp(grid.x, xs, np.concatenate([[0], self.psi1, [0]]), left=0, right=0)
        w = grid.weights
        p0 /= math.sqrt(np.dot(w, p0 * p0))
        p1 -= p0 * np.dot(w, p0 * p1)
        p1 /= math.sqrt(np.dot(w, p1 * p1))
        v = self.potential
        pot = None
        op = self.op
        if v is not None:
            pot = make_potential(v.descriptor, grid)
            op = discretize(pot, grid)
        return SpectralPair(self.omega0, self.omega1, p0, p1, grid, op, pot)


def tail_mass(psi: np.ndarray, grid: Grid, fraction: float = 0.1) -> float:
    """Squared L² mass of psi in the outer ``fraction`` of the domain (both sides)."""
    edge = fraction * grid.length
    mask = (grid.x < grid.x_min + edge) | (grid.x > grid.x_max - edge)
    return float(np.dot(grid.weights[mask], psi[mask] ** 2))


def _parity_sector(op: TridiagOperator, parity: int):
    """Half-grid symmetric tridiagonal block for even (+1) or odd (-1) vectors.

    Returns (diag, off, lift) where lift maps a sector vector back to full y.
    Requires a mirror-symmetric grid and potential.
    """
    n = op.diag.size
    d, e = op.diag, op.off
    if n % 2 == 1:
        c = n // 2
        if parity > 0:
            dd = d[c:].copy()
            oo = e[c:].copy()
            oo[0] *= math.sqrt(2.0)

            def lift(z):
                y = np.empty(n)
                y[c] = z[0]
                y[c + 1 :] = z[1:] / math.sqrt(2.0)
                y[:c] = z[1:][::-1] / math.sqrt(2.0)
                return y

        else:
            dd = d[c + 1 :].copy()
            oo = e[c + 1 :].copy()

            def lift(z):
                y = np.zeros(n)
                y[c + 1 :] = z
                y[:c] = -z[::-1]
                return y / math.sqrt(2.0)

    else:
        c = n // 2
        dd = d[c:].copy()
        oo = e[c:].copy()
        dd[0] += parity * e[c - 1]

        def lift(z):
            y = np.empty(n)
            y[c:] = z
            y[:c] = parity * z[::-1]
            return y / math.sqrt(2.0)

    return dd, oo, lift


def _sector_lowest(op: TridiagOperator, parity: int, k: int):
    dd, oo, lift = _parity_sector(op, parity)
    k = min(k, dd.size)
    vals, vecs = eigh_tridiagonal(dd, oo, select="i", select_range=(0, k - 1), lapack_driver="stebz")
    out = []
    sw = op.sqrt_w
    for j in range(vals.size):
        y = lift(vecs[:, j])
        y /= np.linalg.norm(y)
        res = np.linalg.norm(_apply_sym(op, y) - vals[j] * y)
        if res > 1e-8 * max(1.0, op.norm_estimate()):
            raise SolverError(f"parity-sector eigenpair residual {res:.3e} exceeds tolerance")
        out.append((float(vals[j]), _sign_fix(y / sw)))
    return out


def spectral_pair(potential: Potential, grid: Grid, tail_tol: float = 1e-12) -> SpectralPair:
    """The two bound states of -d²/dx² + V, with parity and normalization enforced.

    Raises H1ViolationError unless exactly two eigenvalues are negative.  For
    an even potential on a mirror-symmetric grid the even and odd sectors are
    solved separately, which keeps exact parity however small the gap is.
    """
    op = discretize(potential, grid)
    if potential.parity_flag and grid.symmetric:
        even = _sector_lowest(op, +1, 2)
        odd = _sector_lowest(op, -1, 2)
        pairs = sorted(even + odd, key=lambda t: t[0])[:3]
    else:
        pairs = lowest_eigenpairs(op, 3)
    neg = [e for e, _ in pairs if e < 0]
    if len(neg) != 2:
        raise H1ViolationError(
            f"expected exactly two negative eigenvalues, found {len(neg)}: {neg}", neg
        )
    (e0, p0), (e1, p1) = pairs[0], pairs[1]
    w = grid.weights
    if potential.parity_flag:
        r0, r1 = grid.reflect(p0), grid.reflect(p1)
        scale = np.abs(p0).max()
        if np.abs(p0 - r0).max() > 1e-6 * scale or np.abs(p1 + r1).max() > 1e-6 * scale:
            raise SolverError("bound states are not parity eigenfunctions of an even potential")
        p0 = 0.5 * (p0 + r0)
        p1 = 0.5 * (p1 - r1)
    p0 = p0 / math.sqrt(np.dot(w, p0 * p0))
    p1 = p1 - p0 * np.dot(w, p0 * p1)
    p1 = p1 / math.sqrt(np.dot(w, p1 * p1))
    for j, p in enumerate((p0, p1)):
        tm = tail_mass(p, grid)
        if tm > tail_tol:
            warnings.warn(
                f"bound state {j} has tail mass {tm:.2e} near the Dirichlet boundary; enlarge x_max",
                RuntimeWarning,
                stacklevel=2,
            )
    return SpectralPair(-e0, -e1, p0, p1, grid, op, potential)


def default_pair(sigma: float = 0.5, L: float = 3.0, depth: float = -1.0, x_max: float = 30.0, n: int = 2999):
    """Convenience: the Gaussian double well on a uniform symmetric grid."""
    grid = build_grid(-x_max, x_max, n)
    pot = make_potential(GaussianDoubleWell(sigma, L, depth), grid)
    return spectral_pair(pot, grid)
