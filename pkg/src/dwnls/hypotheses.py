"""Interaction integrals of the two bound states and the positivity checks built on them."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.integrate import simpson

from .errors import ValidationError
from .spectral import Grid, SpectralPair


def inner_product(f, g, grid: Grid, rule: str = "trapezoid") -> float:
    """Real L² pairing ∫ f g dx by composite trapezoid (or Simpson) quadrature.

    Dirichlet zeros at both ends are included, so trapezoid reduces to the
    weighted sum over interior nodes.
    """
    f = np.asarray(f)
    g = np.asarray(g)
    if f.shape != g.shape or f.shape != (grid.n,):
        raise ValidationError(f"length mismatch: {f.shape} vs {g.shape} on a grid of {grid.n} nodes")
    if rule == "trapezoid":
        return float(np.dot(grid.weights, f * g))
    if rule == "simpson":
        xs = np.concatenate([[grid.x_min], grid.x, [grid.x_max]])
        ys = np.concatenate([[0.0], f * g, [0.0]])
        return float(simpson(ys, x=xs))
    raise ValidationError(f"unknown quadrature rule {rule!r}")


@dataclass(frozen=True)
class H4Report:
    I60: float
    I42: float
    I24: float
    I06: float
    h4a: float
    h4b: float
    mu2_combo: float
    a0: float
    a0_margin: float
    passed: bool

    def passes(self, a0: float) -> bool:
        """Both interaction inequalities hold with margin a0."""
        return self.h4a > a0 and self.h4b > a0

    def omega2_coeff(self) -> float:
        """ω''(0)/(ρ0*)² at leading order along the asymmetric branch."""
        return 20.0 * self.h4b / self.h4a

    def rho0_2_coeff(self) -> float:
        """ρ0''(0)·ρ0* at leading order."""
        return 5.0 * (self.I42 - self.I24) / self.h4a

    def mu1_curvature(self) -> float:
        """μ1''(0)/(ρ0*)² from the consistent two-mode expansion, 40 h4b / I60."""
        return 40.0 * self.h4b / self.I60

    def predicted_rho0_star(self, gap: float) -> float:
        return (gap / self.h4a) ** 0.25 if self.h4a > 0 else math.nan

    def as_dict(self) -> dict:
        return asdict(self)


def h4_report(sp: SpectralPair, grid: Grid | None = None, a0: float | None = None, rule: str = "trapezoid") -> H4Report:
    """All four sixth-order integrals plus the derived (H4) quantities.

    ``mu2_combo`` is the bracket multiplying (ρ0*)² in the small-ρ1 curvature
    of the small positive L₊ eigenvalue.
    """
    grid = grid or sp.grid
    p0, p1 = sp.psi0, sp.psi1
    one = np.ones_like(p0)
    I60 = inner_product(p0**6, one, grid, rule)
    I42 = inner_product(p0**4, p1**2, grid, rule)
    I24 = inner_product(p0**2, p1**4, grid, rule)
    I06 = inner_product(p1**6, one, grid, rule)
    h4a = 5.0 * I42 - I60
    h4b = 5.0 * I42**2 - I60 * I24
    mu2 = 20.0 * h4b / h4a + 160.0 * I42**2 / I60 - 60.0 * I24
    if a0 is None:
        a0 = 0.5 * min(h4a, h4b)
    return H4Report(
        I60=I60,
        I42=I42,
        I24=I24,
        I06=I06,
        h4a=h4a,
        h4b=h4b,
        mu2_combo=mu2,
        a0=a0,
        a0_margin=min(h4a, h4b) - a0,
        passed=bool(h4a > 0 and h4b > 0),
    )
