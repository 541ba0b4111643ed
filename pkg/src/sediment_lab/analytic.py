"""Closed-form terrain families (ridges, mountains, collapsing hills).

Each family is a product of a spatial profile and a time factor
T(t) = (1 + 2rt)^(-1/2).  The module builds the fields on a grid, validates
the exponent relations the families must satisfy, evaluates the
gradient-potential (curl) condition, and measures how well the discrete
operators reproduce the evolution equation on these profiles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .grid import (
    CAPACITY_EXPONENT,
    GridSpec,
    ScalarField,
    divergence,
    gradient,
    sediment_flux,
)


class DomainError(ValueError):
    """Closed form undefined somewhere on the grid."""


class ConstraintError(ValueError):
    """Parameter set violates the family's exponent relations."""


class BlowupTimeError(ValueError):
    """Time factor evaluated at or beyond its blow-up time."""


class DegenerateVolumeError(ValueError):
    """Initial sediment volume is not positive."""


@dataclass(frozen=True)
class SeparableParams:
    """Parameters of the crest-line families.

    The profile base is H1^(1/c) - |a (x-x0) + b (y-y0)| for a ridge (crest
    along the zero line of the linear form, slopes falling off both sides)
    and H1^(1/c) - a|x-x0| - b|y-y0| for a mountain (peak at (x0, y0)).
    """

    a: float
    b: float
    c: float
    d: float
    h1: float
    H1: float
    x0: float = 0.0
    y0: float = 0.0
    shape: str = "ridge"

    def __post_init__(self):
        if self.shape not in ("ridge", "mountain"):
            raise ConstraintError(f"unknown shape {self.shape!r}")
        if self.H1 <= 0:
            raise ConstraintError("surface amplitude H1 must be positive")
        if self.h1 < 0:
            raise ConstraintError("water amplitude h1 must be nonnegative")
        if self.c == 0:
            raise ConstraintError("surface exponent c must be nonzero")
        if self.shape == "mountain" and (self.a < 0 or self.b < 0):
            raise ConstraintError("mountain slopes a, b must be nonnegative")

    @property
    def base_height(self) -> float:
        """H1^(1/c), the base value on the crest."""
        return self.H1 ** (1.0 / self.c)

    def decay_rate(self) -> float:
        """Rate constant r of the family, from the exponent bookkeeping."""
        return rate_from_exponents(self.h1, self.a, self.b, self.c, self.d)


@dataclass(frozen=True)
class HillParams:
    """Parameters of the collapsing-hill family.

    Validates the three published relations
        gamma = -(3/10)(1 + 2 beta),
        d     =  (3/10)(1 - 2 c),
        beta r = 16 H1^2 c^4,
    each within 1e-12, plus beta in (-1/2, 0).
    """

    h1: float
    H1: float
    c: float
    d: float
    r: float
    beta: float
    gamma: float
    x0: float = 0.0
    y0: float = 0.0

    def __post_init__(self):
        if self.H1 <= 0:
            raise ConstraintError("surface amplitude H1 must be positive")
        if self.h1 < 0:
            raise ConstraintError("water amplitude h1 must be nonnegative")
        failures = []
        if abs(self.gamma + 0.3 * (1.0 + 2.0 * self.beta)) > 1e-12:
            failures.append("gamma = -(3/10)(1 + 2 beta)")
        if abs(self.d - 0.3 * (1.0 - 2.0 * self.c)) > 1e-12:
            failures.append("d = (3/10)(1 - 2 c)")
        if abs(self.beta * self.r - 16.0 * self.H1**2 * self.c**4) > 1e-12:
            failures.append("beta r = 16 H1^2 c^4")
        if not (-0.5 < self.beta < 0.0):
            failures.append("beta in (-1/2, 0)")
        if failures:
            raise ConstraintError(
                "hill constraint violation: " + "; ".join(failures)
            )


@dataclass(frozen=True)
class DecayLaw:
    """Time factor T(t) = (a0 + 2 r t)^(-1/2); T' = lam T^3 with lam = -r."""

    r: float
    a0: float = 1.0

    @property
    def b0(self) -> float:
        return 2.0 * self.r

    @property
    def lam(self) -> float:
        return -self.r


def time_factor(law: DecayLaw, t: float) -> float:
    radicand = law.a0 + law.b0 * t
    if radicand <= 0:
        raise BlowupTimeError(
            f"time factor undefined at t={t}: radicand {radicand} <= 0"
        )
    return radicand**-0.5


def validate_exponents(c: float, d: float) -> dict:
    """Residuals of the two exponent branches and the rate formula.

    branch1 (3c - 3 + 10d/3 = 0) is the stationary family (r = 0);
    branch2 (2c - 4 + 10d/3 = 0, i.e. c = 2 - 5d/3) is the eroding one.
    r_formula closes over (h1, a, b).
    """
    branch1 = 3.0 * c - 3.0 + 10.0 * d / 3.0
    branch2 = 2.0 * c - 4.0 + 10.0 * d / 3.0

    def r_formula(h1: float, a: float, b: float) -> float:
        return rate_from_exponents(h1, a, b, c, d)

    return {
        "branch1_residual": branch1,
        "branch2_residual": branch2,
        "r_formula": r_formula,
    }


def rate_from_exponents(h1: float, a: float, b: float, c: float, d: float) -> float:
    """r = -h1^(10/3) c^3 (a^2 + b^2)^2 (3c - 3 + 10d/3)."""
    return (
        -(h1 ** CAPACITY_EXPONENT)
        * c**3
        * (a**2 + b**2) ** 2
        * (3.0 * c - 3.0 + 10.0 * d / 3.0)
    )


def _check_base_positive(base: np.ndarray, g: GridSpec, what: str) -> None:
    bad = np.argwhere(base <= 0)
    if bad.size:
        i, j = bad[0]
        x = (i + 0.5) * g.dx
        y = (j + 0.5) * g.dy
        raise DomainError(
            f"{what} base argument {base[i, j]:.6g} <= 0 at cell ({i}, {j}), "
            f"center ({x:.6g}, {y:.6g})"
        )


def _crest_zero(h: np.ndarray, distance: np.ndarray, g: GridSpec) -> np.ndarray:
    """Zero the water depth on cells whose center sits on the crest line."""
    out = h.copy()
    out[distance < 0.5 * min(g.dx, g.dy)] = 0.0
    return out


def ridge_fields(p: SeparableParams, g: GridSpec) -> tuple[ScalarField, ScalarField]:
    """Water depth and surface of a crest-line ridge.

    The crest is the line a(x-x0) + b(y-y0) = 0 through (x0, y0); the linear
    form is applied with the sign making it nonpositive on each side, so the
    surface peaks at H1 on the crest.  h is zeroed on crest cells.
    """
    if p.shape != "ridge":
        raise ConstraintError("ridge_fields requires shape='ridge'")
    X, Y = g.meshgrid()
    ell = p.a * (X - p.x0) + p.b * (Y - p.y0)
    base = p.base_height - np.abs(ell)
    _check_base_positive(base, g, "ridge")
    H0 = base**p.c
    h = p.h1 * base**p.d
    slope = math.hypot(p.a, p.b)
    if slope > 0:
        h = _crest_zero(h, np.abs(ell) / slope, g)
    return ScalarField(g, h, "water"), ScalarField(g, H0, "surface")


def mountain_fields(p: SeparableParams, g: GridSpec) -> tuple[ScalarField, ScalarField]:
    """Water depth and surface of a mountain peaked at (x0, y0).

    Base is H1^(1/c) - a|x-x0| - b|y-y0| with a, b >= 0; h is zeroed along
    the kink lines x = x0 (if a > 0) and y = y0 (if b > 0).
    """
    if p.shape != "mountain":
        raise ConstraintError("mountain_fields requires shape='mountain'")
    X, Y = g.meshgrid()
    base = p.base_height - p.a * np.abs(X - p.x0) - p.b * np.abs(Y - p.y0)
    _check_base_positive(base, g, "mountain")
    H0 = base**p.c
    h = p.h1 * base**p.d
    if p.a > 0:
        h = _crest_zero(h, np.abs(X - p.x0), g)
    if p.b > 0:
        h = _crest_zero(h, np.abs(Y - p.y0), g)
    return ScalarField(g, h, "water"), ScalarField(g, H0, "surface")


def hill_fields(
    p: HillParams, g: GridSpec, t: float
) -> tuple[ScalarField, ScalarField]:
    """Water depth and surface of a collapsing hill at time t >= 0."""
    if t < 0:
        raise BlowupTimeError("hill fields need t >= 0")
    tau = 1.0 + p.r * t
    if tau <= 0:
        raise BlowupTimeError(f"hill undefined at t={t}: 1 + r t = {tau} <= 0")
    X, Y = g.meshgrid()
    rho = (X - p.x0) ** 2 + (Y - p.y0) ** 2
    h = p.h1 * rho**p.d * tau**p.gamma
    H = p.H1 * rho**p.c * tau**p.beta
    return ScalarField(g, h, "water"), ScalarField(g, H, "surface")


def curl_residual(
    H: ScalarField, eps_grad: float
) -> tuple[ScalarField, np.ndarray]:
    """Residual of H_xy (H_x^2 - H_y^2) = H_x H_y (H_xx - H_yy), per cell.

    Returns the residual field and the mask of excluded cells where
    |grad H| < eps_grad (the condition only binds where the gradient is
    defined and nonzero).
    """
    g = H.grid
    v = H.values
    dx, dy = g.dx, g.dy
    grad = gradient(H)
    Hx, Hy = grad.x, grad.y

    Hxx = np.empty_like(v)
    Hxx[1:-1, :] = (v[2:, :] - 2 * v[1:-1, :] + v[:-2, :]) / dx**2
    Hxx[0, :] = (2 * v[0, :] - 5 * v[1, :] + 4 * v[2, :] - v[3, :]) / dx**2
    Hxx[-1, :] = (2 * v[-1, :] - 5 * v[-2, :] + 4 * v[-3, :] - v[-4, :]) / dx**2

    Hyy = (np.roll(v, -1, axis=1) - 2 * v + np.roll(v, 1, axis=1)) / dy**2
    Hxy = (np.roll(Hx, -1, axis=1) - np.roll(Hx, 1, axis=1)) / (2 * dy)

    res = Hxy * (Hx**2 - Hy**2) - Hx * Hy * (Hxx - Hyy)
    excluded = grad.magnitude() < eps_grad
    return ScalarField(g, res, "residual"), excluded


def flux_volume_rate(
    H0: ScalarField, h: ScalarField, g: GridSpec
) -> dict:
    """Initial boundary flux F0, volume V0, and the rate closure r(c_r).

    F0 is the line integral of the x-flux h^(10/3)|grad H|^2 dH/dx along
    x = W, evaluated by second-order extrapolation of the cell-centered flux
    to the face (the closed forms need not vanish at x = W, so the scheme's
    pinned-value face would not converge to the analytic integral).
    """
    if H0.grid != g or h.grid != g:
        raise ValueError("fields must share the grid")
    grad = gradient(H0, dirichlet_ghost=False)
    qx = h.values ** CAPACITY_EXPONENT * (grad.x**2 + grad.y**2) * grad.x
    line = 1.5 * qx[-1, :] - 0.5 * qx[-2, :]
    F0 = float(np.sum(line) * g.dy)
    V0 = float(np.sum(H0.values) * g.cell_area)
    if V0 <= 0:
        raise DegenerateVolumeError(f"initial volume {V0} is not positive")

    def r_of_cr(c_r: float) -> float:
        return -c_r * F0 / V0

    return {"F0": F0, "V0": V0, "r_of_cr": r_of_cr}


def _separable_time_derivative(
    p: SeparableParams, H0: np.ndarray, t: float
) -> np.ndarray:
    r = p.decay_rate()
    T = time_factor(DecayLaw(r), t)
    return H0 * (-r) * T**3


def pde_residual(
    p: SeparableParams | HillParams, g: GridSpec, t: float = 0.0
) -> ScalarField:
    """Analytic time derivative minus discrete div-flux, at cell centers.

    Uses the family's closed-form rate for the time derivative and the grid
    module's flux/divergence (boundary closures included) in space; evaluate
    together with residual_mask to exclude crest cells and the boundary
    closures.
    """
    if isinstance(p, HillParams):
        h, H = hill_fields(p, g, t)
        X, Y = g.meshgrid()
        rho = (X - p.x0) ** 2 + (Y - p.y0) ** 2
        tau = 1.0 + p.r * t
        Ht = p.H1 * rho**p.c * p.beta * p.r * tau ** (p.beta - 1.0)
    else:
        builder = ridge_fields if p.shape == "ridge" else mountain_fields
        h, H0 = builder(p, g)
        r = p.decay_rate()
        T = time_factor(DecayLaw(r), t)
        Ht = _separable_time_derivative(p, H0.values, t)
        H = ScalarField(g, H0.values * T, "surface")
    div = divergence(sediment_flux(H, h))
    return ScalarField(g, Ht - div.values, "residual")


def residual_mask(
    p: SeparableParams | HillParams,
    g: GridSpec,
    *,
    crest_pad: int = 3,
    edge_pad: int = 2,
    hill_radius_frac: float = 0.2,
) -> np.ndarray:
    """Cells where the discrete residual of the closed form is meaningful.

    Excludes a crest_pad-cell band around crest/kink lines (stencil reach),
    edge_pad columns at the x edges (the scheme's boundary closures), the
    wrap rows in y whenever the profile is not y-periodic, and for hills a
    fixed disc around the singular center.
    """
    nx, ny = g.shape
    mask = np.ones((nx, ny), dtype=bool)
    mask[:edge_pad, :] = False
    mask[-edge_pad:, :] = False
    X, Y = g.meshgrid()
    reach = crest_pad * max(g.dx, g.dy)

    if isinstance(p, HillParams):
        rho = (X - p.x0) ** 2 + (Y - p.y0) ** 2
        r_excl = max(hill_radius_frac * min(g.width, g.length), reach)
        mask &= rho > r_excl**2
        y_periodic = False
    elif p.shape == "ridge":
        slope = math.hypot(p.a, p.b)
        if slope > 0:
            dist = np.abs(p.a * (X - p.x0) + p.b * (Y - p.y0)) / slope
            mask &= dist > reach
        y_periodic = p.b == 0
    else:
        if p.a > 0:
            mask &= np.abs(X - p.x0) > reach
        if p.b > 0:
            mask &= np.abs(Y - p.y0) > reach
        y_periodic = p.b == 0
    if not y_periodic:
        mask[:, :edge_pad] = False
        mask[:, -edge_pad:] = False
    return mask


def product_hill_residual(
    g: GridSpec,
    t: float,
    *,
    c: float,
    beta: float,
    H1: float = 1.0,
    h1: float = 1.0,
    x0: float = 0.0,
    y0: float = 0.0,
    d: float | None = None,
    gamma: float | None = None,
    r: float | None = None,
) -> ScalarField:
    """Residual of a raw product-form hill with caller-chosen exponents.

    Unlike HillParams this performs no constraint validation; it exists to
    probe which exponent relations actually close the equation.
    """
    if d is None:
        d = 0.6 * (1.0 - c)
    if gamma is None:
        gamma = -0.3 * (1.0 + 2.0 * beta)
    if r is None:
        r = 16.0 * c**3 * (c + 1.0) * H1**2 * h1 ** CAPACITY_EXPONENT / beta
    tau = 1.0 + r * t
    if tau <= 0:
        raise BlowupTimeError(f"product hill undefined at t={t}")
    X, Y = g.meshgrid()
    rho = (X - x0) ** 2 + (Y - y0) ** 2
    h = ScalarField(g, h1 * rho**d * tau**gamma, "water")
    H = ScalarField(g, H1 * rho**c * tau**beta, "surface")
    Ht = H1 * rho**c * beta * r * tau ** (beta - 1.0)
    div = divergence(sediment_flux(H, h))
    return ScalarField(g, Ht - div.values, "residual")
