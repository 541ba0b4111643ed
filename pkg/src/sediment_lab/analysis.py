"""Function-space checks: truncation, entropy and weak-form residuals,
Muckenhoupt A4 estimate, and zero-set extraction of the water depth."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .grid import CAPACITY_EXPONENT, GridSpec, ScalarField, gradient
from .evolve import Trajectory


class ParameterError(ValueError):
    pass


class SupportError(ValueError):
    """Test function does not vanish on its forbidden set."""


class InsufficientDataError(ValueError):
    """Too few snapshots for a centered time difference."""


def truncate(H: ScalarField, k: float) -> ScalarField:
    """Clamp the field to [-k, k]."""
    if k <= 0:
        raise ParameterError("truncation level k must be positive")
    return ScalarField(H.grid, np.clip(H.values, -k, k), H.role)


@dataclass(frozen=True)
class ZeroSet:
    """Cells where h is (nearly) zero, and the one-cell dilation around them."""

    mask: np.ndarray
    dilated: np.ndarray


def zero_set(h: ScalarField, threshold: float) -> ZeroSet:
    if threshold < 0:
        raise ParameterError("threshold must be nonnegative")
    mask = h.values < threshold
    dil = mask.copy()
    dil |= np.roll(mask, 1, axis=1) | np.roll(mask, -1, axis=1)  # periodic y
    dil[1:, :] |= mask[:-1, :]
    dil[:-1, :] |= mask[1:, :]
    mask = mask.copy()
    mask.setflags(write=False)
    dil.setflags(write=False)
    return ZeroSet(mask, dil)


@dataclass(frozen=True)
class TestFunction:
    """Bounded test field that vanishes on a forbidden cell set."""

    field: ScalarField
    forbidden: np.ndarray

    def __post_init__(self):
        if self.forbidden.shape != self.field.grid.shape:
            raise SupportError("forbidden mask shape mismatch")
        if np.any(self.field.values[self.forbidden] != 0.0):
            raise SupportError("test function is nonzero on its forbidden set")


def make_test_functions(
    g: GridSpec,
    forbidden: np.ndarray,
    count: int,
    seed: int,
    amplitude: float = 1.0,
) -> list[TestFunction]:
    """Deterministic cosine-bell test functions clear of the forbidden set.

    Bells are periodic in y, vanish identically outside their radius, and are
    rejected (resampled) until bell support misses the forbidden cells and
    the x edges.
    """
    rng = np.random.default_rng(seed)
    X, Y = g.meshgrid()
    L = g.length
    out: list[TestFunction] = []
    forbidden_pts = np.column_stack(
        [X[forbidden], Y[forbidden]]
    ) if np.any(forbidden) else None
    attempts = 0
    while len(out) < count:
        attempts += 1
        if attempts > 1000 * count:
            raise ParameterError("could not place test functions off the forbidden set")
        radius = rng.uniform(0.08, 0.18) * min(g.width, g.length)
        cx = rng.uniform(radius + g.dx, g.width - radius - g.dx)
        cy = rng.uniform(0.0, g.length)
        if forbidden_pts is not None:
            ddy = np.abs(forbidden_pts[:, 1] - cy)
            ddy = np.minimum(ddy, L - ddy)
            dist = np.hypot(forbidden_pts[:, 0] - cx, ddy)
            if dist.min() <= radius + max(g.dx, g.dy):
                continue
        amp = amplitude * rng.uniform(0.3, 1.0) * rng.choice([-1.0, 1.0])
        ddy = np.abs(Y - cy)
        ddy = np.minimum(ddy, L - ddy)
        rho = np.hypot(X - cx, ddy)
        vals = np.where(rho < radius, amp * np.cos(0.5 * np.pi * rho / radius) ** 2, 0.0)
        vals[forbidden] = 0.0
        out.append(TestFunction(ScalarField(g, vals, "generic"), forbidden))
    return out


def _interior_indices(traj: Trajectory) -> range:
    if traj.n_snapshots < 3:
        raise InsufficientDataError("need at least 3 snapshots")
    return range(1, traj.n_snapshots - 1)


def _time_derivative(traj: Trajectory, i: int) -> np.ndarray:
    dt = traj.times[i + 1] - traj.times[i - 1]
    return (traj.snapshots[i + 1].values - traj.snapshots[i - 1].values) / dt


def entropy_residual(
    traj: Trajectory, phi: TestFunction, k: float, h: ScalarField
) -> dict:
    """Entropy-inequality quadrature per interior snapshot (must be <= 0).

    integral of H'(t) T_k(H - phi) + h^(10/3) |grad H|^2 grad H . grad T_k(H - phi),
    with H'(t) by centered snapshot differences.  Returns the values and max.
    """
    if k <= 0:
        raise ParameterError("truncation level k must be positive")
    g = traj.grid
    dA = g.cell_area
    w = h.values ** CAPACITY_EXPONENT
    values = []
    for i in _interior_indices(traj):
        Hd = _time_derivative(traj, i)
        Hi = traj.snapshots[i]
        u = Hi.values - phi.field.values
        Tk = np.clip(u, -k, k)
        gH = gradient(Hi)
        gT = gradient(ScalarField(g, Tk, "generic"))
        term1 = np.sum(Hd * Tk)
        term2 = np.sum(w * (gH.x**2 + gH.y**2) * (gH.x * gT.x + gH.y * gT.y))
        values.append(float((term1 + term2) * dA))
    return {"values": values, "max": max(values)}


def weak_residual(traj: Trajectory, phi: TestFunction, h: ScalarField) -> dict:
    """Weak-form quadrature per interior snapshot (must be ~ 0)."""
    if np.any(phi.field.values[phi.forbidden] != 0.0):
        raise SupportError("test function violates its support mask")
    g = traj.grid
    dA = g.cell_area
    w = h.values ** CAPACITY_EXPONENT
    values = []
    for i in _interior_indices(traj):
        Hd = _time_derivative(traj, i)
        Hi = traj.snapshots[i]
        u = Hi.values - phi.field.values
        gH = gradient(Hi)
        gU = gradient(ScalarField(g, u, "generic"))
        term1 = np.sum(Hd * u)
        term2 = np.sum(w * (gH.x**2 + gH.y**2) * (gH.x * gU.x + gH.y * gU.y))
        values.append(float((term1 + term2) * dA))
    return {"values": values, "max_abs": max(abs(v) for v in values)}


@dataclass(frozen=True)
class BallFamily:
    """Discs for the A4 estimate, with the extension rule for h beyond the
    domain: even reflection (fold) in x, periodic wrap in y."""

    centers: tuple[tuple[float, float], ...]
    radii: tuple[float, ...]
    width: float
    length: float

    def __post_init__(self):
        if len(self.centers) == 0 or len(self.centers) != len(self.radii):
            raise ParameterError("need one radius per center, at least one ball")
        if any(r <= 0 for r in self.radii):
            raise ParameterError("ball radii must be positive")

    def fold(self, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        xm = np.mod(x, 2.0 * self.width)
        xf = np.where(xm > self.width, 2.0 * self.width - xm, xm)
        yf = np.mod(y, self.length)
        return xf, yf


def default_ball_family(g: GridSpec, stride: int = 4, levels: int = 3) -> BallFamily:
    """Grid-centered balls with dyadic radii dx * 2^j, clipped to the domain."""
    centers = []
    radii = []
    rmax = min(g.width, g.length)
    for j in range(levels):
        r = min(g.dx * 2.0**j, rmax)
        for i in range(0, g.nx, stride):
            for jj in range(0, g.ny, stride):
                centers.append(((i + 0.5) * g.dx, (jj + 0.5) * g.dy))
                radii.append(r)
    return BallFamily(tuple(centers), tuple(radii), g.width, g.length)


def _disc_average(
    fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
    family: BallFamily,
    center: tuple[float, float],
    radius: float,
    n: int,
) -> float:
    """Polar midpoint average over a disc; exact for constant integrands."""
    rr = (np.arange(n) + 0.5) * radius / n
    tt = (np.arange(n) + 0.5) * 2.0 * np.pi / n
    R, T = np.meshgrid(rr, tt, indexing="ij")
    x = center[0] + R * np.cos(T)
    y = center[1] + R * np.sin(T)
    xf, yf = family.fold(x, y)
    vals = np.asarray(fn(xf, yf), dtype=float)
    wts = R  # dr dtheta factors cancel in the self-normalized ratio
    vmin, vmax = float(vals.min()), float(vals.max())
    if vmin == vmax:
        return vmin
    return float(np.sum(vals * wts) / np.sum(wts))


def muckenhoupt_a4(
    h_fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
    balls: BallFamily,
    quad_n: int = 64,
) -> dict:
    """Lower estimate of the A4 constant sup over the ball family.

    For each disc, computes (avg h^(10/3)) * (avg h^(-10/9))^3 by polar
    midpoint quadrature of the folded/wrapped extension.  A ball is flagged
    divergent (and skipped in the sup) when a node sees h <= 0 or when the
    negative-power average grows by more than 1.2x from quad_n/2 to quad_n.
    The result is a lower bound of the true supremum over all balls.
    """
    if quad_n < 32:
        raise ParameterError("quad_n must be at least 32")
    sup = -math.inf
    argmax = None
    diverged = []
    pos_fn = lambda xx, yy: np.asarray(h_fn(xx, yy)) ** CAPACITY_EXPONENT
    neg_fn = lambda xx, yy: np.asarray(h_fn(xx, yy)) ** (-10.0 / 9.0)
    for center, radius in zip(balls.centers, balls.radii):
        rr = (np.arange(quad_n) + 0.5) * radius / quad_n
        tt = (np.arange(quad_n) + 0.5) * 2.0 * np.pi / quad_n
        R, T = np.meshgrid(rr, tt, indexing="ij")
        x = center[0] + R * np.cos(T)
        y = center[1] + R * np.sin(T)
        xf, yf = balls.fold(x, y)
        hv = np.asarray(h_fn(xf, yf), dtype=float)
        if np.any(hv <= 0.0) or not np.all(np.isfinite(hv)):
            diverged.append(True)
            continue
        pos = _disc_average(pos_fn, balls, center, radius, quad_n)
        neg_full = _disc_average(neg_fn, balls, center, radius, quad_n)
        neg_half = _disc_average(neg_fn, balls, center, radius, max(quad_n // 2, 8))
        if neg_half > 0 and neg_full / neg_half > 1.2:
            diverged.append(True)
            continue
        diverged.append(False)
        value = pos * neg_full**3
        if value > sup:
            sup = value
            argmax = (center, radius)
    return {"sup_estimate": sup, "argmax_ball": argmax, "diverged": diverged}
