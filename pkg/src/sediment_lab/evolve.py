"""Explicit time integration of the erosion equation with per-step monitors.

Forward Euler in the conservative form H' = H + dt * div(flux), so the
volume change per step equals the boundary face flux exactly, and the
transport energy and L2 norm are monitored for the dissipation guarantees
the flow carries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import (
    CAPACITY_EXPONENT,
    GridSpec,
    ScalarField,
    boundary_face_flux,
    divergence,
    field_norms,
    gradient,
    sediment_flux,
)


class StabilityError(RuntimeError):
    """Requested time step exceeds the explicit stability bound."""


class ComparisonError(ValueError):
    """Trajectories are not comparable (grid, water depth, or times differ)."""


class FitError(ValueError):
    """Decay-law fit is impossible on this trajectory."""


@dataclass(frozen=True)
class EvolveOptions:
    """Controls for run(): horizon, step safety, snapshot cadence.

    fixed_dt pins the step (still validated against stability each step);
    it exists so that two runs can share snapshot times exactly.
    """

    t_end: float
    cfl_safety: float = 0.4
    max_steps: int = 1_000_000
    snapshot_stride: int = 10
    eps_grad: float = 1e-10
    fixed_dt: float | None = None

    def __post_init__(self):
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if not 0 < self.cfl_safety <= 1:
            raise ValueError("cfl_safety must lie in (0, 1]")
        if self.max_steps < 1 or self.snapshot_stride < 1:
            raise ValueError("max_steps and snapshot_stride must be >= 1")


@dataclass(frozen=True)
class Diagnostics:
    """Per-step record: state norms, volume, and the conservation check.

    mass_balance_residual is |dV/dt - boundary_flux| with dV/dt the volume
    rate of the update itself (cell sum of the divergence), which the
    conservative form makes equal to the boundary face flux identically.
    """

    step: int
    t: float
    dt: float
    energy: float
    l2: float
    volume: float
    boundary_flux: float
    mass_balance_residual: float
    min: float
    max: float


@dataclass
class Trajectory:
    """Snapshots of the surface plus the full per-step diagnostic record."""

    grid: GridSpec
    h: ScalarField
    times: list[float]
    snapshots: list[ScalarField]
    diagnostics: list[Diagnostics]
    completed: bool = True

    @property
    def n_snapshots(self) -> int:
        return len(self.snapshots)

    def snapshot_l2(self) -> np.ndarray:
        dA = self.grid.cell_area
        return np.array(
            [math.sqrt(float(np.sum(s.values**2)) * dA) for s in self.snapshots]
        )


def stable_dt(
    H: ScalarField,
    h: ScalarField,
    g: GridSpec,
    cfl_safety: float = 0.4,
    cap: float = math.inf,
) -> float:
    """Explicit bound dt = safety * 0.25 * min(dx^2, dy^2) / max coefficient.

    The quasilinear diffusion coefficient is 3 h^(10/3) |grad H|^2; a flat or
    dry state is floored so the degenerate case returns the cap.
    """
    grad = gradient(H)
    coef = 3.0 * h.values ** CAPACITY_EXPONENT * (grad.x**2 + grad.y**2)
    peak = max(float(coef.max()), 1e-30)
    dt = cfl_safety * 0.25 * min(g.dx**2, g.dy**2) / peak
    return min(dt, cap)


def _advance(H: ScalarField, h: ScalarField, dt: float):
    q = sediment_flux(H, h)
    div = divergence(q)
    new_values = H.values + dt * div.values
    rate = float(np.sum(div.values) * H.grid.cell_area)
    return ScalarField(H.grid, new_values, "surface"), boundary_face_flux(q), rate


def step(H: ScalarField, h: ScalarField, g: GridSpec, dt: float) -> ScalarField:
    """One forward Euler step; refuses dt beyond the stability bound."""
    limit = stable_dt(H, h, g, cfl_safety=1.0)
    if dt > limit * (1.0 + 1e-12):
        raise StabilityError(f"dt={dt:.3e} exceeds stability bound {limit:.3e}")
    new_H, _, _ = _advance(H, h, dt)
    return new_H


def run(
    H0: ScalarField, h: ScalarField, g: GridSpec, opts: EvolveOptions
) -> Trajectory:
    """Integrate to t_end with stability-bounded steps.

    Snapshots are recorded at t=0, every snapshot_stride steps, and at the
    final state; diagnostics are recorded every step.  Stops early with
    completed=False when max_steps is hit.
    """
    if H0.grid != g or h.grid != g:
        raise ValueError("fields must live on the run grid")
    if np.any(h.values < 0):
        raise ValueError("water depth must be nonnegative")

    traj = Trajectory(g, h, [0.0], [H0], [], completed=True)
    H = H0
    t = 0.0
    dA = g.cell_area
    k = 0
    while t < opts.t_end * (1.0 - 1e-12):
        if k >= opts.max_steps:
            traj.completed = False
            break
        if opts.fixed_dt is not None:
            dt = min(opts.fixed_dt, opts.t_end - t)
            limit = stable_dt(H, h, g, cfl_safety=1.0)
            if dt > limit * (1.0 + 1e-12):
                raise StabilityError(
                    f"fixed dt={dt:.3e} exceeds stability bound {limit:.3e} at step {k}"
                )
        else:
            dt = stable_dt(H, h, g, opts.cfl_safety, cap=opts.t_end - t)
        H, flux, rate = _advance(H, h, dt)
        if not np.all(np.isfinite(H.values)):
            raise FloatingPointError(f"non-finite state at step {k}")
        t += dt
        k += 1
        new_volume = float(np.sum(H.values) * dA)
        norms = field_norms(H, h)
        traj.diagnostics.append(
            Diagnostics(
                step=k,
                t=t,
                dt=dt,
                energy=norms["energy"],
                l2=norms["l2"],
                volume=new_volume,
                boundary_flux=flux,
                mass_balance_residual=abs(rate - flux),
                min=float(H.values.min()),
                max=float(H.values.max()),
            )
        )
        if k % opts.snapshot_stride == 0:
            traj.times.append(t)
            traj.snapshots.append(H)
    if traj.times[-1] != t:
        traj.times.append(t)
        traj.snapshots.append(H)
    return traj


def contraction_check(traj_a: Trajectory, traj_b: Trajectory) -> dict:
    """Snapshot-wise L2 distance must be non-increasing for a shared h."""
    if traj_a.grid != traj_b.grid:
        raise ComparisonError("trajectories live on different grids")
    if not np.array_equal(traj_a.h.values, traj_b.h.values):
        raise ComparisonError("trajectories use different water depths")
    if len(traj_a.times) != len(traj_b.times) or not np.allclose(
        traj_a.times, traj_b.times, rtol=0, atol=1e-14
    ):
        raise ComparisonError("trajectories have different snapshot times")

    dA = traj_a.grid.cell_area
    dists = np.array(
        [
            math.sqrt(float(np.sum((sa.values - sb.values) ** 2)) * dA)
            for sa, sb in zip(traj_a.snapshots, traj_b.snapshots)
        ]
    )
    slack = 1e-10 * (dists[0] + 1.0)
    increments = np.diff(dists)
    max_violation = float(max(increments.max(initial=-math.inf), 0.0)) if len(
        increments
    ) else 0.0
    return {
        "monotone": bool(np.all(increments <= slack)),
        "max_violation": max_violation,
        "distances": dists,
    }


def fit_decay(traj: Trajectory) -> dict:
    """Least-squares fit of ||H(t)||/||H(0)|| to (1 + 2 r t)^(-1/2).

    The model is linear in t after the transform (y^-2 - 1)/2 = r t, so the
    fit is a one-parameter regression through the origin.
    """
    if traj.n_snapshots < 4:
        raise FitError("need at least 4 snapshots to fit the decay law")
    t = np.asarray(traj.times)
    y = traj.snapshot_l2()
    if y[0] <= 0:
        raise FitError("initial norm is zero; decay law undefined")
    y = y / y[0]
    if np.any(y <= 0):
        raise FitError("trajectory norm hits zero; decay law undefined")
    z = (y**-2.0 - 1.0) / 2.0
    denom = float(np.dot(t, t))
    if denom == 0:
        raise FitError("all snapshots at t=0")
    r = float(np.dot(t, z) / denom)
    model = (1.0 + 2.0 * r * t) ** -0.5
    residual = float(np.sqrt(np.mean((model - y) ** 2)))
    return {"r_fit": r, "residual": residual}


def dissipation_report(traj: Trajectory) -> dict:
    """Per-step monotonicity of energy and L2 within the explicit-step slack."""
    if not traj.diagnostics:
        return {"energy_monotone": True, "l2_monotone": True,
                "max_energy_increment": 0.0, "max_l2_increment": 0.0}
    h = traj.h
    norms0 = field_norms(traj.snapshots[0], h)
    energies = np.array([norms0["energy"]] + [d.energy for d in traj.diagnostics])
    l2s = np.array([norms0["l2"]] + [d.l2 for d in traj.diagnostics])
    e_slack = 1e-10 * (energies[0] + 1.0)
    l_slack = 1e-10 * (l2s[0] + 1.0)
    de = np.diff(energies)
    dl = np.diff(l2s)
    return {
        "energy_monotone": bool(np.all(de <= e_slack)),
        "l2_monotone": bool(np.all(dl <= l_slack)),
        "max_energy_increment": float(de.max(initial=0.0)),
        "max_l2_increment": float(dl.max(initial=0.0)),
    }


def mass_balance_report(traj: Trajectory) -> dict:
    """Worst per-step conservation mismatch, relative to the flux scale."""
    worst = 0.0
    for d in traj.diagnostics:
        scale = max(abs(d.boundary_flux), 1e-30)
        worst = max(worst, d.mass_balance_residual / scale)
    return {"max_relative_residual": worst}
