"""Instantaneous L1 optimal transport of eroded sediment.

Builds the erosion-rate and outflow measures from a trajectory instant,
solves the Monge-Kantorovich problem with cost |x - y| (exact network
simplex, or entropic scaling beyond the exact-size cap), extracts
displacement directions, and scores their alignment with the downhill
direction -grad H / |grad H| and with the dual potential's gradient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._simplex import solve_transportation
from .grid import GridSpec, ScalarField, VectorField, gradient
from .evolve import Trajectory


class NoTransportError(RuntimeError):
    """No outflow at the requested instant; the transport problem is empty."""


class BalanceError(ValueError):
    """Measures do not carry equal total mass."""


class SizeCapError(ValueError):
    """Instance too large for the exact solver; use solve_sinkhorn."""


class MarginalError(ValueError):
    """Plan marginals do not match the measures."""


class ConvergenceError(RuntimeError):
    """Sinkhorn scaling did not reach the marginal tolerance."""


class EmptyComparisonError(RuntimeError):
    """No cells left to compare after masking."""


@dataclass(frozen=True)
class DiscreteMeasure:
    """Nonnegative mass per cell (density times cell area)."""

    grid: GridSpec
    masses: np.ndarray

    def __post_init__(self):
        masses = np.array(self.masses, dtype=float, copy=True)
        if masses.shape != self.grid.shape:
            raise ValueError("mass array shape does not match grid")
        if not np.all(np.isfinite(masses)):
            raise ValueError("masses must be finite")
        if np.any(masses < 0):
            raise ValueError("masses must be nonnegative")
        masses.setflags(write=False)
        object.__setattr__(self, "masses", masses)

    @property
    def total(self) -> float:
        return float(self.masses.sum())

    @classmethod
    def from_density(cls, grid: GridSpec, density: np.ndarray) -> "DiscreteMeasure":
        return cls(grid, np.asarray(density, dtype=float) * grid.cell_area)

    def scaled(self, factor: float) -> "DiscreteMeasure":
        return DiscreteMeasure(self.grid, self.masses * factor)


@dataclass(frozen=True)
class TransportPlan:
    """Sparse coupling: (source cell, target cell, mass) triples and cost.

    Cell indices are flat C-order indices into the grid; cost is the mass
    moved weighted by Euclidean center distance.  entropic_bound is set by
    the Sinkhorn solver (guaranteed cost excess over the exact optimum).
    """

    grid: GridSpec
    source: np.ndarray
    target: np.ndarray
    mass: np.ndarray
    cost: float
    entropic_bound: float | None = None

    def __post_init__(self):
        for name in ("source", "target", "mass"):
            arr = np.array(getattr(self, name), copy=True)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (len(self.source) == len(self.target) == len(self.mass)):
            raise ValueError("ragged plan arrays")
        if np.any(self.mass < 0):
            raise ValueError("plan masses must be nonnegative")

    def marginals(self) -> tuple[np.ndarray, np.ndarray]:
        ncells = self.grid.nx * self.grid.ny
        row = np.zeros(ncells)
        col = np.zeros(ncells)
        np.add.at(row, self.source, self.mass)
        np.add.at(col, self.target, self.mass)
        return row, col

    def check_marginals(
        self, mu: DiscreteMeasure, nu: DiscreteMeasure, rtol: float = 1e-9
    ) -> float:
        row, col = self.marginals()
        scale = max(mu.total, nu.total, 1e-30)
        err = max(
            float(np.abs(row - mu.masses.ravel()).max()),
            float(np.abs(col - nu.masses.ravel()).max()),
        )
        return err / scale


@dataclass(frozen=True)
class DualPotential:
    """Kantorovich potential on cells and the attained dual objective."""

    u: ScalarField
    objective: float

    def lipschitz_violation(self, seed: int = 0, n_pairs: int = 10_000) -> float:
        """Worst |u(x)-u(y)| - |x-y| over grid neighbors and random pairs."""
        g = self.u.grid
        vals = self.u.values
        worst = -math.inf
        dxs = np.abs(np.diff(vals, axis=0)).max(initial=0.0)
        worst = max(worst, float(dxs) - g.dx)
        wrap = np.abs(vals - np.roll(vals, 1, axis=1)).max(initial=0.0)
        worst = max(worst, float(wrap) - g.dy)
        coords = g.cell_coordinates()
        flat = vals.ravel()
        rng = np.random.default_rng(seed)
        n = len(flat)
        a = rng.integers(0, n, size=n_pairs)
        b = rng.integers(0, n, size=n_pairs)
        dist = np.hypot(
            coords[a, 0] - coords[b, 0], coords[a, 1] - coords[b, 1]
        )
        viol = np.abs(flat[a] - flat[b]) - dist
        return max(worst, float(viol.max(initial=-math.inf)))


@dataclass(frozen=True)
class MeasurePair:
    mu: DiscreteMeasure
    nu: DiscreteMeasure
    erosion_ok: bool
    one_sided: bool
    window_flux: float


def build_measures(
    traj: Trajectory,
    index: int,
    h: ScalarField | None = None,
    *,
    boundary_nu: bool = False,
) -> MeasurePair:
    """Erosion-rate measure mu and outflow measure nu at snapshot `index`.

    mu has density -dH/dt (centered snapshot difference; one-sided and
    flagged at the ends), clipped at 0; the clip trips erosion_ok when it
    exceeds 1e-8 of the peak density.  nu spreads the window-averaged
    boundary outflow uniformly over the domain (or, experimentally, over the
    last column in proportion to the local face flux).  mu is rescaled to
    match nu's total exactly; the window average makes that adjustment
    roundoff-sized whenever nothing was clipped.
    """
    del h  # the trajectory carries the water depth; kept for call symmetry
    g = traj.grid
    ns = traj.n_snapshots
    if ns < 2:
        raise NoTransportError("trajectory too short for a rate estimate")
    if not 0 <= index < ns:
        raise IndexError(f"snapshot index {index} out of range")
    one_sided = index in (0, ns - 1)
    lo = max(index - 1, 0)
    hi = min(index + 1, ns - 1)
    t0, t1 = traj.times[lo], traj.times[hi]
    dHdt = (traj.snapshots[hi].values - traj.snapshots[lo].values) / (t1 - t0)

    # window-averaged boundary flux: exact by per-step conservation
    flux_sum = 0.0
    dt_sum = 0.0
    for d in traj.diagnostics:
        if t0 + 1e-15 < d.t <= t1 + 1e-15:
            flux_sum += d.dt * d.boundary_flux
            dt_sum += d.dt
    if dt_sum == 0.0:
        raise NoTransportError("no steps inside the rate window")
    window_flux = flux_sum / dt_sum
    if window_flux >= 0.0:
        raise NoTransportError(
            f"boundary flux {window_flux:.3e} is not an outflow; nothing to transport"
        )

    density = -dHdt
    clip = np.minimum(density, 0.0)
    peak = float(np.abs(density).max())
    erosion_ok = float(-clip.min(initial=0.0)) <= 1e-8 * max(peak, 1e-30)
    density = np.maximum(density, 0.0)
    mu = DiscreteMeasure.from_density(g, density)

    total = -window_flux
    if boundary_nu:
        nu_mass = np.zeros(g.shape)
        q_line = np.array(
            [max(-d, 0.0) for d in _last_face_flux(traj, index)]
        )
        if q_line.sum() <= 0:
            raise NoTransportError("boundary flux line density is not an outflow")
        nu_mass[-1, :] = q_line / q_line.sum() * total
        nu = DiscreteMeasure(g, nu_mass)
    else:
        nu = DiscreteMeasure(g, np.full(g.shape, total / (g.nx * g.ny)))
    if mu.total <= 0:
        raise NoTransportError("erosion density vanished after clipping")
    mu = mu.scaled(nu.total / mu.total)
    return MeasurePair(mu, nu, erosion_ok, one_sided, window_flux)


def _last_face_flux(traj: Trajectory, index: int) -> np.ndarray:
    from .grid import sediment_flux

    q = sediment_flux(traj.snapshots[index], traj.h)
    return q.x[-1, :] * traj.grid.dy


def _reduce(mu: DiscreteMeasure, nu: DiscreteMeasure):
    """Common-mass reduction: transport only (mu - nu)+ onto (nu - mu)+.

    For the |x - y| cost an optimal plan leaves shared mass in place, so the
    reduced optimum plus the stay-put diagonal is optimal for the original
    pair.
    """
    a = mu.masses.ravel()
    b = nu.masses.ravel()
    shared = np.minimum(a, b)
    pos = a - shared
    neg = b - shared
    src = np.flatnonzero(pos > 0)
    dst = np.flatnonzero(neg > 0)
    return shared, src, dst, pos[src], neg[dst]


def _check_balance(mu: DiscreteMeasure, nu: DiscreteMeasure) -> None:
    scale = max(mu.total, nu.total, 1e-30)
    if abs(mu.total - nu.total) > 1e-9 * scale:
        raise BalanceError(
            f"totals differ: {mu.total!r} vs {nu.total!r}"
        )


EXACT_SIZE_CAP = 4096


def solve_primal_exact(
    mu: DiscreteMeasure, nu: DiscreteMeasure, size_cap: int = EXACT_SIZE_CAP
) -> TransportPlan:
    """Exact minimum-cost coupling for cost |x_i - x_j| by network simplex.

    Optimality is certified internally against the dual potentials (strong
    duality to 1e-8 relative).
    """
    _check_balance(mu, nu)
    g = mu.grid
    shared, src, dst, a, b = _reduce(mu, nu)
    if len(src) + len(dst) > size_cap:
        raise SizeCapError(
            f"support {len(src) + len(dst)} exceeds cap {size_cap}; use solve_sinkhorn"
        )
    diag = np.flatnonzero(shared > 0)
    sources = [diag]
    targets = [diag]
    masses = [shared[diag]]
    cost_val = 0.0
    if len(src) and len(dst):
        b = b * (a.sum() / b.sum())
        coords = g.cell_coordinates()
        C = np.hypot(
            coords[src, 0][:, None] - coords[dst, 0][None, :],
            coords[src, 1][:, None] - coords[dst, 1][None, :],
        )
        flows, u, v, cost_val = solve_transportation(C, a, b)
        dual_obj = float(np.dot(u, a) + np.dot(v, b))
        if abs(cost_val - dual_obj) > 1e-8 * (abs(cost_val) + 1.0):
            raise RuntimeError(
                f"simplex certificate failed: gap {cost_val - dual_obj:.3e}"
            )
        items = sorted(flows.items())
        sources.append(np.array([src[i] for (i, _), f in items if f > 0], dtype=int))
        targets.append(np.array([dst[j] for (_, j), f in items if f > 0], dtype=int))
        masses.append(np.array([f for _, f in items if f > 0]))
    return TransportPlan(
        g,
        np.concatenate([np.asarray(s, dtype=int) for s in sources]),
        np.concatenate([np.asarray(t, dtype=int) for t in targets]),
        np.concatenate(masses),
        float(cost_val),
    )


def solve_dual(mu: DiscreteMeasure, nu: DiscreteMeasure,
               size_cap: int = EXACT_SIZE_CAP) -> DualPotential:
    """Optimal 1-Lipschitz potential maximizing sum u (mu - nu).

    Reads the network-simplex node potentials and closes them over all cells
    with u(x) = min over sink atoms of (-v_j + |x - x_j|), which is
    1-Lipschitz everywhere and preserves the optimal objective.
    """
    _check_balance(mu, nu)
    g = mu.grid
    _, src, dst, a, b = _reduce(mu, nu)
    coords = g.cell_coordinates()
    if len(src) == 0 or len(dst) == 0:
        u_vals = np.zeros(g.shape)
        objective = 0.0
    else:
        if len(src) + len(dst) > size_cap:
            raise SizeCapError(
                f"support {len(src) + len(dst)} exceeds cap {size_cap}"
            )
        b = b * (a.sum() / b.sum())
        C = np.hypot(
            coords[src, 0][:, None] - coords[dst, 0][None, :],
            coords[src, 1][:, None] - coords[dst, 1][None, :],
        )
        _, _, v, cost_val = solve_transportation(C, a, b)
        dist_all = np.hypot(
            coords[:, 0][:, None] - coords[dst, 0][None, :],
            coords[:, 1][:, None] - coords[dst, 1][None, :],
        )
        u_flat = np.min(dist_all - v[None, :], axis=1)
        diff = (mu.masses - nu.masses).ravel()
        objective = float(np.dot(u_flat, diff))
        if abs(objective - cost_val) > 1e-8 * (abs(cost_val) + 1.0):
            raise RuntimeError(
                f"dual closure lost the objective: {objective} vs {cost_val}"
            )
        u_vals = u_flat.reshape(g.shape)
    return DualPotential(ScalarField(g, u_vals, "generic"), objective)


def solve_sinkhorn(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    reg_eps: float,
    max_iter: int = 20_000,
    tol: float = 1e-9,
) -> TransportPlan:
    """Entropic-regularized coupling by log-domain alternating scaling.

    The returned cost upper-bounds the exact optimum; entropic_bound records
    the guaranteed excess reg_eps * log(support size) * total mass.  Raises
    ConvergenceError with the residual when the marginal violation stays
    above tol after max_iter sweeps.
    """
    if reg_eps <= 0:
        raise ValueError("reg_eps must be positive")
    _check_balance(mu, nu)
    g = mu.grid
    shared, src, dst, a, b = _reduce(mu, nu)
    diag = np.flatnonzero(shared > 0)
    if len(src) == 0 or len(dst) == 0:
        return TransportPlan(
            g, diag, diag, shared[diag], 0.0,
            entropic_bound=0.0,
        )
    b = b * (a.sum() / b.sum())
    coords = g.cell_coordinates()
    C = np.hypot(
        coords[src, 0][:, None] - coords[dst, 0][None, :],
        coords[src, 1][:, None] - coords[dst, 1][None, :],
    )
    loga = np.log(a)
    logb = np.log(b)
    f = np.zeros(len(src))
    gpot = np.zeros(len(dst))
    K = -C / reg_eps

    def logsumexp(M, axis):
        mx = M.max(axis=axis, keepdims=True)
        return (mx + np.log(np.sum(np.exp(M - mx), axis=axis, keepdims=True))).squeeze(axis)

    violation = math.inf
    for _ in range(max_iter):
        f = reg_eps * (loga - logsumexp(K + (f[:, None] + gpot[None, :]) / reg_eps, 1)) + f
        gpot = reg_eps * (logb - logsumexp(K + (f[:, None] + gpot[None, :]) / reg_eps, 0)) + gpot
        P = np.exp(K + (f[:, None] + gpot[None, :]) / reg_eps)
        row_err = float(np.abs(P.sum(axis=1) - a).sum())
        col_err = float(np.abs(P.sum(axis=0) - b).sum())
        violation = max(row_err, col_err) / max(a.sum(), 1e-30)
        if violation <= tol:
            break
    else:
        raise ConvergenceError(
            f"sinkhorn stalled: marginal violation {violation:.3e} > tol {tol:.3e}"
        )

    cost_val = float(np.sum(P * C))
    nsup = max(len(src), len(dst), 2)
    bound = reg_eps * math.log(nsup) * mu.total
    si, ti = np.nonzero(P)
    return TransportPlan(
        g,
        np.concatenate([diag, src[si]]),
        np.concatenate([diag, dst[ti]]),
        np.concatenate([shared[diag], P[si, ti]]),
        cost_val,
        entropic_bound=bound,
    )


@dataclass(frozen=True)
class DirectionField:
    """Unit displacement directions with a validity mask and mass weights."""

    vectors: VectorField
    valid: np.ndarray
    weights: np.ndarray


def displacement_directions(
    plan: TransportPlan, mu: DiscreteMeasure, eps_mass: float
) -> DirectionField:
    """Barycentric displacement direction per source cell.

    s(x_i) = sum_j pi_ij x_j / mu_i; cells with mu_i <= eps_mass or a
    displacement shorter than dx/10 are masked invalid.
    """
    g = plan.grid
    row, _ = plan.marginals()
    scale = max(mu.total, 1e-30)
    if float(np.abs(row - mu.masses.ravel()).max()) > 1e-9 * scale:
        raise MarginalError("plan row marginals do not match mu")
    coords = g.cell_coordinates()
    ncells = len(coords)
    sx = np.zeros(ncells)
    sy = np.zeros(ncells)
    np.add.at(sx, plan.source, plan.mass * coords[plan.target, 0])
    np.add.at(sy, plan.source, plan.mass * coords[plan.target, 1])
    m = mu.masses.ravel()
    has_mass = m > eps_mass
    sx[has_mass] /= m[has_mass]
    sy[has_mass] /= m[has_mass]
    dxv = sx - coords[:, 0]
    dyv = sy - coords[:, 1]
    norm = np.hypot(dxv, dyv)
    valid = has_mass & (norm >= g.dx / 10.0)
    ux = np.where(valid, np.divide(dxv, norm, out=np.zeros_like(dxv), where=norm > 0), 0.0)
    uy = np.where(valid, np.divide(dyv, norm, out=np.zeros_like(dyv), where=norm > 0), 0.0)
    vectors = VectorField(
        g, ux.reshape(g.shape), uy.reshape(g.shape), "cell"
    )
    return DirectionField(vectors, valid.reshape(g.shape), m.reshape(g.shape))


def alignment_report(
    directions: DirectionField,
    dual: DualPotential,
    H: ScalarField,
    eps_grad: float,
) -> dict:
    """Mass-weighted alignment of transport directions with -grad H / |grad H|.

    mean_cosine_plan scores the barycentric plan directions,
    mean_cosine_dual the negative dual-potential gradient; cells without a
    usable surface gradient (|grad H| < eps_grad) or without a valid
    direction are excluded, and excluded_fraction is their share of the
    erosion mass.
    """
    g = H.grid
    gH = gradient(H)
    mag = gH.magnitude()
    grad_ok = mag >= eps_grad
    ref_x = np.where(grad_ok, -gH.x / np.where(grad_ok, mag, 1.0), 0.0)
    ref_y = np.where(grad_ok, -gH.y / np.where(grad_ok, mag, 1.0), 0.0)

    w = directions.weights
    total_w = float(w.sum())
    if total_w <= 0:
        raise EmptyComparisonError("no erosion mass to weight the comparison")

    plan_ok = directions.valid & grad_ok
    if not np.any(plan_ok):
        raise EmptyComparisonError("no valid cells for the plan comparison")
    cos_plan = (
        directions.vectors.x * ref_x + directions.vectors.y * ref_y
    )
    wp = w * plan_ok
    mean_plan = float(np.sum(cos_plan * wp) / wp.sum())
    frac_above = float(np.sum(wp * (cos_plan > 0.9)) / wp.sum())

    gu = gradient(dual.u)
    gu_mag = gu.magnitude()
    dual_ok = grad_ok & (gu_mag >= eps_grad)
    if not np.any(dual_ok):
        raise EmptyComparisonError("no valid cells for the dual comparison")
    cos_dual = np.where(
        dual_ok,
        (-gu.x * ref_x - gu.y * ref_y) / np.where(dual_ok, gu_mag, 1.0),
        0.0,
    )
    wd = w * dual_ok
    mean_dual = float(np.sum(cos_dual * wd) / wd.sum())

    excluded = float(np.sum(w * ~plan_ok) / total_w)
    return {
        "mean_cosine_plan": mean_plan,
        "mean_cosine_dual": mean_dual,
        "fraction_above_0.9": frac_above,
        "excluded_fraction": excluded,
    }
