import numpy as np
import pytest

import sediment_lab as sl

# Canonical eroding ridge with genuine outflow at x = W (compatible-but-steep
# surface at the river row).  Used by the run-based certification criteria.
CANONICAL = dict(a=-0.75, b=0.0, c=1.5, d=0.3, h1=1.0, H1=1.0, x0=0.0, shape="ridge")

# Base vanishing at x = W: all boundary rows compatible, erosion stays
# concentrated uphill.  Used by the transport-alignment criteria.
ALIGNMENT = dict(a=-1.0, b=0.0, c=1.5, d=0.3, h1=1.0, H1=1.0, x0=0.0, shape="ridge")

# Oblique ridge with the crest crossing the interior; base stays well away
# from zero so all derivatives are bounded on the residual mask.
OBLIQUE = dict(a=-0.5, b=0.2, c=1.5, d=0.3, h1=0.7, H1=2.0, x0=0.3, y0=0.4, shape="ridge")


def canonical_params(**over):
    cfg = {**CANONICAL, **over}
    return sl.SeparableParams(**cfg)


def alignment_params(**over):
    cfg = {**ALIGNMENT, **over}
    return sl.SeparableParams(**cfg)


def oblique_params(**over):
    cfg = {**OBLIQUE, **over}
    return sl.SeparableParams(**cfg)


def ridge_run(params, n, t_end, stride=25):
    g = sl.make_grid(1.0, 1.0, n, n)
    h, H0 = sl.ridge_fields(params, g)
    opts = sl.EvolveOptions(t_end=t_end, cfl_safety=0.4,
                            snapshot_stride=stride, max_steps=400_000)
    return sl.run(H0, h, g, opts)


@pytest.fixture(scope="session")
def canonical_run_64():
    return ridge_run(canonical_params(), 64, t_end=0.02)


@pytest.fixture(scope="session")
def canonical_run_32():
    return ridge_run(canonical_params(), 32, t_end=0.02)


@pytest.fixture(scope="session")
def alignment_run_16():
    return ridge_run(alignment_params(), 16, t_end=0.06, stride=20)


@pytest.fixture(scope="session")
def alignment_run_32():
    return ridge_run(alignment_params(), 32, t_end=0.06, stride=20)


@pytest.fixture(scope="session")
def alignment_solution_16(alignment_run_16):
    return _solve_alignment(alignment_run_16)


@pytest.fixture(scope="session")
def alignment_solution_32(alignment_run_32):
    return _solve_alignment(alignment_run_32)


def _solve_alignment(traj):
    idx = traj.n_snapshots // 2
    pair = sl.build_measures(traj, idx)
    plan = sl.solve_primal_exact(pair.mu, pair.nu)
    dual = sl.solve_dual(pair.mu, pair.nu)
    dirs = sl.displacement_directions(plan, pair.mu, eps_mass=1e-12)
    report = sl.alignment_report(dirs, dual, traj.snapshots[idx], eps_grad=1e-10)
    return {
        "index": idx, "pair": pair, "plan": plan, "dual": dual,
        "directions": dirs, "report": report, "traj": traj,
    }
