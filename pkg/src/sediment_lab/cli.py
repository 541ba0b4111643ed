"""Scenario runner: simulate / verify / transport / heatmap subcommands.

Every artifact is deterministic for a fixed configuration: 17-significant-
digit decimal CSV, JSON with sorted keys, P2 graymaps, and a manifest of
content hashes.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import analysis, analytic, evolve, transport
from .config import ConfigError, RunConfig, default_config, parse_config, serialize_config
from .grid import GridSpec, ScalarField, gradient, make_grid

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_STABILITY = 3
EXIT_NO_TRANSPORT = 4
EXIT_CERTIFICATION = 5
EXIT_IO = 6

SEED_ENV_VAR = "SEDIMENT_LAB_SEED"


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def build_grid(cfg: RunConfig) -> GridSpec:
    s = cfg.grid
    return make_grid(s["W"], s["L"], s["nx"], s["ny"])


def _hill_params(cfg: RunConfig) -> analytic.HillParams:
    s = cfg.surface
    c, beta, H1, h1 = s["c"], s["beta"], s["H1"], s["h1"]
    d = 0.3 * (1.0 - 2.0 * c)
    gamma = -0.3 * (1.0 + 2.0 * beta)
    r = 16.0 * H1**2 * c**4 / beta
    return analytic.HillParams(
        h1=h1, H1=H1, c=c, d=d, r=r, beta=beta, gamma=gamma,
        x0=s["x0"], y0=s["y0"],
    )


def surface_params(cfg: RunConfig):
    """Family parameters for analytic surfaces; None for family = file."""
    s = cfg.surface
    fam = s["family"]
    if fam == "file":
        return None
    if fam == "hill":
        return _hill_params(cfg)
    return analytic.SeparableParams(
        a=s["a"], b=s["b"], c=s["c"], d=s["d"], h1=s["h1"], H1=s["H1"],
        x0=s["x0"], y0=s["y0"], shape=fam,
    )


def build_fields(cfg: RunConfig, g: GridSpec) -> tuple[ScalarField, ScalarField]:
    """(water depth, surface) from the configured family or input files."""
    fam = cfg.surface["family"]
    if fam == "file":
        H = read_field_csv(Path(cfg.surface["path_surface"]), g, "surface", "H")
        h = read_field_csv(Path(cfg.surface["path_water"]), g, "water", "h")
        return h, H
    p = surface_params(cfg)
    if fam == "ridge":
        return analytic.ridge_fields(p, g)
    if fam == "mountain":
        return analytic.mountain_fields(p, g)
    return analytic.hill_fields(p, g, 0.0)


def write_field_csv(field: ScalarField, path: Path, column: str) -> None:
    g = field.grid
    X, Y = g.meshgrid()
    with open(path, "w", newline="\n") as f:
        f.write(f"x,y,{column}\n")
        for i in range(g.nx):
            for j in range(g.ny):
                f.write(f"{_fmt(X[i, j])},{_fmt(Y[i, j])},{_fmt(field.values[i, j])}\n")


def read_field_csv(path: Path, g: GridSpec, role: str, column: str) -> ScalarField:
    with open(path) as f:
        header = f.readline().strip()
        if header != f"x,y,{column}":
            raise ConfigError(f"{path}: expected header x,y,{column}, got {header!r}")
        vals = np.full(g.shape, np.nan)
        X, Y = g.meshgrid()
        tol = 1e-9 * max(g.width, g.length)
        k = 0
        for line in f:
            if not line.strip():
                continue
            xs, ys, vs = line.split(",")
            i, j = divmod(k, g.ny)
            if abs(float(xs) - X[i, j]) > tol or abs(float(ys) - Y[i, j]) > tol:
                raise ConfigError(f"{path}: cell coordinates do not match the grid")
            vals[i, j] = float(vs)
            k += 1
    if k != g.nx * g.ny:
        raise ConfigError(f"{path}: expected {g.nx * g.ny} cells, found {k}")
    return ScalarField(g, vals, role)


def export_heatmap(field: ScalarField, path: Path) -> None:
    """ASCII portable graymap, 255 levels, linear min-max scaling.

    Row-major with y increasing downward: image row j is the y = (j+1/2) dy
    line, columns run along x.  A constant field degenerates to all zeros
    with a warning.
    """
    g = field.grid
    lo = float(field.values.min())
    hi = float(field.values.max())
    if hi == lo:
        warnings.warn("constant field: heatmap degenerates to all-zero image")
        levels = np.zeros(g.shape, dtype=int)
    else:
        levels = np.rint(255.0 * (field.values - lo) / (hi - lo)).astype(int)
    with open(path, "w", newline="\n") as f:
        f.write(f"P2\n{g.nx} {g.ny}\n255\n")
        for j in range(g.ny):
            f.write(" ".join(str(int(levels[i, j])) for i in range(g.nx)) + "\n")


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    digest.update(path.read_bytes())
    return digest.hexdigest()


def _write_manifest(out: Path, cfg: RunConfig, names: list[str]) -> None:
    manifest = {
        "config": serialize_config(cfg),
        "files": {name: _sha256(out / name) for name in sorted(names)},
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n"
    )


def _evolve_options(cfg: RunConfig) -> evolve.EvolveOptions:
    t = cfg.time
    return evolve.EvolveOptions(
        t_end=t["t_end"],
        cfl_safety=t["cfl_safety"],
        max_steps=t["max_steps"],
        snapshot_stride=t["snapshot_stride"],
        eps_grad=cfg.transport["eps_grad"],
    )


def cmd_simulate(cfg: RunConfig, out_dir: Path) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    g = build_grid(cfg)
    h, H0 = build_fields(cfg, g)
    traj = evolve.run(H0, h, g, _evolve_options(cfg))

    names: list[str] = []
    for k, snap in enumerate(traj.snapshots):
        name = f"snapshot_{k:04d}.csv"
        write_field_csv(snap, out_dir / name, "H")
        names.append(name)
    write_field_csv(h, out_dir / "h.csv", "h")
    names.append("h.csv")
    with open(out_dir / "diagnostics.jsonl", "w", newline="\n") as f:
        for d in traj.diagnostics:
            f.write(json.dumps({
                "step": d.step, "t": d.t, "dt": d.dt, "energy": d.energy,
                "l2": d.l2, "volume": d.volume, "boundary_flux": d.boundary_flux,
                "mass_balance_residual": d.mass_balance_residual,
                "min": d.min, "max": d.max,
            }, sort_keys=True) + "\n")
    names.append("diagnostics.jsonl")
    if "pgm" in cfg.output["formats"]:
        export_heatmap(traj.snapshots[-1], out_dir / "final_H.pgm")
        names.append("final_H.pgm")
    _write_manifest(out_dir, cfg, names)
    return EXIT_OK


def _order_from_maxima(ns: list[int], maxima: list[float]) -> float:
    """Log-log slope of max residual against cell count (decay order)."""
    valid = [(n, m) for n, m in zip(ns, maxima) if m > 0]
    if len(valid) < 2:
        return math.inf  # residuals at roundoff: treat as arbitrarily fast decay
    logs_n = np.log([n for n, _ in valid])
    logs_m = np.log([m for _, m in valid])
    slope = np.polyfit(logs_n, logs_m, 1)[0]
    return float(-slope)


def _refinement_ladder(nx: int) -> list[int]:
    base = max(16, min(nx, 64))
    return [base, base * 2, base * 4]


def certification_checks(cfg: RunConfig) -> list[dict]:
    """The verify battery: every check carries name, passed, details."""
    g = build_grid(cfg)
    h, H0 = build_fields(cfg, g)
    checks: list[dict] = []
    rng = np.random.default_rng(cfg.analysis["seed"])

    # discrete divergence theorem on a random face flux with sealed x=0 faces
    from .grid import VectorField, divergence, boundary_face_flux
    qx = rng.standard_normal((g.nx + 1, g.ny))
    qx[0, :] = 0.0
    qy = rng.standard_normal((g.nx, g.ny))
    q = VectorField(g, qx, qy, "face")
    div = divergence(q)
    total = float(np.sum(div.values) * g.cell_area)
    boundary = boundary_face_flux(q)
    scale = max(abs(boundary), float(np.abs(q.x).max()) * g.dy * g.ny, 1e-30)
    div_err = abs(total - boundary) / scale
    checks.append({
        "name": "divergence_theorem", "passed": bool(div_err <= 1e-12),
        "details": {"relative_residual": div_err},
    })

    # affine reproduction of the gradient (generic role, x direction exact)
    X, Y = g.meshgrid()
    lin = ScalarField(g, 3.0 * X + 2.0 * Y, "generic")
    gl = gradient(lin)
    err_x = float(np.abs(gl.x - 3.0).max())
    err_y = float(np.abs(gl.y[:, 1:-1] - 2.0).max())
    checks.append({
        "name": "gradient_affine", "passed": bool(max(err_x, err_y) <= 1e-12),
        "details": {"max_error": max(err_x, err_y)},
    })

    params = surface_params(cfg)
    flat = float(np.abs(H0.values).max()) == 0.0
    if params is None or flat:
        checks.append({"name": "pde_residual_order", "passed": True,
                       "details": {"skipped": "no analytic family or zero surface"}})
        checks.append({"name": "curl_order", "passed": True,
                       "details": {"skipped": "no analytic family or zero surface"}})
    else:
        ladder = _refinement_ladder(cfg.grid["nx"])
        pde_max, curl_max = [], []
        for n in ladder:
            gr = make_grid(g.width, g.length, n, n)
            mask = analytic.residual_mask(params, gr)
            res = analytic.pde_residual(params, gr, 0.0)
            pde_max.append(float(np.abs(res.values[mask]).max()))
            if isinstance(params, analytic.HillParams):
                _, Hn = analytic.hill_fields(params, gr, 0.0)
            elif params.shape == "ridge":
                _, Hn = analytic.ridge_fields(params, gr)
            else:
                _, Hn = analytic.mountain_fields(params, gr)
            cres, excl = analytic.curl_residual(Hn, cfg.transport["eps_grad"])
            cmask = mask & ~excl
            curl_max.append(float(np.abs(cres.values[cmask]).max()))
        pde_order = _order_from_maxima(ladder, pde_max)
        curl_scale = max(float(np.abs(H0.values).max()), 1.0)
        curl_trivial = max(curl_max) <= 1e-10 * curl_scale
        curl_order = math.inf if curl_trivial else _order_from_maxima(ladder, curl_max)
        checks.append({
            "name": "pde_residual_order", "passed": bool(pde_order >= 1.5),
            "details": {"ladder": ladder, "max_residuals": pde_max, "order": pde_order},
        })
        checks.append({
            "name": "curl_order", "passed": bool(curl_order >= 1.5),
            "details": {"ladder": ladder, "max_residuals": curl_max,
                        "order": None if math.isinf(curl_order) else curl_order},
        })

    # dissipation, mass balance, contraction on a capped run
    opts = _evolve_options(cfg)
    capped = evolve.EvolveOptions(
        t_end=opts.t_end, cfl_safety=opts.cfl_safety,
        max_steps=min(opts.max_steps, 1500),
        snapshot_stride=opts.snapshot_stride, eps_grad=opts.eps_grad,
    )
    traj = evolve.run(H0, h, g, capped)
    diss = evolve.dissipation_report(traj)
    checks.append({
        "name": "dissipation",
        "passed": bool(diss["energy_monotone"] and diss["l2_monotone"]),
        "details": diss,
    })
    balance = evolve.mass_balance_report(traj)
    checks.append({
        "name": "mass_balance",
        "passed": bool(balance["max_relative_residual"] <= 1e-12),
        "details": balance,
    })

    bump = 0.01 * np.sin(np.pi * X / g.width) ** 2 * np.cos(2 * np.pi * Y / g.length)
    bump *= (g.width - X) / g.width
    H0b = ScalarField(g, H0.values + bump, "surface")
    dt_shared = 0.9 * min(
        evolve.stable_dt(H0, h, g, capped.cfl_safety),
        evolve.stable_dt(H0b, h, g, capped.cfl_safety),
    )
    pair_opts = evolve.EvolveOptions(
        t_end=min(capped.t_end, 400 * dt_shared), cfl_safety=capped.cfl_safety,
        max_steps=500, snapshot_stride=capped.snapshot_stride,
        eps_grad=capped.eps_grad, fixed_dt=dt_shared,
    )
    ta = evolve.run(H0, h, g, pair_opts)
    tb = evolve.run(H0b, h, g, pair_opts)
    contraction = evolve.contraction_check(ta, tb)
    checks.append({
        "name": "contraction", "passed": bool(contraction["monotone"]),
        "details": {"max_violation": contraction["max_violation"]},
    })

    # decay-law fit: reported, never gated (documented sign ambiguity)
    fit_info: dict = {"gated": False}
    try:
        fit = evolve.fit_decay(traj)
        fit_info.update(fit)
        if params is not None and not isinstance(params, analytic.HillParams):
            r_formula = params.decay_rate()
            fit_info["r_formula"] = r_formula
            if r_formula != 0:
                fit_info["magnitude_ratio"] = abs(fit["r_fit"]) / abs(r_formula)
                fit_info["sign_agrees"] = bool(
                    math.copysign(1, fit["r_fit"]) == math.copysign(1, r_formula)
                )
    except evolve.FitError as e:
        fit_info["skipped"] = str(e)
    checks.append({"name": "decay_fit", "passed": True, "details": fit_info})
    return checks


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_json_safe(v) for v in obj.tolist()]
    return obj


def cmd_verify(cfg: RunConfig, out_dir: Path) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    checks = certification_checks(cfg)
    ok = all(c["passed"] for c in checks)
    report = {"passed": ok, "checks": _json_safe(checks)}
    (out_dir / "report.json").write_text(
        json.dumps(report, sort_keys=True, indent=2) + "\n"
    )
    _write_manifest(out_dir, cfg, ["report.json"])
    return EXIT_OK if ok else EXIT_CERTIFICATION


def cmd_transport(cfg: RunConfig, out_dir: Path) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    g = build_grid(cfg)
    h, H0 = build_fields(cfg, g)
    traj = evolve.run(H0, h, g, _evolve_options(cfg))
    index = cfg.transport["snapshot"]
    if index == -1:
        index = max(1, min(traj.n_snapshots - 2, traj.n_snapshots // 2))
    pair = transport.build_measures(traj, index)
    mu, nu = pair.mu, pair.nu

    if cfg.transport["solver"] == "exact":
        plan = transport.solve_primal_exact(mu, nu)
    else:
        plan = transport.solve_sinkhorn(mu, nu, cfg.transport["reg_eps"])
    dual = transport.solve_dual(mu, nu)
    directions = transport.displacement_directions(
        plan, mu, cfg.transport["eps_mass"]
    )
    H_snap = traj.snapshots[index]
    report = transport.alignment_report(
        directions, dual, H_snap, cfg.transport["eps_grad"]
    )
    gap = abs(plan.cost - dual.objective) / (abs(plan.cost) + 1.0)
    payload = {
        "primal_cost": plan.cost,
        "dual_objective": dual.objective,
        "duality_gap_relative": gap,
        "erosion_ok": pair.erosion_ok,
        "snapshot_index": index,
        "snapshot_time": traj.times[index],
        "window_flux": pair.window_flux,
        **report,
    }
    if plan.entropic_bound is not None:
        payload["entropic_bound"] = plan.entropic_bound
    (out_dir / "transport.json").write_text(
        json.dumps(_json_safe(payload), sort_keys=True, indent=2) + "\n"
    )
    X, Y = g.meshgrid()
    with open(out_dir / "directions.csv", "w", newline="\n") as f:
        f.write("x,y,dir_x,dir_y,valid\n")
        for i in range(g.nx):
            for j in range(g.ny):
                f.write(
                    f"{_fmt(X[i, j])},{_fmt(Y[i, j])},"
                    f"{_fmt(directions.vectors.x[i, j])},"
                    f"{_fmt(directions.vectors.y[i, j])},"
                    f"{int(directions.valid[i, j])}\n"
                )
    _write_manifest(out_dir, cfg, ["transport.json", "directions.csv"])
    return EXIT_OK


def cmd_heatmap(cfg: RunConfig, out_dir: Path) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    g = build_grid(cfg)
    h, H0 = build_fields(cfg, g)
    export_heatmap(H0, out_dir / "H0.pgm")
    export_heatmap(h, out_dir / "h.pgm")
    _write_manifest(out_dir, cfg, ["H0.pgm", "h.pgm"])
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="sediment-lab",
        description="erosion gradient-flow laboratory: simulate, certify, "
                    "and check the optimal-transport direction identity",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "verify", "transport", "heatmap"):
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, default=None,
                       help="config file (defaults apply when omitted)")
        p.add_argument("--out", type=Path, default=None,
                       help="output directory (overrides [output].directory)")
        p.add_argument("--override", action="append", default=[],
                       metavar="SECTION.KEY=VALUE",
                       help="config override, applied after parsing (repeatable)")
    args = parser.parse_args(argv)

    try:
        if args.config is not None:
            cfg = parse_config(Path(args.config).read_text())
        else:
            cfg = default_config()
        for item in args.override:
            if "=" not in item or "." not in item.split("=", 1)[0]:
                raise ConfigError(f"override must be SECTION.KEY=VALUE, got {item!r}")
            target, raw = item.split("=", 1)
            section, key = target.split(".", 1)
            cfg = cfg.with_value(section.strip(), key.strip(), raw.strip())
        env_seed = os.environ.get(SEED_ENV_VAR)
        if env_seed is not None:
            cfg = cfg.with_value("analysis", "seed", env_seed)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"io error: {e}", file=sys.stderr)
        return EXIT_IO

    out_dir = args.out if args.out is not None else Path(cfg.output["directory"])
    command = {
        "simulate": cmd_simulate,
        "verify": cmd_verify,
        "transport": cmd_transport,
        "heatmap": cmd_heatmap,
    }[args.command]
    try:
        return command(cfg, out_dir)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except evolve.StabilityError as e:
        print(f"stability error: {e}", file=sys.stderr)
        return EXIT_STABILITY
    except transport.NoTransportError as e:
        print(f"no transport: {e}", file=sys.stderr)
        return EXIT_NO_TRANSPORT
    except OSError as e:
        print(f"io error: {e}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, RuntimeError, FloatingPointError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
