"""Line-oriented run configuration: `key = value` entries under [section]
headers, `#` comments, every key validated against a closed schema."""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from typing import Any

_HILL_NOTE = (
    "hill surfaces derive d, gamma, r from (c, beta, H1) via the published "
    "relations; explicit values would have to satisfy them to 1e-12 anyway"
)


class ConfigError(ValueError):
    """Parse or validation failure, carrying a 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


def _positive(x):
    return x > 0


def _nonnegative(x):
    return x >= 0


def _at_least_two(x):
    return x >= 2


def _at_least_one(x):
    return x >= 1


def _unit_interval(x):
    return 0 < x <= 1


def _any(x):
    return True


def _float_list(text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(p) for p in text.split(",") if p.strip())
    except ValueError as e:
        raise ValueError(f"bad float list {text!r}") from e
    if not vals:
        raise ValueError("empty list")
    return vals


def _format_set(text: str) -> tuple[str, ...]:
    vals = tuple(p.strip() for p in text.split(",") if p.strip())
    bad = [v for v in vals if v not in ("csv", "jsonl", "pgm")]
    if bad:
        raise ValueError(f"unknown formats {bad}")
    return vals


# schema: section -> key -> (parser, default, validator, description)
SCHEMA: dict[str, dict[str, tuple]] = {
    "grid": {
        "W": (float, 1.0, _positive, "domain width (x extent)"),
        "L": (float, 1.0, _positive, "domain length (periodic y extent)"),
        "nx": (int, 64, _at_least_two, "cells in x"),
        "ny": (int, 64, _at_least_two, "cells in y"),
    },
    "surface": {
        "family": (str, "ridge", lambda s: s in ("ridge", "mountain", "hill", "file"),
                   "initial surface family"),
        "a": (float, -1.0, _any, "x slope coefficient"),
        "b": (float, 0.0, _any, "y slope coefficient"),
        "c": (float, 1.5, _any, "surface exponent"),
        "d": (float, 0.3, _any, "water exponent (ridge/mountain)"),
        "h1": (float, 1.0, _nonnegative, "water amplitude"),
        "H1": (float, 1.0, _positive, "surface amplitude"),
        "x0": (float, 0.0, _any, "x offset"),
        "y0": (float, 0.0, _any, "y offset"),
        "beta": (float, -0.25, _any, "hill time exponent"),
        "path_surface": (str, "", _any, "surface CSV (family = file)"),
        "path_water": (str, "", _any, "water depth CSV (family = file)"),
    },
    "time": {
        "t_end": (float, 0.01, _positive, "integration horizon"),
        "cfl_safety": (float, 0.4, _unit_interval, "explicit step safety factor"),
        "snapshot_stride": (int, 10, _at_least_one, "steps between snapshots"),
        "max_steps": (int, 200_000, _at_least_one, "step budget"),
    },
    "transport": {
        "solver": (str, "exact", lambda s: s in ("exact", "sinkhorn"), "coupling solver"),
        "reg_eps": (float, 0.01, _positive, "entropic regularization"),
        "eps_mass": (float, 1e-12, _nonnegative, "direction mass floor"),
        "eps_grad": (float, 1e-10, _nonnegative, "gradient direction floor"),
        "snapshot": (int, -1, lambda k: k >= -1, "snapshot index (-1 = middle)"),
    },
    "analysis": {
        "k_list": (_float_list, (0.5, 1.0, 2.0), lambda v: all(k > 0 for k in v),
                   "truncation levels"),
        "n_test_functions": (int, 5, _at_least_one, "random test functions"),
        "seed": (int, 1234, _nonnegative, "rng seed"),
        "ball_stride": (int, 4, _at_least_one, "ball center stride"),
        "ball_levels": (int, 3, _at_least_one, "dyadic radius levels"),
    },
    "output": {
        "directory": (str, "out", _any, "output directory"),
        "formats": (_format_set, ("csv", "jsonl", "pgm"), _any, "artifact formats"),
    },
}


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration; sections are plain key->value dicts."""

    grid: dict[str, Any]
    surface: dict[str, Any]
    time: dict[str, Any]
    transport: dict[str, Any]
    analysis: dict[str, Any]
    output: dict[str, Any]

    def section(self, name: str) -> dict[str, Any]:
        return getattr(self, name)

    def with_value(self, section: str, key: str, raw: str) -> "RunConfig":
        """Copy with one key re-parsed from raw text (used by --override)."""
        if section not in SCHEMA:
            raise ConfigError(f"unknown section {section!r}")
        if key not in SCHEMA[section]:
            raise ConfigError(f"unknown key {key!r} in section [{section}]")
        parser, _, validator, _ = SCHEMA[section][key]
        try:
            value = parser(raw)
        except ValueError as e:
            raise ConfigError(f"bad value for {section}.{key}: {e}") from e
        if not validator(value):
            raise ConfigError(f"value {raw!r} violates constraint on {section}.{key}")
        sections = {f.name: dict(getattr(self, f.name)) for f in fields(self)}
        sections[section][key] = value
        return RunConfig(**sections)


def default_config() -> RunConfig:
    return RunConfig(
        **{sec: {k: spec[1] for k, spec in keys.items()} for sec, keys in SCHEMA.items()}
    )


def parse_config(text: str) -> RunConfig:
    """Parse and validate; unknown sections/keys and bad values are errors
    that name the offending line."""
    sections = {sec: {k: spec[1] for k, spec in keys.items()} for sec, keys in SCHEMA.items()}
    current: str | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if name not in SCHEMA:
                raise ConfigError(f"unknown section [{name}]", lineno)
            current = name
            continue
        if "=" not in line:
            raise ConfigError(f"expected key = value, got {raw.strip()!r}", lineno)
        if current is None:
            raise ConfigError("key outside any [section]", lineno)
        key, _, raw_value = line.partition("=")
        key = key.strip()
        raw_value = raw_value.strip()
        if key not in SCHEMA[current]:
            raise ConfigError(f"unknown key {key!r} in section [{current}]", lineno)
        parser, _, validator, desc = SCHEMA[current][key]
        try:
            value = parser(raw_value)
        except ValueError:
            raise ConfigError(
                f"malformed value {raw_value!r} for {current}.{key} ({desc})", lineno
            ) from None
        if not validator(value):
            raise ConfigError(
                f"value {raw_value!r} violates the constraint on {current}.{key} ({desc})",
                lineno,
            )
        sections[current][key] = value
    cfg = RunConfig(**sections)
    _cross_validate(cfg)
    return cfg


def _cross_validate(cfg: RunConfig) -> None:
    if cfg.surface["family"] == "file":
        if not cfg.surface["path_surface"] or not cfg.surface["path_water"]:
            raise ConfigError(
                "family = file requires surface.path_surface and surface.path_water"
            )


def _serialize_value(value: Any) -> str:
    if isinstance(value, tuple):
        return ",".join(
            v if isinstance(v, str) else format(v, ".17g") for v in value
        )
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def serialize_config(cfg: RunConfig) -> str:
    """Canonical text form; parse(serialize(cfg)) == cfg."""
    lines = []
    for sec in SCHEMA:
        lines.append(f"[{sec}]")
        for key in SCHEMA[sec]:
            lines.append(f"{key} = {_serialize_value(cfg.section(sec)[key])}")
        lines.append("")
    return "\n".join(lines)
