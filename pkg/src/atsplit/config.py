"""Declarative experiment configuration: schema, loading, resolution.

A config is a single YAML file with nested blocks and a mandatory
``schema`` version field.  Validation is strict: unknown keys are
rejected with their full dotted path, and every physics invariant of the
domain types is re-checked while resolving (so a non-physical T2*, for
example, fails at load time rather than mid-solve).
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import yaml

from .errors import ConfigError, NonPhysicalCoherence
from .experiments import Grid1D
from .model import (
    TRANSMON_RATIO_21,
    DecoherenceRates,
    DeviceSpec,
    DriveParams,
    rates_from_coherence_times,
    validate_three_level,
)

SCHEMA_VERSION = 1

EXPERIMENTS = (
    "probe_spec",
    "coupler_spec",
    "rabi",
    "at_map",
    "at_slice",
    "fidelity_scan",
    "eit_scan",
)

#: Allowed keys per block; None values mark nested blocks handled separately.
_TOP_KEYS = {"schema", "experiment", "device", "rates", "drive", "pulse",
             "background", "eit", "output"}
_BLOCK_KEYS = {
    "device": {"omega01_ghz", "omega12_ghz"},
    "rates": {"t1_us", "t2_star_us", "ratio_21", "gamma_10", "gamma_21",
              "gamma_20", "phi_1", "phi_2"},
    "drive": {"omega_p_mhz", "omega_c_mhz", "delta_p_mhz", "delta_c_mhz"},
    "pulse": {"duration_us", "durations_us"},
    "background": {"center_mhz", "fwhm_mhz", "amplitude", "offset"},
    "eit": {"n_max", "ratio_grid"},
    "output": {"directory", "formats"},
}
_GRID_KEYS = {"start", "stop", "count"}


@dataclass(frozen=True)
class BackgroundConfig:
    """Raw fluctuator-background parameters from the config file."""

    center: float
    fwhm: float
    amplitude: float
    offset: float


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved, physics-validated experiment description."""

    experiment: str
    device: DeviceSpec
    rates: DecoherenceRates
    omega_p: float
    omega_c_values: tuple[float, ...]
    delta_p: float | Grid1D | None  # None means the experiment's default grid
    delta_c: float | Grid1D | None
    pulse_duration: float | None
    durations: Grid1D | None
    background: BackgroundConfig | None
    eit_n_max: int
    eit_ratio_grid: Grid1D
    out_dir: str
    formats: tuple[str, ...]
    warnings: tuple[str, ...]


def bundled_config_path(name: str) -> Path:
    """Path of a config shipped inside the package (e.g. ``paper.cfg``)."""
    return Path(str(resources.files("atsplit") / "data" / name))


def resolve_config_path(argument: str) -> Path:
    """Interpret a CLI config argument: a real file wins, then bundled names."""
    path = Path(argument)
    if path.is_file():
        return path
    bundled = bundled_config_path(argument)
    if bundled.is_file():
        return bundled
    raise ConfigError(f"config file not found: {argument}")


def load_raw(path: Path) -> dict:
    """Parse the YAML config file into a raw dict."""
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} is not valid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must contain a mapping at top level")
    return raw


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    """Apply ``--set dotted.key=value`` overrides to the raw config dict."""
    out = _deep_copy(raw)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        dotted, _, text = item.partition("=")
        keys = dotted.strip().split(".")
        if not all(keys):
            raise ConfigError(f"override {item!r} has an empty key component")
        try:
            value = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"override value for {dotted!r} is not valid YAML: {exc}") from exc
        node = out
        for key in keys[:-1]:
            if key not in node or not isinstance(node[key], dict):
                node[key] = {}
            node = node[key]
        node[keys[-1]] = value
    return out


def _deep_copy(node):
    if isinstance(node, dict):
        return {k: _deep_copy(v) for k, v in node.items()}
    if isinstance(node, list):
        return [_deep_copy(v) for v in node]
    return node


# ---------------------------------------------------------------------------
# Validation helpers (every error names the offending key)
# ---------------------------------------------------------------------------

def _require_block(raw: dict, name: str) -> dict:
    if name not in raw:
        raise ConfigError(f"missing required block '{name}'")
    block = raw[name]
    if not isinstance(block, dict):
        raise ConfigError(f"block '{name}' must be a mapping")
    return block


def _check_keys(block: dict, allowed: set[str], prefix: str) -> None:
    for key in block:
        if key not in allowed:
            raise ConfigError(f"unknown key '{prefix}.{key}'" if prefix else f"unknown key '{key}'")


def _number(block: dict, key: str, prefix: str, required: bool = True,
            default: float | None = None) -> float | None:
    if key not in block or block[key] is None:
        if required:
            raise ConfigError(f"missing required key '{prefix}.{key}'")
        return default
    value = block[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"key '{prefix}.{key}' must be a number, got {value!r}")
    return float(value)


def _grid(node, path: str) -> Grid1D:
    if not isinstance(node, dict):
        raise ConfigError(f"key '{path}' must be a mapping with start/stop/count")
    _check_keys(node, _GRID_KEYS, path)
    start = _number(node, "start", path)
    stop = _number(node, "stop", path)
    if "count" not in node:
        raise ConfigError(f"missing required key '{path}.count'")
    count = node["count"]
    if isinstance(count, bool) or not isinstance(count, int):
        raise ConfigError(f"key '{path}.count' must be an integer, got {count!r}")
    try:
        return Grid1D(start, stop, count)
    except ValueError as exc:
        raise ConfigError(f"key '{path}': {exc}") from exc


def _scalar_or_grid(block: dict, key: str, prefix: str):
    """A detuning entry: a number, a start/stop/count mapping, 'auto', or absent."""
    if key not in block or block[key] is None or block[key] == "auto":
        return None
    value = block[key]
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if isinstance(value, dict):
        return _grid(value, f"{prefix}.{key}")
    raise ConfigError(
        f"key '{prefix}.{key}' must be a number, a start/stop/count mapping, or 'auto'"
    )


def _resolve_rates(block: dict) -> DecoherenceRates:
    _check_keys(block, _BLOCK_KEYS["rates"], "rates")
    t1 = _number(block, "t1_us", "rates")
    t2 = _number(block, "t2_star_us", "rates")
    ratio = _number(block, "ratio_21", "rates", required=False, default=TRANSMON_RATIO_21)
    try:
        rates = rates_from_coherence_times(t1, t2, ratio_21=ratio)
    except (NonPhysicalCoherence, ValueError) as exc:
        raise ConfigError(f"block 'rates': {exc}") from exc
    overrides = {}
    for key in ("gamma_10", "gamma_21", "gamma_20", "phi_1", "phi_2"):
        value = _number(block, key, "rates", required=False)
        if value is not None:
            overrides[key] = value
    if overrides:
        merged = {
            "gamma_10": rates.gamma_10,
            "gamma_21": rates.gamma_21,
            "gamma_20": rates.gamma_20,
            "phi_1": rates.phi_1,
            "phi_2": rates.phi_2,
        }
        merged.update(overrides)
        try:
            rates = DecoherenceRates(**merged)
        except ValueError as exc:
            raise ConfigError(f"block 'rates': {exc}") from exc
    return rates


def resolve(raw: dict) -> ExperimentConfig:
    """Validate a raw config dict and build the resolved configuration."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    _check_keys(raw, _TOP_KEYS, "")

    if "schema" not in raw:
        raise ConfigError("missing required key 'schema'")
    if raw["schema"] != SCHEMA_VERSION:
        raise ConfigError(
            f"key 'schema': unsupported version {raw['schema']!r}, expected {SCHEMA_VERSION}"
        )

    experiment = raw.get("experiment")
    if experiment not in EXPERIMENTS:
        raise ConfigError(
            f"key 'experiment': must be one of {', '.join(EXPERIMENTS)}, got {experiment!r}"
        )

    device_block = _require_block(raw, "device")
    _check_keys(device_block, _BLOCK_KEYS["device"], "device")
    try:
        device = DeviceSpec(
            omega01=_number(device_block, "omega01_ghz", "device"),
            omega12=_number(device_block, "omega12_ghz", "device"),
        )
    except ValueError as exc:
        raise ConfigError(f"block 'device': {exc}") from exc

    rates = _resolve_rates(_require_block(raw, "rates"))

    drive_block = _require_block(raw, "drive")
    _check_keys(drive_block, _BLOCK_KEYS["drive"], "drive")
    omega_p = _number(drive_block, "omega_p_mhz", "drive")

    omega_c_raw = drive_block.get("omega_c_mhz", 0.0)
    if omega_c_raw is None:
        omega_c_raw = 0.0
    if isinstance(omega_c_raw, (int, float)) and not isinstance(omega_c_raw, bool):
        omega_c_values = (float(omega_c_raw),)
    elif isinstance(omega_c_raw, list) and omega_c_raw and all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in omega_c_raw
    ):
        omega_c_values = tuple(float(v) for v in omega_c_raw)
    else:
        raise ConfigError("key 'drive.omega_c_mhz' must be a number or a non-empty list of numbers")
    if any(v < 0.0 for v in omega_c_values) or omega_p < 0.0:
        raise ConfigError("key 'drive': Rabi amplitudes must be >= 0")

    delta_p = _scalar_or_grid(drive_block, "delta_p_mhz", "drive")
    delta_c = _scalar_or_grid(drive_block, "delta_c_mhz", "drive")

    pulse_duration = None
    durations = None
    if "pulse" in raw:
        pulse_block = _require_block(raw, "pulse")
        _check_keys(pulse_block, _BLOCK_KEYS["pulse"], "pulse")
        pulse_duration = _number(pulse_block, "duration_us", "pulse", required=False)
        if pulse_duration is not None and pulse_duration < 0.0:
            raise ConfigError("key 'pulse.duration_us' must be >= 0")
        if "durations_us" in pulse_block and pulse_block["durations_us"] is not None:
            durations = _grid(pulse_block["durations_us"], "pulse.durations_us")

    background = None
    if "background" in raw and raw["background"] is not None:
        bg = _require_block(raw, "background")
        _check_keys(bg, _BLOCK_KEYS["background"], "background")
        background = BackgroundConfig(
            center=_number(bg, "center_mhz", "background", required=False, default=0.0),
            fwhm=_number(bg, "fwhm_mhz", "background"),
            amplitude=_number(bg, "amplitude", "background"),
            offset=_number(bg, "offset", "background", required=False, default=0.0),
        )
        if background.fwhm <= 0.0:
            raise ConfigError("key 'background.fwhm_mhz' must be > 0")
        if background.amplitude < 0.0:
            raise ConfigError("key 'background.amplitude' must be >= 0")

    eit_n_max = 9
    eit_ratio_grid = Grid1D(0.25, 60.25, 81)
    if "eit" in raw and raw["eit"] is not None:
        eit_block = _require_block(raw, "eit")
        _check_keys(eit_block, _BLOCK_KEYS["eit"], "eit")
        if "n_max" in eit_block and eit_block["n_max"] is not None:
            n_max = eit_block["n_max"]
            if isinstance(n_max, bool) or not isinstance(n_max, int) or n_max < 0:
                raise ConfigError(f"key 'eit.n_max' must be a non-negative integer, got {n_max!r}")
            eit_n_max = n_max
        if "ratio_grid" in eit_block and eit_block["ratio_grid"] is not None:
            eit_ratio_grid = _grid(eit_block["ratio_grid"], "eit.ratio_grid")

    out_dir = "results"
    formats = ("csv", "summary")
    if "output" in raw and raw["output"] is not None:
        out_block = _require_block(raw, "output")
        _check_keys(out_block, _BLOCK_KEYS["output"], "output")
        if "directory" in out_block and out_block["directory"] is not None:
            if not isinstance(out_block["directory"], str):
                raise ConfigError("key 'output.directory' must be a string")
            out_dir = out_block["directory"]
        if "formats" in out_block and out_block["formats"] is not None:
            fmts = out_block["formats"]
            if not isinstance(fmts, list) or not all(f in ("csv", "summary") for f in fmts):
                raise ConfigError("key 'output.formats' entries must be 'csv' or 'summary'")
            formats = tuple(fmts)

    _check_experiment_requirements(
        experiment, omega_p, omega_c_values, delta_p, delta_c, pulse_duration, durations
    )

    def worst_detuning(value):
        # For grids, warn against the endpoint farthest from resonance.
        if isinstance(value, Grid1D):
            return max(value.start, value.stop, key=abs)
        return value if isinstance(value, float) else 0.0

    warnings = []
    for omega_c in omega_c_values:
        probe = DriveParams(
            delta_p=worst_detuning(delta_p),
            delta_c=worst_detuning(delta_c),
            omega_p=omega_p,
            omega_c=omega_c,
        )
        warnings.extend(validate_three_level(probe, device))

    return ExperimentConfig(
        experiment=experiment,
        device=device,
        rates=rates,
        omega_p=omega_p,
        omega_c_values=omega_c_values,
        delta_p=delta_p,
        delta_c=delta_c,
        pulse_duration=pulse_duration,
        durations=durations,
        background=background,
        eit_n_max=eit_n_max,
        eit_ratio_grid=eit_ratio_grid,
        out_dir=out_dir,
        formats=formats,
        warnings=tuple(dict.fromkeys(warnings)),
    )


def _check_experiment_requirements(
    experiment, omega_p, omega_c_values, delta_p, delta_c, pulse_duration, durations
):
    def scalar_zero(value, key):
        if value is None:
            return
        if isinstance(value, Grid1D) or value != 0.0:
            raise ConfigError(f"key 'drive.{key}': {experiment} requires a scalar 0")

    if experiment == "probe_spec":
        if any(v != 0.0 for v in omega_c_values):
            raise ConfigError("key 'drive.omega_c_mhz': probe_spec requires omega_c = 0")
        if delta_p is not None and not isinstance(delta_p, Grid1D):
            raise ConfigError("key 'drive.delta_p_mhz': probe_spec needs a grid (or 'auto')")
        scalar_zero(delta_c, "delta_c_mhz")
    elif experiment == "coupler_spec":
        if omega_p != 0.0:
            raise ConfigError("key 'drive.omega_p_mhz': coupler_spec requires omega_p = 0")
        if len(omega_c_values) != 1 or omega_c_values[0] <= 0.0:
            raise ConfigError("key 'drive.omega_c_mhz': coupler_spec needs one positive value")
        if delta_c is not None and not isinstance(delta_c, Grid1D):
            raise ConfigError("key 'drive.delta_c_mhz': coupler_spec needs a grid (or 'auto')")
        scalar_zero(delta_p, "delta_p_mhz")
    elif experiment == "rabi":
        if any(v != 0.0 for v in omega_c_values):
            raise ConfigError("key 'drive.omega_c_mhz': rabi requires omega_c = 0")
        if omega_p <= 0.0:
            raise ConfigError("key 'drive.omega_p_mhz': rabi requires omega_p > 0")
        scalar_zero(delta_p, "delta_p_mhz")
        scalar_zero(delta_c, "delta_c_mhz")
        if durations is None:
            raise ConfigError("missing required key 'pulse.durations_us' for rabi")
    elif experiment == "at_map":
        if omega_p <= 0.0:
            raise ConfigError("key 'drive.omega_p_mhz': at_map requires omega_p > 0")
        if len(omega_c_values) != 1 or omega_c_values[0] <= 0.0:
            raise ConfigError("key 'drive.omega_c_mhz': at_map needs one positive value")
        for key, value in (("delta_p_mhz", delta_p), ("delta_c_mhz", delta_c)):
            if value is not None and not isinstance(value, Grid1D):
                raise ConfigError(f"key 'drive.{key}': at_map needs a grid (or 'auto')")
    elif experiment == "at_slice":
        if omega_p <= 0.0:
            raise ConfigError("key 'drive.omega_p_mhz': at_slice requires omega_p > 0")
        if any(v <= 0.0 for v in omega_c_values):
            raise ConfigError("key 'drive.omega_c_mhz': at_slice values must be > 0")
        scalar_zero(delta_c, "delta_c_mhz")
        if delta_p is not None and not isinstance(delta_p, Grid1D):
            raise ConfigError("key 'drive.delta_p_mhz': at_slice needs a grid (or 'auto')")
    elif experiment in ("fidelity_scan", "eit_scan"):
        if omega_p <= 0.0:
            raise ConfigError(f"key 'drive.omega_p_mhz': {experiment} requires omega_p > 0")
        scalar_zero(delta_p, "delta_p_mhz")
        scalar_zero(delta_c, "delta_c_mhz")
        if experiment == "fidelity_scan" and any(v <= 0.0 for v in omega_c_values):
            raise ConfigError("key 'drive.omega_c_mhz': fidelity_scan values must be > 0")


def load(path: Path, overrides: list[str] | None = None) -> ExperimentConfig:
    """Load, override, validate, and resolve a config file."""
    raw = load_raw(path)
    if overrides:
        raw = apply_overrides(raw, overrides)
    return resolve(raw)


def resolved_lines(cfg: ExperimentConfig) -> list[str]:
    """Human/machine-readable key = value listing of the resolved config."""

    def fmt(value):
        if isinstance(value, Grid1D):
            return f"grid(start={value.start:g}, stop={value.stop:g}, count={value.count})"
        if value is None:
            return "auto"
        if isinstance(value, float):
            return f"{value:g}"
        return str(value)

    lines = [
        f"schema = {SCHEMA_VERSION}",
        f"experiment = {cfg.experiment}",
        f"device.omega01_ghz = {cfg.device.omega01:.9g}",
        f"device.omega12_ghz = {cfg.device.omega12:.9g}",
        f"device.alpha_mhz = {cfg.device.alpha:.6f}",
        f"rates.gamma_10 = {cfg.rates.gamma_10:.6f} /us",
        f"rates.gamma_21 = {cfg.rates.gamma_21:.6f} /us",
        f"rates.gamma_20 = {cfg.rates.gamma_20:.6f} /us",
        f"rates.phi_1 = {cfg.rates.phi_1:.6f} /us",
        f"rates.phi_2 = {cfg.rates.phi_2:.6f} /us",
        f"drive.omega_p_mhz = {cfg.omega_p:g}",
        "drive.omega_c_mhz = " + ", ".join(f"{v:g}" for v in cfg.omega_c_values),
        f"drive.delta_p_mhz = {fmt(cfg.delta_p)}",
        f"drive.delta_c_mhz = {fmt(cfg.delta_c)}",
    ]
    if cfg.pulse_duration is not None:
        lines.append(f"pulse.duration_us = {cfg.pulse_duration:g}")
    if cfg.durations is not None:
        lines.append(f"pulse.durations_us = {fmt(cfg.durations)}")
    if cfg.background is not None:
        lines.append(
            "background = "
            f"center {cfg.background.center:g} MHz, fwhm {cfg.background.fwhm:g} MHz, "
            f"amplitude {cfg.background.amplitude:g}, offset {cfg.background.offset:g}"
        )
    if cfg.experiment == "eit_scan":
        lines.append(f"eit.n_max = {cfg.eit_n_max}")
        lines.append(f"eit.ratio_grid = {fmt(cfg.eit_ratio_grid)}")
    lines.append(f"output.directory = {cfg.out_dir}")
    lines.append("output.formats = " + ", ".join(cfg.formats))
    return lines
