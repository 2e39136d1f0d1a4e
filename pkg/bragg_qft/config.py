"""
Scenario & Preset Configuration
===============================
Human-editable `key=value` files (dotenv syntax, `#` comments). Every key
carries its unit in the name. Two kinds of file live in presets/:

- fiber presets (fiber1.env, fiber2.env): dispersion model + axis assignment
- scenarios (paper_calibrated.env, ...): everything else, referencing fibers
  by preset name

The schema is the ScenarioConfig dataclass itself: each field's metadata
holds its converter, validator and help text.
"""

import hashlib
import io
import math
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Callable, Dict, Mapping, Optional, Union

import orjson
from dotenv import dotenv_values

from .dispersion import Axis, BS_ROLES, FiberSpec, MI_ROLES
from .errors import BraggQftError, ConfigError

DEFAULT_PRESET_DIR = Path(__file__).parent.parent / "presets"


def preset_dir() -> Path:
    """BRAGG_QFT_PRESET_DIR when set and non-empty, else the bundled presets/."""
    return Path(os.getenv("BRAGG_QFT_PRESET_DIR") or DEFAULT_PRESET_DIR)


# =============================================================================
# CONVERTERS & VALIDATORS
# =============================================================================
def _to_bool(raw: str) -> bool:
    value = raw.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got '{raw}'")


def _to_int(raw: str) -> int:
    value = float(raw)
    if not value.is_integer():
        raise ValueError(f"expected an integer, got '{raw}'")
    return int(value)


def _to_axis(raw: str) -> Axis:
    return Axis(raw.strip().lower())


def _nonneg(v) -> Optional[str]:
    return None if v >= 0 else "must be >= 0"


def _positive(v) -> Optional[str]:
    return None if v > 0 else "must be > 0"


def _probability(v) -> Optional[str]:
    return None if 0 <= v <= 1 else "must be in [0, 1]"


def _epsilon(v) -> Optional[str]:
    return None if 0 <= v < 1 else "must satisfy 0 <= ε < 1"


def _count(v) -> Optional[str]:
    return None if v >= 1 else "must be >= 1"


def _opt(kind: Callable, default: Any = None, check: Optional[Callable] = None, help: str = ""):
    return field(default=default, metadata={"kind": kind, "check": check, "help": help})


# =============================================================================
# SCENARIO SCHEMA
# =============================================================================
@dataclass(frozen=True)
class ScenarioConfig:
    scenario_name: str = _opt(str, "custom")
    seed: Optional[int] = _opt(_to_int, None, _nonneg, "required; --seed overrides")
    output_dir: str = _opt(str, "results")
    fiber1_preset: str = _opt(str, "fiber1", help="MI source fiber")
    fiber2_preset: str = _opt(str, "fiber2", help="BS translator fiber")

    # MI tuning curve
    phasematch_start_nm: float = _opt(float, 790.0, _positive)
    phasematch_stop_nm: float = _opt(float, 830.0, _positive)
    phasematch_steps: int = _opt(_to_int, 41, _count)
    mi_pump_wavelength_nm: float = _opt(float, 808.0, _positive)
    mi_pump_peak_power_w: Optional[float] = _opt(float, None, _nonneg, "sets ε = γPL when epsilon is unset")

    # BS translator
    pump1_wavelength_nm: float = _opt(float, 808.0, _positive)
    pump2_wavelength_nm: float = _opt(float, 845.0, _positive)
    signal_wavelength_nm: Optional[float] = _opt(float, None, _positive, "unset: phase-matched channel")
    pump1_power_mw: float = _opt(float, 20.0, _nonneg, "average power")
    pump2_power_mw: float = _opt(float, 30.0, _nonneg, "average power")
    pump_pulse_ps: float = _opt(float, 100.0, _positive)
    rep_rate_hz: float = _opt(float, 76e6, _positive)
    pump_overlap: Optional[float] = _opt(float, None, _probability, "unset: calibrated to anchor_efficiency")
    bs_kappa_length: Optional[float] = _opt(float, None, _nonneg, "overrides the pump-derived |κ|L")
    bs_delta_length: float = _opt(float, 0.0, help="δL used with bs_kappa_length")
    translate_z_steps: int = _opt(_to_int, 101, _count)

    # Acceptance bandwidth
    acceptance_input_fwhm_nm: float = _opt(float, 2.0, _positive)
    acceptance_span_nm: float = _opt(float, 6.0, _positive)
    acceptance_step_nm: float = _opt(float, 0.002, _positive)
    acceptance_walkoff_s_per_m: Optional[float] = _opt(float, None, help="unset: derived from target FWHM")
    acceptance_target_fwhm_nm: float = _opt(float, 1.45, _positive)

    # Source
    epsilon: Optional[float] = _opt(float, None, _epsilon)
    schmidt_modes: float = _opt(float, 1.0, _positive)
    signal_delivery: float = _opt(float, 1.0, _probability)
    herald_efficiency: float = _opt(float, 0.12, _probability)
    herald_dark_prob: float = _opt(float, 0.0, _probability)
    herald_noise_mean: float = _opt(float, 0.0, _nonneg)

    # Detectors & noise
    detector_s1_efficiency: float = _opt(float, 0.6, _probability)
    detector_s2_efficiency: float = _opt(float, 0.6, _probability)
    detector_dark_prob: float = _opt(float, 0.0, _probability)
    split_ratio: float = _opt(float, 0.5, _probability)
    noise_s1_mean: Optional[float] = _opt(float, None, _nonneg)
    noise_s2_mean: Optional[float] = _opt(float, None, _nonneg)

    # Calibration anchors (unset: no calibration)
    anchor_efficiency: Optional[float] = _opt(float, None, _probability)
    anchor_noise_fraction_s1: Optional[float] = _opt(float, None, _probability)
    anchor_noise_fraction_s2: Optional[float] = _opt(float, None, _probability)
    anchor_car_s1: Optional[float] = _opt(float, None, _positive)

    # Counting
    n_runs: int = _opt(_to_int, 30, _count)
    pulses_per_run: int = _opt(_to_int, 1_000_000, _count)
    efficiency_pulses: int = _opt(_to_int, 10_000_000, _count)
    decorrelate_herald: bool = _opt(_to_bool, False)

    # Sweep
    sweep_param: Optional[str] = _opt(str, None)
    sweep_start: Optional[float] = _opt(float, None)
    sweep_stop: Optional[float] = _opt(float, None)
    sweep_steps: Optional[int] = _opt(_to_int, None, _count)


SCENARIO_KEYS = {f.name: f for f in fields(ScenarioConfig)}
SWEEP_ALIASES = {"kappaL": "bs_kappa_length", "deltaL": "bs_delta_length"}


def _convert(section: str, key: str, raw: Any, spec) -> Any:
    path = f"{section}.{key}"
    if raw is None or (isinstance(raw, str) and raw.strip() == ""):
        return None
    try:
        value = spec.metadata["kind"](raw if isinstance(raw, str) else _format(raw))
    except (TypeError, ValueError) as e:
        raise ConfigError(path, f"cannot parse '{raw}': {e}") from None
    if isinstance(value, float) and not math.isfinite(value):
        raise ConfigError(path, "must be finite")
    check = spec.metadata["check"]
    problem = check(value) if check and value is not None else None
    if problem:
        raise ConfigError(path, f"{problem}, got {value}")
    return value


def _read_pairs(text: str) -> Dict[str, Optional[str]]:
    return dict(dotenv_values(stream=io.StringIO(text)))


def parse_config(text: str, overrides: Optional[Mapping[str, Any]] = None,
                 section: str = "scenario") -> ScenarioConfig:
    """Parse scenario text; unknown keys and invalid values raise ConfigError."""
    pairs = _read_pairs(text)
    pairs.update(overrides or {})
    values = {}
    for key, raw in pairs.items():
        key = SWEEP_ALIASES.get(key, key)
        if key not in SCENARIO_KEYS:
            raise ConfigError(f"{section}.{key}", "unknown key")
        value = _convert(section, key, raw, SCENARIO_KEYS[key])
        if value is not None:
            values[key] = value
    config = ScenarioConfig(**values)
    validate(config, section)
    return config


def validate(config: ScenarioConfig, section: str = "scenario") -> None:
    if config.seed is None:
        raise ConfigError(f"{section}.seed", "missing (set it in the file or pass --seed)")
    if config.phasematch_stop_nm < config.phasematch_start_nm:
        raise ConfigError(f"{section}.phasematch_stop_nm", "must be >= phasematch_start_nm")
    if config.sweep_param is not None:
        param = SWEEP_ALIASES.get(config.sweep_param, config.sweep_param)
        if param not in SCENARIO_KEYS or SCENARIO_KEYS[param].metadata["kind"] not in (float, _to_int):
            raise ConfigError(f"{section}.sweep_param", f"'{config.sweep_param}' is not a numeric key")
        for key in ("sweep_start", "sweep_stop", "sweep_steps"):
            if getattr(config, key) is None:
                raise ConfigError(f"{section}.{key}", "required when sweep_param is set")


def load_config(path: Union[str, Path], overrides: Optional[Mapping[str, Any]] = None) -> ScenarioConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(path.stem, f"config file not found: {path}")
    return parse_config(path.read_text(encoding="utf-8"), overrides, section=path.stem)


def load_scenario(name: str, overrides: Optional[Mapping[str, Any]] = None) -> ScenarioConfig:
    """Named scenario from the preset directory."""
    return load_config(preset_dir() / f"{name}.env", overrides)


def with_overrides(config: ScenarioConfig, **values: Any) -> ScenarioConfig:
    converted = {}
    for key, raw in values.items():
        key = SWEEP_ALIASES.get(key, key)
        if key not in SCENARIO_KEYS:
            raise ConfigError(f"override.{key}", "unknown key")
        converted[key] = _convert("override", key, raw, SCENARIO_KEYS[key])
    config = replace(config, **converted)
    validate(config)
    return config


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, Axis):
        return value.value
    return repr(float(value)) if isinstance(value, float) else str(value)


def dump_config(config: ScenarioConfig) -> str:
    """Sorted key=value lines; unset optional keys are omitted."""
    lines = [f"{key}={_format(value)}" for key, value in sorted(asdict(config).items()) if value is not None]
    return "\n".join(lines) + "\n"


def config_to_dict(config: ScenarioConfig) -> Dict[str, Any]:
    return {k: v for k, v in asdict(config).items() if v is not None}


def config_hash(config: ScenarioConfig, extra: Optional[Mapping[str, Any]] = None) -> str:
    """SHA-256 of the resolved config (plus any resolved presets) as sorted JSON."""
    payload = {"scenario": config_to_dict(config), **(extra or {})}
    return hashlib.sha256(orjson.dumps(payload, option=orjson.OPT_SORT_KEYS)).hexdigest()


# =============================================================================
# FIBER PRESETS
# =============================================================================
@dataclass(frozen=True)
class FiberPreset:
    fiber: FiberSpec
    mi_axes: Dict[str, Axis]
    bs_axes: Dict[str, Axis]


FIBER_KEYS = {
    "name": (str, None),
    "zdw_nm": (float, _positive),
    "reference_nm": (float, _positive),
    "beta2_ps2_per_km": (float, None),
    "beta3_ps3_per_km": (float, None),
    "beta4_ps4_per_km": (float, None),
    "birefringence_dn": (float, _nonneg),
    "gamma_per_w_km": (float, _nonneg),
    "length_m": (float, _positive),
    "valid_min_nm": (float, _positive),
    "valid_max_nm": (float, _positive),
    **{f"mi_{role}_axis": (_to_axis, None) for role in MI_ROLES},
    **{f"bs_{role}_axis": (_to_axis, None) for role in BS_ROLES},
}
FIBER_REQUIRED = ("name", "beta3_ps3_per_km", "beta4_ps4_per_km", "gamma_per_w_km", "length_m")


@dataclass(frozen=True)
class _FieldSpec:
    metadata: Dict[str, Any]


def parse_fiber_preset(text: str, section: str = "fiber") -> FiberPreset:
    values = {}
    for key, raw in _read_pairs(text).items():
        if key not in FIBER_KEYS:
            raise ConfigError(f"{section}.{key}", "unknown key")
        kind, check = FIBER_KEYS[key]
        value = _convert(section, key, raw, _FieldSpec({"kind": kind, "check": check}))
        if value is not None:
            values[key] = value
    missing = [k for k in FIBER_REQUIRED if k not in values]
    if missing:
        raise ConfigError(f"{section}.{missing[0]}", "missing")
    try:
        fiber = FiberSpec(
            name=values["name"],
            zdw_wavelength=values.get("zdw_nm"),
            beta_coeffs=(values.get("beta2_ps2_per_km", 0.0), values["beta3_ps3_per_km"],
                         values["beta4_ps4_per_km"]),
            birefringence_dn=values.get("birefringence_dn", 0.0),
            gamma=values["gamma_per_w_km"],
            length=values["length_m"],
            reference_wavelength=values.get("reference_nm"),
            valid_min_nm=values.get("valid_min_nm", 450.0),
            valid_max_nm=values.get("valid_max_nm", 1700.0),
        )
    except BraggQftError as e:
        raise ConfigError(section, str(e)) from None
    return FiberPreset(
        fiber,
        {role: values.get(f"mi_{role}_axis", Axis.FAST) for role in MI_ROLES},
        {role: values.get(f"bs_{role}_axis", Axis.FAST) for role in BS_ROLES},
    )


def load_fiber_preset(name: str, key_path: str = "scenario.fiber_preset") -> FiberPreset:
    path = Path(name) if name.endswith(".env") else preset_dir() / f"{name}.env"
    if not path.is_file():
        raise ConfigError(key_path, f"fiber preset '{name}' not found in {path.parent}")
    return parse_fiber_preset(path.read_text(encoding="utf-8"), section=path.stem)


def fiber_preset_to_dict(preset: FiberPreset) -> Dict[str, Any]:
    f = preset.fiber
    out = {
        "name": f.name,
        "reference_nm": f.reference_wavelength,
        "beta2_ps2_per_km": f.beta_coeffs[0],
        "beta3_ps3_per_km": f.beta_coeffs[1],
        "beta4_ps4_per_km": f.beta_coeffs[2],
        "birefringence_dn": f.birefringence_dn,
        "gamma_per_w_km": f.gamma,
        "length_m": f.length,
        "valid_min_nm": f.valid_min_nm,
        "valid_max_nm": f.valid_max_nm,
        **{f"mi_{r}_axis": a.value for r, a in preset.mi_axes.items()},
        **{f"bs_{r}_axis": a.value for r, a in preset.bs_axes.items()},
    }
    if f.zdw_wavelength is not None:
        out["zdw_nm"] = f.zdw_wavelength
    return out


def dump_fiber_preset(preset: FiberPreset, header: str = "") -> str:
    comments = "".join(f"# {line}\n" for line in header.splitlines())
    body = "".join(f"{k}={_format(v)}\n" for k, v in sorted(fiber_preset_to_dict(preset).items()))
    return comments + body
