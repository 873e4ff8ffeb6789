"""Run configuration: TOML parsing, validation, overrides, and echo files.

The config file is TOML with one table per subsystem. User-facing units are
Hz, Tesla, volts, watts, and seconds; conversion to angular frequencies
happens when the configuration is turned into model objects. Unknown
sections or keys are rejected. Every run writes back a fully resolved echo
file from which it can be reproduced bit for bit.
"""

from __future__ import annotations

import copy
import hashlib
import math
from typing import Any

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError
from .experiments import SensorSetup, make_setup
from .lockin import LockinConfig
from .model import TWO_PI, DriveField, PhysicalConstants
from .photophysics import NoiseModel, VoltageModel

# schema: section -> key -> (allowed types, default). A None default means the
# key is computed from other keys when absent.
_SCHEMA: dict[str, dict[str, tuple[tuple[type, ...], Any]]] = {
    "run": {
        "seed": ((int,), 1234),
    },
    "constants": {
        "zero_field_splitting_hz": ((float, int), 2.87e9),
        "gyromagnetic_ratio_hz_per_t": ((float, int), -28e9),
        "hyperfine_coupling_hz": ((float, int), -2.16e6),
    },
    "sensor": {
        "gamma1_per_s": ((float, int), 1e6),
        "gamma2_per_s": ((float, int), 4.5e6),
        "t2_target_s": ((float, int, type(None)), None),
        "saturation": ((float, int), 2.0),
        "drive_amplitude_t": ((float, int, type(None)), None),
        "static_field_t": ((float, int), 0.0),
        "detuning_hz": ((float, int, str), "optimal"),
    },
    "voltage": {
        "gain_v": ((float, int), 1.0),
        "offset": ((float, int), 0.7),
        "contrast": ((float, int), 0.3),
        "reference_v": ((float, int), 1.0),
    },
    "noise": {
        "v1_density_v_per_sqrt_hz": ((float, int), 2e-5),
        "v2_density_v_per_sqrt_hz": ((float, int), 0.0),
        "drift_amplitude": ((float, int), 0.0),
        "drift_corner_hz": ((float, int), 0.2),
    },
    "drive": {
        "amplitude_t": ((float, int), 1e-6),
        "frequency_hz": ((float, int), 9.0),
        "phase_rad": ((float, int), 0.0),
    },
    "lockin": {
        "time_constant_s": ((float, int), 0.0),
        "filter_order": ((int,), 4),
        "reference_phase_rad": ((float, int), 0.0),
        "reference_frequency_hz": ((float, int, type(None)), None),
    },
    "trace": {
        "sample_rate_hz": ((float, int), 100.0),
        "duration_s": ((float, int), 20.0),
    },
    "scaling": {
        "resolution_t_s": ((list,), [10.0, 30.0, 100.0, 300.0, 1000.0]),
        "precision_t_s": ((list,), [10.0, 20.0, 50.0, 100.0, 300.0]),
        "n_seeds": ((int,), 50),
        "search_halfwidth_hz": ((float, int), 3.0),
    },
    "bandwidth": {
        "powers_w": ((list,), [0.2, 0.6, 2.0, 6.0]),
        "kappa_per_s_w": ((float, int), 5e5),
        "f_min_hz": ((float, int), 3e3),
        "f_max_hz": ((float, int), 1e7),
        "n_frequencies": ((int,), 13),
        "field_amplitude_t": ((float, int), 1e-6),
    },
    "sensitivity": {
        "frequency_hz": ((float, int), 2000.0),
        "b_lin_min_t": ((float, int), 2e-9),
        "b_lin_max_t": ((float, int), 5e-8),
        "n_linear": ((int,), 10),
        "psd_duration_s": ((float, int), 2.0),
    },
    "dynrange": {
        "frequency_hz": ((float, int), 2000.0),
        "b_min_t": ((float, int), 1e-6),
        "b_max_t": ((float, int), 5e-4),
        "n_fields": ((int,), 360),
    },
}

# The sensitivity/dynamic-range experiments need the hyperfine triplet
# resolved: narrower lines and the microwave parked 1.5 hyperfine splittings
# above the m_I = 0 transition, so the three saturation peaks appear at
# uniformly spaced field amplitudes.
_SUBCOMMAND_OVERRIDES: dict[str, dict[str, dict[str, Any]]] = {
    "sensitivity": {
        "sensor": {"gamma1_per_s": 1e6, "gamma2_per_s": 5e5, "detuning_hz": 3.24e6},
    },
    "dynrange": {
        "sensor": {"gamma1_per_s": 1e6, "gamma2_per_s": 5e5, "detuning_hz": 3.24e6},
    },
}


def default_config(subcommand: str | None = None) -> dict[str, dict[str, Any]]:
    cfg = {
        section: {key: copy.deepcopy(spec[1]) for key, spec in keys.items()}
        for section, keys in _SCHEMA.items()
    }
    for section, keys in _SUBCOMMAND_OVERRIDES.get(subcommand or "", {}).items():
        cfg[section].update(keys)
    return cfg


def _check_key(section: str, key: str, value: Any) -> Any:
    if section not in _SCHEMA:
        raise ConfigError(f"unknown config section [{section}]")
    if key not in _SCHEMA[section]:
        raise ConfigError(f"unknown config key {section}.{key}")
    allowed, _ = _SCHEMA[section][key]
    if isinstance(value, bool) or not isinstance(value, allowed):
        names = "/".join(
            t.__name__ if t is not type(None) else "null" for t in allowed
        )
        raise ConfigError(
            f"{section}.{key}: expected {names}, got {type(value).__name__} ({value!r})"
        )
    return value


def merge_config(base: dict, incoming: dict) -> dict:
    merged = copy.deepcopy(base)
    for section, keys in incoming.items():
        if not isinstance(keys, dict):
            raise ConfigError(f"top-level entry {section!r} must be a table")
        for key, value in keys.items():
            merged[section][key] = _check_key(section, key, value)
    return merged


def parse_override(text: str) -> tuple[str, str, Any]:
    """Parse one --set section.key=value assignment (TOML value syntax)."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like section.key=value")
    target, raw_value = text.split("=", 1)
    target = target.strip()
    if target.count(".") != 1:
        raise ConfigError(f"override target {target!r} must be section.key")
    section, key = target.split(".")
    try:
        value = tomllib.loads(f"v = {raw_value.strip()}")["v"]
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse override value {raw_value!r}: {exc}") from exc
    return section, key, value


def load_config(
    path: str | None,
    subcommand: str | None = None,
    overrides: list[str] | None = None,
) -> dict[str, dict[str, Any]]:
    cfg = default_config(subcommand)
    if path is not None:
        try:
            with open(path, "rb") as fh:
                incoming = tomllib.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid TOML: {exc}") from exc
        cfg = merge_config(cfg, incoming)
    for text in overrides or []:
        section, key, value = parse_override(text)
        cfg[section][key] = _check_key(section, key, value)
    _validate_ranges(cfg)
    return cfg


def _validate_ranges(cfg: dict) -> None:
    def positive(section, key):
        if not cfg[section][key] > 0:
            raise ConfigError(f"{section}.{key} must be positive, got {cfg[section][key]!r}")

    def non_negative(section, key):
        if cfg[section][key] < 0:
            raise ConfigError(
                f"{section}.{key} must be non-negative, got {cfg[section][key]!r}"
            )

    positive("sensor", "gamma1_per_s")
    non_negative("sensor", "gamma2_per_s")
    non_negative("sensor", "saturation")
    positive("voltage", "gain_v")
    positive("voltage", "reference_v")
    non_negative("noise", "v1_density_v_per_sqrt_hz")
    non_negative("noise", "v2_density_v_per_sqrt_hz")
    non_negative("noise", "drift_amplitude")
    positive("trace", "sample_rate_hz")
    positive("trace", "duration_s")
    positive("bandwidth", "kappa_per_s_w")
    positive("drive", "frequency_hz")
    non_negative("drive", "amplitude_t")
    if not 1 <= cfg["lockin"]["filter_order"] <= 8:
        raise ConfigError(
            f"lockin.filter_order must be in [1, 8], got {cfg['lockin']['filter_order']!r}"
        )
    det = cfg["sensor"]["detuning_hz"]
    if isinstance(det, str) and det != "optimal":
        raise ConfigError(
            f"sensor.detuning_hz must be a number in Hz or 'optimal', got {det!r}"
        )
    if math.log10(cfg["bandwidth"]["f_max_hz"] / cfg["bandwidth"]["f_min_hz"]) <= 0:
        raise ConfigError("bandwidth.f_max_hz must exceed bandwidth.f_min_hz")


def _toml_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int,)):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, list):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    raise ConfigError(f"cannot serialize config value {value!r}")


def emit_toml(cfg: dict[str, dict[str, Any]]) -> str:
    """Deterministic TOML text of a resolved config (None keys omitted)."""
    lines = []
    for section in sorted(cfg):
        lines.append(f"[{section}]")
        for key in sorted(cfg[section]):
            value = cfg[section][key]
            if value is None:
                continue
            lines.append(f"{key} = {_toml_value(value)}")
        lines.append("")
    return "\n".join(lines)


def config_hash(cfg: dict[str, dict[str, Any]]) -> str:
    return hashlib.sha256(emit_toml(cfg).encode()).hexdigest()[:16]


# Builders: config dict -> model objects. All Hz -> rad/s conversions happen
# here and nowhere else.

def build_constants(cfg: dict) -> PhysicalConstants:
    c = cfg["constants"]
    return PhysicalConstants(
        zero_field_splitting=TWO_PI * c["zero_field_splitting_hz"],
        gyromagnetic_ratio=TWO_PI * c["gyromagnetic_ratio_hz_per_t"],
        hyperfine_coupling=TWO_PI * c["hyperfine_coupling_hz"],
    )


def build_voltage(cfg: dict) -> VoltageModel:
    v = cfg["voltage"]
    return VoltageModel(
        gain=float(v["gain_v"]),
        offset=float(v["offset"]),
        contrast=float(v["contrast"]),
        reference_level=float(v["reference_v"]),
    )


def build_noise(cfg: dict) -> NoiseModel:
    n = cfg["noise"]
    return NoiseModel(
        v1_noise_density=float(n["v1_density_v_per_sqrt_hz"]),
        v2_noise_density=float(n["v2_density_v_per_sqrt_hz"]),
        drift_amplitude=float(n["drift_amplitude"]),
        drift_corner_hz=float(n["drift_corner_hz"]),
        seed=int(cfg["run"]["seed"]),
    )


def build_drive(cfg: dict) -> DriveField:
    d = cfg["drive"]
    return DriveField(
        amplitude=float(d["amplitude_t"]),
        angular_frequency=TWO_PI * float(d["frequency_hz"]),
        phase=float(d["phase_rad"]),
    )


def build_lockin(cfg: dict) -> LockinConfig:
    lk = cfg["lockin"]
    f_ref = lk["reference_frequency_hz"]
    if f_ref is None:
        f_ref = cfg["drive"]["frequency_hz"]
    return LockinConfig(
        reference_frequency=float(f_ref),
        time_constant=float(lk["time_constant_s"]),
        filter_order=int(lk["filter_order"]),
        reference_phase=float(lk["reference_phase_rad"]),
    )


def build_setup(cfg: dict) -> SensorSetup:
    from .model import gamma2_for_t2

    s = cfg["sensor"]
    detuning = s["detuning_hz"]
    if not isinstance(detuning, str):
        detuning = TWO_PI * float(detuning)
    gamma1 = float(s["gamma1_per_s"])
    gamma2 = float(s["gamma2_per_s"])
    if s["t2_target_s"] is not None:
        gamma2 = gamma2_for_t2(float(s["t2_target_s"]), gamma1)
    kwargs: dict[str, Any] = dict(
        gamma1=gamma1,
        gamma2=gamma2,
        detuning=detuning,
        static_field=float(s["static_field_t"]),
        constants=build_constants(cfg),
        voltage=build_voltage(cfg),
    )
    if s["drive_amplitude_t"] is not None:
        kwargs["drive_amplitude"] = float(s["drive_amplitude_t"])
    else:
        kwargs["saturation"] = float(s["saturation"])
    return make_setup(**kwargs)
