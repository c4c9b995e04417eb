"""System configuration and the JSON boundary.

Everything inside the package is linear (W, linear gains). Conversions from
dB / dBm happen only in :func:`config_from_dict`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from importlib import resources
from typing import Any

import jsonschema
import numpy as np

IDEAL = math.inf  # marker for an ideal (infinite resolution) converter


class ConfigError(ValueError):
    """Invalid configuration. ``path`` points at the offending field."""

    def __init__(self, message: str, path: str = ""):
        super().__init__(message)
        self.path = path


def dbm_to_watt(x):
    return 10.0 ** ((np.asarray(x, dtype=float) - 30.0) / 10.0)


def db_to_linear(x):
    return 10.0 ** (np.asarray(x, dtype=float) / 10.0)


@dataclass(frozen=True, eq=False)
class SystemConfig:
    M: int = 16
    K: int = 8
    N: int = 2
    tau_c: int = 50
    tau_p: int = 4
    area_side: float = 1000.0
    bandwidth: float = 20e6
    noise_power: float = float(dbm_to_watt(-94.0))
    pilot_power: np.ndarray = None  # (K,) W
    p_max: float = 0.1
    velocities: np.ndarray = None  # (K,) m/s
    carrier_freq: float = 2e9
    sample_time: float = 1e-5
    kappa_t: np.ndarray = None  # (K,)
    kappa_r: np.ndarray = None  # (M,)
    dac_bits: np.ndarray = None  # (K,), IDEAL for infinite resolution
    adc_bits: np.ndarray = None  # (M*N,), AP-major
    asd_deg: float = 30.0
    shadow_sigma_db: float = 4.0
    antenna_spacing: float = 0.5
    pilot_distortion: str = "shared"
    seed: int = 0

    def __post_init__(self):
        K, M, N = self.K, self.M, self.N
        defaults = {
            "pilot_power": np.full(K, float(dbm_to_watt(10.0))),
            "velocities": np.full(K, 15.0),
            "kappa_t": np.zeros(K),
            "kappa_r": np.zeros(M),
            "dac_bits": np.full(K, IDEAL),
            "adc_bits": np.full(M * N, IDEAL),
        }
        for name, value in defaults.items():
            if getattr(self, name) is None:
                object.__setattr__(self, name, value)
        sizes = {"pilot_power": K, "velocities": K, "kappa_t": K, "kappa_r": M,
                 "dac_bits": K}
        for name, size in sizes.items():
            object.__setattr__(self, name, _broadcast(getattr(self, name), size, name))
        object.__setattr__(self, "adc_bits", expand_adc_bits(self.adc_bits, M, N))
        self.validate()

    @property
    def anchor(self) -> int:
        """Anchor instant lambda (1-based): the first data instant."""
        return self.tau_p + 1

    def validate(self):
        for name in ("M", "K", "N", "tau_p", "tau_c"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1", name)
        if not self.tau_p < self.tau_c:
            raise ConfigError("need 1 <= tau_p < tau_c", "tau_p")
        if self.area_side <= 0:
            raise ConfigError("area_side must be positive", "area_side")
        if self.noise_power < 0 or self.p_max < 0:
            raise ConfigError("powers must be nonnegative", "p_max")
        for name in ("pilot_power", "velocities", "kappa_t", "kappa_r"):
            if np.any(getattr(self, name) < 0):
                raise ConfigError(f"{name} must be nonnegative", name)
        for name in ("dac_bits", "adc_bits"):
            if np.any(getattr(self, name) < 1):
                raise ConfigError(f"{name} entries must be >= 1 or ideal", name)
        if self.pilot_distortion not in ("shared", "per_ap"):
            raise ConfigError("pilot_distortion must be 'shared' or 'per_ap'",
                              "pilot_distortion")

    def with_(self, **changes) -> "SystemConfig":
        """Copy with changes; per-UE/per-AP arrays are re-broadcast when M/K/N change."""
        resized = {"K": ("pilot_power", "velocities", "kappa_t", "dac_bits"),
                   "M": ("kappa_r", "adc_bits"), "N": ("adc_bits",)}
        for dim, names in resized.items():
            if dim in changes and changes[dim] != getattr(self, dim):
                for name in names:
                    if name not in changes:
                        changes[name] = _shrink_to_scalar(getattr(self, name), name)
        return replace(self, **changes)


def _broadcast(value, size, name):
    arr = np.atleast_1d(np.asarray(value, dtype=float)).copy()
    if arr.size == 1:
        arr = np.full(size, arr[0])
    if arr.size != size:
        raise ConfigError(f"{name} needs 1 or {size} entries, got {arr.size}", name)
    return arr


def _shrink_to_scalar(arr, name):
    # resizing only makes sense for uniform settings
    if np.all(arr == arr[0]):
        return arr[0]
    raise ConfigError(f"cannot resize non-uniform {name}", name)


def expand_adc_bits(bits, M: int, N: int) -> np.ndarray:
    """Expand an ADC setting to one entry per AP antenna (length M*N, AP-major).

    Accepts a scalar, a per-AP list (length M), a per-antenna list (length M*N),
    or a dict ``{"ap_groups": [b1, ..]}`` that splits the APs into equal groups.
    """
    if isinstance(bits, dict):
        groups = bits.get("ap_groups")
        if groups is None:
            raise ConfigError("adc_bits dict needs 'ap_groups'", "adc_bits")
        groups = [_parse_bits(b) for b in groups]
        per_ap = np.array([groups[min(m * len(groups) // M, len(groups) - 1)]
                           for m in range(M)], dtype=float)
        return np.repeat(per_ap, N)
    arr = np.atleast_1d(np.asarray(bits, dtype=float))
    if arr.size == 1:
        return np.full(M * N, arr[0])
    if arr.size == M:
        return np.repeat(arr, N)
    if arr.size == M * N:
        return arr.copy()
    raise ConfigError(f"adc_bits needs 1, M or M*N entries, got {arr.size}", "adc_bits")


def _parse_bits(v):
    if v is None or v == "ideal":
        return IDEAL
    if isinstance(v, list):
        return [_parse_bits(x) for x in v]
    return float(v)


def load_schema() -> dict:
    text = resources.files("cfmimo").joinpath("config.schema.json").read_text()
    return json.loads(text)


def config_from_dict(doc: dict[str, Any]) -> SystemConfig:
    """Build a SystemConfig from the JSON document form (dB fields converted here)."""
    try:
        jsonschema.validate(doc, load_schema())
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path)
        raise ConfigError(exc.message, path) from None

    kw: dict[str, Any] = {}
    plain = ("M", "K", "N", "tau_c", "tau_p", "area_side", "bandwidth", "velocities",
             "carrier_freq", "sample_time", "kappa_t", "kappa_r", "asd_deg",
             "shadow_sigma_db", "antenna_spacing", "pilot_distortion", "seed")
    for name in plain:
        if name in doc:
            kw[name] = doc[name]
    if "velocities_kmh" in doc:
        kw["velocities"] = np.asarray(doc["velocities_kmh"], dtype=float) / 3.6
    if "noise_power_dbm" in doc:
        kw["noise_power"] = float(dbm_to_watt(doc["noise_power_dbm"]))
    if "pilot_power_dbm" in doc:
        kw["pilot_power"] = dbm_to_watt(doc["pilot_power_dbm"])
    if "p_max_dbm" in doc:
        kw["p_max"] = float(dbm_to_watt(doc["p_max_dbm"]))
    if "dac_bits" in doc:
        kw["dac_bits"] = _parse_bits(doc["dac_bits"])
    if "adc_bits" in doc:
        v = doc["adc_bits"]
        kw["adc_bits"] = ({"ap_groups": v["ap_groups"]} if isinstance(v, dict)
                          else _parse_bits(v))
    return SystemConfig(**kw)


def load_config(path) -> SystemConfig:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from None
    return config_from_dict(doc)


def hardware_profile(cfg: SystemConfig, name: str) -> SystemConfig:
    """Named impairment presets used by the validation experiment."""
    M, K, N = cfg.M, cfg.K, cfg.N
    ideal_adc, ideal_dac = np.full(M * N, IDEAL), np.full(K, IDEAL)
    presets = {
        "ideal": dict(kappa_t=np.zeros(K), kappa_r=np.zeros(M),
                      adc_bits=ideal_adc, dac_bits=ideal_dac),
        "rf": dict(kappa_t=np.full(K, 0.1), kappa_r=np.full(M, 0.1),
                   adc_bits=ideal_adc, dac_bits=ideal_dac),
        "rf_dynamic_adc": dict(kappa_t=np.full(K, 0.1), kappa_r=np.full(M, 0.1),
                               adc_bits=expand_adc_bits({"ap_groups": [1, 2, 4, 6]}, M, N),
                               dac_bits=ideal_dac),
        "one_bit": dict(kappa_t=np.zeros(K), kappa_r=np.zeros(M),
                        adc_bits=np.ones(M * N), dac_bits=np.ones(K)),
    }
    if name not in presets:
        raise ConfigError(f"unknown hardware profile {name!r}", "profile")
    return replace(cfg, **presets[name])


HARDWARE_PROFILES = ("ideal", "rf", "rf_dynamic_adc", "one_bit")
