"""System configuration: one flat dataclass covering air interface, MAC, traffic,
control and solver knobs, plus strict TOML ingestion.

The config file is TOML (chosen for comment support).  Tables group related keys
purely for readability; every leaf key must be a known field name and keys may
not repeat across tables.  An empty file yields the desk-scale defaults below.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Any, Mapping

try:
    import tomllib  # py >= 3.11
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib


class ConfigError(ValueError):
    """Raised when a configuration file or override is rejected."""


@dataclass(frozen=True)
class SystemConfig:
    # population and geometry
    num_users: int = 4
    num_wifi: int = 3
    num_locations: int = 25        # square grid of cells
    cell_size_m: float = 15.0
    min_distance_m: float = 10.0   # path-loss clamp around the base station
    mobility_stay_prob: float | None = 0.5  # None = uniform over self + neighbors

    # cellular downlink
    num_subchannels: int = 4
    bandwidth_mhz: float = 2.5
    noise_psd_w_per_mhz: float = 1e-7
    p_max_cell_w: float = 20.0
    kappa: float = 4.7             # power amplifier scaling

    # Wi-Fi MAC (DCF) timing and energy
    payload_bits: float = 800.0
    t_busy_us: float = 28.0
    t_success_us: float = 100.0
    t_collision_us: float = 100.0
    e_busy_uj: float = 22.4
    e_success_uj: float = 180.0
    # collision energy for j of rho contenders: c0*rho + c1*j + c2 (uJ)
    collision_energy_uj: tuple[float, float, float] = (80.0, 100.0, 80.0)
    cw_min: int = 32
    backoff_stages: int = 5

    # traffic
    mean_arrival_mbps: float = 2.0
    a_max_mbps: float | None = None  # default: twice the mean

    # frame structure and control
    slot_dt_s: float = 0.01
    frame_slots: int = 100         # slots per frame
    window_frames: int = 5         # frames per prediction window
    v: float = 0.5                 # power/backlog trade-off weight, Mb^2/(W*s)
    theta_mbps: float = 0.5        # virtual extra arrival inside a window
    error_rate: float = 0.0        # forecast corruption probability

    # simulation
    num_frames: int = 500
    warmup_frac: float = 0.1
    seed: int = 20240

    # solver knobs
    dual_tol: float = 1e-8         # relative tolerance of the dual search
    tie_tol: float = 1e-9          # relative tie tolerance for argmax sets
    budget_tol: float = 1e-9       # relative tolerance of the budget identity
    enum_cap: int = 4096           # extreme-point candidates per slot
    stage1_cap: int = 20000        # joint network selections per frame
    mc_samples: int = 50           # channel samples for selection under uncertainty
    gp_eps_rel: float = 1e-6       # window objective stop threshold (relative)
    gp_max_iters: int = 50

    # ------------------------------------------------------------------
    @property
    def a_max(self) -> float:
        return 2.0 * self.mean_arrival_mbps if self.a_max_mbps is None else self.a_max_mbps

    @property
    def grid_side(self) -> int:
        return math.isqrt(self.num_locations)

    @property
    def subchannel_noise_w(self) -> float:
        return self.noise_psd_w_per_mhz * self.bandwidth_mhz / self.num_subchannels

    @property
    def subchannel_bw_mhz(self) -> float:
        return self.bandwidth_mhz / self.num_subchannels

    def validate(self) -> "SystemConfig":
        def need(cond: bool, msg: str) -> None:
            if not cond:
                raise ConfigError(msg)

        need(self.num_users >= 1, "num_users must be at least 1")
        need(self.num_wifi >= 0, "num_wifi must be non-negative")
        need(self.num_locations >= 1, "num_locations must be at least 1")
        need(self.grid_side ** 2 == self.num_locations,
             "num_locations must be a perfect square (cells form a square grid)")
        need(self.cell_size_m > 0, "cell_size_m must be positive")
        need(self.min_distance_m > 0, "min_distance_m must be positive")
        if self.mobility_stay_prob is not None:
            need(0.0 <= self.mobility_stay_prob <= 1.0,
                 "mobility_stay_prob must lie in [0, 1]")
        need(self.num_subchannels >= 1, "num_subchannels must be at least 1")
        need(self.bandwidth_mhz > 0, "bandwidth_mhz must be positive")
        need(self.noise_psd_w_per_mhz > 0, "noise_psd_w_per_mhz must be positive")
        need(self.p_max_cell_w > 0, "p_max_cell_w must be positive")
        need(self.kappa > 0, "kappa must be positive")
        need(self.payload_bits > 0, "payload_bits must be positive")
        for name in ("t_busy_us", "t_success_us", "t_collision_us",
                     "e_busy_uj", "e_success_uj"):
            need(getattr(self, name) > 0, f"{name} must be positive")
        need(len(self.collision_energy_uj) == 3,
             "collision_energy_uj must have exactly three coefficients")
        need(self.cw_min >= 2, "cw_min must be at least 2")
        need(self.backoff_stages >= 0, "backoff_stages must be non-negative")
        need(self.mean_arrival_mbps >= 0, "mean_arrival_mbps must be non-negative")
        need(self.a_max >= 2.0 * self.mean_arrival_mbps,
             "a_max_mbps must cover the largest arrival state (twice the mean)")
        need(self.slot_dt_s > 0, "slot_dt_s must be positive")
        need(self.frame_slots >= 1, "frame_slots must be at least 1")
        need(self.window_frames >= 1, "window_frames must be at least 1")
        need(self.v >= 0, "v must be non-negative")
        need(self.theta_mbps >= 0, "theta_mbps must be non-negative")
        need(0.0 <= self.error_rate <= 1.0, "error_rate must lie in [0, 1]")
        need(self.num_frames >= 1, "num_frames must be at least 1")
        need(0.0 <= self.warmup_frac < 1.0, "warmup_frac must lie in [0, 1)")
        for name in ("dual_tol", "tie_tol", "budget_tol", "gp_eps_rel"):
            need(getattr(self, name) > 0, f"{name} must be positive")
        for name in ("enum_cap", "stage1_cap", "mc_samples", "gp_max_iters"):
            need(getattr(self, name) >= 1, f"{name} must be at least 1")
        return self

    def replace(self, **changes: Any) -> "SystemConfig":
        return dataclasses.replace(self, **changes).validate()


_FIELDS = {f.name: f for f in dataclasses.fields(SystemConfig)}
# fields that accept "none"/absent to mean the derived default
_OPTIONAL = {"a_max_mbps", "mobility_stay_prob"}


def _coerce(name: str, value: Any) -> Any:
    """Best-effort coercion of a TOML value onto the field's declared type."""
    if name in _OPTIONAL and (value is None or value == "none"):
        return None
    ftype = _FIELDS[name].type
    if ftype == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name} must be an integer, got {value!r}")
        return value
    if ftype.startswith("float"):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name} must be a number, got {value!r}")
        return float(value)
    if ftype.startswith("tuple"):
        if not isinstance(value, (list, tuple)) or len(value) != 3:
            raise ConfigError(f"{name} must be a list of three numbers")
        return tuple(float(x) for x in value)
    return value


def _flatten(mapping: Mapping[str, Any], prefix: str = "") -> dict[str, Any]:
    flat: dict[str, Any] = {}
    for key, value in mapping.items():
        if isinstance(value, Mapping):
            sub = _flatten(value, prefix=f"{prefix}{key}.")
            dup = set(sub) & set(flat)
            if dup:
                raise ConfigError(f"duplicate keys across tables: {sorted(dup)}")
            flat.update(sub)
        else:
            leaf = key.rsplit(".", 1)[-1]
            if leaf in flat:
                raise ConfigError(f"duplicate keys across tables: ['{leaf}']")
            flat[leaf] = value
    return flat


def config_from_mapping(mapping: Mapping[str, Any]) -> SystemConfig:
    flat = _flatten(mapping)
    unknown = sorted(set(flat) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"unknown configuration keys: {unknown}")
    kwargs = {name: _coerce(name, value) for name, value in flat.items()}
    return SystemConfig(**kwargs).validate()


def load_config(path: str | None, overrides: list[str] | None = None) -> SystemConfig:
    """Read a TOML config file (optional) and apply ``key=value`` overrides."""
    data: dict[str, Any] = {}
    if path is not None:
        with open(path, "rb") as fh:
            try:
                data = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"malformed config file {path}: {exc}") from exc
    cfg = config_from_mapping(data)
    if overrides:
        changes: dict[str, Any] = {}
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"override {item!r} is not of the form key=value")
            key, raw = item.split("=", 1)
            key = key.strip().rsplit(".", 1)[-1]
            if key not in _FIELDS:
                raise ConfigError(f"unknown configuration keys: ['{key}']")
            changes[key] = _coerce(key, _parse_literal(raw.strip()))
        cfg = dataclasses.replace(cfg, **changes).validate()
    return cfg


def _parse_literal(raw: str) -> Any:
    low = raw.lower()
    if low in ("true", "false"):
        return low == "true"
    if low == "none":
        return None
    if raw.startswith("["):
        try:
            return tomllib.loads(f"x = {raw}")["x"]
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"cannot parse override value {raw!r}") from exc
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw
