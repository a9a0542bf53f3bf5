"""Core physical-layer quantities and feasibility checks.

Conventions used throughout the package:

* queues are in Mb, rates in Mb/s, powers in W, gains are channel amplitudes;
* `alpha` is the per-user network selection: 0 = macrocell, 1..N = Wi-Fi AP;
* `x` is the (L, M) 0/1 subchannel assignment, `p` the (L, M) power grid in W;
* per-frame decision tensors carry a leading slot axis (T, L, M).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import SystemConfig
from .wifi import DcfTables

LN2 = math.log(2.0)


class ConstraintViolation(ValueError):
    """An emitted decision violates one of the feasibility constraints."""


# ---------------------------------------------------------------- rates/power

def macrocell_rate(x, p, gain, cfg: SystemConfig):
    """Downlink rate in Mb/s over assigned subchannels.

    Accepts arrays whose trailing axis is the subchannel axis; leading axes
    broadcast, so a (T, L, M) stack evaluates per slot and user in one call.
    """
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    gain = np.asarray(gain, dtype=float)
    if np.any(p < 0):
        raise ValueError("negative transmit power")
    snr = p * gain ** 2 / cfg.subchannel_noise_w
    return cfg.subchannel_bw_mhz * np.sum(x * np.log2(1.0 + snr), axis=-1)


def macrocell_power(p, cfg: SystemConfig):
    """Base-station power draw: amplifier scaling times total transmit power."""
    p = np.asarray(p, dtype=float)
    if np.any(p < 0):
        raise ValueError("negative transmit power")
    return cfg.kappa * p.sum(axis=(-2, -1))


def wifi_counts(alpha, num_wifi: int) -> np.ndarray:
    """Stations per AP (index 0 unused result-wise; APs are 1..N)."""
    alpha = np.asarray(alpha, dtype=int)
    return np.bincount(alpha, minlength=num_wifi + 1)[1:]


def total_power(alpha, p_slot, dcf: DcfTables, cfg: SystemConfig) -> float:
    """System power for one slot: macrocell amplifier plus every AP (idle too)."""
    counts = wifi_counts(alpha, cfg.num_wifi)
    return float(macrocell_power(p_slot, cfg)) + dcf.total_power_w(counts)


def service_rates(alpha, x, p, gain, dcf: DcfTables, cfg: SystemConfig) -> np.ndarray:
    """Per-user service rate (Mb/s) for one slot under a full decision."""
    alpha = np.asarray(alpha, dtype=int)
    rates = np.where(alpha == 0, macrocell_rate(x, p, gain, cfg), 0.0)
    counts = wifi_counts(alpha, cfg.num_wifi)
    on_wifi = alpha > 0
    if on_wifi.any():
        rho = counts[alpha[on_wifi] - 1]
        rates[on_wifi] = dcf.rate_mbps[rho] / rho
    return rates


# ------------------------------------------------------------------- queues

def step_queue(q, served_mb, arrived_mb):
    """One slot of backlog dynamics: drain what is there, then add arrivals."""
    q = np.asarray(q, dtype=float)
    served = np.asarray(served_mb, dtype=float)
    arrived = np.asarray(arrived_mb, dtype=float)
    if np.any(served < 0) or np.any(arrived < 0):
        raise ValueError("served and arrived mass must be non-negative")
    return np.maximum(q - served, 0.0) + arrived


# ------------------------------------------------------------------- bounds

@dataclass(frozen=True)
class DriftBounds:
    b1_mb2: float            # per-slot drift constant
    b2_mb2: float            # per-frame drift constant (frame_slots * b1)
    p_max_w: float           # largest possible instantaneous system power
    power_gap_w: float       # b2 / V additive power-optimality gap (inf at V=0)
    queue_gap_mb: float      # frame-average vs slot-average queue gap bound


def drift_bounds(cfg: SystemConfig, dcf: DcfTables, r_max_mbps: float) -> DriftBounds:
    """Constants of the drift/penalty argument at the configured scale.

    ``r_max_mbps`` is the caller's bound on any single user's service rate
    (e.g. from `rate_upper_bound` with the realized maximum gain).
    """
    a_slot = cfg.a_max * cfg.slot_dt_s
    r_slot = r_max_mbps * cfg.slot_dt_s
    b1 = 0.5 * cfg.num_users * (a_slot ** 2 + r_slot ** 2)
    b2 = cfg.frame_slots * b1
    p_max = cfg.kappa * cfg.p_max_cell_w + cfg.num_wifi * dcf.p_max_w
    gap_w = b2 / cfg.v if cfg.v > 0 else math.inf
    queue_gap = 0.5 * (cfg.frame_slots - 1) * cfg.num_users * a_slot
    return DriftBounds(b1_mb2=b1, b2_mb2=b2, p_max_w=p_max,
                       power_gap_w=gap_w, queue_gap_mb=queue_gap)


def rate_upper_bound(gain_max: float, dcf: DcfTables, cfg: SystemConfig) -> float:
    """Loose per-user rate cap: full budget on every subchannel at the best gain,
    or the best single-station Wi-Fi throughput, whichever is larger."""
    snr = cfg.p_max_cell_w * gain_max ** 2 / cfg.subchannel_noise_w
    cell = cfg.subchannel_bw_mhz * cfg.num_subchannels * math.log2(1.0 + snr)
    wifi = float(dcf.rate_mbps.max(initial=0.0))
    return max(cell, wifi)


# ---------------------------------------------------------------- validation

def validate_decision(alpha, x, p, locations, coverage, cfg: SystemConfig,
                      atol: float = 1e-9) -> None:
    """Check a decision against the feasibility constraints; raise on violation.

    ``x``/``p`` may be (L, M) for one slot or (T, L, M) for a frame.  Checks:
    selection within coverage, one user per subchannel, no cellular resources
    for Wi-Fi users, non-negative powers within the budget.
    """
    alpha = np.asarray(alpha, dtype=int)
    x = np.asarray(x)
    p = np.asarray(p, dtype=float)
    if x.ndim == 2:
        x = x[None]
        p = p[None]
    for l, a in enumerate(alpha):
        if a != 0 and a not in coverage[locations[l]]:
            raise ConstraintViolation(
                f"selection outside coverage: user {l} chose AP {a} "
                f"at location {locations[l]}")
    if not np.isin(x, (0, 1)).all():
        raise ConstraintViolation("subchannel assignment must be 0/1")
    if np.any(x.sum(axis=1) > 1):
        raise ConstraintViolation("subchannel assigned to more than one user")
    on_wifi = alpha > 0
    if np.any(x[:, on_wifi, :] != 0):
        raise ConstraintViolation("subchannel assigned to a Wi-Fi user")
    if np.any(p < 0):
        raise ConstraintViolation("negative transmit power")
    if np.any(p[:, on_wifi, :] > 0):
        raise ConstraintViolation("transmit power allocated to a Wi-Fi user")
    budget = p.sum(axis=(1, 2))
    if np.any(budget > cfg.p_max_cell_w + atol):
        raise ConstraintViolation(
            f"cellular power budget exceeded: {budget.max():.12g} W "
            f"> {cfg.p_max_cell_w} W")
