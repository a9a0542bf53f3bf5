"""Saturated DCF contention model: per-station transmission probability and the
resulting network throughput / power draw as functions of the station count.

All timings are in microseconds and energies in microjoules, so rates come out
in Mb/s and powers in watts without unit juggling.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import SystemConfig


def _tau_of_p(p: float, cw_min: int, stages: int) -> float:
    """Transmission probability implied by a conditional collision probability."""
    num = 2.0 * (1.0 - 2.0 * p)
    den = (1.0 - 2.0 * p) * (cw_min + 1) + p * cw_min * (2.0 ** stages - 1.0)
    return num / den


def solve_phi(rho: int, cw_min: int, stages: int, tol: float = 1e-14) -> float:
    """Fixed point of tau = tau_of(1 - (1-tau)^(rho-1)) for rho contending stations.

    The residual tau - tau_of(p(tau)) is negative at 0+ and positive near 1, and
    strictly increasing where the collision probability stays below 1/2, so
    bisection is reliable.  A single station never collides: phi = 2/(cw_min+1).
    """
    if rho < 1:
        raise ValueError("rho must be at least 1")
    if rho == 1:
        return 2.0 / (cw_min + 1)

    def residual(tau: float) -> float:
        p = 1.0 - (1.0 - tau) ** (rho - 1)
        return tau - _tau_of_p(p, cw_min, stages)

    lo, hi = 1e-12, 1.0 - 1e-12
    if residual(lo) > 0 or residual(hi) < 0:  # pragma: no cover - defensive
        raise ArithmeticError("no bracketing interval for the DCF fixed point")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if residual(mid) <= 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


def _cycle_time_us(phi: float, rho: int, cfg: SystemConfig) -> tuple[float, float, float]:
    """(p_tr, p_s, expected slot duration in us) for rho stations."""
    p_tr = 1.0 - (1.0 - phi) ** rho
    p_s = rho * phi * (1.0 - phi) ** (rho - 1) / p_tr if p_tr > 0 else 0.0
    dur = ((1.0 - p_tr) * cfg.t_busy_us
           + p_tr * p_s * cfg.t_success_us
           + p_tr * (1.0 - p_s) * cfg.t_collision_us)
    return p_tr, p_s, dur


def network_rate_mbps(phi: float, rho: int, cfg: SystemConfig) -> float:
    """Total saturation throughput of one access point with rho stations."""
    if rho == 0:
        return 0.0
    p_tr, p_s, dur = _cycle_time_us(phi, rho, cfg)
    return p_tr * p_s * cfg.payload_bits / dur


def network_power_w(phi: float, rho: int, cfg: SystemConfig) -> float:
    """Average power draw of one access point with rho stations (idle included)."""
    if rho == 0:
        return cfg.e_busy_uj / cfg.t_busy_us
    p_tr, p_s, dur = _cycle_time_us(phi, rho, cfg)
    c0, c1, c2 = cfg.collision_energy_uj
    coll = 0.0
    for j in range(2, rho + 1):
        p_cj = math.comb(rho, j) * phi ** j * (1.0 - phi) ** (rho - j)
        coll += p_cj * (c0 * rho + c1 * j + c2)
    energy = (1.0 - p_tr) * cfg.e_busy_uj + p_tr * p_s * cfg.e_success_uj + coll
    return energy / dur


@dataclass(frozen=True)
class DcfTables:
    """Precomputed per-station-count MAC quantities for rho = 0..num_users."""

    phi: np.ndarray        # transmission probability (0.0 at rho = 0)
    rate_mbps: np.ndarray  # total network throughput
    power_w: np.ndarray    # average network power

    @classmethod
    def build(cls, cfg: SystemConfig) -> "DcfTables":
        n = cfg.num_users
        phi = np.zeros(n + 1)
        rate = np.zeros(n + 1)
        power = np.zeros(n + 1)
        power[0] = cfg.e_busy_uj / cfg.t_busy_us
        for rho in range(1, n + 1):
            phi[rho] = solve_phi(rho, cfg.cw_min, cfg.backoff_stages)
            rate[rho] = network_rate_mbps(phi[rho], rho, cfg)
            power[rho] = network_power_w(phi[rho], rho, cfg)
        return cls(phi=phi, rate_mbps=rate, power_w=power)

    def per_user_rate(self, rho: int) -> float:
        """Equal share of the network throughput among rho stations."""
        return self.rate_mbps[rho] / rho if rho > 0 else 0.0

    @property
    def p_max_w(self) -> float:
        return float(self.power_w.max())

    def total_power_w(self, counts: np.ndarray) -> float:
        """Sum of per-network powers given station counts for every AP."""
        return float(self.power_w[np.asarray(counts, dtype=int)].sum())
