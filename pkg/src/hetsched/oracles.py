"""Reference solvers used to cross-check the production code.

Everything here recomputes results through a different algorithm family than
the production path: dense grid search plus constrained ascent for the slot
problem, exhaustive enumeration for joint selection, damped fixed-point
iteration for the contention probability.  Slow and simple on purpose; only
run at tiny scale.
"""
from __future__ import annotations

import itertools
import math

import numpy as np
from scipy import optimize

from .config import SystemConfig
from .env import PATHLOSS_EXP, RAYLEIGH_SCALE, FrameTrace, Topology
from .model import LN2
from .schedulers import _wifi_rate_vector, candidate_selections
from .wifi import DcfTables, _tau_of_p


def random_slot_instance(rng: np.random.Generator, num_l: int, num_ch: int):
    """Backlog weights and channel gains with realistic magnitudes."""
    weights = rng.uniform(0.05, 30.0, num_l)
    dist = rng.uniform(10.0, 50.0, (num_l, 1))
    gains = rng.rayleigh(RAYLEIGH_SCALE, (num_l, num_ch)) / dist ** PATHLOSS_EXP
    return weights, gains


# ------------------------------------------------------------- slot problem

def slot_value(assign, powers, weights, gains, cfg: SystemConfig) -> float:
    """Weighted-rate-minus-priced-power value of one slot allocation where
    channel m carries user assign[m] at powers[m] watts."""
    bw = cfg.subchannel_bw_mhz
    noise = cfg.subchannel_noise_w
    vk = cfg.v * cfg.kappa
    val = -vk * float(np.sum(powers))
    for m, l in enumerate(assign):
        g2 = float(gains[l, m]) ** 2
        val += bw * float(weights[l]) * math.log2(1.0 + powers[m] * g2 / noise)
    return val


def _power_grid(cfg: SystemConfig, points: int) -> np.ndarray:
    p_max = cfg.p_max_cell_w
    log_part = np.geomspace(p_max * 1e-7, p_max, points)
    lin_part = np.linspace(0.0, p_max, points + 1)
    return np.unique(np.concatenate([[0.0], log_part, lin_part]))


def brute_force_slot(weights, gains, cfg: SystemConfig, points: int = 160):
    """Grid search over assignments and powers, polished by constrained
    ascent on the winning assignment.  Returns (value, assign, powers)."""
    weights = np.asarray(weights, dtype=float)
    gains = np.asarray(gains, dtype=float)
    num_l, num_ch = gains.shape
    bw = cfg.subchannel_bw_mhz
    noise = cfg.subchannel_noise_w
    vk = cfg.v * cfg.kappa
    pts = _power_grid(cfg, points)

    best_val = -math.inf
    best = None
    for assign in itertools.product(range(num_l), repeat=num_ch):
        w = weights[list(assign)]
        g2 = gains[list(assign), range(num_ch)] ** 2
        grids = np.meshgrid(*([pts] * num_ch), indexing="ij")
        total = sum(grids)
        val = -vk * total
        for m in range(num_ch):
            val = val + bw * w[m] * np.log2(1.0 + grids[m] * g2[m] / noise)
        val = np.where(total <= cfg.p_max_cell_w + 1e-12, val, -math.inf)
        flat = int(np.argmax(val))
        idx = np.unravel_index(flat, val.shape)
        v0 = float(val[idx])
        p0 = np.array([grids[m][idx] for m in range(num_ch)])

        def neg(p, w=w, g2=g2):
            return float(vk * p.sum()
                         - (bw * w * np.log2(1.0 + p * g2 / noise)).sum())

        res = optimize.minimize(
            neg, p0, method="SLSQP",
            bounds=[(0.0, cfg.p_max_cell_w)] * num_ch,
            constraints=[{"type": "ineq",
                          "fun": lambda p: cfg.p_max_cell_w - p.sum()}],
            options={"maxiter": 200, "ftol": 1e-14})
        cand_val, cand_p = v0, p0
        if res.success and -res.fun > v0 and res.x.sum() <= cfg.p_max_cell_w + 1e-9:
            cand_val, cand_p = -float(res.fun), np.maximum(res.x, 0.0)
        if cand_val > best_val:
            best_val = cand_val
            best = (assign, cand_p)
    assign, powers = best
    return best_val, np.asarray(assign, dtype=int), powers


# ----------------------------------------------------------- frame problem

def brute_force_frame(q_mb, frame: FrameTrace, cfg: SystemConfig,
                      topo: Topology, dcf: DcfTables, points: int = 120):
    """Exhaustive joint network selection with grid-searched slot
    allocations.  Returns (value, alpha).  Only viable at toy sizes."""
    q_mb = np.asarray(q_mb, dtype=float)
    slots = frame.gains.shape[0]
    options = candidate_selections(frame.locations, topo)
    best_val = math.inf
    best_alpha = None
    for combo in itertools.product(*options):
        alpha = np.asarray(combo, dtype=int)
        wifi_rates, wifi_power = _wifi_rate_vector(alpha, dcf, cfg)
        value = cfg.v * slots * wifi_power - slots * float(q_mb @ wifi_rates)
        cell = np.flatnonzero(alpha == 0)
        if cell.size:
            for t in range(slots):
                v, _, _ = brute_force_slot(q_mb[cell],
                                           frame.gains[t][cell], cfg, points)
                value -= v
        if value < best_val:
            best_val = value
            best_alpha = alpha
    return best_val, best_alpha


# ------------------------------------------------------------- DCF fixed point

def reference_phi(rho: int, cfg: SystemConfig,
                  damping: float = 0.5, iters: int = 20000) -> float:
    """Damped fixed-point iteration for the per-station transmission
    probability; independent of the production bisection."""
    if rho <= 1:
        return 2.0 / (cfg.cw_min + 1.0) if rho == 1 else 0.0
    tau = 0.1
    for _ in range(iters):
        p = 1.0 - (1.0 - tau) ** (rho - 1)
        nxt = _tau_of_p(p, cfg.cw_min, cfg.backoff_stages)
        new = (1.0 - damping) * tau + damping * nxt
        if abs(new - tau) < 1e-16:
            tau = new
            break
        tau = new
    return tau


def fixed_point_residual(phi: float, rho: int, cfg: SystemConfig) -> float:
    """|phi - tau(p(phi))| of the contention fixed point."""
    if rho <= 1:
        target = 2.0 / (cfg.cw_min + 1.0) if rho == 1 else 0.0
        return abs(phi - target)
    p = 1.0 - (1.0 - phi) ** (rho - 1)
    return abs(phi - _tau_of_p(p, cfg.cw_min, cfg.backoff_stages))


# ------------------------------------------------------- closed-form duals

def single_user_lambda(weight: float, gain: float, cfg: SystemConfig) -> float:
    """Exact budget multiplier for one user on one channel: the price at
    which the water level exactly spends the budget, zero if it already
    fits at the base price."""
    g2 = gain * gain
    bw = cfg.subchannel_bw_mhz
    noise = cfg.subchannel_noise_w
    vk = cfg.v * cfg.kappa
    if weight <= 0:
        return 0.0
    price_bind = bw * weight * g2 / (LN2 * (cfg.p_max_cell_w * g2 + noise))
    return max(price_bind - vk, 0.0)
