"""Per-slot subchannel assignment and power allocation for the macrocell.

The slot problem maximizes the backlog-weighted sum rate minus the priced
transmit power,

    max_{x,p}  (B/M) * sum_{m,l} Q_l x_lm log2(1 + p_lm h_lm^2 / (N0 B/M))
               - V kappa * sum p
    s.t.       sum p <= p_max_cell,   sum_l x_lm <= 1,

via its Lagrangian dual: for a power price lam each subchannel independently
prefers the user with the largest single-channel score mu_lm(lam); the dual is
minimized over lam >= 0 (golden section plus a monotone budget polish), and an
extreme point with exactly one user per subchannel is extracted.  If the
budget identity fails at the dual optimum (ties), power is re-optimized on the
fixed assignment by water-filling; the same water-fill reproduces the dual
powers whenever the identity does hold, so both cases share one code path.

Because the rate credits log2, the water level carries a 1/ln2 relative to the
natural-log form: p*_lm = (B/M) * (Q_l/(ln2*(Vkappa+lam)) - N0/h^2)^+, which
is the exact stationarity condition of the objective above.

All internal routines batch over a leading slot axis so a whole frame (or a
set of Monte-Carlo channel draws) is solved in lockstep.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .config import SystemConfig
from .model import LN2

_GOLD = (math.sqrt(5.0) - 1.0) / 2.0  # interval shrink factor per iteration
_MAX_BISECT = 200


# ------------------------------------------------------------ scalar pieces

def power_at_price(price, weights, gain2, cfg: SystemConfig):
    """Water-filling power per (user, channel) at total power price
    ``price = V*kappa + lam``.  ``weights`` must broadcast against ``gain2``;
    non-positive weights get nothing."""
    bw = cfg.subchannel_bw_mhz
    noise = cfg.subchannel_noise_w
    weights = np.asarray(weights, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        level = bw * weights / (LN2 * price) - noise / gain2
        level = np.where(weights > 0, level, 0.0)
    return np.maximum(level, 0.0)


def _score(price, weights, gain2, cfg: SystemConfig):
    """(mu, p): best single-channel Lagrangian value and its maximizer."""
    bw = cfg.subchannel_bw_mhz
    noise = cfg.subchannel_noise_w
    p = power_at_price(price, weights, gain2, cfg)
    mu = bw * weights * np.log2(1.0 + p * gain2 / noise) - price * p
    return mu, p


def mu_lm(lam: float, weight: float, gain: float, cfg: SystemConfig) -> float:
    """Largest contribution subchannel m can make for user l at power price
    V*kappa + lam; zero when the water level sits below the noise floor."""
    if lam < 0:
        raise ValueError("the power price multiplier must be non-negative")
    price = cfg.v * cfg.kappa + lam
    if price == 0.0:
        return math.inf if (weight > 0 and gain > 0) else 0.0
    mu, _ = _score(price, np.float64(weight), np.float64(gain) ** 2, cfg)
    return float(mu)


# -------------------------------------------------------------- dual search

@dataclass
class DualSolution:
    lam: float
    dual_value: float
    binding: bool                 # whether the power budget binds at lam
    argmax_sets: list[list[int]]  # per subchannel, users within the tie band


def _dual_value(lam, w_b, gain2, cfg: SystemConfig):
    """g(lam) = lam * p_max + sum_m max_l mu_lm(lam); lam has shape (batch,),
    w_b is the weight vector broadcast to (1, L0, 1), gain2 is (batch, L0, M)."""
    price = cfg.v * cfg.kappa + lam[:, None, None]
    mu, _ = _score(price, w_b, gain2, cfg)
    return lam * cfg.p_max_cell_w + mu.max(axis=1).sum(axis=-1)


def _budget_power(lam, w_b, gain2, cfg: SystemConfig):
    """Total power of the per-channel argmax users at price V*kappa + lam."""
    price = cfg.v * cfg.kappa + lam[:, None, None]
    mu, p = _score(price, w_b, gain2, cfg)
    pick = mu.argmax(axis=1)
    return np.take_along_axis(p, pick[:, None, :], axis=1)[:, 0, :].sum(axis=-1)


def solve_dual_batch(weights: np.ndarray, gain2: np.ndarray, cfg: SystemConfig):
    """Dual multipliers for a batch of slots sharing one weight vector.

    Returns (lam, dual_value, binding), each of shape (batch,).  The dual is
    convex, so golden section localizes the minimizer; a bisection on the
    monotone budget residual then pins the multiplier to tolerance, which
    matters because the minimizer can sit orders of magnitude below the
    bracket top.
    """
    batch = gain2.shape[0]
    vk = cfg.v * cfg.kappa
    bw = cfg.subchannel_bw_mhz
    noise = cfg.subchannel_noise_w
    w_b = np.asarray(weights, dtype=float)[None, :, None]

    # price at which every water level is dry, per slot
    top = bw * np.maximum(w_b, 0.0) * gain2 / (LN2 * noise)
    lam_hi = np.maximum(top.max(axis=(1, 2)) - vk, 0.0)

    lo = np.zeros(batch)
    hi = lam_hi.copy()
    n_iter = max(1, math.ceil(math.log(cfg.dual_tol) / math.log(_GOLD)))
    span = hi - lo
    c = hi - _GOLD * span
    d = lo + _GOLD * span
    fc = _dual_value(c, w_b, gain2, cfg)
    fd = _dual_value(d, w_b, gain2, cfg)
    for _ in range(n_iter):
        take_c = fc < fd
        hi = np.where(take_c, d, hi)
        lo = np.where(take_c, lo, c)
        span = hi - lo
        c = hi - _GOLD * span
        d = lo + _GOLD * span
        # the surviving interior point is reused; one fresh eval per iteration
        f_new = _dual_value(np.where(take_c, c, d), w_b, gain2, cfg)
        fc, fd = np.where(take_c, f_new, fd), np.where(take_c, fc, f_new)
    lam = 0.5 * (lo + hi)

    # budget polish: smallest lam whose argmax power fits the budget
    if vk > 0:
        slack0 = _budget_power(np.zeros(batch), w_b, gain2, cfg) <= cfg.p_max_cell_w
    else:
        slack0 = lam_hi <= 0.0  # zero price: infinite fill wherever demand exists
    binding = ~slack0
    if binding.any():
        lo = np.zeros(batch)
        hi = np.maximum(lam_hi, 1e-300)
        for _ in range(_MAX_BISECT):
            # bisection precision tracks dual_tol so a sloppy tolerance is
            # honestly reflected in the reported multiplier; converged slots
            # freeze so results do not depend on their batch-mates
            live = binding & (hi - lo > cfg.dual_tol * np.maximum(1.0, hi))
            if not live.any():
                break
            mid = 0.5 * (lo + hi)
            fits = _budget_power(mid, w_b, gain2, cfg) <= cfg.p_max_cell_w
            hi = np.where(live & fits, mid, hi)
            lo = np.where(live & ~fits, mid, lo)
        lam = np.where(binding, hi, 0.0)
    else:
        lam = np.zeros(batch)

    dual_value = _dual_value(lam, w_b, gain2, cfg)
    return lam, dual_value, binding


def solve_dual(weights: np.ndarray, gains: np.ndarray, cfg: SystemConfig) -> DualSolution:
    """Single-slot dual solve; also reports the per-channel argmax tie sets."""
    weights = np.asarray(weights, dtype=float)
    gains = np.asarray(gains, dtype=float)
    num_ch = gains.shape[-1]
    if weights.size == 0 or not (weights > 0).any():
        sets = [[0] if weights.size else [] for _ in range(num_ch)]
        return DualSolution(0.0, 0.0, False, sets)
    gain2 = gains[None] ** 2
    lam, dual_value, binding = solve_dual_batch(weights, gain2, cfg)
    sets = _argmax_sets(float(lam[0]), weights, gain2[0], cfg)
    return DualSolution(float(lam[0]), float(dual_value[0]), bool(binding[0]), sets)


def _argmax_sets(lam: float, weights, gain2, cfg: SystemConfig) -> list[list[int]]:
    price = cfg.v * cfg.kappa + lam
    mu, _ = _score(price, weights[:, None], gain2, cfg)
    out = []
    for m in range(gain2.shape[-1]):
        col = mu[:, m]
        best = col.max()
        if best <= 0.0:
            out.append([0])  # nobody profits from the channel; convention
        else:
            thr = best - cfg.tie_tol * max(1.0, abs(best))
            out.append([int(l) for l in np.flatnonzero(col >= thr)])
    return out


# ------------------------------------------------------- assignment + power

def waterfill_given_assignment(assign: np.ndarray, weights: np.ndarray,
                               gains: np.ndarray, cfg: SystemConfig,
                               price_floor: float | None = None):
    """Optimal powers for a fixed one-user-per-channel assignment.

    Solves max sum_m w_f(m) (B/M) log2(1 + p_m h^2/(N0 B/M)) - floor * sum p
    subject to the budget; ``price_floor`` defaults to V*kappa.  Returns
    (p (M,), theta) where theta >= 0 is the extra price that makes the budget
    bind (0 when the unconstrained fill already fits)."""
    weights = np.asarray(weights, dtype=float)
    gain2 = np.asarray(gains, dtype=float) ** 2
    f = np.asarray(assign, dtype=int)
    w_f = weights[f][None, :]
    g2_f = gain2[f, np.arange(f.size)][None, :]
    vk = cfg.v * cfg.kappa if price_floor is None else price_floor
    p, theta = _waterfill_batch(w_f, g2_f, vk, cfg)
    return p[0], float(theta[0])


def _waterfill_batch(w_f: np.ndarray, g2_f: np.ndarray, vk: float,
                     cfg: SystemConfig):
    """Budget-constrained water-fill on fixed assignments, batched:
    ``w_f`` and ``g2_f`` are (batch, M) gathered weights and gains."""
    batch = w_f.shape[0]
    bw = cfg.subchannel_bw_mhz
    noise = cfg.subchannel_noise_w
    theta = np.zeros(batch)
    if vk > 0:
        p = power_at_price(vk, w_f, g2_f, cfg)
        over = p.sum(axis=1) > cfg.p_max_cell_w
    else:
        p = np.zeros_like(w_f)
        over = (w_f > 0).any(axis=1)  # zero price: any demand overflows
    if over.any():
        top = (bw * np.maximum(w_f, 0.0) * g2_f / (LN2 * noise)).max(axis=1)
        lo = np.zeros(batch)
        hi = np.maximum(top - vk, 0.0) + 1.0
        for _ in range(_MAX_BISECT):
            # feasibility-grade precision, independent of dual_tol; converged
            # rows freeze so results do not depend on their batch-mates
            live = over & (hi - lo > 1e-13 * np.maximum(1.0, hi))
            if not live.any():
                break
            mid = 0.5 * (lo + hi)
            fits = power_at_price(vk + mid[:, None], w_f, g2_f, cfg).sum(axis=1) \
                <= cfg.p_max_cell_w
            hi = np.where(live & fits, mid, hi)
            lo = np.where(live & ~fits, mid, lo)
        p_bound = power_at_price(vk + hi[:, None], w_f, g2_f, cfg)
        p = np.where(over[:, None], p_bound, p)
        theta = np.where(over, hi, 0.0)
    return p, theta


def select_extreme_point(dual: DualSolution, weights: np.ndarray,
                         gains: np.ndarray, cfg: SystemConfig):
    """Pick one user per subchannel among the dual argmax sets.

    Case "a": some candidate meets the budget identity at the dual optimum and
    is exactly optimal there.  Case "b": take the candidate whose dual-price
    total power is closest to the budget from below (power is then re-fit by
    water-filling).  Candidate products beyond the enumeration cap fall back
    to the per-channel argmax with the lowest-index tie-break."""
    weights = np.asarray(weights, dtype=float)
    gain2 = np.asarray(gains, dtype=float) ** 2
    num_ch = gain2.shape[-1]
    price = cfg.v * cfg.kappa + dual.lam
    p_all = power_at_price(price, weights[:, None], gain2, cfg)

    n_cand = math.prod(len(s) for s in dual.argmax_sets)
    if n_cand > cfg.enum_cap:
        cands = [tuple(s[0] for s in dual.argmax_sets)]
    else:
        cands = list(itertools.product(*dual.argmax_sets))

    totals = [sum(p_all[f[m], m] for m in range(num_ch)) for f in cands]
    tol = cfg.budget_tol * max(1.0, cfg.p_max_cell_w)
    if dual.binding:
        for f, tot in zip(cands, totals):
            if abs(tot - cfg.p_max_cell_w) <= tol:
                return np.asarray(f, dtype=int), "a"
    below = [(tot, f) for f, tot in zip(cands, totals) if tot <= cfg.p_max_cell_w + tol]
    if below:
        best = max(t for t, _ in below)
        f = next(f for t, f in below if t == best)
    else:
        worst = min(totals)
        f = next(f for f, t in zip(cands, totals) if t == worst)
    return np.asarray(f, dtype=int), "b"


# ---------------------------------------------------------------- full slot

@dataclass
class StageIIResult:
    x: np.ndarray          # (L0, M) 0/1 assignment
    p: np.ndarray          # (L0, M) powers, W
    objective: float       # weighted-rate-minus-priced-power value, Mb^2/s
    lam: float
    used_case: str


def _objective(w_f, g2_f, p_f, vk, cfg: SystemConfig):
    bw = cfg.subchannel_bw_mhz
    noise = cfg.subchannel_noise_w
    rate_part = (bw * w_f * np.log2(1.0 + p_f * g2_f / noise)).sum(axis=-1)
    return rate_part - vk * p_f.sum(axis=-1)


def solve_stage2(weights: np.ndarray, gains: np.ndarray,
                 cfg: SystemConfig) -> StageIIResult:
    """One slot: dual search, extreme-point extraction, water-fill re-fit."""
    weights = np.asarray(weights, dtype=float)
    gains = np.asarray(gains, dtype=float)
    num_l, num_ch = gains.shape
    if num_l == 0:
        return StageIIResult(np.zeros((0, num_ch), dtype=np.int8),
                             np.zeros((0, num_ch)), 0.0, 0.0, "a")
    dual = solve_dual(weights, gains, cfg)
    f, case = select_extreme_point(dual, weights, gains, cfg)
    p_row, _theta = waterfill_given_assignment(f, weights, gains, cfg)
    cols = np.arange(num_ch)
    x = np.zeros((num_l, num_ch), dtype=np.int8)
    p = np.zeros((num_l, num_ch))
    x[f, cols] = 1
    p[f, cols] = p_row
    g2_f = gains[f, cols] ** 2
    obj = float(_objective(weights[f], g2_f, p_row, cfg.v * cfg.kappa, cfg))
    return StageIIResult(x=x, p=p, objective=obj, lam=dual.lam, used_case=case)


def solve_stage2_batch(weights: np.ndarray, gains: np.ndarray,
                       cfg: SystemConfig):
    """Vectorized slot solver for a stack of slots sharing one weight vector.

    ``gains``: (batch, L0, M).  Returns (x, p, objective) of shapes
    (batch, L0, M), (batch, L0, M), (batch,).  Slots whose argmax sets carry
    genuine ties drop to the scalar path; everything else stays vectorized."""
    weights = np.asarray(weights, dtype=float)
    gains = np.asarray(gains, dtype=float)
    batch, num_l, num_ch = gains.shape
    x = np.zeros((batch, num_l, num_ch), dtype=np.int8)
    p = np.zeros((batch, num_l, num_ch))
    obj = np.zeros(batch)
    if batch == 0 or num_l == 0 or not (weights > 0).any():
        return x, p, obj

    gain2 = gains ** 2
    lam, _value, _binding = solve_dual_batch(weights, gain2, cfg)
    price = (cfg.v * cfg.kappa + lam)[:, None, None]
    mu, _p_lvl = _score(price, weights[None, :, None], gain2, cfg)
    best = mu.max(axis=1)                                   # (batch, M)
    thr = best - cfg.tie_tol * np.maximum(1.0, np.abs(best))
    n_tied = (mu >= thr[:, None, :]).sum(axis=1)
    tied_slots = ((n_tied > 1) & (best > 0.0)).any(axis=1)

    fast = ~tied_slots
    if fast.any():
        n_fast = int(fast.sum())
        f = mu[fast].argmax(axis=1)                          # (n_fast, M)
        rows = np.arange(n_fast)[:, None]
        cols = np.arange(num_ch)[None, :]
        w_f = weights[f]
        g2_f = gain2[fast][rows, f, cols]
        p_f, _theta = _waterfill_batch(w_f, g2_f, cfg.v * cfg.kappa, cfg)
        xf = np.zeros((n_fast, num_l, num_ch), dtype=np.int8)
        pf = np.zeros((n_fast, num_l, num_ch))
        xf[rows, f, cols] = 1
        pf[rows, f, cols] = p_f
        x[fast] = xf
        p[fast] = pf
        obj[fast] = _objective(w_f, g2_f, p_f, cfg.v * cfg.kappa, cfg)

    for idx in np.flatnonzero(tied_slots):
        res = solve_stage2(weights, gains[idx], cfg)
        x[idx] = res.x
        p[idx] = res.p
        obj[idx] = res.objective
    return x, p, obj
