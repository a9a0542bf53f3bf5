"""Schedulers: the per-frame drift/penalty minimizer, its reduced-information
variant, a coverage heuristic, and the look-ahead window algorithms.

A frame decision fixes the per-user network selection for the whole frame and
a subchannel/power grid per slot.  The frame objective being minimized is

    V * sum_t P(alpha, p(t)) - sum_l w_l * sum_t r_l(alpha, x(t), p(t)),

with weights w equal to the frame-start backlogs (or, inside a window, the
look-ahead-corrected backlogs).  Slots decouple given alpha, so the cellular
part is a batch of independent slot problems solved in `cellular`.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .cellular import _waterfill_batch, solve_stage2_batch
from .config import SystemConfig
from .env import FrameTrace, RAYLEIGH_SCALE, PATHLOSS_EXP, Topology
from .model import macrocell_rate, rate_upper_bound, wifi_counts
from .wifi import DcfTables

HEURISTIC_NEAR_BS_M = 100.0  # users closer than this stay on the macrocell


@dataclass
class FrameDecision:
    alpha: np.ndarray       # (L,) selection, 0 = macrocell
    x: np.ndarray           # (T, L, M) subchannel assignment
    p: np.ndarray           # (T, L, M) powers, W
    rates_mbps: np.ndarray  # (T, L) service rates under the planning gains
    power_w: np.ndarray     # (T,) system power per slot
    objective: float        # weighted drift/penalty value of this frame


@dataclass
class WindowDecision:
    frames: list[FrameDecision]
    objective: float             # window objective, Mb^2
    history: list[float]         # objective after each sweep
    heavy_traffic: bool          # look-ahead reweighting exact for this window
    iterations: int


# ------------------------------------------------------------ frame solvers

def candidate_selections(locations, topo: Topology) -> list[list[int]]:
    """Per-user feasible selections: macrocell plus the covering APs."""
    return [[0] + sorted(topo.coverage[int(s)]) for s in locations]


def _wifi_rate_vector(alpha: np.ndarray, dcf: DcfTables, cfg: SystemConfig):
    """(L,) per-user Wi-Fi rate (0 for macrocell users) and total AP power."""
    counts = wifi_counts(alpha, cfg.num_wifi)
    rates = np.zeros(alpha.size)
    on = alpha > 0
    if on.any():
        rho = counts[alpha[on] - 1]
        rates[on] = dcf.rate_mbps[rho] / rho
    return rates, dcf.total_power_w(counts)


def _assemble(alpha, l0, x_sub, p_sub, gains, weights, dcf, cfg) -> FrameDecision:
    slots, num_l, num_ch = gains.shape
    x = np.zeros((slots, num_l, num_ch), dtype=np.int8)
    p = np.zeros((slots, num_l, num_ch))
    if len(l0):
        x[:, l0, :] = x_sub
        p[:, l0, :] = p_sub
    wifi_rates, wifi_power = _wifi_rate_vector(alpha, dcf, cfg)
    rates = np.broadcast_to(wifi_rates, (slots, num_l)).copy()
    if len(l0):
        rates[:, l0] = macrocell_rate(x_sub, p_sub, gains[:, l0, :], cfg)
    power = cfg.kappa * p.sum(axis=(1, 2)) + wifi_power
    objective = float(cfg.v * power.sum() - (weights * rates.sum(axis=0)).sum())
    return FrameDecision(alpha=np.asarray(alpha, dtype=int), x=x, p=p,
                         rates_mbps=rates, power_w=power, objective=objective)


def stage1_search(weights, locations, gains, cfg: SystemConfig, topo: Topology,
                  dcf: DcfTables, forced_alpha=None) -> FrameDecision:
    """Exhaustive search over joint selections; slot problems cached per
    cellular-user subset since they do not depend on the Wi-Fi pattern."""
    weights = np.asarray(weights, dtype=float)
    slots = gains.shape[0]
    if forced_alpha is not None:
        selections = [[int(a)] for a in forced_alpha]
    else:
        selections = candidate_selections(locations, topo)
    n_cand = math.prod(len(s) for s in selections)
    if n_cand > cfg.stage1_cap:
        raise ValueError(
            f"joint selection space has {n_cand} candidates, above the "
            f"stage1_cap of {cfg.stage1_cap}")

    cell_cache: dict[tuple, tuple] = {}

    def cellular_term(l0: tuple):
        if l0 not in cell_cache:
            idx = list(l0)
            x_sub, p_sub, obj = solve_stage2_batch(
                weights[idx], gains[:, idx, :], cfg)
            cell_cache[l0] = (x_sub, p_sub, float(obj.sum()))
        return cell_cache[l0]

    best = None
    best_val = math.inf
    for alpha in itertools.product(*selections):
        alpha_arr = np.asarray(alpha, dtype=int)
        l0 = tuple(np.flatnonzero(alpha_arr == 0))
        _x, _p, cell_obj = cellular_term(l0)
        wifi_rates, wifi_power = _wifi_rate_vector(alpha_arr, dcf, cfg)
        value = (cfg.v * slots * wifi_power
                 - slots * float(weights @ wifi_rates)
                 - cell_obj)
        if value < best_val:
            best_val = value
            best = alpha
    alpha_arr = np.asarray(best, dtype=int)
    l0 = tuple(np.flatnonzero(alpha_arr == 0))
    x_sub, p_sub, _ = cell_cache[l0]
    return _assemble(alpha_arr, list(l0), x_sub, p_sub, gains, weights, dcf, cfg)


def ensra_frame(q_mb, frame: FrameTrace, cfg: SystemConfig, topo: Topology,
                dcf: DcfTables) -> FrameDecision:
    """Full-information frame solve: exhaustive selection over the Wi-Fi
    pattern with optimal per-slot subchannel/power allocation."""
    return stage1_search(q_mb, frame.locations, frame.gains, cfg, topo, dcf)


def heuristic_frame(q_mb, frame: FrameTrace, cfg: SystemConfig, topo: Topology,
                    dcf: DcfTables) -> FrameDecision:
    """Coverage heuristic: users near the base station (or without Wi-Fi) stay
    cellular, the rest join the least-loaded available AP; subchannels go to
    the best backlog-weighted rate under even power, then powers are
    water-filled on that fixed assignment using the full budget."""
    q_mb = np.asarray(q_mb, dtype=float)
    dist = topo.distance_m[frame.locations]
    alpha = np.zeros(cfg.num_users, dtype=int)
    load = np.zeros(cfg.num_wifi + 1, dtype=int)
    for l in range(cfg.num_users):
        cov = sorted(topo.coverage[int(frame.locations[l])])
        if not cov or dist[l] < HEURISTIC_NEAR_BS_M:
            continue
        alpha[l] = min(cov, key=lambda n: (load[n], n))
        load[alpha[l]] += 1

    l0 = list(np.flatnonzero(alpha == 0))
    slots, _, num_ch = frame.gains.shape
    x_sub = np.zeros((slots, len(l0), num_ch), dtype=np.int8)
    p_sub = np.zeros((slots, len(l0), num_ch))
    if l0 and (q_mb[l0] > 0).any():
        gains = frame.gains[:, l0, :]
        even = cfg.p_max_cell_w / cfg.num_subchannels
        score = q_mb[l0][None, :, None] * np.log2(
            1.0 + even * gains ** 2 / cfg.subchannel_noise_w)
        f = score.argmax(axis=1)                          # (T, M)
        rows = np.arange(slots)[:, None]
        cols = np.arange(num_ch)[None, :]
        w_f = q_mb[l0][f]
        g2_f = gains[rows, f, cols] ** 2
        p_f, _ = _waterfill_batch(w_f, g2_f, 0.0, cfg)    # budget-binding fill
        x_sub[rows, f, cols] = 1
        p_sub[rows, f, cols] = p_f
    return _assemble(alpha, l0, x_sub, p_sub, frame.gains, q_mb, dcf, cfg)


def r_ensra_frame(q_mb, frame: FrameTrace, cfg: SystemConfig, topo: Topology,
                  dcf: DcfTables, rng: np.random.Generator) -> FrameDecision:
    """Reduced-information variant: the selection minimizes a Monte-Carlo
    estimate of the expected slot objective (common channel draws across
    candidates); slot allocations then re-solve on the observed gains."""
    q_mb = np.asarray(q_mb, dtype=float)
    dist = topo.distance_m[frame.locations]
    xi = rng.rayleigh(scale=RAYLEIGH_SCALE,
                      size=(cfg.mc_samples, cfg.num_users, cfg.num_subchannels))
    gains_mc = xi / dist[None, :, None] ** PATHLOSS_EXP

    selections = candidate_selections(frame.locations, topo)
    n_cand = math.prod(len(s) for s in selections)
    if n_cand > cfg.stage1_cap:
        raise ValueError(
            f"joint selection space has {n_cand} candidates, above the "
            f"stage1_cap of {cfg.stage1_cap}")
    mc_cache: dict[tuple, float] = {}

    def expected_cell(l0: tuple) -> float:
        if l0 not in mc_cache:
            idx = list(l0)
            _x, _p, obj = solve_stage2_batch(q_mb[idx], gains_mc[:, idx, :], cfg)
            mc_cache[l0] = float(obj.mean())
        return mc_cache[l0]

    best = None
    best_val = math.inf
    for alpha in itertools.product(*selections):
        alpha_arr = np.asarray(alpha, dtype=int)
        l0 = tuple(np.flatnonzero(alpha_arr == 0))
        wifi_rates, wifi_power = _wifi_rate_vector(alpha_arr, dcf, cfg)
        value = (cfg.v * wifi_power - float(q_mb @ wifi_rates)
                 - expected_cell(l0))
        if value < best_val:
            best_val = value
            best = alpha
    alpha_arr = np.asarray(best, dtype=int)
    l0 = list(np.flatnonzero(alpha_arr == 0))
    x_sub, p_sub, _ = solve_stage2_batch(q_mb[l0], frame.gains[:, l0, :], cfg)
    return _assemble(alpha_arr, l0, x_sub, p_sub, frame.gains, q_mb, dcf, cfg)


# ---------------------------------------------------------- window solvers

class _WindowProblem:
    """Shared machinery for the look-ahead schedulers: virtual backlog
    propagation, the window objective, and monotone coordinate sweeps."""

    def __init__(self, q0_mb, forecast: list[FrameTrace], cfg: SystemConfig,
                 topo: Topology, dcf: DcfTables):
        self.q0 = np.asarray(q0_mb, dtype=float)
        self.forecast = forecast
        self.cfg = cfg
        self.topo = topo
        self.dcf = dcf
        dt = cfg.slot_dt_s
        # per-frame virtual arrival mass (Mb), inflated by theta
        self.virt_mb = [(fr.arrivals_mbps + cfg.theta_mbps) * dt
                        for fr in forecast]
        self.v_mass = np.array([v.sum(axis=0) for v in self.virt_mb])  # (W, L)

    def zero_decisions(self) -> list[FrameDecision]:
        out = []
        for fr in self.forecast:
            slots, num_l, num_ch = fr.gains.shape
            out.append(FrameDecision(
                alpha=np.zeros(num_l, dtype=int),
                x=np.zeros((slots, num_l, num_ch), dtype=np.int8),
                p=np.zeros((slots, num_l, num_ch)),
                rates_mbps=np.zeros((slots, num_l)),
                power_w=np.full(slots, self.dcf.total_power_w(
                    np.zeros(self.cfg.num_wifi, dtype=int))),
                objective=0.0))
        return out

    def frame_starts(self, decisions: list[FrameDecision]) -> np.ndarray:
        """Virtual backlog at each frame start under the clamped recursion."""
        dt = self.cfg.slot_dt_s
        q = self.q0.copy()
        starts = np.empty((len(decisions), self.q0.size))
        for w, dec in enumerate(decisions):
            starts[w] = q
            for t in range(dec.rates_mbps.shape[0]):
                q = np.maximum(q - dec.rates_mbps[t] * dt, 0.0) + self.virt_mb[w][t]
        return starts

    def objective(self, decisions: list[FrameDecision]) -> float:
        """Window objective in Mb^2: priced energy plus backlog-weighted net
        virtual growth, with frame-start weights under current decisions."""
        cfg = self.cfg
        starts = self.frame_starts(decisions)
        s_mass = np.array([dec.rates_mbps.sum(axis=0) * cfg.slot_dt_s
                           for dec in decisions])
        energy = sum(dec.power_w.sum() for dec in decisions) * cfg.slot_dt_s
        return float(cfg.v * energy
                     + (starts * (self.v_mass - s_mass)).sum())

    def lookahead_weights(self, decisions, starts, w: int) -> np.ndarray:
        """Backlog weight for frame w corrected by future service and future
        virtual arrivals under the currently fixed later frames."""
        cfg = self.cfg
        later = decisions[w + 1:]
        c_r = sum((dec.rates_mbps.sum(axis=0) * cfg.slot_dt_s for dec in later),
                  np.zeros(self.q0.size))
        c_a = self.v_mass[w + 1:].sum(axis=0) if later else 0.0
        return starts[w] - c_r + c_a

    def heavy_traffic(self) -> bool:
        gain_max = max(float(fr.gains.max()) for fr in self.forecast)
        r_cap = rate_upper_bound(gain_max, self.dcf, self.cfg)
        need = (sum(fr.gains.shape[0] for fr in self.forecast)
                * r_cap * self.cfg.slot_dt_s)
        return bool((self.q0 >= need).all())

    def sweep(self, decisions, f_cur, fixed_alpha: bool):
        """One coordinate pass over the frames; accepts a frame candidate only
        if the full window objective improves, so sweeps never increase it."""
        for w, frame in enumerate(self.forecast):
            starts = self.frame_starts(decisions)
            wt = self.lookahead_weights(decisions, starts, w)
            forced = decisions[w].alpha if fixed_alpha else None
            cand = stage1_search(wt, frame.locations, frame.gains, self.cfg,
                                 self.topo, self.dcf, forced_alpha=forced)
            trial = decisions[:w] + [cand] + decisions[w + 1:]
            f_new = self.objective(trial)
            if f_new < f_cur:
                decisions = trial
                f_cur = f_new
        return decisions, f_cur

    def refine(self, decisions, fixed_alpha: bool):
        """Monotone sweeps until the objective improvement falls below the
        relative threshold or the iteration cap is hit."""
        cfg = self.cfg
        f_cur = self.objective(decisions)
        history = []
        eps = None
        while True:
            decisions, f_cur = self.sweep(decisions, f_cur, fixed_alpha)
            history.append(f_cur)
            if eps is None:
                eps = cfg.gp_eps_rel * max(abs(history[0]), 1e-12)
            if len(history) >= cfg.gp_max_iters:
                break
            if len(history) >= 2 and history[-2] - history[-1] <= eps:
                break
        return decisions, f_cur, history


def gp_ensra_window(q0_mb, forecast: list[FrameTrace], cfg: SystemConfig,
                    topo: Topology, dcf: DcfTables) -> WindowDecision:
    """Greedy look-ahead: frame-wise coordinate descent on the window
    objective starting from all-zero operations."""
    prob = _WindowProblem(q0_mb, forecast, cfg, topo, dcf)
    decisions, f_cur, history = prob.refine(prob.zero_decisions(),
                                            fixed_alpha=False)
    return WindowDecision(frames=decisions, objective=f_cur, history=history,
                          heavy_traffic=prob.heavy_traffic(),
                          iterations=len(history))


def p_ensra_exact(q0_mb, forecast: list[FrameTrace], cfg: SystemConfig,
                  topo: Topology, dcf: DcfTables,
                  warm_starts: tuple = ()) -> WindowDecision:
    """Window oracle: exhaustive search over per-frame selection sequences
    with allocations refined per sequence by monotone coordinate descent
    (forward-propagated start).  Any warm start supplied (e.g. the greedy
    solution) is refined with its selections held fixed and kept if better,
    so the returned objective never exceeds the greedy one.  Tiny scales only.
    """
    prob = _WindowProblem(q0_mb, forecast, cfg, topo, dcf)
    per_frame = [candidate_selections(fr.locations, topo) for fr in forecast]
    frame_alphas = [list(itertools.product(*sel)) for sel in per_frame]
    n_seq = math.prod(len(a) for a in frame_alphas)
    if n_seq > cfg.stage1_cap:
        raise ValueError(
            f"selection-sequence space has {n_seq} candidates, above the "
            f"stage1_cap of {cfg.stage1_cap}")

    best = None
    for seq in itertools.product(*frame_alphas):
        decisions = prob.zero_decisions()
        # forward pass: allocate each frame at its propagated backlog weights
        for w, frame in enumerate(forecast):
            starts = prob.frame_starts(decisions)
            decisions[w] = stage1_search(
                starts[w], frame.locations, frame.gains, cfg, topo, dcf,
                forced_alpha=seq[w])
        decisions, f_cur, _hist = prob.refine(decisions, fixed_alpha=True)
        if best is None or f_cur < best[1]:
            best = (decisions, f_cur)
    for start in warm_starts:
        seed_frames = start.frames if isinstance(start, WindowDecision) else start
        decisions = [FrameDecision(d.alpha.copy(), d.x.copy(), d.p.copy(),
                                   d.rates_mbps.copy(), d.power_w.copy(),
                                   d.objective)
                     for d in seed_frames]
        decisions, f_cur, _hist = prob.refine(decisions, fixed_alpha=True)
        if f_cur < best[1]:
            best = (decisions, f_cur)
    decisions, f_cur = best
    return WindowDecision(frames=decisions, objective=f_cur, history=[f_cur],
                          heavy_traffic=prob.heavy_traffic(), iterations=1)
