"""Simulation engine: executes a scheduler against the ground-truth process,
tracks backlog/power/offload statistics, and exposes sweep and bound-report
helpers.

Measurement skips the first ``warmup_frac`` of frames.  Backlogs are sampled
at slot starts; the frame-start subsample feeds the frame-average diagnostics.
All RNG streams derive from one seed (topology, ground truth, forecast noise
and scheduler sampling are independent children), so a run is bit-reproducible
and algorithms compared under the same seed see the same ground truth.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import SystemConfig
from .env import EnvGenerator, FrameTrace, Topology, forecast_window, make_topology
from .model import DriftBounds, drift_bounds, macrocell_rate, validate_decision
from .schedulers import (FrameDecision, _wifi_rate_vector, ensra_frame,
                         gp_ensra_window, heuristic_frame, p_ensra_exact,
                         r_ensra_frame)
from .wifi import DcfTables

ALGORITHMS = ("ensra", "r_ensra", "gp_ensra", "p_ensra_exact", "heuristic")


@dataclass
class RunMetrics:
    algorithm: str
    v: float
    theta_mbps: float
    window_frames: int
    error_rate: float
    mean_arrival_mbps: float
    seed: int
    frames: int
    avg_power_w: float = math.nan
    avg_queue_mb: float = math.nan        # slot-level, per user
    avg_queue_frame_mb: float = math.nan  # frame-start subsample, per user
    avg_delay_s: float = math.nan
    offload_fraction: float = math.nan
    run_id: str = ""
    # diagnostics
    realized_r_max_mbps: float = 0.0
    realized_a_max_mbps: float = 0.0
    heavy_windows: int = 0
    total_windows: int = 0
    final_queue_mb: np.ndarray | None = None
    conservation_gap_mb: float = 0.0


@dataclass
class Trajectory:
    frame_start_queue_mb: np.ndarray  # (K, L)
    frame_power_w: np.ndarray         # (K,) mean slot power per frame
    frame_mean_queue_mb: np.ndarray   # (K,) mean over slots and users


class _Accumulator:
    def __init__(self, cfg: SystemConfig):
        self.cfg = cfg
        self.q = np.zeros(cfg.num_users)
        self.arrived = np.zeros(cfg.num_users)
        self.served = np.zeros(cfg.num_users)
        self.power_sum = 0.0
        self.queue_sum = 0.0
        self.frame_queue_sum = 0.0
        self.slots = 0
        self.frames = 0
        self.wifi_mb = 0.0
        self.total_mb = 0.0
        self.r_max = 0.0
        self.a_max = 0.0
        self.frame_rows: list[tuple] = []

    def execute_frame(self, dec: FrameDecision, truth: FrameTrace,
                      topo: Topology, dcf: DcfTables, measured: bool) -> None:
        cfg = self.cfg
        dt = cfg.slot_dt_s
        # planned Wi-Fi selections that the true location cannot support fall
        # back to the macrocell (always feasible)
        alpha = dec.alpha.copy()
        for l, a in enumerate(alpha):
            if a != 0 and a not in topo.coverage[int(truth.locations[l])]:
                alpha[l] = 0
        validate_decision(alpha, dec.x, dec.p, truth.locations, topo.coverage, cfg)

        wifi_rates, wifi_power = _wifi_rate_vector(alpha, dcf, cfg)
        cell_rates = macrocell_rate(dec.x, dec.p, truth.gains, cfg)  # (T, L)
        rates = np.where(alpha[None, :] == 0, cell_rates, wifi_rates[None, :])
        power = cfg.kappa * dec.p.sum(axis=(1, 2)) + wifi_power      # (T,)
        served_nom = rates * dt
        arrived = truth.arrivals_mbps * dt
        on_wifi = alpha > 0

        slots = rates.shape[0]
        q_frame_start = self.q.copy()
        queue_acc = 0.0
        for t in range(slots):
            queue_acc += self.q.mean()
            act = np.minimum(self.q, served_nom[t])
            self.q = self.q - act + arrived[t]
            if measured:
                self.wifi_mb += float(act[on_wifi].sum())
                self.total_mb += float(act.sum())
            self.served += act
            self.arrived += arrived[t]
        self.r_max = max(self.r_max, float(rates.max()))
        self.a_max = max(self.a_max, float(truth.arrivals_mbps.max()))
        if measured:
            self.power_sum += float(power.sum())
            self.queue_sum += queue_acc
            self.frame_queue_sum += float(q_frame_start.mean())
            self.slots += slots
            self.frames += 1
        self.frame_rows.append((q_frame_start, float(power.mean()),
                                queue_acc / slots))

    def finish(self, metrics: RunMetrics) -> tuple[RunMetrics, Trajectory]:
        cfg = self.cfg
        metrics.avg_power_w = self.power_sum / max(self.slots, 1)
        metrics.avg_queue_mb = self.queue_sum / max(self.slots, 1)
        metrics.avg_queue_frame_mb = self.frame_queue_sum / max(self.frames, 1)
        metrics.avg_delay_s = (metrics.avg_queue_mb / cfg.mean_arrival_mbps
                               if cfg.mean_arrival_mbps > 0 else math.inf)
        metrics.offload_fraction = (self.wifi_mb / self.total_mb
                                    if self.total_mb > 0 else 0.0)
        metrics.realized_r_max_mbps = self.r_max
        metrics.realized_a_max_mbps = self.a_max
        metrics.final_queue_mb = self.q.copy()
        metrics.conservation_gap_mb = float(
            np.abs(self.arrived - self.served - self.q).max())
        traj = Trajectory(
            frame_start_queue_mb=np.array([r[0] for r in self.frame_rows]),
            frame_power_w=np.array([r[1] for r in self.frame_rows]),
            frame_mean_queue_mb=np.array([r[2] for r in self.frame_rows]))
        return metrics, traj


def _frame_context(exc: Exception, frame: int) -> Exception:
    """Re-raise scheduler failures tagged with the frame they occurred in."""
    try:
        return type(exc)(f"frame {frame}: {exc}")
    except Exception:
        return RuntimeError(f"frame {frame}: {exc}")


def run(cfg: SystemConfig, algorithm: str,
        return_trajectory: bool = False):
    """Simulate one configuration; deterministic given cfg.seed."""
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}; "
                         f"choose from {ALGORITHMS}")
    cfg.validate()
    streams = np.random.SeedSequence(cfg.seed).spawn(4)
    topo_rng, env_rng, fc_rng, mc_rng = map(np.random.default_rng, streams)
    topo = make_topology(cfg, topo_rng)
    dcf = DcfTables.build(cfg)
    env = EnvGenerator(cfg, topo, env_rng)
    acc = _Accumulator(cfg)
    warmup = int(cfg.warmup_frac * cfg.num_frames)
    metrics = RunMetrics(algorithm=algorithm, v=cfg.v,
                         theta_mbps=cfg.theta_mbps,
                         window_frames=cfg.window_frames,
                         error_rate=cfg.error_rate,
                         mean_arrival_mbps=cfg.mean_arrival_mbps,
                         seed=cfg.seed, frames=cfg.num_frames)

    if algorithm in ("gp_ensra", "p_ensra_exact"):
        k = 0
        while k < cfg.num_frames:
            span = min(cfg.window_frames, cfg.num_frames - k)
            truth = [env.generate_frame() for _ in range(span)]
            forecast = forecast_window(truth, cfg, topo, fc_rng)
            try:
                if algorithm == "gp_ensra":
                    wd = gp_ensra_window(acc.q, forecast, cfg, topo, dcf)
                else:
                    wd = p_ensra_exact(acc.q, forecast, cfg, topo, dcf)
            except Exception as exc:
                raise _frame_context(exc, k) from exc
            metrics.total_windows += 1
            metrics.heavy_windows += int(wd.heavy_traffic)
            for w in range(span):
                acc.execute_frame(wd.frames[w], truth[w], topo, dcf,
                                  measured=k + w >= warmup)
            k += span
    else:
        for k in range(cfg.num_frames):
            truth = env.generate_frame()
            try:
                if algorithm == "ensra":
                    dec = ensra_frame(acc.q, truth, cfg, topo, dcf)
                elif algorithm == "heuristic":
                    dec = heuristic_frame(acc.q, truth, cfg, topo, dcf)
                else:
                    dec = r_ensra_frame(acc.q, truth, cfg, topo, dcf, mc_rng)
            except Exception as exc:
                raise _frame_context(exc, k) from exc
            acc.execute_frame(dec, truth, topo, dcf, measured=k >= warmup)

    metrics, traj = acc.finish(metrics)
    return (metrics, traj) if return_trajectory else metrics


# ----------------------------------------------------------------- sweeps

SWEEP_AXES = {
    "v": "v",
    "theta": "theta_mbps",
    "w": "window_frames",
    "window": "window_frames",
    "error_rate": "error_rate",
    "mean_arrival": "mean_arrival_mbps",
}


def sweep(cfg: SystemConfig, algorithm: str, axis: str, values, reps: int = 1):
    """One run per (value, replication); replication r uses seed + r."""
    key = axis.lower()
    if key not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; "
                         f"choose from {sorted(set(SWEEP_AXES))}")
    fname = SWEEP_AXES[key]
    out = []
    for value in values:
        typed = int(value) if fname == "window_frames" else float(value)
        for rep in range(reps):
            sub = cfg.replace(**{fname: typed, "seed": cfg.seed + rep})
            metrics = run(sub, algorithm)
            metrics.run_id = f"{algorithm}-{axis}{value}-r{rep}"
            out.append(metrics)
    return out


# ------------------------------------------------------------ bound report

@dataclass
class BoundReport:
    bounds: DriftBounds
    q_av_sum_mb: float        # L * slot-level per-user average backlog
    q_av_frame_sum_mb: float  # L * frame-start per-user average backlog
    queue_gap_mb: float       # measured gap between the two
    queue_gap_bound_mb: float
    queue_gap_ok: bool
    power_gap_bound_w: float


def bound_report(cfg: SystemConfig, metrics: RunMetrics,
                 dcf: DcfTables | None = None) -> BoundReport:
    """Drift-argument diagnostics for a finished run, using realized extremes."""
    dcf = dcf or DcfTables.build(cfg)
    r_max = max(metrics.realized_r_max_mbps, 1e-12)
    bounds = drift_bounds(cfg, dcf, r_max)
    q_av = cfg.num_users * metrics.avg_queue_mb
    q_av_t = cfg.num_users * metrics.avg_queue_frame_mb
    gap = q_av - q_av_t
    return BoundReport(bounds=bounds, q_av_sum_mb=q_av, q_av_frame_sum_mb=q_av_t,
                       queue_gap_mb=gap, queue_gap_bound_mb=bounds.queue_gap_mb,
                       queue_gap_ok=gap <= bounds.queue_gap_mb + 1e-9,
                       power_gap_bound_w=bounds.power_gap_w)
