"""Command-line front end: experiment commands, CSV persistence, self checks.

The CLI is a thin shell over the library; every command is reproducible by
direct library calls.  Set the HETSCHED_LOG environment variable (DEBUG, INFO,
WARNING, ...) to control verbosity.
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys

import numpy as np

from .config import ConfigError, SystemConfig, load_config
from .engine import ALGORITHMS, SWEEP_AXES, RunMetrics, run, sweep
from .env import EnvGenerator, dump_trace, forecast_window, make_topology
from .schedulers import gp_ensra_window, p_ensra_exact
from .wifi import DcfTables
from . import oracles

log = logging.getLogger("hetsched")

CSV_HEADER = ("run_id", "algorithm", "V", "theta", "W", "error_rate",
              "mean_arrival_mbps", "seed", "avg_power_w", "avg_queue_mb",
              "avg_delay_s", "offload_pct", "frames")


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".12g")


def metrics_to_row(m: RunMetrics) -> list[str]:
    return [m.run_id, m.algorithm, _fmt(m.v), _fmt(m.theta_mbps),
            _fmt(int(m.window_frames)), _fmt(m.error_rate),
            _fmt(m.mean_arrival_mbps), _fmt(int(m.seed)),
            _fmt(m.avg_power_w), _fmt(m.avg_queue_mb), _fmt(m.avg_delay_s),
            _fmt(m.offload_fraction * 100.0), _fmt(int(m.frames))]


def emit_csv(rows, path: str | None) -> None:
    """Write the metrics table; path None or '-' means stdout."""
    def _write(fh) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for m in rows:
            writer.writerow(metrics_to_row(m))

    if path is None or path == "-":
        _write(sys.stdout)
    else:
        with open(path, "w", newline="") as fh:
            _write(fh)


def emit_timeseries(trajectory, path: str) -> None:
    """Per-frame time series: frame index, mean slot power, per-user
    frame-start backlog; same dialect as the metrics CSV."""
    num_users = trajectory.frame_start_queue_mb.shape[1]
    header = ["frame", "avg_power_w"] + [f"queue_user{l}_mb"
                                         for l in range(num_users)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for k in range(trajectory.frame_power_w.size):
            row = [str(k), _fmt(trajectory.frame_power_w[k])]
            row += [_fmt(q) for q in trajectory.frame_start_queue_mb[k]]
            writer.writerow(row)


# --------------------------------------------------------------- validation

def _tiny(cfg: SystemConfig, **extra) -> SystemConfig:
    base = dict(num_users=2, num_wifi=1, num_locations=9,
                num_subchannels=2, frame_slots=4, window_frames=2,
                num_frames=12, mc_samples=8, stage1_cap=20000)
    base.update(extra)
    return cfg.replace(**base)


def _suite_bianchi(cfg: SystemConfig):
    from .wifi import solve_phi
    exact = 2.0 / (cfg.cw_min + 1.0)
    if solve_phi(1, cfg.cw_min, cfg.backoff_stages) != exact:
        return False, "single-station probability is not the closed form"
    worst = 0.0
    for rho in range(2, 11):
        phi = solve_phi(rho, cfg.cw_min, cfg.backoff_stages)
        worst = max(worst, oracles.fixed_point_residual(phi, rho, cfg))
        ref = oracles.reference_phi(rho, cfg)
        worst = max(worst, abs(phi - ref))
    return worst < 1e-10, f"max fixed-point residual {worst:.3e}"


def _suite_stage2(cfg: SystemConfig):
    from .cellular import solve_stage2
    rng = np.random.default_rng(cfg.seed)
    worst = 0.0
    for i in range(12):
        num_l = int(rng.integers(1, 3))
        num_ch = int(rng.integers(1, 3))
        weights, gains = oracles.random_slot_instance(rng, num_l, num_ch)
        sub = _tiny(cfg, num_users=max(num_l, 1), num_subchannels=num_ch)
        res = solve_stage2(weights, gains, sub)
        ref, _, _ = oracles.brute_force_slot(weights, gains, sub)
        gap = abs(res.objective - ref) / max(1.0, abs(ref))
        worst = max(worst, gap)
    return worst <= 0.01, f"max relative objective gap {worst:.3e}"


def _suite_duality(cfg: SystemConfig):
    from .cellular import solve_dual
    rng = np.random.default_rng(cfg.seed + 1)
    sub = _tiny(cfg, num_users=1, num_subchannels=1)
    worst = 0.0
    for i in range(10):
        weight = float(rng.uniform(25.0, 80.0))   # large enough to bind
        gain = float(rng.uniform(0.01, 0.1))
        dual = solve_dual(np.array([weight]), np.array([[gain]]), sub)
        ref = oracles.single_user_lambda(weight, gain, sub)
        err = abs(dual.lam - ref) / max(1.0, abs(ref))
        worst = max(worst, err)
    return worst <= 1e-6, f"max multiplier error {worst:.3e}"


def _suite_ensra(cfg: SystemConfig):
    from .schedulers import ensra_frame
    sub = _tiny(cfg, frame_slots=2)
    streams = np.random.SeedSequence(sub.seed).spawn(4)
    topo_rng, env_rng = map(np.random.default_rng, streams[:2])
    topo = make_topology(sub, topo_rng)
    dcf = DcfTables.build(sub)
    env = EnvGenerator(sub, topo, env_rng)
    worst = 0.0
    for i in range(4):
        frame = env.generate_frame()
        q = env_rng.uniform(0.0, 3.0, sub.num_users)
        dec = ensra_frame(q, frame, sub, topo, dcf)
        ref, _alpha = oracles.brute_force_frame(q, frame, sub, topo, dcf)
        gap = (dec.objective - ref) / max(1.0, abs(ref))
        worst = max(worst, gap)
    return worst <= 0.01, f"max relative frame-objective excess {worst:.3e}"


def _suite_gp(cfg: SystemConfig):
    sub = _tiny(cfg, frame_slots=3)
    streams = np.random.SeedSequence(sub.seed).spawn(4)
    topo_rng, env_rng, fc_rng = map(np.random.default_rng, streams[:3])
    topo = make_topology(sub, topo_rng)
    dcf = DcfTables.build(sub)
    env = EnvGenerator(sub, topo, env_rng)
    q = env_rng.uniform(0.0, 3.0, sub.num_users)
    truth = [env.generate_frame() for _ in range(sub.window_frames)]
    forecast = forecast_window(truth, sub, topo, fc_rng)
    wd = gp_ensra_window(q, forecast, sub, topo, dcf)
    hist = np.asarray(wd.history)
    slack = 1e-9 * max(1.0, abs(hist[0]))
    if not np.all(np.diff(hist) <= slack):
        return False, "window objective increased between sweeps"
    exact = p_ensra_exact(q, forecast, sub, topo, dcf,
                          warm_starts=(wd.frames,))
    if exact.objective > wd.objective + slack:
        return False, "exact window solve exceeded the coordinate search"
    gap = (wd.objective - exact.objective) / max(1.0, abs(exact.objective))
    return True, f"relative optimality gap {gap:.3e}"


def _suite_feasibility(cfg: SystemConfig):
    sub = _tiny(cfg, num_frames=10)
    metrics = run(sub, "ensra")  # validates every emitted decision
    if metrics.conservation_gap_mb > 1e-9:
        return False, f"conservation gap {metrics.conservation_gap_mb:.3e} Mb"
    if not (0.0 <= metrics.offload_fraction <= 1.0):
        return False, f"offload fraction {metrics.offload_fraction} out of range"
    return True, "all emitted decisions feasible, queue mass conserved"


SUITES = {
    "bianchi": _suite_bianchi,
    "stage2": _suite_stage2,
    "duality": _suite_duality,
    "ensra": _suite_ensra,
    "gp": _suite_gp,
    "feasibility": _suite_feasibility,
}


def run_validation(cfg: SystemConfig, suite: str | None = None,
                   out=None) -> bool:
    out = sys.stdout if out is None else out  # resolve at call time
    names = [suite] if suite else list(SUITES)
    all_ok = True
    for name in names:
        ok, detail = SUITES[name](cfg)
        all_ok &= ok
        print(f"{name}: {'PASS' if ok else 'FAIL'} - {detail}", file=out)
    return all_ok


# ------------------------------------------------------------------ figures

_SWEEP_PANELS = (
    ("avg_power_w", "average power (W)"),
    ("avg_delay_s", "average delay (s)"),
    ("offload_fraction", "traffic served on Wi-Fi (fraction)"),
)

_AXIS_LABELS = {
    "v": "control weight V (Mb²/(W·s))",
    "theta_mbps": "arrival margin θ (Mbps)",
    "window_frames": "prediction window W (frames)",
    "error_rate": "forecast error rate",
    "mean_arrival_mbps": "mean arrival rate (Mbps)",
}


def render_sweep_figures(rows, axis_field: str, stem: str) -> list[str]:
    """One PNG per metric: replication mean with standard-deviation bars."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    groups: dict[float, list[RunMetrics]] = {}
    for m in rows:
        groups.setdefault(float(getattr(m, axis_field)), []).append(m)
    xs = sorted(groups)
    written = []
    for field, label in _SWEEP_PANELS:
        means = [float(np.mean([getattr(m, field) for m in groups[x]]))
                 for x in xs]
        stds = [float(np.std([getattr(m, field) for m in groups[x]]))
                for x in xs]
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.errorbar(xs, means, yerr=stds, marker="o", capsize=3)
        ax.set_xlabel(_AXIS_LABELS.get(axis_field, axis_field))
        ax.set_ylabel(label)
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        path = f"{stem}_{field}.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)
    return written


# -------------------------------------------------------------------- main

def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="TOML configuration file")
    parser.add_argument("--set", dest="overrides", action="append",
                        default=[], metavar="KEY=VALUE",
                        help="override a configuration key")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hetsched",
        description="Two-timescale network selection and resource "
                    "allocation simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate one configuration")
    _add_common(p_run)
    p_run.add_argument("--algorithm", choices=ALGORITHMS, default="ensra")
    p_run.add_argument("--output", "-o", default="-",
                       help="metrics CSV path ('-' = stdout)")
    p_run.add_argument("--trace-out",
                       help="also write a per-frame time-series CSV here")

    p_sweep = sub.add_parser("sweep", help="run a parameter sweep")
    _add_common(p_sweep)
    p_sweep.add_argument("--algorithm", choices=ALGORITHMS, default="ensra")
    p_sweep.add_argument("--axis", required=True,
                         choices=sorted(set(SWEEP_AXES)))
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated axis values")
    p_sweep.add_argument("--reps", type=int, default=1,
                         help="replications per value (seed + index)")
    p_sweep.add_argument("--output", "-o", default="-",
                         help="metrics CSV path ('-' = stdout)")
    p_sweep.add_argument("--figures", action="store_true",
                         help="render summary figures next to the CSV")

    p_val = sub.add_parser("validate", help="run the self-check suites")
    _add_common(p_val)
    p_val.add_argument("--suite", choices=sorted(SUITES))

    p_dump = sub.add_parser("dump-trace",
                            help="write the generated environment to CSV")
    _add_common(p_dump)
    p_dump.add_argument("--frames", type=int,
                        help="number of frames (default: num_frames)")
    p_dump.add_argument("--output", "-o", required=True)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("HETSCHED_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    if args.command == "run":
        log.info("run: algorithm=%s seed=%d", args.algorithm, cfg.seed)
        metrics, trajectory = run(cfg, args.algorithm, return_trajectory=True)
        metrics.run_id = f"{args.algorithm}-{cfg.seed}"
        emit_csv([metrics], args.output)
        if args.trace_out:
            emit_timeseries(trajectory, args.trace_out)
        return 0

    if args.command == "sweep":
        try:
            values = [float(v) for v in args.values.split(",") if v.strip()]
        except ValueError:
            print(f"error: cannot parse --values {args.values!r}",
                  file=sys.stderr)
            return 2
        if not values:
            print("error: --values is empty", file=sys.stderr)
            return 2
        if args.reps < 1:
            print("error: --reps must be at least 1", file=sys.stderr)
            return 2
        log.info("sweep: axis=%s values=%s reps=%d algorithm=%s",
                 args.axis, values, args.reps, args.algorithm)
        rows = sweep(cfg, args.algorithm, args.axis, values, args.reps)
        emit_csv(rows, args.output)
        if args.figures:
            if args.output in (None, "-"):
                print("error: --figures requires --output to be a file",
                      file=sys.stderr)
                return 2
            stem = os.path.splitext(args.output)[0]
            for path in render_sweep_figures(
                    rows, SWEEP_AXES[args.axis.lower()], stem):
                log.info("wrote %s", path)
        return 0

    if args.command == "validate":
        return 0 if run_validation(cfg, args.suite) else 1

    if args.command == "dump-trace":
        frames = args.frames if args.frames is not None else cfg.num_frames
        if frames < 1:
            print("error: --frames must be at least 1", file=sys.stderr)
            return 2
        streams = np.random.SeedSequence(cfg.seed).spawn(4)
        topo_rng, env_rng = map(np.random.default_rng, streams[:2])
        topo = make_topology(cfg, topo_rng)
        env = EnvGenerator(cfg, topo, env_rng)
        dump_trace([env.generate_frame() for _ in range(frames)], args.output)
        return 0

    parser.error(f"unknown command {args.command!r}")
    return 2
