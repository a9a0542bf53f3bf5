"""Scenario randomness: geometry, user mobility, fading, bursty arrivals, and
the (optionally corrupted) look-ahead traces consumed by window schedulers.

Every stochastic object draws from an explicitly passed numpy Generator, so a
run is reproducible from a single seed and independent streams can be split
off for forecasting without perturbing the ground-truth trace.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import SystemConfig

RAYLEIGH_SCALE = 1.0 / math.sqrt(2.0)  # unit mean-square amplitude
PATHLOSS_EXP = 1.5                     # amplitude decays as d^-1.5


# ----------------------------------------------------------------- topology

@dataclass(frozen=True)
class Topology:
    side: int                      # grid is side x side cells
    distance_m: np.ndarray         # (S,) cell-center distance to the BS, clamped
    coverage: tuple[frozenset, ...]  # (S,) APs reachable from each cell (ids 1..N)
    ap_cells: tuple[frozenset, ...]  # (N,) cells covered by each AP

    def neighbors(self, s: int) -> list[int]:
        row, col = divmod(s, self.side)
        out = []
        if row > 0:
            out.append(s - self.side)
        if row < self.side - 1:
            out.append(s + self.side)
        if col > 0:
            out.append(s - 1)
        if col < self.side - 1:
            out.append(s + 1)
        return out


def make_topology(cfg: SystemConfig, rng: np.random.Generator) -> Topology:
    """Square cell grid with the base station at the center and each AP covering
    a randomly grown connected patch of one to four cells."""
    side = cfg.grid_side
    centers = (np.arange(side) + 0.5) * cfg.cell_size_m
    xx, yy = np.meshgrid(centers, centers, indexing="ij")
    bs = side * cfg.cell_size_m / 2.0
    dist = np.hypot(xx - bs, yy - bs).ravel()
    dist = np.maximum(dist, cfg.min_distance_m)

    topo = Topology(side=side, distance_m=dist,
                    coverage=tuple(frozenset() for _ in range(side * side)),
                    ap_cells=())
    ap_cells: list[frozenset] = []
    for _ in range(cfg.num_wifi):
        target = int(rng.integers(1, 5))
        patch = {int(rng.integers(0, side * side))}
        while len(patch) < target:
            frontier = sorted({n for s in patch for n in topo.neighbors(s)} - patch)
            if not frontier:
                break
            patch.add(frontier[int(rng.integers(0, len(frontier)))])
        ap_cells.append(frozenset(patch))

    coverage = [set() for _ in range(side * side)]
    for ap, cells in enumerate(ap_cells, start=1):
        for s in cells:
            coverage[s].add(ap)
    return Topology(side=side, distance_m=dist,
                    coverage=tuple(frozenset(c) for c in coverage),
                    ap_cells=tuple(ap_cells))


# ----------------------------------------------------------------- mobility

class MobilityChain:
    """Nearest-neighbor walk on the grid.

    With probability ``stay`` the user remains in place, otherwise it moves to
    one of the valid (in-grid) neighbor cells uniformly.  ``stay=None`` makes
    the step uniform over the cell itself plus its valid neighbors.
    """

    def __init__(self, topo: Topology, stay: float | None):
        self.topo = topo
        self.stay = stay

    def step_probs(self, s: int) -> tuple[list[int], np.ndarray]:
        nbrs = self.topo.neighbors(s)
        support = [s] + nbrs
        if self.stay is None:
            probs = np.full(len(support), 1.0 / len(support))
        else:
            probs = np.empty(len(support))
            probs[0] = self.stay
            probs[1:] = (1.0 - self.stay) / len(nbrs) if nbrs else 0.0
            if not nbrs:
                probs[0] = 1.0
        return support, probs

    def step(self, s: int, rng: np.random.Generator) -> int:
        support, probs = self.step_probs(s)
        return int(support[rng.choice(len(support), p=probs)])

    def transition_matrix(self) -> np.ndarray:
        size = self.topo.side ** 2
        mat = np.zeros((size, size))
        for s in range(size):
            support, probs = self.step_probs(s)
            for cell, pr in zip(support, probs):
                mat[s, cell] += pr
        return mat


# ----------------------------------------------------------------- arrivals

class ArrivalChain:
    """Three-state arrival rate chain: {0, mean, 2*mean} Mb/s, sticky diagonal."""

    STAY = 0.6

    def __init__(self, mean_mbps: float):
        self.states = np.array([0.0, mean_mbps, 2.0 * mean_mbps])
        off = (1.0 - self.STAY) / 2.0
        self.matrix = np.full((3, 3), off) + np.eye(3) * (self.STAY - off)

    def step(self, idx: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        u = rng.random(idx.shape)
        cum = np.cumsum(self.matrix[idx], axis=-1)
        # guard the top state against cumulative sums rounding below 1.0
        return np.minimum((u[..., None] > cum).sum(axis=-1),
                          len(self.states) - 1)


# ----------------------------------------------------------------- channels

def sample_gains(dist_m: np.ndarray, shape: tuple, rng: np.random.Generator,
                 cfg: SystemConfig) -> np.ndarray:
    """Rayleigh amplitude over distance^1.5 path loss; ``dist_m`` broadcasts
    against the requested shape on the user axis (second to last)."""
    dist_m = np.asarray(dist_m, dtype=float)
    if np.any(dist_m < cfg.min_distance_m - 1e-9):
        raise ValueError(f"distance below the {cfg.min_distance_m} m model floor")
    xi = rng.rayleigh(scale=RAYLEIGH_SCALE, size=shape)
    return xi / dist_m[..., :, None] ** PATHLOSS_EXP


# ------------------------------------------------------------------- traces

@dataclass
class FrameTrace:
    locations: np.ndarray     # (L,) cell index, constant within the frame
    gains: np.ndarray         # (T, L, M) channel amplitudes
    arrivals_mbps: np.ndarray  # (T, L) arrival rates

    def copy(self) -> "FrameTrace":
        return FrameTrace(self.locations.copy(), self.gains.copy(),
                          self.arrivals_mbps.copy())


class EnvGenerator:
    """Stateful ground-truth generator; one call per frame, in order."""

    def __init__(self, cfg: SystemConfig, topo: Topology, rng: np.random.Generator):
        self.cfg = cfg
        self.topo = topo
        self.rng = rng
        self.mobility = MobilityChain(topo, cfg.mobility_stay_prob)
        self.arrivals = ArrivalChain(cfg.mean_arrival_mbps)
        self.locations = rng.integers(0, cfg.num_locations, size=cfg.num_users)
        self.arrival_state = rng.integers(0, 3, size=cfg.num_users)
        self.frames_emitted = 0

    def generate_frame(self) -> FrameTrace:
        cfg = self.cfg
        if self.frames_emitted > 0:
            self.locations = np.array(
                [self.mobility.step(int(s), self.rng) for s in self.locations])
        self.frames_emitted += 1
        dist = self.topo.distance_m[self.locations]
        gains = np.empty((cfg.frame_slots, cfg.num_users, cfg.num_subchannels))
        arrivals = np.empty((cfg.frame_slots, cfg.num_users))
        for t in range(cfg.frame_slots):
            gains[t] = sample_gains(dist, (cfg.num_users, cfg.num_subchannels),
                                    self.rng, cfg)
            self.arrival_state = self.arrivals.step(self.arrival_state, self.rng)
            arrivals[t] = self.arrivals.states[self.arrival_state]
        return FrameTrace(self.locations.copy(), gains, arrivals)


def forecast_window(frames: list[FrameTrace], cfg: SystemConfig, topo: Topology,
                    rng: np.random.Generator) -> list[FrameTrace]:
    """Operator's view of a window: frame 0 exact; every atomic item of later
    frames is independently replaced, with probability ``error_rate``, by a
    fresh draw from that item's own value space."""
    e = cfg.error_rate
    out = [frames[0].copy()]
    arr_states = ArrivalChain(cfg.mean_arrival_mbps).states
    for frame in frames[1:]:
        fc = frame.copy()
        if e > 0:
            loc_mask = rng.random(cfg.num_users) < e
            fc.locations[loc_mask] = rng.integers(
                0, cfg.num_locations, size=int(loc_mask.sum()))
            gain_mask = rng.random(fc.gains.shape) < e
            dist = topo.distance_m[frame.locations]
            redraw = sample_gains(dist, fc.gains.shape, rng, cfg)
            fc.gains[gain_mask] = redraw[gain_mask]
            arr_mask = rng.random(fc.arrivals_mbps.shape) < e
            fc.arrivals_mbps[arr_mask] = arr_states[
                rng.integers(0, 3, size=int(arr_mask.sum()))]
        out.append(fc)
    return out


# ----------------------------------------------------------------- trace IO

TRACE_FLOAT_FMT = "%.17g"  # lossless float64 round-trip


def dump_trace(frames: list[FrameTrace], path: str) -> None:
    """Columnar text dump of a ground-truth trace (one row per slot and user)."""
    num_sub = frames[0].gains.shape[-1]
    header = ["frame", "slot", "user", "location", "arrival_mbps"]
    header += [f"gain_{m}" for m in range(num_sub)]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for k, fr in enumerate(frames):
            slots, users, _ = fr.gains.shape
            for t in range(slots):
                for l in range(users):
                    row = [str(k), str(t), str(l), str(int(fr.locations[l])),
                           TRACE_FLOAT_FMT % fr.arrivals_mbps[t, l]]
                    row += [TRACE_FLOAT_FMT % g for g in fr.gains[t, l]]
                    fh.write(",".join(row) + "\n")


def load_trace(path: str) -> list[FrameTrace]:
    data = np.genfromtxt(path, delimiter=",", names=True)
    data = np.atleast_1d(data)
    names = data.dtype.names
    num_sub = sum(1 for n in names if n.startswith("gain_"))
    frames = []
    for k in np.unique(data["frame"].astype(int)):
        rows = data[data["frame"].astype(int) == k]
        slots = rows["slot"].astype(int).max() + 1
        users = rows["user"].astype(int).max() + 1
        locations = np.zeros(users, dtype=int)
        gains = np.zeros((slots, users, num_sub))
        arrivals = np.zeros((slots, users))
        for row in rows:
            t, l = int(row["slot"]), int(row["user"])
            locations[l] = int(row["location"])
            arrivals[t, l] = row["arrival_mbps"]
            gains[t, l] = [row[f"gain_{m}"] for m in range(num_sub)]
        frames.append(FrameTrace(locations, gains, arrivals))
    return frames
