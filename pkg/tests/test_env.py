"""Geometry, mobility, fading, arrivals, forecasting and trace IO.

Statistical checks use fixed seeds and tolerances wide enough to be
deterministic in practice (several standard errors).
"""
import math

import numpy as np
import pytest

from hetsched.config import SystemConfig
from hetsched.env import (PATHLOSS_EXP, RAYLEIGH_SCALE, ArrivalChain,
                          EnvGenerator, FrameTrace, MobilityChain, Topology,
                          dump_trace, forecast_window, load_trace,
                          make_topology, sample_gains)

CFG = SystemConfig()


def _topo(seed=0, cfg=CFG):
    return make_topology(cfg, np.random.default_rng(seed))


# ----------------------------------------------------------------- topology

def test_center_cell_distance_clamped():
    topo = _topo()
    assert topo.side == 5
    # cell 12 is the center of the 5x5 grid: geometric distance 0, clamped
    assert topo.distance_m[12] == CFG.min_distance_m
    assert topo.distance_m[0] == pytest.approx(math.hypot(30.0, 30.0))
    assert np.all(topo.distance_m >= CFG.min_distance_m)


def test_ap_patches_connected_and_small():
    for seed in range(20):
        topo = _topo(seed)
        assert len(topo.ap_cells) == CFG.num_wifi
        for cells in topo.ap_cells:
            assert 1 <= len(cells) <= 4
            # flood fill within the patch must reach every cell
            start = next(iter(cells))
            seen = {start}
            frontier = [start]
            while frontier:
                s = frontier.pop()
                for n in topo.neighbors(s):
                    if n in cells and n not in seen:
                        seen.add(n)
                        frontier.append(n)
            assert seen == cells


def test_coverage_is_inverse_of_ap_cells():
    topo = _topo(3)
    for s, aps in enumerate(topo.coverage):
        for ap in aps:
            assert s in topo.ap_cells[ap - 1]
    for ap, cells in enumerate(topo.ap_cells, start=1):
        for s in cells:
            assert ap in topo.coverage[s]


def test_neighbors_shape():
    topo = _topo()
    assert sorted(topo.neighbors(0)) == [1, 5]          # corner
    assert sorted(topo.neighbors(2)) == [1, 3, 7]       # edge
    assert sorted(topo.neighbors(12)) == [7, 11, 13, 17]  # interior


# ----------------------------------------------------------------- mobility

def test_walk_stay_probability():
    topo = _topo()
    chain = MobilityChain(topo, 0.5)
    support, probs = chain.step_probs(12)
    assert support == [12, 7, 17, 11, 13]
    np.testing.assert_allclose(probs, [0.5, 0.125, 0.125, 0.125, 0.125])
    rows = chain.transition_matrix().sum(axis=1)
    np.testing.assert_allclose(rows, 1.0)


def test_walk_uniform_when_stay_unset():
    # corner cell: uniform over itself and its two neighbors
    chain = MobilityChain(_topo(), None)
    support, probs = chain.step_probs(0)
    assert support == [0, 5, 1]
    np.testing.assert_allclose(probs, 1.0 / 3.0)


def test_walk_frozen_when_stay_one():
    chain = MobilityChain(_topo(), 1.0)
    rng = np.random.default_rng(1)
    assert all(chain.step(s, rng) == s for s in range(25))


def test_occupancy_matches_stationary():
    topo = _topo()
    chain = MobilityChain(topo, 0.5)
    mat = chain.transition_matrix()
    pi = np.full(25, 1.0 / 25.0)
    for _ in range(2000):
        pi = pi @ mat
    np.testing.assert_allclose(pi.sum(), 1.0)
    rng = np.random.default_rng(42)
    counts = np.zeros(25)
    s = 12
    for _ in range(100_000):
        s = chain.step(s, rng)
        counts[s] += 1
    assert np.abs(counts / counts.sum() - pi).max() < 0.02


# ----------------------------------------------------------------- channels

def test_fading_is_unit_mean_square():
    rng = np.random.default_rng(9)
    gains = sample_gains(np.array([10.0]), (1, 1_000_000), rng, CFG)
    xi_sq = gains ** 2 * 10.0 ** (2 * PATHLOSS_EXP)
    assert abs(xi_sq.mean() - 1.0) < 0.01
    assert RAYLEIGH_SCALE == pytest.approx(1.0 / math.sqrt(2.0))


def test_quadrupled_distance_eighth_gain():
    shape = (4, 1, 1000)
    near = sample_gains(np.full((1,), 10.0), shape, np.random.default_rng(5), CFG)
    far = sample_gains(np.full((1,), 40.0), shape, np.random.default_rng(5), CFG)
    np.testing.assert_allclose(far, near / 8.0, rtol=1e-13)


def test_distance_floor_enforced():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError, match="below the 10.0 m model floor"):
        sample_gains(np.array([9.0]), (1, 4), rng, CFG)


# ----------------------------------------------------------------- arrivals

def test_arrival_chain_matrix():
    chain = ArrivalChain(2.0)
    np.testing.assert_array_equal(chain.states, [0.0, 2.0, 4.0])
    np.testing.assert_allclose(chain.matrix.sum(axis=1), 1.0)
    np.testing.assert_allclose(np.diag(chain.matrix), 0.6)
    np.testing.assert_allclose(chain.matrix[0, 1:], 0.2)


def test_arrival_transition_frequencies():
    chain = ArrivalChain(2.0)
    rng = np.random.default_rng(11)
    idx = np.ones(100_000, dtype=int)
    nxt = chain.step(idx, rng)
    freq = np.bincount(nxt, minlength=3) / idx.size
    np.testing.assert_allclose(freq, [0.2, 0.6, 0.2], atol=0.01)
    assert nxt.min() >= 0 and nxt.max() <= 2


def test_arrival_long_run_mean():
    # symmetric sticky chain: stationary uniform, mean rate = mean_arrival
    chain = ArrivalChain(2.0)
    rng = np.random.default_rng(13)
    idx = rng.integers(0, 3, size=50_000)
    samples = []
    for _ in range(10):
        idx = chain.step(idx, rng)
        samples.append(chain.states[idx])
    mean = np.concatenate(samples).mean()
    assert abs(mean - 2.0) < 0.05
    assert np.concatenate(samples).max() <= CFG.a_max


# ------------------------------------------------------------------- traces

def _small_cfg():
    return CFG.replace(num_users=3, frame_slots=6, num_subchannels=2,
                       num_frames=4)


def test_generator_deterministic_and_frame_constant():
    cfg = _small_cfg()
    topo = _topo(1, cfg)
    a = EnvGenerator(cfg, topo, np.random.default_rng(77))
    b = EnvGenerator(cfg, topo, np.random.default_rng(77))
    for _ in range(4):
        fa, fb = a.generate_frame(), b.generate_frame()
        np.testing.assert_array_equal(fa.locations, fb.locations)
        np.testing.assert_array_equal(fa.gains, fb.gains)
        np.testing.assert_array_equal(fa.arrivals_mbps, fb.arrivals_mbps)
        assert fa.locations.shape == (3,)
        assert fa.gains.shape == (6, 3, 2)
        assert fa.arrivals_mbps.shape == (6, 3)
        assert set(np.unique(fa.arrivals_mbps)) <= {0.0, 2.0, 4.0}


def test_generator_walks_between_frames():
    cfg = _small_cfg().replace(mobility_stay_prob=1.0)
    gen = EnvGenerator(cfg, _topo(1, cfg), np.random.default_rng(3))
    first = gen.generate_frame()
    second = gen.generate_frame()
    np.testing.assert_array_equal(first.locations, second.locations)


def test_forecast_exact_when_error_free():
    cfg = _small_cfg()
    topo = _topo(1, cfg)
    gen = EnvGenerator(cfg, topo, np.random.default_rng(5))
    frames = [gen.generate_frame() for _ in range(3)]
    fc = forecast_window(frames, cfg, topo, np.random.default_rng(6))
    for truth, seen in zip(frames, fc):
        np.testing.assert_array_equal(truth.gains, seen.gains)
        np.testing.assert_array_equal(truth.locations, seen.locations)
        np.testing.assert_array_equal(truth.arrivals_mbps, seen.arrivals_mbps)
        assert seen.gains is not truth.gains  # defensive copies


def test_forecast_corruption_rate():
    # 10 corrupted frames x 100 slots x 4 users x 4 subchannels = 16000 draws
    cfg = CFG.replace(error_rate=0.2, num_frames=11)
    topo = _topo(1, cfg)
    gen = EnvGenerator(cfg, topo, np.random.default_rng(5))
    frames = [gen.generate_frame() for _ in range(11)]
    fc = forecast_window(frames, cfg, topo, np.random.default_rng(8))
    np.testing.assert_array_equal(fc[0].gains, frames[0].gains)  # frame 0 exact
    # gains are continuous, so a redraw differs almost surely
    flips = [seen.gains != truth.gains
             for truth, seen in zip(frames[1:], fc[1:])]
    rate = np.concatenate(flips).mean()
    assert abs(rate - 0.2) < 0.01


def test_trace_round_trip(tmp_path):
    cfg = _small_cfg()
    gen = EnvGenerator(cfg, _topo(1, cfg), np.random.default_rng(21))
    frames = [gen.generate_frame() for _ in range(2)]
    path = tmp_path / "trace.csv"
    dump_trace(frames, str(path))
    back = load_trace(str(path))
    assert len(back) == 2
    for truth, again in zip(frames, back):
        np.testing.assert_array_equal(truth.locations, again.locations)
        np.testing.assert_array_equal(truth.gains, again.gains)
        np.testing.assert_array_equal(truth.arrivals_mbps, again.arrivals_mbps)


def test_trace_header(tmp_path):
    cfg = _small_cfg()
    gen = EnvGenerator(cfg, _topo(1, cfg), np.random.default_rng(21))
    path = tmp_path / "trace.csv"
    dump_trace([gen.generate_frame()], str(path))
    head = path.read_text().splitlines()[0]
    assert head == "frame,slot,user,location,arrival_mbps,gain_0,gain_1"
