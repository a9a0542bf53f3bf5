"""Rate, power, queue and feasibility primitives."""
import math

import numpy as np
import pytest

from hetsched.config import SystemConfig
from hetsched.model import (ConstraintViolation, DriftBounds, drift_bounds,
                            macrocell_power, macrocell_rate, rate_upper_bound,
                            service_rates, step_queue, total_power,
                            validate_decision, wifi_counts)
from hetsched.wifi import DcfTables

CFG = SystemConfig()
DCF = DcfTables.build(CFG)


def test_unit_snr_rate_eighth_band():
    # one of eight 0.3125 MHz subchannels at SNR 1 carries exactly 0.3125 Mb/s
    cfg = SystemConfig(num_subchannels=8)
    x = np.zeros(8)
    p = np.zeros(8)
    x[0] = 1.0
    p[0] = cfg.subchannel_noise_w  # gain 1 -> SNR exactly 1
    assert macrocell_rate(x, p, np.ones(8), cfg) == 0.3125


def test_amplifier_power_scaling():
    assert macrocell_power(np.full((1, 4), 0.5), CFG) == 9.4
    assert macrocell_power(np.full((4, 4), 1.25), CFG) == 94.0
    assert macrocell_power(np.zeros((4, 4)), CFG) == 0.0


def test_rate_recompute_high_precision():
    rng = np.random.default_rng(7)
    x = np.zeros((3, 2, 4))
    for t in range(3):
        for m in range(4):
            x[t, rng.integers(2), m] = 1.0
    p = rng.uniform(0.0, 5.0, (3, 2, 4)) * x
    gain = rng.rayleigh(1.0, (3, 2, 4)) / 30.0
    got = macrocell_rate(x, p, gain, CFG)
    assert got.shape == (3, 2)
    for t in range(3):
        for l in range(2):
            terms = [x[t, l, m] * math.log2(
                        1.0 + p[t, l, m] * gain[t, l, m] ** 2
                        / CFG.subchannel_noise_w) for m in range(4)]
            assert got[t, l] == pytest.approx(
                CFG.subchannel_bw_mhz * math.fsum(terms), rel=1e-14)


def test_negative_power_rejected():
    with pytest.raises(ValueError, match="negative transmit power"):
        macrocell_rate(np.ones(4), np.array([1.0, -0.1, 0, 0]), np.ones(4), CFG)
    with pytest.raises(ValueError, match="negative transmit power"):
        macrocell_power(np.array([[-1e-12]]), CFG)


def test_queue_drain_then_fill():
    assert step_queue(1.0, 0.02, 0.02) == 1.0
    # service beyond the backlog is lost, arrivals still land
    assert step_queue(0.01, 0.02, 0.05) == 0.05
    got = step_queue(np.array([1.0, 0.01]), np.array([0.02, 0.02]),
                     np.array([0.02, 0.05]))
    np.testing.assert_array_equal(got, [1.0, 0.05])


def test_queue_rejects_negative_mass():
    with pytest.raises(ValueError, match="non-negative"):
        step_queue(1.0, -0.01, 0.0)
    with pytest.raises(ValueError, match="non-negative"):
        step_queue(1.0, 0.0, -0.01)


def test_wifi_counts():
    np.testing.assert_array_equal(wifi_counts([0, 1, 1, 2, 0], 3), [2, 1, 0])
    np.testing.assert_array_equal(wifi_counts([0, 0], 3), [0, 0, 0])


def test_station_shares():
    # three users split 2 + 1 across two APs: equal shares on the shared one
    cfg = SystemConfig(num_users=3)
    dcf = DcfTables.build(cfg)
    alpha = np.array([1, 1, 2])
    zeros = np.zeros((3, cfg.num_subchannels))
    rates = service_rates(alpha, zeros, zeros, np.ones_like(zeros), dcf, cfg)
    assert rates[0] == rates[1] == dcf.rate_mbps[2] / 2
    assert rates[2] == dcf.rate_mbps[1]


def test_mixed_slot_rates_and_power():
    cfg = SystemConfig(num_users=3)
    dcf = DcfTables.build(cfg)
    alpha = np.array([0, 2, 2])
    x = np.zeros((3, 4))
    p = np.zeros((3, 4))
    x[0, :] = 1.0
    p[0, :] = 2.5
    gain = np.full((3, 4), 0.05)
    rates = service_rates(alpha, x, p, gain, dcf, cfg)
    assert rates[0] == pytest.approx(float(macrocell_rate(x[0], p[0], gain[0], cfg)))
    assert rates[1] == rates[2] == dcf.rate_mbps[2] / 2
    want = cfg.kappa * 10.0 + dcf.power_w[0] + dcf.power_w[2] + dcf.power_w[0]
    assert total_power(alpha, p, dcf, cfg) == pytest.approx(want)


def test_drift_constants_unit_case():
    # one user, unit slot arrivals and service: B1 = 1, B2 = frame_slots
    cfg = SystemConfig(num_users=1, a_max_mbps=100.0)
    dcf = DcfTables.build(cfg)
    b = drift_bounds(cfg, dcf, r_max_mbps=100.0)
    assert b.b1_mb2 == 1.0
    assert b.b2_mb2 == 100.0
    longer = drift_bounds(cfg.replace(frame_slots=200), dcf, 100.0)
    assert longer.b2_mb2 == 2.0 * b.b2_mb2


def test_power_gap_halves_with_doubled_weight():
    b_lo = drift_bounds(CFG, DCF, 50.0)
    b_hi = drift_bounds(CFG.replace(v=2 * CFG.v), DCF, 50.0)
    assert b_hi.power_gap_w == pytest.approx(b_lo.power_gap_w / 2)
    assert drift_bounds(CFG.replace(v=0.0), DCF, 50.0).power_gap_w == math.inf


def test_queue_gap_desk_value():
    # (frame_slots - 1)/2 * users * per-slot arrival cap, at defaults
    b = drift_bounds(CFG, DCF, 50.0)
    assert b.queue_gap_mb == 7.92
    assert b.p_max_w == CFG.kappa * CFG.p_max_cell_w + CFG.num_wifi * DCF.p_max_w
    assert isinstance(b, DriftBounds)


def test_rate_cap_covers_both_interfaces():
    assert rate_upper_bound(0.0, DCF, CFG) == DCF.rate_mbps.max()
    big = rate_upper_bound(10.0, DCF, CFG)
    snr = CFG.p_max_cell_w * 100.0 / CFG.subchannel_noise_w
    assert big == pytest.approx(CFG.bandwidth_mhz * math.log2(1.0 + snr))
    assert rate_upper_bound(20.0, DCF, CFG) > big


# ---------------------------------------------------------------- validation

def _clean_decision(cfg):
    alpha = np.array([0, 1])
    x = np.zeros((cfg.frame_slots, 2, cfg.num_subchannels))
    p = np.zeros_like(x)
    x[:, 0, 0] = 1.0
    p[:, 0, 0] = 5.0
    return alpha, x, p


COVERAGE = (frozenset({1}), frozenset(), frozenset({1, 2}))


def test_validate_accepts_feasible():
    alpha, x, p = _clean_decision(CFG)
    validate_decision(alpha, x, p, [0, 2], COVERAGE, CFG)
    validate_decision(alpha, x[0], p[0], [0, 2], COVERAGE, CFG)  # single slot


def test_validate_coverage():
    alpha, x, p = _clean_decision(CFG)
    with pytest.raises(ConstraintViolation,
                       match="user 1 chose AP 1 at location 1"):
        validate_decision(alpha, x, p, [0, 1], COVERAGE, CFG)


def test_validate_binary_assignment():
    alpha, x, p = _clean_decision(CFG)
    x[0, 0, 0] = 0.5
    with pytest.raises(ConstraintViolation, match="must be 0/1"):
        validate_decision(alpha, x, p, [0, 2], COVERAGE, CFG)


def test_validate_channel_exclusivity():
    alpha = np.array([0, 0])
    _, x, p = _clean_decision(CFG)
    x[:, 1, 0] = 1.0
    with pytest.raises(ConstraintViolation, match="more than one user"):
        validate_decision(alpha, x, p, [0, 2], COVERAGE, CFG)


def test_validate_no_cellular_resources_on_wifi():
    alpha, x, p = _clean_decision(CFG)
    x2 = x.copy()
    x2[:, 1, 1] = 1.0
    with pytest.raises(ConstraintViolation, match="assigned to a Wi-Fi user"):
        validate_decision(alpha, x2, p, [0, 2], COVERAGE, CFG)
    p2 = p.copy()
    p2[:, 1, 1] = 0.1
    with pytest.raises(ConstraintViolation, match="allocated to a Wi-Fi user"):
        validate_decision(alpha, x, p2, [0, 2], COVERAGE, CFG)


def test_validate_budget():
    alpha, x, p = _clean_decision(CFG)
    p[0, 0, 0] = CFG.p_max_cell_w + 1e-6
    with pytest.raises(ConstraintViolation, match="power budget exceeded"):
        validate_decision(alpha, x, p, [0, 2], COVERAGE, CFG)
    # within tolerance passes
    p[0, 0, 0] = CFG.p_max_cell_w + 1e-10
    validate_decision(alpha, x, p, [0, 2], COVERAGE, CFG)


def test_validate_negative_power():
    alpha, x, p = _clean_decision(CFG)
    p[0, 0, 1] = -1e-6
    with pytest.raises(ConstraintViolation, match="negative transmit power"):
        validate_decision(alpha, x, p, [0, 2], COVERAGE, CFG)
