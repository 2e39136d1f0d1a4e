#!/usr/bin/env python3
"""
Test Suite for the Coincidence Counting Engine
Tests tally bookkeeping, reproducibility, g²/CAR estimators against their
known limits, the efficiency protocol and the calibrated experiment
"""

import math

import numpy as np
import pytest

from bragg_qft.bs_translator import BsCoupler, conversion_efficiency
from bragg_qft.config import load_scenario
from bragg_qft.counting import (
    DetectorBank,
    NoiseSpec,
    PulseTrainResult,
    accidental_rate,
    car,
    creation_efficiency,
    depletion_efficiency,
    expected_car,
    expected_g2,
    expected_tallies,
    g2_from_counts,
    merge,
    run_efficiency_protocol,
    run_experiment,
    run_pulse_train,
)
from bragg_qft.errors import DomainError, InsufficientStatisticsError
from bragg_qft.mi_source import SourceSpec
from bragg_qft.quantum_core import DetectorSpec
from bragg_qft.scenarios import build_scenario, noise_fraction

IDEAL = DetectorSpec(1.0, 0.0, "C")
COUPLER = BsCoupler.from_kappa_length(0.565, length=20.0)

TALLY_KEYS = {"n_a": "p_a", "n_b": "p_b", "n_c": "p_c", "n_ac": "p_ac",
              "n_bc": "p_bc", "n_abc": "p_abc", "n_s": "p_s", "n_sc": "p_sc"}


def _within_binomial(count, n, p, sigmas=5.0):
    return abs(count - n * p) <= sigmas * math.sqrt(n * p * (1 - p)) + 1


# ============================================================================
# TEST SCENARIO 1: Tally Bookkeeping
# ============================================================================

def test_dark_source_counts_nothing():
    """T1.1: ε = 0, no darks, no noise → every tally is zero"""
    result = run_pulse_train(SourceSpec(0.0, IDEAL), COUPLER, DetectorBank.uniform(1.0),
                             NoiseSpec(), 200_000, seed=1)
    for channel in ("s1", "s2"):
        assert result[channel].n_pulses == 200_000
        assert all(v == 0 for k, v in result[channel].as_row().items() if k != "N_p")
    with pytest.raises(InsufficientStatisticsError):
        g2_from_counts(result["s1"])

def test_pumps_off_leaves_s2_empty():
    """T1.2: coupler None → no translated counts"""
    result = run_pulse_train(SourceSpec(0.3, IDEAL), None, DetectorBank.uniform(1.0),
                             NoiseSpec(), 200_000, seed=2)
    assert result["s2"].counts == 0 and result["s1"].counts > 0

def test_tally_ordering():
    """T1.3: N_ABC ≤ N_AC, N_BC ≤ N_C ≤ N_p in a noisy run"""
    source = SourceSpec(0.3, DetectorSpec(0.5, 1e-2, "C"), signal_delivery=0.5)
    result = run_pulse_train(source, COUPLER, DetectorBank.uniform(0.6, 1e-3),
                             NoiseSpec(0.1, 0.2), 300_000, seed=3)
    for tally in result.values():
        assert tally.check_ordering(), f"Ordering broken: {tally.as_row()}"

def test_merge_adds_counts():
    """T1.4: merge of two runs sums every field"""
    a = PulseTrainResult("s1", 10, 1, 2, 3, 1, 1, 0, 3, 2)
    b = PulseTrainResult("s1", 20, 4, 5, 6, 2, 3, 1, 8, 4)
    merged = merge([{"s1": a}, {"s1": b}])["s1"]
    assert merged == PulseTrainResult("s1", 30, 5, 7, 9, 3, 4, 1, 11, 6)
    with pytest.raises(DomainError):
        a + PulseTrainResult("s2")

def test_same_seed_same_counts():
    """T1.5: identical seeds → identical tallies; parallel == serial"""
    source = SourceSpec(0.2, DetectorSpec(0.3, 1e-3, "C"))
    args = (source, COUPLER, DetectorBank.uniform(0.6), NoiseSpec(0.05, 0.05), 250_000)
    first = run_pulse_train(*args, seed=42, block_size=100_000)
    again = run_pulse_train(*args, seed=42, block_size=100_000)
    serial = run_pulse_train(*args, seed=42, block_size=100_000, parallel=False)
    other = run_pulse_train(*args, seed=43, block_size=100_000)
    assert first == again == serial
    assert first != other

def test_zero_pulses_rejected():
    """T1.6: n_pulses < 1 → DomainError"""
    with pytest.raises(DomainError):
        run_pulse_train(SourceSpec(0.1, IDEAL), None, DetectorBank.uniform(1.0), NoiseSpec(), 0, seed=0)


# ============================================================================
# TEST SCENARIO 2: Estimator Limits
# ============================================================================

def test_independent_streams_are_uncorrelated():
    """T2.1: dark-count herald, Poisson channels → g² = CAR = 1"""
    source = SourceSpec(0.0, DetectorSpec(1.0, 0.1, "C"))
    result = run_pulse_train(source, None, DetectorBank.uniform(1.0), NoiseSpec(0.5, 0.5), 2_000_000, seed=5)
    g2 = g2_from_counts(result["s1"]).value
    assert g2 == pytest.approx(1.0, abs=0.06), f"g² = {g2:.4f}"
    assert car(result["s1"]) == pytest.approx(1.0, abs=0.03)

def test_ideal_source_antibunches():
    """T2.2: weak source, ideal herald and detectors → g² < 0.01"""
    source = SourceSpec(0.03, IDEAL)
    result = run_pulse_train(source, None, DetectorBank.uniform(1.0), NoiseSpec(), 10_000_000, seed=6)
    g2 = g2_from_counts(result["s1"]).value
    assert g2 < 0.01, f"g² = {g2:.5f}"
    assert expected_g2(expected_tallies(source, None, DetectorBank.uniform(1.0), NoiseSpec(), "s1")) < 0.01

def test_decorrelated_herald_kills_car():
    """T2.3: permuted herald clicks → CAR = 1"""
    source = SourceSpec(0.3, IDEAL)
    correlated = run_pulse_train(source, None, DetectorBank.uniform(0.6), NoiseSpec(), 2_000_000, seed=7)
    shuffled = run_pulse_train(source, None, DetectorBank.uniform(0.6), NoiseSpec(), 2_000_000, seed=7,
                               decorrelate=True)
    assert car(shuffled["s1"]) == pytest.approx(1.0, abs=0.05)
    assert car(correlated["s1"]) > 5

def test_accidental_rate_arithmetic():
    """T2.4: N_C·N_s/N_p and N_p = 0 rejected"""
    assert accidental_rate(1000, 2000, 1e6) == pytest.approx(2.0)
    with pytest.raises(DomainError):
        accidental_rate(1, 1, 0)

def test_g2_estimator_edge_cases():
    """T2.5: N_AC = 0 → error; hand-computed value and run scatter"""
    with pytest.raises(InsufficientStatisticsError):
        g2_from_counts(PulseTrainResult("s1", 10, n_c=5, n_ac=0, n_bc=3))
    single = PulseTrainResult("s1", 1000, n_c=100, n_ac=10, n_bc=20, n_abc=2)
    assert g2_from_counts(single).value == pytest.approx(1.0)
    runs = [single, PulseTrainResult("s1", 1000, n_c=100, n_ac=10, n_bc=20, n_abc=4)]
    estimate = g2_from_counts(runs)
    assert estimate.value == pytest.approx(6 * 200 / (20 * 40))
    assert estimate.n_runs == 2 and estimate.std_dev == pytest.approx(np.std([1.0, 2.0], ddof=1))
    assert estimate.std_error == pytest.approx(estimate.std_dev / math.sqrt(2))

def test_monte_carlo_matches_expected_tallies():
    """T2.6: every MC tally within 5σ of its exact probability"""
    source = SourceSpec(0.2, DetectorSpec(0.5, 1e-3, "C"), signal_delivery=0.5, schmidt_modes=2)
    detectors = DetectorBank.uniform(0.6, 1e-4)
    noise = NoiseSpec(0.05, 0.1)
    n = 2_000_000
    result = run_pulse_train(source, COUPLER, detectors, noise, n, seed=8)
    for channel in ("s1", "s2"):
        expected = expected_tallies(source, COUPLER, detectors, noise, channel)
        for attr, key in TALLY_KEYS.items():
            count = getattr(result[channel], attr)
            assert _within_binomial(count, n, expected[key]), \
                f"{channel} {attr}: {count} vs {n * expected[key]:.1f}"

def test_noiseless_car_scales_inverse_square():
    """T2.7: no noise, no darks, K = 1 → CAR·ε² ≈ 1 across ε"""
    detectors = DetectorBank.uniform(0.6)
    for epsilon in (0.005, 0.01, 0.02):
        source = SourceSpec(epsilon, DetectorSpec(0.12, 0.0, "C"), signal_delivery=0.31)
        value = expected_car(expected_tallies(source, COUPLER, detectors, NoiseSpec(), "s1"))
        assert value * epsilon ** 2 == pytest.approx(1.0, rel=0.01), f"ε={epsilon}: CAR = {value:.1f}"

def test_expected_estimators_need_counts():
    """T2.8: empty channel → InsufficientStatisticsError, not a division by zero"""
    empty = expected_tallies(SourceSpec(0.1, IDEAL), None, DetectorBank.uniform(1.0), NoiseSpec(), "s2")
    assert empty["p_ac"] == 0 and empty["p_s"] == 0
    with pytest.raises(InsufficientStatisticsError):
        expected_g2(empty)
    with pytest.raises(InsufficientStatisticsError):
        expected_car(empty)


# ============================================================================
# TEST SCENARIO 3: Splitter & Efficiency Protocol
# ============================================================================

def test_unbalanced_splitter():
    """T3.1: 60/40 splitter → A outcounts B at the exact ratio"""
    source = SourceSpec(0.3, IDEAL)
    detectors = DetectorBank.uniform(1.0, split_ratio=0.6)
    result = run_pulse_train(source, None, detectors, NoiseSpec(), 1_000_000, seed=9)["s1"]
    t = expected_tallies(source, None, detectors, NoiseSpec(), "s1")
    assert result.n_a > result.n_b
    assert result.n_a / result.n_b == pytest.approx(t["p_a"] / t["p_b"], rel=0.03)

def test_efficiency_protocol_recovers_conversion():
    """T3.2: depletion and creation estimate |ν|² = 0.286 within 4σ"""
    source = SourceSpec(0.1, IDEAL)
    coupler = BsCoupler.from_kappa_length(0.565, length=20.0)
    tau = conversion_efficiency(coupler)
    report = run_efficiency_protocol(source, coupler, DetectorBank.uniform(0.6), NoiseSpec(), 10_000_000, seed=10)
    for estimate in (report.depletion, report.creation):
        assert abs(estimate.value - tau) < 4 * estimate.std_error, \
            f"{estimate.value:.4f} ± {estimate.std_error:.4f} vs {tau:.4f}"
    assert report.source_blocked["s1"].counts == 0

def test_creation_cancels_detector_efficiency():
    """T3.3: s2 detectors at half efficiency → ratio divides it out"""
    source = SourceSpec(0.01, IDEAL)
    detectors = DetectorBank(DetectorSpec(0.6), DetectorSpec(0.6), DetectorSpec(0.3), DetectorSpec(0.3))
    on = expected_tallies(source, COUPLER, detectors, NoiseSpec(), "s2")
    off = expected_tallies(source, None, detectors, NoiseSpec(), "s1")
    rate_on, rate_off = on["p_a"] + on["p_b"], off["p_a"] + off["p_b"]
    tau = conversion_efficiency(COUPLER)
    right = creation_efficiency(rate_on, rate_off, detectors.detector_ratio())
    wrong = creation_efficiency(rate_on, rate_off, 1.0)
    assert detectors.detector_ratio() == pytest.approx(0.5)
    assert right.value == pytest.approx(tau, rel=1e-3) and right.std_error == 0.0
    assert wrong.value == pytest.approx(right.value / 2, rel=1e-12)

def test_depletion_needs_pumps_off_counts():
    """T3.4: zero pumps-off rate → InsufficientStatisticsError"""
    with pytest.raises(InsufficientStatisticsError):
        depletion_efficiency(0.01, 0.0)

def test_splitter_ratio_leaves_g2_unchanged(calibrated):
    """T3.5: 50/50 and 60/40 splitters give the same expected g² in both channels"""
    args = (calibrated.source, calibrated.coupler)
    for channel in ("s1", "s2"):
        balanced = expected_g2(expected_tallies(*args, DetectorBank.uniform(0.6, 1e-6), calibrated.noise, channel))
        skewed = expected_g2(expected_tallies(*args, DetectorBank.uniform(0.6, 1e-6, split_ratio=0.6),
                                              calibrated.noise, channel))
        assert skewed == pytest.approx(balanced, rel=1e-4), f"{channel}: {skewed:.6f} vs {balanced:.6f}"

def test_depletion_ignores_detector_efficiency(calibrated):
    """T3.6: depletion estimate stays at 0.286 for detector efficiencies 0.05 to 0.5"""
    source, coupler, noise = calibrated.source, calibrated.coupler, calibrated.noise

    def rate(src, cpl, detectors, background):
        t = expected_tallies(src, cpl, detectors, background, "s1")
        return t["p_a"] + t["p_b"]

    for efficiency in (0.05, 0.1, 0.2, 0.5):
        detectors = DetectorBank.uniform(efficiency, 1e-6)
        estimate = depletion_efficiency(rate(source, coupler, detectors, noise),
                                        rate(source, None, detectors, NoiseSpec()),
                                        rate(source.with_epsilon(0.0), coupler, detectors, noise))
        assert estimate.value == pytest.approx(0.286, abs=0.003), f"η={efficiency}: {estimate.value:.4f}"


# ============================================================================
# TEST SCENARIO 4: Calibrated Experiment
# ============================================================================

@pytest.fixture(scope="module")
def calibrated():
    return build_scenario(load_scenario("paper_calibrated"))

def test_calibration_anchors(calibrated):
    """T4.1: analytic model reproduces efficiency, noise fractions, CAR_s1 and CAR_s2 ≈ 6.5"""
    args = (calibrated.source, calibrated.coupler, calibrated.detectors, calibrated.noise)
    assert conversion_efficiency(calibrated.coupler) == pytest.approx(0.286, abs=1e-9)
    assert noise_fraction(*args, "s1") == pytest.approx(0.11, abs=1e-6)
    assert noise_fraction(*args, "s2") == pytest.approx(0.24, abs=1e-6)
    assert expected_car(expected_tallies(*args, "s1")) == pytest.approx(8.2, rel=1e-6)
    assert expected_car(expected_tallies(*args, "s2")) == pytest.approx(6.5, rel=0.25)
    assert 0.02 < calibrated.source.epsilon < 0.05, f"ε = {calibrated.source.epsilon}"

def test_calibrated_antibunching(calibrated):
    """T4.2: 30 × 10⁶ pulses → g² in [0.10, 0.35] and CAR within 25 % in both channels"""
    experiment = run_experiment(calibrated.source, calibrated.coupler, calibrated.detectors, calibrated.noise,
                                n_runs=30, pulses_per_run=1_000_000, seed=42)
    for channel in ("s1", "s2"):
        estimate = experiment.g2(channel)
        expected = expected_tallies(calibrated.source, calibrated.coupler, calibrated.detectors, calibrated.noise, channel)
        assert 0.10 <= estimate.value <= 0.35, f"{channel}: g² = {estimate.value:.3f}"
        assert estimate.n_runs == 30 and estimate.std_error > 0
        measured_car = car(experiment.merged[channel])
        assert measured_car == pytest.approx(expected_car(expected), rel=0.25), \
            f"{channel}: CAR {measured_car:.2f} vs {expected_car(expected):.2f}"

def test_g2_rises_with_pair_amplitude_and_background(calibrated):
    """T4.3: expected g² increases with ε and with the background mean"""
    source, coupler, detectors, noise = (calibrated.source, calibrated.coupler, calibrated.detectors,
                                         calibrated.noise)
    for channel in ("s1", "s2"):
        by_epsilon = [expected_g2(expected_tallies(source.with_epsilon(source.epsilon * f), coupler, detectors,
                                                   noise, channel)) for f in (0.5, 1.0, 2.0)]
        assert by_epsilon == sorted(by_epsilon) and len(set(by_epsilon)) == 3, f"{channel}: {by_epsilon}"
        by_noise = [expected_g2(expected_tallies(source, coupler, detectors,
                                                 NoiseSpec(noise.s1_mean * f, noise.s2_mean * f), channel))
                    for f in (0.0, 1.0, 2.0, 4.0)]
        assert by_noise == sorted(by_noise) and len(set(by_noise)) == 4, f"{channel}: {by_noise}"


# ============================================================================
# RUN ALL TESTS
# ============================================================================

if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
