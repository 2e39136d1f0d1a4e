#!/usr/bin/env python3
"""
Test Suite for the Heralded MI Source
Tests the pair-number law, herald statistics, signal delivery and the
herald-rate calibration
"""

import numpy as np
import pytest
from scipy.stats import binom, chisquare

from bragg_qft.config import load_fiber_preset
from bragg_qft.errors import CalibrationError, DomainError
from bragg_qft.mi_source import (
    SourceSpec,
    calibrate_epsilon,
    emit_pulse,
    emit_pulses,
    epsilon_from_pump,
    herald_click_probability,
    herald_rate_hz,
    mean_pairs,
    pair_number_pmf,
)
from bragg_qft.quantum_core import DetectorSpec, heralded_reduce, two_mode_squeezed_state

IDEAL = DetectorSpec(1.0, 0.0, "C")
LOSSY_HERALD = DetectorSpec(0.12, 1e-6, "C")


def _rng(seed=0):
    return np.random.Generator(np.random.Philox(seed))


# ============================================================================
# TEST SCENARIO 1: Pair Amplitude
# ============================================================================

def test_epsilon_low_gain():
    """T1.1: ε = γPL and regime flag in the low-gain limit"""
    fiber = load_fiber_preset("fiber1").fiber
    amp = epsilon_from_pump(fiber, 0.01)
    assert amp.value == pytest.approx(0.1 * 0.01 * 32.0, rel=1e-12)
    assert amp.regime_ok and amp.warning is None

def test_epsilon_high_gain_warns():
    """T1.2: γPL ≥ 0.5 → regime_ok False with a warning"""
    amp = epsilon_from_pump(load_fiber_preset("fiber1").fiber, 0.5)
    assert not amp.regime_ok and "low-gain" in amp.warning

def test_source_rejects_bad_epsilon():
    """T1.3: ε ≥ 1 → DomainError"""
    with pytest.raises(DomainError):
        SourceSpec(1.0, IDEAL)


# ============================================================================
# TEST SCENARIO 2: Pulse Emission
# ============================================================================

def test_zero_epsilon_emits_nothing():
    """T2.1: ε = 0, no herald dark counts → no pairs, no herald clicks"""
    batch = emit_pulses(SourceSpec(0.0, IDEAL), _rng(), 100_000)
    assert batch.pairs.sum() == 0 and not batch.herald_click.any()

def test_ideal_herald_click_probability():
    """T2.2: K = 1, η_C = 1 → P(click) = ε²"""
    spec = SourceSpec(0.2, IDEAL)
    assert herald_click_probability(spec) == pytest.approx(0.04, rel=1e-12)
    batch = emit_pulses(spec, _rng(1), 1_000_000)
    observed = batch.herald_click.mean()
    assert abs(observed - 0.04) < 5 * np.sqrt(0.04 * 0.96 / 1e6), f"Click fraction {observed:.5f}"

def test_delivery_thins_signal():
    """T2.3: mean delivered signal = delivery × mean pairs"""
    spec = SourceSpec(0.3, IDEAL, signal_delivery=0.31)
    batch = emit_pulses(spec, _rng(2), 1_000_000)
    expected = 0.31 * mean_pairs(spec)
    assert batch.signal.mean() == pytest.approx(expected, rel=0.02), f"{batch.signal.mean():.5f} vs {expected:.5f}"
    assert np.all(batch.signal <= batch.pairs)

def test_pair_number_follows_geometric_law():
    """T2.4: ε = 0.5, K = 1 → empirical histogram passes χ² at p > 1e-3"""
    spec = SourceSpec(0.5, IDEAL)
    pairs = emit_pulses(spec, _rng(3), 200_000).pairs
    pmf = pair_number_pmf(spec, 5)
    observed = np.array([np.sum(pairs == n) for n in range(6)] + [np.sum(pairs > 5)])
    expected = np.append(pmf, 1 - pmf.sum()) * pairs.size
    _, p_value = chisquare(observed, expected)
    assert p_value > 1e-3, f"χ² p-value {p_value:.2e}"

def test_multimode_mean_pairs():
    """T2.5: K = 100 → sample mean = K ε²/(1 − ε²)"""
    spec = SourceSpec(0.035, LOSSY_HERALD, schmidt_modes=100)
    expected = 100 * 0.035 ** 2 / (1 - 0.035 ** 2)
    assert mean_pairs(spec) == pytest.approx(expected, rel=1e-12)
    pairs = emit_pulses(spec, _rng(4), 1_000_000).pairs
    assert pairs.mean() == pytest.approx(expected, rel=0.02)

def test_heralded_distribution_matches_fock_reduction():
    """T2.6: MC P(n | click) agrees with the Fock-space heralded state"""
    herald = DetectorSpec(0.12, 1e-3, "C")
    spec = SourceSpec(0.4, herald)
    batch = emit_pulses(spec, _rng(5), 2_000_000)
    conditioned = batch.pairs[batch.herald_click]
    exact = heralded_reduce(two_mode_squeezed_state(0.4, n_max=20), herald).probabilities
    for n in range(3):
        observed = np.mean(conditioned == n)
        assert observed == pytest.approx(exact[n], abs=0.01), f"P({n}|click) = {observed:.4f} vs {exact[n]:.4f}"

def test_single_pulse_record():
    """T2.7: emit_pulse returns matching signal and idler counts"""
    record = emit_pulse(SourceSpec(0.5, IDEAL), _rng(6))
    assert record.idler == record.pairs and 0 <= record.signal <= record.pairs

def test_delivery_loss_commutes_with_heralding():
    """T2.8: thinning the signal before or after heralding gives the same P(k | click)"""
    herald = DetectorSpec(0.5, 0.0, "C")
    exact = heralded_reduce(two_mode_squeezed_state(0.5, n_max=30), herald).probabilities
    n = np.arange(exact.size)
    lossy = emit_pulses(SourceSpec(0.5, herald, signal_delivery=0.31), _rng(7), 1_000_000)
    before = lossy.signal[lossy.herald_click]
    lossless = emit_pulses(SourceSpec(0.5, herald), _rng(8), 1_000_000)
    after = _rng(9).binomial(lossless.signal[lossless.herald_click], 0.31)
    for k in range(3):
        analytic = float(np.sum(exact * binom.pmf(k, n, 0.31)))
        for label, sample in (("before", before), ("after", after)):
            observed = np.mean(sample == k)
            assert observed == pytest.approx(analytic, abs=0.01), \
                f"{label}: P({k}|click) = {observed:.4f} vs {analytic:.4f}"


# ============================================================================
# TEST SCENARIO 3: Herald-Rate Calibration
# ============================================================================

def test_calibrate_epsilon_inverts_rate():
    """T3.1: calibrate_epsilon(herald_rate(ε)) = ε"""
    spec = SourceSpec(0.0, LOSSY_HERALD, schmidt_modes=100)
    target = herald_rate_hz(spec.with_epsilon(0.05))
    assert calibrate_epsilon(spec, target) == pytest.approx(0.05, rel=1e-8)

def test_calibrate_epsilon_unreachable():
    """T3.2: rate above the repetition rate or below the dark floor → CalibrationError"""
    spec = SourceSpec(0.0, DetectorSpec(0.12, 1e-3, "C"))
    with pytest.raises(CalibrationError):
        calibrate_epsilon(spec, 80e6)
    with pytest.raises(CalibrationError):
        calibrate_epsilon(spec, 1e3)


# ============================================================================
# RUN ALL TESTS
# ============================================================================

if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
