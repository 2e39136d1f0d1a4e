"""
Scenario Builder
================
Turns a ScenarioConfig into the objects the engines need (fibers, pumps,
BS quartet and coupler, source, detectors, noise), running the anchor
calibrations when the config asks for them.

Named scenarios shipped in presets/:
    paper_calibrated     - herald 12 %, delivery 31 %, |ν|² = 0.286, noise
                           fractions 11 %/24 %, ε from the 683-nm CAR anchor
    ideal_source         - weak single-mode source, ideal herald, no noise
    independent_streams  - Poisson-only channels and a dark-count herald
"""

from dataclasses import dataclass
from typing import Dict, Tuple

from scipy.optimize import brentq

from .bs_translator import (
    BsCoupler,
    PumpField,
    calibrate_overlap,
    make_coupler,
    peak_power_w,
)
from .config import FiberPreset, ScenarioConfig, fiber_preset_to_dict, load_fiber_preset
from .counting import DetectorBank, NoiseSpec, expected_car, expected_tallies
from .dispersion import FrequencyQuartet, bs_quartet, solve_bs_channel
from .errors import CalibrationError
from .logger import logger
from .mi_source import SourceSpec, epsilon_from_pump
from .quantum_core import DetectorSpec

NAMED_SCENARIOS = {
    "paper_calibrated": "Five-detector experiment calibrated to the measured ratios",
    "ideal_source": "Weak source, ideal herald, no noise (g² → 0 limit)",
    "independent_streams": "Uncorrelated Poisson streams (g² = CAR = 1 control)",
}

EPSILON_BRACKET = (1e-4, 0.3)
NOISE_CEILING = 100.0


@dataclass(frozen=True)
class Scenario:
    name: str
    fiber1: FiberPreset
    fiber2: FiberPreset
    pump1: PumpField
    pump2: PumpField
    quartet: FrequencyQuartet
    coupler: BsCoupler
    source: SourceSpec
    detectors: DetectorBank
    noise: NoiseSpec
    decorrelate: bool = False

    def provenance(self) -> Dict[str, object]:
        """Resolved values that do not appear verbatim in the config."""
        return {
            "fiber1": fiber_preset_to_dict(self.fiber1),
            "fiber2": fiber_preset_to_dict(self.fiber2),
            "resolved": {
                "epsilon": self.source.epsilon,
                "noise_s1_mean": self.noise.s1_mean,
                "noise_s2_mean": self.noise.s2_mean,
                "kappa_length": abs(self.coupler.kappa) * self.coupler.length,
                "delta_length": self.coupler.delta * self.coupler.length,
                "signal_s1_nm": self.quartet.wavelengths_nm()["s1"],
                "signal_s2_nm": self.quartet.wavelengths_nm()["s2"],
            },
        }


# =============================================================================
# CALIBRATION
# =============================================================================
def _channel_rate(source: SourceSpec, coupler: BsCoupler, detectors: DetectorBank,
                  noise: NoiseSpec, channel: str) -> float:
    t = expected_tallies(source, coupler, detectors, noise, channel)
    return t["p_a"] + t["p_b"]


def noise_fraction(source: SourceSpec, coupler: BsCoupler, detectors: DetectorBank,
                   noise: NoiseSpec, channel: str) -> float:
    """Source-blocked count rate over full count rate (pumps on)."""
    blocked = _channel_rate(source.with_epsilon(0.0), coupler, detectors, noise, channel)
    full = _channel_rate(source, coupler, detectors, noise, channel)
    return blocked / full if full > 0 else 1.0


def solve_noise_mean(source: SourceSpec, coupler: BsCoupler, detectors: DetectorBank,
                     channel: str, target_fraction: float) -> float:
    """Background mean per gate giving the target noise fraction (0 if darks already exceed it)."""

    def miss(mean: float) -> float:
        noise = NoiseSpec(**{f"{channel}_mean": mean})
        return noise_fraction(source, coupler, detectors, noise, channel) - target_fraction

    if miss(0.0) >= 0:
        return 0.0
    hi = 1e-3
    while miss(hi) < 0:
        hi *= 10
        if hi > NOISE_CEILING:
            raise CalibrationError(f"noise fraction {target_fraction} unreachable in channel {channel}")
    return float(brentq(miss, 0.0, hi, xtol=1e-15, rtol=1e-12))


def calibrate_to_anchors(source: SourceSpec, coupler: BsCoupler, detectors: DetectorBank,
                             noise_fraction_s1: float, noise_fraction_s2: float,
                             car_s1: float) -> Tuple[SourceSpec, NoiseSpec]:
    """
    ε and per-channel background means reproducing the noise fractions and
    the s1-channel CAR, solved on analytic expectations (inner: noise means
    at fixed ε; outer: ε from the CAR).
    """

    def noise_at(eps: float) -> NoiseSpec:
        trial = source.with_epsilon(eps)
        return NoiseSpec(
            solve_noise_mean(trial, coupler, detectors, "s1", noise_fraction_s1),
            solve_noise_mean(trial, coupler, detectors, "s2", noise_fraction_s2),
        )

    def miss(eps: float) -> float:
        trial = source.with_epsilon(eps)
        return expected_car(expected_tallies(trial, coupler, detectors, noise_at(eps), "s1")) - car_s1

    lo, hi = EPSILON_BRACKET
    if miss(lo) * miss(hi) > 0:
        raise CalibrationError(f"CAR {car_s1} not reachable for ε in {EPSILON_BRACKET}")
    eps = float(brentq(miss, lo, hi, xtol=1e-12, rtol=1e-10))
    noise = noise_at(eps)
    logger.info(f"✅ Calibrated ε={eps:.5f}, noise means s1={noise.s1_mean:.4g} s2={noise.s2_mean:.4g}")
    return source.with_epsilon(eps), noise


# =============================================================================
# BUILDER
# =============================================================================
def build_pumps(config: ScenarioConfig, fiber2: FiberPreset):
    p1 = PumpField(config.pump1_wavelength_nm,
                   peak_power_w(config.pump1_power_mw * 1e-3, config.rep_rate_hz, config.pump_pulse_ps),
                   fiber2.bs_axes["p1"])
    p2 = PumpField(config.pump2_wavelength_nm,
                   peak_power_w(config.pump2_power_mw * 1e-3, config.rep_rate_hz, config.pump_pulse_ps),
                   fiber2.bs_axes["p2"])
    return p1, p2


def build_quartet(config: ScenarioConfig, fiber2: FiberPreset) -> FrequencyQuartet:
    if config.signal_wavelength_nm is None:
        return solve_bs_channel(fiber2.fiber, config.pump1_wavelength_nm, config.pump2_wavelength_nm,
                                fiber2.bs_axes).quartet
    return bs_quartet(config.pump1_wavelength_nm, config.signal_wavelength_nm, config.pump2_wavelength_nm)


def build_coupler(config: ScenarioConfig, fiber2: FiberPreset, p1: PumpField, p2: PumpField,
                  quartet: FrequencyQuartet) -> BsCoupler:
    if config.bs_kappa_length is not None:
        return BsCoupler.from_kappa_length(config.bs_kappa_length, config.bs_delta_length, fiber2.fiber.length)
    overlap = config.pump_overlap
    if overlap is None:
        if config.anchor_efficiency is None:
            overlap = 1.0
        else:
            overlap = calibrate_overlap(fiber2.fiber, p1, p2, quartet, config.anchor_efficiency,
                                        axes=fiber2.bs_axes)
            logger.info(f"✅ Overlap factor {overlap:.5f} gives |ν|² = {config.anchor_efficiency}")
    return make_coupler(fiber2.fiber, p1, p2, quartet, overlap, axes=fiber2.bs_axes)


def build_scenario(config: ScenarioConfig) -> Scenario:
    fiber1 = load_fiber_preset(config.fiber1_preset, "scenario.fiber1_preset")
    fiber2 = load_fiber_preset(config.fiber2_preset, "scenario.fiber2_preset")
    p1, p2 = build_pumps(config, fiber2)
    quartet = build_quartet(config, fiber2)
    coupler = build_coupler(config, fiber2, p1, p2, quartet)

    epsilon = config.epsilon
    if epsilon is None and config.mi_pump_peak_power_w is not None:
        epsilon = epsilon_from_pump(fiber1.fiber, config.mi_pump_peak_power_w).value
    herald = DetectorSpec(config.herald_efficiency, config.herald_dark_prob, "C")
    source = SourceSpec(
        epsilon=epsilon or 0.0,
        herald=herald,
        signal_delivery=config.signal_delivery,
        rep_rate=config.rep_rate_hz,
        schmidt_modes=config.schmidt_modes,
        herald_noise_mean=config.herald_noise_mean,
    )
    detectors = DetectorBank(
        DetectorSpec(config.detector_s1_efficiency, config.detector_dark_prob, "A1"),
        DetectorSpec(config.detector_s1_efficiency, config.detector_dark_prob, "B1"),
        DetectorSpec(config.detector_s2_efficiency, config.detector_dark_prob, "A2"),
        DetectorSpec(config.detector_s2_efficiency, config.detector_dark_prob, "B2"),
        split_ratio=config.split_ratio,
    )
    noise = NoiseSpec(config.noise_s1_mean or 0.0, config.noise_s2_mean or 0.0)

    anchors = (config.anchor_noise_fraction_s1, config.anchor_noise_fraction_s2, config.anchor_car_s1)
    if epsilon is None and all(a is not None for a in anchors):
        source, noise = calibrate_to_anchors(source, coupler, detectors, *anchors)
    elif epsilon is None and any(a is not None for a in anchors):
        raise CalibrationError("noise-fraction and CAR anchors must be given together")
    elif config.noise_s1_mean is None and config.noise_s2_mean is None and None not in anchors[:2]:
        # fixed ε: the noise fractions alone pin the background means
        noise = NoiseSpec(solve_noise_mean(source, coupler, detectors, "s1", anchors[0]),
                          solve_noise_mean(source, coupler, detectors, "s2", anchors[1]))

    return Scenario(config.scenario_name, fiber1, fiber2, p1, p2, quartet, coupler,
                    source, detectors, noise, config.decorrelate_herald)
