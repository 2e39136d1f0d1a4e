"""
Coincidence Counting Engine
===========================
Gated Monte Carlo of the five-detector measurement:

    source ──herald idler──> C
       └─ signal ─(delivery)─> BS translator ─┬─ s1 channel ─ 50/50 ─> A1, B1
                                              └─ s2 channel ─ 50/50 ─> A2, B2

Every delivered signal photon is translated to s2 independently with
probability |ν(L)|². Pump noise enters each channel as a Poisson
background. Tallies merge with `+`; all estimators run on merged tallies.

g²(0) = N_ABC·N_C / (N_AC·N_BC),   accidentals = N_C·N_s / N_p
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Dict, List, Mapping, Optional, Sequence, Union

import numpy as np

from .bs_translator import BsCoupler, conversion_efficiency
from .errors import DomainError, InsufficientStatisticsError
from .logger import logger
from .mi_source import SourceSpec, emit_pulses, herald_silence_factor, pair_number_pgf
from .quantum_core import DetectorSpec

CHANNELS = ("s1", "s2")
DEFAULT_BLOCK_SIZE = 1_000_000

# Persistent worker pool for pulse blocks
_executor = ThreadPoolExecutor(max_workers=min(8, os.cpu_count() or 1), thread_name_prefix="pulse-block")

Seed = Union[int, np.random.SeedSequence]


# =============================================================================
# DATA CLASSES
# =============================================================================
@dataclass(frozen=True)
class DetectorBank:
    """An A/B detector pair behind a splitter on each signal channel."""
    s1_a: DetectorSpec
    s1_b: DetectorSpec
    s2_a: DetectorSpec
    s2_b: DetectorSpec
    split_ratio: float = 0.5           # fraction sent to A

    def __post_init__(self):
        if not 0.0 <= self.split_ratio <= 1.0:
            raise DomainError(f"split_ratio must be in [0, 1], got {self.split_ratio}")

    @classmethod
    def uniform(cls, efficiency: float, dark_prob: float = 0.0, split_ratio: float = 0.5) -> "DetectorBank":
        return cls(*(DetectorSpec(efficiency, dark_prob, label) for label in ("A1", "B1", "A2", "B2")),
                   split_ratio=split_ratio)

    def pair(self, channel: str):
        return (self.s1_a, self.s1_b) if channel == "s1" else (self.s2_a, self.s2_b)

    def detector_ratio(self) -> float:
        """Mean s2 detector efficiency over mean s1 detector efficiency."""
        return (self.s2_a.efficiency + self.s2_b.efficiency) / (self.s1_a.efficiency + self.s1_b.efficiency)


@dataclass(frozen=True)
class NoiseSpec:
    """Mean background photons per gate in each signal channel."""
    s1_mean: float = 0.0
    s2_mean: float = 0.0

    def __post_init__(self):
        if self.s1_mean < 0 or self.s2_mean < 0:
            raise DomainError("noise means must be >= 0")

    def mean(self, channel: str) -> float:
        return self.s1_mean if channel == "s1" else self.s2_mean


@dataclass(frozen=True)
class PulseTrainResult:
    channel: str
    n_pulses: int = 0
    n_a: int = 0
    n_b: int = 0
    n_c: int = 0
    n_ac: int = 0
    n_bc: int = 0
    n_abc: int = 0
    n_s: int = 0                       # pulses with A or B
    n_sc: int = 0                      # ... and a herald click

    def __add__(self, other: "PulseTrainResult") -> "PulseTrainResult":
        if other.channel != self.channel:
            raise DomainError(f"cannot merge channel {self.channel} with {other.channel}")
        counts = {f.name: getattr(self, f.name) + getattr(other, f.name)
                  for f in fields(self) if f.name != "channel"}
        return PulseTrainResult(self.channel, **counts)

    @property
    def counts(self) -> int:
        return self.n_a + self.n_b

    def as_row(self) -> Dict[str, int]:
        return {"N_p": self.n_pulses, "N_A": self.n_a, "N_B": self.n_b, "N_C": self.n_c,
                "N_AC": self.n_ac, "N_BC": self.n_bc, "N_ABC": self.n_abc}

    def check_ordering(self) -> bool:
        return (0 <= self.n_abc <= min(self.n_ac, self.n_bc)
                and max(self.n_ac, self.n_bc) <= self.n_c <= self.n_pulses
                and self.n_sc <= min(self.n_s, self.n_c))


@dataclass(frozen=True)
class G2Estimate:
    value: float
    std_error: float = math.nan
    std_dev: float = math.nan
    n_runs: int = 1


@dataclass(frozen=True)
class EfficiencyEstimate:
    value: float
    std_error: float


TrainResult = Dict[str, PulseTrainResult]


# =============================================================================
# ANALYTIC EXPECTATIONS
# =============================================================================
def translation_probability(coupler: Optional[BsCoupler]) -> float:
    return 0.0 if coupler is None else conversion_efficiency(coupler)


def expected_tallies(source: SourceSpec, coupler: Optional[BsCoupler], detectors: DetectorBank,
                     noise: NoiseSpec, channel: str) -> Dict[str, float]:
    """
    Exact per-pulse probabilities of every tally (inclusion–exclusion over
    silence events, averaged over the pair number with its generating
    function).
    """
    tau = translation_probability(coupler)
    share = source.signal_delivery * (tau if channel == "s2" else 1.0 - tau)
    det_a, det_b = detectors.pair(channel)
    r = detectors.split_ratio
    lam = noise.mean(channel)
    eta_c = source.herald.efficiency

    a = share * r * det_a.efficiency
    b = share * (1 - r) * det_b.efficiency
    dark_a = (1 - det_a.dark_prob) * math.exp(-lam * r * det_a.efficiency)
    dark_b = (1 - det_b.dark_prob) * math.exp(-lam * (1 - r) * det_b.efficiency)
    dark_c = herald_silence_factor(source)

    def pgf(x: float) -> float:
        return float(pair_number_pgf(source, x))

    sil_a = dark_a * pgf(1 - a)
    sil_b = dark_b * pgf(1 - b)
    sil_c = dark_c * pgf(1 - eta_c)
    sil_ab = dark_a * dark_b * pgf(1 - a - b)
    sil_ac = dark_a * dark_c * pgf((1 - a) * (1 - eta_c))
    sil_bc = dark_b * dark_c * pgf((1 - b) * (1 - eta_c))
    sil_abc = dark_a * dark_b * dark_c * pgf((1 - a - b) * (1 - eta_c))

    return {
        "p_a": 1 - sil_a,
        "p_b": 1 - sil_b,
        "p_c": 1 - sil_c,
        "p_ac": 1 - sil_a - sil_c + sil_ac,
        "p_bc": 1 - sil_b - sil_c + sil_bc,
        "p_abc": 1 - sil_a - sil_b - sil_c + sil_ab + sil_ac + sil_bc - sil_abc,
        "p_s": 1 - sil_ab,
        "p_sc": 1 - sil_ab - sil_c + sil_abc,
    }


def expected_g2(tallies: Mapping[str, float]) -> float:
    denominator = tallies["p_ac"] * tallies["p_bc"]
    if denominator <= 0:
        raise InsufficientStatisticsError("no AC or BC coincidences expected; g² undefined")
    return tallies["p_abc"] * tallies["p_c"] / denominator


def expected_car(tallies: Mapping[str, float]) -> float:
    accidentals = tallies["p_s"] * tallies["p_c"]
    if accidentals <= 0:
        raise InsufficientStatisticsError("no accidentals expected; CAR undefined")
    return tallies["p_sc"] / accidentals


# =============================================================================
# MONTE CARLO
# =============================================================================
def _clicks(rng: np.random.Generator, detector: DetectorSpec, photons: np.ndarray) -> np.ndarray:
    silence = (1 - detector.dark_prob) * (1 - detector.efficiency) ** photons
    return rng.random(photons.size) >= silence


def _simulate_block(source: SourceSpec, tau: float, detectors: DetectorBank, noise: NoiseSpec,
                    n: int, rng: np.random.Generator, decorrelate: bool) -> TrainResult:
    batch = emit_pulses(source, rng, n)
    herald = batch.herald_click
    if decorrelate:
        herald = rng.permutation(herald)

    translated = rng.binomial(batch.signal, tau)
    photons = {"s1": batch.signal - translated, "s2": translated}
    n_c = int(herald.sum())

    out: TrainResult = {}
    for channel in CHANNELS:
        lam = noise.mean(channel)
        in_channel = photons[channel] + (rng.poisson(lam, n) if lam > 0 else 0)
        to_a = rng.binomial(in_channel, detectors.split_ratio)
        det_a, det_b = detectors.pair(channel)
        click_a = _clicks(rng, det_a, to_a)
        click_b = _clicks(rng, det_b, in_channel - to_a)
        either = click_a | click_b
        out[channel] = PulseTrainResult(
            channel=channel,
            n_pulses=n,
            n_a=int(click_a.sum()),
            n_b=int(click_b.sum()),
            n_c=n_c,
            n_ac=int((click_a & herald).sum()),
            n_bc=int((click_b & herald).sum()),
            n_abc=int((click_a & click_b & herald).sum()),
            n_s=int(either.sum()),
            n_sc=int((either & herald).sum()),
        )
    return out


def merge(results: Sequence[TrainResult]) -> TrainResult:
    merged: TrainResult = {}
    for result in results:
        for channel, tally in result.items():
            merged[channel] = merged[channel] + tally if channel in merged else tally
    return merged


def _seed_sequence(seed: Seed) -> np.random.SeedSequence:
    return seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)


def run_pulse_train(source: SourceSpec, coupler: Optional[BsCoupler], detectors: DetectorBank,
                    noise: NoiseSpec, n_pulses: int, seed: Seed, decorrelate: bool = False,
                    block_size: int = DEFAULT_BLOCK_SIZE, parallel: bool = True) -> TrainResult:
    """
    Simulate n_pulses gates and return one tally per signal channel.

    Pulses are cut into fixed-size blocks, each with its own Philox stream
    spawned from `seed`, so the result depends only on (seed, block_size).
    coupler=None means pumps off (no translation).
    """
    if n_pulses < 1:
        raise DomainError(f"n_pulses must be >= 1, got {n_pulses}")
    tau = translation_probability(coupler)
    sizes = [block_size] * (n_pulses // block_size)
    if n_pulses % block_size:
        sizes.append(n_pulses % block_size)
    streams = _seed_sequence(seed).spawn(len(sizes))

    def work(i: int) -> TrainResult:
        rng = np.random.Generator(np.random.Philox(streams[i]))
        return _simulate_block(source, tau, detectors, noise, sizes[i], rng, decorrelate)

    if parallel and len(sizes) > 1:
        blocks = list(_executor.map(work, range(len(sizes))))
    else:
        blocks = [work(i) for i in range(len(sizes))]
    result = merge(blocks)
    logger.debug(f"Simulated {n_pulses:,} pulses in {len(sizes)} blocks (τ={tau:.4f})")
    return result


@dataclass(frozen=True)
class ExperimentResult:
    runs: List[TrainResult]
    merged: TrainResult = field(default_factory=dict)

    def g2(self, channel: str) -> G2Estimate:
        return g2_from_counts([run[channel] for run in self.runs])


def run_experiment(source: SourceSpec, coupler: Optional[BsCoupler], detectors: DetectorBank,
                   noise: NoiseSpec, n_runs: int, pulses_per_run: int, seed: Seed,
                   decorrelate: bool = False) -> ExperimentResult:
    """Repeated independent runs (the 30-run measurement protocol)."""
    if n_runs < 1:
        raise DomainError(f"n_runs must be >= 1, got {n_runs}")
    runs = [run_pulse_train(source, coupler, detectors, noise, pulses_per_run, child, decorrelate)
            for child in _seed_sequence(seed).spawn(n_runs)]
    return ExperimentResult(runs, merge(runs))


# =============================================================================
# ESTIMATORS
# =============================================================================
def _g2_value(result: PulseTrainResult) -> float:
    if result.n_ac == 0 or result.n_bc == 0:
        raise InsufficientStatisticsError(
            f"channel {result.channel}: N_AC={result.n_ac}, N_BC={result.n_bc}; g² undefined"
        )
    return result.n_abc * result.n_c / (result.n_ac * result.n_bc)


def g2_from_counts(results: Union[PulseTrainResult, Sequence[PulseTrainResult]]) -> G2Estimate:
    """
    Heralded g²(0) from merged tallies; with several runs, std_dev and
    std_error describe the per-run scatter (runs lacking doubles skipped).
    """
    if isinstance(results, PulseTrainResult):
        return G2Estimate(_g2_value(results))
    results = list(results)
    merged = results[0]
    for r in results[1:]:
        merged = merged + r
    value = _g2_value(merged)
    per_run = []
    for r in results:
        try:
            per_run.append(_g2_value(r))
        except InsufficientStatisticsError:
            logger.debug(f"run skipped in g² scatter: {r.as_row()}")
    if len(per_run) < 2:
        return G2Estimate(value, n_runs=len(results))
    std_dev = float(np.std(per_run, ddof=1))
    return G2Estimate(value, std_dev / math.sqrt(len(per_run)), std_dev, len(results))


def accidental_rate(n_i: float, n_s: float, n_p: float) -> float:
    if n_p <= 0:
        raise DomainError(f"N_p must be > 0, got {n_p}")
    return n_i * n_s / n_p


def car(result: PulseTrainResult) -> float:
    """Herald–channel coincidences over the accidental expectation."""
    accidentals = accidental_rate(result.n_c, result.n_s, result.n_pulses)
    if accidentals <= 0:
        raise InsufficientStatisticsError(f"channel {result.channel}: no accidentals expected")
    return result.n_sc / accidentals


def _rate(result: Union[PulseTrainResult, float]):
    """(rate, variance) per pulse for a tally (Poisson) or a known rate."""
    if isinstance(result, PulseTrainResult):
        return result.counts / result.n_pulses, result.counts / result.n_pulses ** 2
    return float(result), 0.0


def depletion_efficiency(on: PulseTrainResult, off: PulseTrainResult,
                         noise_baseline: Union[PulseTrainResult, float] = 0.0) -> EfficiencyEstimate:
    """1 − (rate_on − noise)/rate_off on the untranslated channel."""
    r_on, v_on = _rate(on)
    r_off, v_off = _rate(off)
    r_noise, v_noise = _rate(noise_baseline)
    if r_off <= 0:
        raise InsufficientStatisticsError("pumps-off count rate is zero")
    excess = r_on - r_noise
    value = 1.0 - excess / r_off
    var = (v_on + v_noise) / r_off ** 2 + (excess / r_off ** 2) ** 2 * v_off
    return EfficiencyEstimate(value, math.sqrt(var))


def creation_efficiency(on: PulseTrainResult, off: PulseTrainResult, detector_ratio: float,
                        noise_baseline: Union[PulseTrainResult, float] = 0.0) -> EfficiencyEstimate:
    """
    Translated-channel excess rate over the pumps-off untranslated rate,
    divided by the (s2 ÷ s1) detector efficiency ratio.
    """
    if detector_ratio <= 0:
        raise DomainError(f"detector_ratio must be > 0, got {detector_ratio}")
    r_on, v_on = _rate(on)
    r_off, v_off = _rate(off)
    r_noise, v_noise = _rate(noise_baseline)
    if r_off <= 0:
        raise InsufficientStatisticsError("pumps-off count rate is zero")
    excess = r_on - r_noise
    value = excess / r_off / detector_ratio
    var = ((v_on + v_noise) / r_off ** 2 + (excess / r_off ** 2) ** 2 * v_off) / detector_ratio ** 2
    return EfficiencyEstimate(value, math.sqrt(var))


@dataclass(frozen=True)
class EfficiencyReport:
    depletion: EfficiencyEstimate
    creation: EfficiencyEstimate
    pumps_on: TrainResult
    pumps_off: TrainResult
    source_blocked: TrainResult


def run_efficiency_protocol(source: SourceSpec, coupler: BsCoupler, detectors: DetectorBank,
                            noise: NoiseSpec, n_pulses: int, seed: Seed,
                            detector_ratio: Optional[float] = None) -> EfficiencyReport:
    """
    Pumps on, pumps off (no coupling, no pump noise) and source blocked
    (pumps on, ε = 0) runs on independent child streams of `seed`.
    """
    on_seed, off_seed, blocked_seed = _seed_sequence(seed).spawn(3)
    on = run_pulse_train(source, coupler, detectors, noise, n_pulses, on_seed)
    off = run_pulse_train(source, None, detectors, NoiseSpec(), n_pulses, off_seed)
    blocked = run_pulse_train(source.with_epsilon(0.0), coupler, detectors, noise, n_pulses, blocked_seed)

    ratio = detectors.detector_ratio() if detector_ratio is None else detector_ratio
    depletion = depletion_efficiency(on["s1"], off["s1"], blocked["s1"])
    creation = creation_efficiency(on["s2"], off["s1"], ratio, blocked["s2"])
    logger.info(f"✅ Depletion {depletion.value:.4f} ± {depletion.std_error:.4f}, "
                f"creation {creation.value:.4f} ± {creation.std_error:.4f}")
    return EfficiencyReport(depletion, creation, on, off, blocked)
