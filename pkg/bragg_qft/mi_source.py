"""
Heralded MI Photon-Pair Source
==============================
Per pulse the source emits n pairs with

    P(n) = C(n+K−1, n) (1−ε²)^K ε^(2n)

for K independent Schmidt modes (K = 1 is the single-mode geometric law
|ψ⟩ ∝ Σ εⁿ|n, n⟩). The idler arm is watched by a gated herald detector; the
signal arm loses photons by binomial thinning on the way to the translator.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.optimize import brentq
from scipy.stats import nbinom

from .dispersion import FiberSpec
from .errors import CalibrationError, DomainError
from .logger import logger
from .quantum_core import DetectorSpec

LOW_GAIN_LIMIT = 0.5
EPSILON_CEILING = 0.999


@dataclass(frozen=True)
class SourceSpec:
    epsilon: float
    herald: DetectorSpec
    signal_delivery: float = 1.0
    rep_rate: float = 76e6             # Hz
    schmidt_modes: float = 1.0
    herald_noise_mean: float = 0.0     # background photons per gate in the idler arm

    def __post_init__(self):
        if not 0.0 <= self.epsilon < 1.0:
            raise DomainError(f"epsilon must satisfy 0 <= ε < 1, got {self.epsilon}")
        if not 0.0 <= self.signal_delivery <= 1.0:
            raise DomainError(f"signal_delivery must be in [0, 1], got {self.signal_delivery}")
        if self.rep_rate <= 0:
            raise DomainError(f"rep_rate must be > 0, got {self.rep_rate}")
        if self.schmidt_modes <= 0:
            raise DomainError(f"schmidt_modes must be > 0, got {self.schmidt_modes}")
        if self.herald_noise_mean < 0:
            raise DomainError(f"herald_noise_mean must be >= 0, got {self.herald_noise_mean}")

    @property
    def pair_ratio(self) -> float:
        """q = ε², the ratio P(n+1)/P(n) of a single mode."""
        return self.epsilon ** 2

    def with_epsilon(self, epsilon: float) -> "SourceSpec":
        return replace(self, epsilon=epsilon)


@dataclass(frozen=True)
class PairAmplitude:
    value: float
    gain: float                        # γPL
    regime_ok: bool
    warning: Optional[str] = None


@dataclass(frozen=True)
class PulseRecord:
    pairs: int
    signal: int                        # signal photons delivered to the translator
    idler: int
    herald_click: bool


@dataclass(frozen=True, eq=False)
class PulseBatch:
    pairs: np.ndarray
    signal: np.ndarray
    herald_click: np.ndarray

    def __len__(self) -> int:
        return int(self.pairs.size)


# =============================================================================
# CLOSED FORMS
# =============================================================================
def epsilon_from_pump(fiber: FiberSpec, pump_power: float) -> PairAmplitude:
    """ε = γPL in the phase-matched low-gain limit."""
    if pump_power < 0:
        raise DomainError(f"pump power must be >= 0, got {pump_power}")
    gain = fiber.gamma_si * pump_power * fiber.length
    if gain < LOW_GAIN_LIMIT:
        return PairAmplitude(gain, gain, True)
    warning = f"γPL = {gain:.3g} >= {LOW_GAIN_LIMIT}: low-gain expansion invalid"
    logger.warning(f"⚠️ {warning}")
    return PairAmplitude(gain, gain, False, warning)


def pair_number_pgf(spec: SourceSpec, x):
    """E[xⁿ] over the pair number: ((1−q)/(1−qx))^K."""
    q = spec.pair_ratio
    return ((1.0 - q) / (1.0 - q * np.asarray(x, dtype=float))) ** spec.schmidt_modes


def pair_number_pmf(spec: SourceSpec, n_max: int) -> np.ndarray:
    return nbinom.pmf(np.arange(n_max + 1), spec.schmidt_modes, 1.0 - spec.pair_ratio)


def mean_pairs(spec: SourceSpec) -> float:
    q = spec.pair_ratio
    return spec.schmidt_modes * q / (1.0 - q)


def herald_silence_factor(spec: SourceSpec) -> float:
    """Pair-independent part of P(no herald click): dark and background."""
    return (1.0 - spec.herald.dark_prob) * np.exp(-spec.herald.efficiency * spec.herald_noise_mean)


def herald_click_probability(spec: SourceSpec) -> float:
    return float(1.0 - herald_silence_factor(spec) * pair_number_pgf(spec, 1.0 - spec.herald.efficiency))


def herald_rate_hz(spec: SourceSpec) -> float:
    return spec.rep_rate * herald_click_probability(spec)


def calibrate_epsilon(spec: SourceSpec, target_rate_hz: float) -> float:
    """ε whose expected herald singles rate equals target_rate_hz."""
    floor = herald_rate_hz(spec.with_epsilon(0.0))
    ceiling = herald_rate_hz(spec.with_epsilon(EPSILON_CEILING))
    if not floor <= target_rate_hz <= ceiling:
        raise CalibrationError(
            f"herald rate {target_rate_hz:.4g} Hz outside reachable range "
            f"[{floor:.4g}, {ceiling:.4g}] Hz"
        )

    def miss(eps: float) -> float:
        return herald_rate_hz(spec.with_epsilon(eps)) - target_rate_hz

    if miss(0.0) == 0.0:
        return 0.0
    return float(brentq(miss, 0.0, EPSILON_CEILING, xtol=1e-14))


# =============================================================================
# SAMPLING
# =============================================================================
def emit_pulses(spec: SourceSpec, rng: np.random.Generator, n: int) -> PulseBatch:
    """Sample n pulses: pair numbers, herald clicks, delivered signal photons."""
    q = spec.pair_ratio
    if q > 0:
        pairs = rng.negative_binomial(spec.schmidt_modes, 1.0 - q, size=n)
    else:
        pairs = np.zeros(n, dtype=np.int64)
    silence = herald_silence_factor(spec) * (1.0 - spec.herald.efficiency) ** pairs
    herald_click = rng.random(n) >= silence
    signal = rng.binomial(pairs, spec.signal_delivery)
    return PulseBatch(pairs, signal, herald_click)


def emit_pulse(spec: SourceSpec, rng: np.random.Generator) -> PulseRecord:
    batch = emit_pulses(spec, rng, 1)
    n = int(batch.pairs[0])
    return PulseRecord(n, int(batch.signal[0]), n, bool(batch.herald_click[0]))
