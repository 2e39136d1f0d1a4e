"""
Truncated Fock Space
====================
Two-mode photon-number states and the passive linear maps acting on them.

Mode-operator convention (Heisenberg picture, z along the fiber):
    a1(z) =  μ a1(0) + ν a2(0)
    a2(z) = −ν* a1(0) + μ* a2(0)
so a state evolves with creation operators a_j† → Σ_k M_kj a_k†, and a
single photon |1,0⟩ becomes μ|1,0⟩ − ν*|0,1⟩. Global phases never reach the
counting outputs.

The generating two-mode Hamiltonian, in units of 1/m, is
    H = δ(n1 − n2) + κ a1†a2 + κ* a2†a1,      |ψ(z)⟩ = exp(iHz)|ψ(0)⟩
`hamiltonian_block` builds it restricted to a fixed total photon number so
that tests can compare the closed form against matrix exponentiation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.linalg import expm
from scipy.special import comb, gammaln

from .errors import ContractViolation, DomainError, HeraldingError

DEFAULT_N_MAX = 10
UNITARY_TOLERANCE = 1e-10


# =============================================================================
# MODE MAPS
# =============================================================================
@dataclass(frozen=True)
class TransferMatrix:
    mu: complex
    nu: complex

    @classmethod
    def identity(cls) -> "TransferMatrix":
        return cls(1.0 + 0j, 0j)

    @classmethod
    def beamsplitter(cls, reflectivity: float = 0.5) -> "TransferMatrix":
        """Lossless splitter sending a fraction `reflectivity` into the other mode."""
        if not 0.0 <= reflectivity <= 1.0:
            raise DomainError(f"reflectivity must be in [0, 1], got {reflectivity}")
        return cls(complex(np.sqrt(1.0 - reflectivity)), 1j * np.sqrt(reflectivity))

    @property
    def norm_error(self) -> float:
        return abs(abs(self.mu) ** 2 + abs(self.nu) ** 2 - 1.0)

    def is_unitary(self, tol: float = 1e-12) -> bool:
        return self.norm_error <= tol

    def inverse(self) -> "TransferMatrix":
        # M⁻¹ = M† = [[μ*, −ν], [ν*, μ]]
        return TransferMatrix(np.conj(self.mu), -self.nu)

    @property
    def efficiency(self) -> float:
        return float(abs(self.nu) ** 2)


@dataclass(frozen=True, eq=False)
class ModeOperatorMap:
    """2×2 matrix acting on (a1, a2)."""
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (2, 2):
            raise ContractViolation(f"mode map must be 2x2, got shape {m.shape}")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_transfer(cls, tm: TransferMatrix) -> "ModeOperatorMap":
        return cls(np.array([[tm.mu, tm.nu], [-np.conj(tm.nu), np.conj(tm.mu)]]))

    def is_unitary(self, tol: float = 1e-12) -> bool:
        return bool(np.allclose(self.matrix.conj().T @ self.matrix, np.eye(2), rtol=0.0, atol=tol))


# =============================================================================
# STATES
# =============================================================================
@dataclass(frozen=True, eq=False)
class TwoModeFockState:
    """
    Amplitudes c[n1, n2] for 0 ≤ n1, n2 ≤ truncation.

    tail_probability is the mass a constructor had to drop beyond the
    truncation (0 for states built exactly).
    """
    amplitudes: np.ndarray
    truncation: int
    tail_probability: float = 0.0

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        n = self.truncation + 1
        if amps.shape != (n, n):
            raise ContractViolation(f"amplitudes must be {n}x{n} for truncation {self.truncation}")
        object.__setattr__(self, "amplitudes", amps)

    def norm(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2))

    def normalized(self) -> "TwoModeFockState":
        norm = self.norm()
        if norm == 0:
            raise ContractViolation("cannot normalize the zero vector")
        return TwoModeFockState(self.amplitudes / np.sqrt(norm), self.truncation, self.tail_probability)

    @property
    def leakage(self) -> float:
        """Probability sitting in the outermost layer max(n1, n2) = N_max."""
        p = np.abs(self.amplitudes) ** 2
        return float(p[-1, :].sum() + p[:-1, -1].sum())

    def max_total_photons(self, atol: float = 0.0) -> int:
        n1, n2 = np.nonzero(np.abs(self.amplitudes) > atol)
        return int((n1 + n2).max()) if n1.size else 0


def fock_state(n1: int, n2: int, n_max: int = DEFAULT_N_MAX) -> TwoModeFockState:
    if min(n1, n2) < 0 or max(n1, n2) > n_max:
        raise DomainError(f"|{n1},{n2}⟩ does not fit truncation {n_max}")
    amps = np.zeros((n_max + 1, n_max + 1), dtype=complex)
    amps[n1, n2] = 1.0
    return TwoModeFockState(amps, n_max)


def two_mode_squeezed_state(epsilon: float, n_max: int = DEFAULT_N_MAX) -> TwoModeFockState:
    """Σ εⁿ|n, n⟩, normalized over n ≤ n_max."""
    if not 0.0 <= epsilon < 1.0:
        raise DomainError(f"epsilon must satisfy 0 <= ε < 1, got {epsilon}")
    n = np.arange(n_max + 1)
    weights = epsilon ** n.astype(float)
    amps = np.zeros((n_max + 1, n_max + 1), dtype=complex)
    amps[n, n] = weights / np.sqrt(np.sum(weights ** 2))
    return TwoModeFockState(amps, n_max, tail_probability=float(epsilon ** (2 * (n_max + 1))))


def photon_number_distribution(state: TwoModeFockState) -> np.ndarray:
    return np.abs(state.amplitudes) ** 2


def total_number_distribution(state: TwoModeFockState) -> np.ndarray:
    p = photon_number_distribution(state)
    n1, n2 = np.indices(p.shape)
    out = np.zeros(2 * state.truncation + 1)
    np.add.at(out, (n1 + n2).ravel(), p.ravel())
    return out


def marginal(state: TwoModeFockState, mode: int) -> np.ndarray:
    if mode not in (0, 1):
        raise DomainError(f"mode must be 0 or 1, got {mode}")
    return photon_number_distribution(state).sum(axis=1 - mode)


# =============================================================================
# BLOCK UNITARIES
# =============================================================================
def block_unitary(tm: TransferMatrix, n: int) -> np.ndarray:
    """
    Matrix of the passive map on span{|k, n−k⟩}, indexed [m_out, k_in].

    |k, n−k⟩ ∝ (M11 a1† + M21 a2†)^k (M12 a1† + M22 a2†)^(n−k) |0⟩; each
    factor is a polynomial in a1†, so a column is a convolution of two
    binomial expansions rescaled by the Fock normalization.
    """
    m11, m12 = tm.mu, tm.nu
    m21, m22 = -np.conj(tm.nu), np.conj(tm.mu)
    out = np.zeros((n + 1, n + 1), dtype=complex)
    m = np.arange(n + 1)
    for k in range(n + 1):
        i = np.arange(k + 1)
        j = np.arange(n - k + 1)
        first = comb(k, i) * m11 ** i * m21 ** (k - i)
        second = comb(n - k, j) * m12 ** j * m22 ** (n - k - j)
        poly = np.convolve(first, second)
        scale = np.exp(0.5 * (gammaln(m + 1) + gammaln(n - m + 1) - gammaln(k + 1) - gammaln(n - k + 1)))
        out[:, k] = poly * scale
    return out


def apply_mode_map(state: TwoModeFockState, tm: TransferMatrix) -> TwoModeFockState:
    """
    Apply the passive two-mode unitary induced by (μ, ν).

    The output truncation grows to the largest total photon number present,
    so the map never drops amplitude.
    """
    if not tm.is_unitary(UNITARY_TOLERANCE):
        raise ContractViolation(f"mode map is not unitary: ||μ|²+|ν|²−1| = {tm.norm_error:.3e}")

    n_out = max(state.truncation, state.max_total_photons())
    out = np.zeros((n_out + 1, n_out + 1), dtype=complex)
    src = state.amplitudes
    for n in range(state.max_total_photons() + 1):
        k = np.arange(n + 1)
        valid = (k <= state.truncation) & (n - k <= state.truncation)
        block = np.zeros(n + 1, dtype=complex)
        block[valid] = src[k[valid], n - k[valid]]
        if not block.any():
            continue
        out[k, n - k] = block_unitary(tm, n) @ block
    return TwoModeFockState(out, n_out, state.tail_probability)


def hamiltonian_block(n: int, delta: float, kappa: complex, form: str = "transfer") -> np.ndarray:
    """
    H restricted to total photon number n, basis |k, n−k⟩ (k = 0..n).

    form="transfer": δ(n1 − n2) detuning, the form whose Heisenberg equations
    give the closed-form μ, ν. form="common": δ(n1 + n2), a block-wise
    global phase on top of the δ = 0 map.
    """
    k = np.arange(n + 1)
    if form == "transfer":
        diag = delta * (2 * k - n)
    elif form == "common":
        diag = delta * n * np.ones(n + 1)
    else:
        raise DomainError(f"unknown Hamiltonian form '{form}'")
    h = np.diag(diag.astype(complex))
    hop = np.sqrt((k[:-1] + 1) * (n - k[:-1]))
    h[k[:-1] + 1, k[:-1]] = kappa * hop
    h[k[:-1], k[:-1] + 1] = np.conj(kappa) * hop
    return h


def evolve_block_expm(state: TwoModeFockState, delta: float, kappa: complex, z: float,
                      form: str = "transfer") -> TwoModeFockState:
    """exp(iHz) applied block by block (reference path for tests)."""
    n_out = max(state.truncation, state.max_total_photons())
    out = np.zeros((n_out + 1, n_out + 1), dtype=complex)
    for n in range(state.max_total_photons() + 1):
        k = np.arange(n + 1)
        valid = (k <= state.truncation) & (n - k <= state.truncation)
        block = np.zeros(n + 1, dtype=complex)
        block[valid] = state.amplitudes[k[valid], n - k[valid]]
        out[k, n - k] = expm(1j * z * hamiltonian_block(n, delta, kappa, form)) @ block
    return TwoModeFockState(out, n_out, state.tail_probability)


# =============================================================================
# HERALDING
# =============================================================================
@dataclass(frozen=True)
class DetectorSpec:
    """Non-number-resolving gated detector: one click opportunity per pulse."""
    efficiency: float
    dark_prob: float = 0.0
    label: str = ""

    def __post_init__(self):
        for name in ("efficiency", "dark_prob"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise DomainError(f"detector {self.label or '?'}: {name} must be in [0, 1], got {value}")

    def silence_probability(self, n_photons, noise_mean: float = 0.0):
        """P(no click | n photons, Poisson background of mean noise_mean)."""
        n = np.asarray(n_photons, dtype=float)
        return (1 - self.dark_prob) * (1 - self.efficiency) ** n * np.exp(-self.efficiency * noise_mean)

    def click_probability(self, n_photons, noise_mean: float = 0.0):
        return 1.0 - self.silence_probability(n_photons, noise_mean)


@dataclass(frozen=True, eq=False)
class HeraldedDistribution:
    probabilities: np.ndarray      # P(n | herald click), n = 0..N
    click_probability: float

    @property
    def mean(self) -> float:
        n = np.arange(self.probabilities.size)
        return float(n @ self.probabilities)

    @property
    def g2(self) -> float:
        """Intrinsic g²(0) of the conditional state."""
        n = np.arange(self.probabilities.size)
        mean = n @ self.probabilities
        return float((n * (n - 1)) @ self.probabilities / mean ** 2) if mean > 0 else 0.0


def heralded_reduce(state: TwoModeFockState, herald: DetectorSpec, herald_mode: int = 1) -> HeraldedDistribution:
    """
    Condition the other mode on a herald click in `herald_mode`.

    Works on the diagonal photon-number distribution; coherences between
    different photon numbers never enter a counting observable.
    """
    p = photon_number_distribution(state)
    if herald_mode == 0:
        p = p.T
    elif herald_mode != 1:
        raise DomainError(f"herald_mode must be 0 or 1, got {herald_mode}")
    click = herald.click_probability(np.arange(p.shape[1]))
    joint = p @ click
    total = float(joint.sum())
    if total <= 0.0:
        raise HeraldingError("herald click probability is zero; conditional state undefined")
    return HeraldedDistribution(joint / total, total)
