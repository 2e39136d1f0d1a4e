"""
Bragg-Scattering Translator
===========================
Coupling parameters (δ, κ) from fiber and pump settings, the closed-form
transfer functions

    μ(z) = cos(kz) + iδ sin(kz)/k,    ν(z) = iκ sin(kz)/k,    k = √(|κ|² + δ²)

and the frequency-dependent acceptance filter that narrows a broadband
input. Coupled-mode equations (same convention as quantum_core):

    da1/dz = i(δ a1 + κ a2),    da2/dz = i(κ* a1 − δ a2)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Tuple, Union

import numpy as np
from scipy.optimize import brentq

from .dispersion import (
    Axis,
    C_M_PER_S,
    FiberSpec,
    FrequencyQuartet,
    group_slowness,
    nm_from_omega,
    omega_from_nm,
    solve_bs_residual,
)
from .errors import CalibrationError, ContractViolation, DomainError, NumericError
from .logger import logger
from .quantum_core import TransferMatrix

Z_TOLERANCE = 1e-12


# =============================================================================
# PUMPS & COUPLER
# =============================================================================
@dataclass(frozen=True)
class PumpField:
    wavelength_nm: float
    power_w: float                     # peak power seen by the fiber
    axis: Axis = Axis.FAST

    def __post_init__(self):
        if self.power_w < 0:
            raise DomainError(f"pump power must be >= 0, got {self.power_w} W")


def peak_power_w(average_w: float, rep_rate_hz: float, pulse_ps: float) -> float:
    """Peak power of a flat-top pulse train with the given duty cycle."""
    if rep_rate_hz <= 0 or pulse_ps <= 0:
        raise DomainError("rep rate and pulse width must be positive")
    return average_w / (rep_rate_hz * pulse_ps * 1e-12)


@dataclass(frozen=True)
class BsCoupler:
    delta: float                       # 1/m
    kappa: complex                     # 1/m
    length: float                      # m

    def __post_init__(self):
        if self.length <= 0:
            raise DomainError(f"coupler length must be > 0, got {self.length}")
        object.__setattr__(self, "kappa", complex(self.kappa))
        object.__setattr__(self, "delta", float(self.delta))

    @property
    def k(self) -> float:
        return math.sqrt(abs(self.kappa) ** 2 + self.delta ** 2)

    @classmethod
    def from_kappa_length(cls, kappa_length: float, delta_length: float = 0.0,
                          length: float = 1.0) -> "BsCoupler":
        return cls(delta_length / length, kappa_length / length, length)


def make_coupler(fiber: FiberSpec, p1: PumpField, p2: PumpField, quartet: FrequencyQuartet,
                 overlap: float = 1.0, length: Optional[float] = None,
                 axes: Optional[Mapping[str, Union[Axis, str]]] = None) -> BsCoupler:
    """
    κ = 2γ√(P1 P2)·overlap and δ = Δβ/2 from the quartet's BS mismatch.

    overlap is the scalar pump/signal temporal-overlap factor in [0, 1].
    """
    if not 0.0 <= overlap <= 1.0:
        raise DomainError(f"overlap must be in [0, 1], got {overlap}")
    roles = {"p1": p1.axis, "p2": p2.axis}
    roles.update(axes or {})
    mismatch = solve_bs_residual(fiber, quartet, roles).residual_mismatch
    kappa = 2.0 * fiber.gamma_si * math.sqrt(p1.power_w * p2.power_w) * overlap
    coupler = BsCoupler(mismatch / 2.0, kappa, length or fiber.length)
    logger.debug(f"BS coupler: δ={coupler.delta:.4g}/m κ={kappa:.4g}/m |κ|L={kappa * coupler.length:.4g}")
    return coupler


def kappa_length_for_efficiency(efficiency: float) -> float:
    """|κ|L on the first sin² branch giving the efficiency at δ = 0."""
    if not 0.0 <= efficiency <= 1.0:
        raise DomainError(f"efficiency must be in [0, 1], got {efficiency}")
    return math.asin(math.sqrt(efficiency))


# =============================================================================
# TRANSFER FUNCTIONS
# =============================================================================
def transfer_functions(delta, kappa, z) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized closed-form (μ, ν); broadcasts over delta, kappa and z."""
    delta = np.asarray(delta, dtype=float)
    kappa = np.asarray(kappa, dtype=complex)
    z = np.asarray(z, dtype=float)
    k = np.sqrt(np.abs(kappa) ** 2 + delta ** 2)
    kz = k * z
    # sin(kz)/k -> z as k -> 0
    sin_over_k = np.where(k > 0, np.sin(kz) / np.where(k > 0, k, 1.0), z)
    mu = np.cos(kz) + 1j * delta * sin_over_k
    nu = 1j * kappa * sin_over_k
    return mu, nu


def transfer_at(coupler: BsCoupler, z: float) -> TransferMatrix:
    if not -Z_TOLERANCE <= z <= coupler.length * (1 + Z_TOLERANCE):
        raise DomainError(f"z={z} m outside [0, {coupler.length}] m")
    mu, nu = transfer_functions(coupler.delta, coupler.kappa, z)
    return TransferMatrix(complex(mu), complex(nu))


def conversion_efficiency(coupler: BsCoupler) -> float:
    return transfer_at(coupler, coupler.length).efficiency


def integrate_coupled_modes(delta: float, kappa: complex, length: float, steps: int = 4000) -> np.ndarray:
    """
    Classical RK4 of the coupled-mode equations for both unit inputs.

    Returns the 2×2 propagator A(L) with (a1, a2)(L) = A (a1, a2)(0); it
    should equal [[μ, ν], [−ν*, μ*]].
    """
    gen = 1j * np.array([[delta, kappa], [np.conj(kappa), -delta]], dtype=complex)

    def rhs(a: np.ndarray) -> np.ndarray:
        return gen @ a

    a = np.eye(2, dtype=complex)
    dz = length / steps
    for _ in range(steps):
        k1 = dz * rhs(a)
        k2 = dz * rhs(a + k1 / 2)
        k3 = dz * rhs(a + k2 / 2)
        k4 = dz * rhs(a + k3)
        a = a + (k1 + 2 * k2 + 2 * k3 + k4) / 6
    return a


def calibrate_overlap(fiber: FiberSpec, p1: PumpField, p2: PumpField, quartet: FrequencyQuartet,
                      target: float, length: Optional[float] = None,
                      axes: Optional[Mapping[str, Union[Axis, str]]] = None) -> float:
    """Smallest overlap factor whose conversion efficiency equals target."""

    def miss(overlap: float) -> float:
        return conversion_efficiency(make_coupler(fiber, p1, p2, quartet, overlap, length, axes)) - target

    grid = np.linspace(0.0, 1.0, 1025)
    values = np.array([miss(x) for x in grid])
    crossings = np.nonzero(values[:-1] * values[1:] <= 0)[0]
    if crossings.size == 0:
        raise CalibrationError(
            f"efficiency {target:.3f} not reachable for overlap in [0, 1] "
            f"(max {values.max() + target:.3f})"
        )
    i = int(crossings[0])
    if values[i] == 0.0:
        return float(grid[i])
    return float(brentq(miss, grid[i], grid[i + 1], xtol=1e-14))


# =============================================================================
# SPECTRA
# =============================================================================
@dataclass(frozen=True, eq=False)
class SpectralProfile:
    """Power density (a.u. per nm) sampled on an increasing wavelength grid."""
    wavelength_nm: np.ndarray
    power: np.ndarray

    def __post_init__(self):
        wl = np.asarray(self.wavelength_nm, dtype=float)
        pw = np.asarray(self.power, dtype=float)
        if wl.ndim != 1 or wl.shape != pw.shape or wl.size < 2:
            raise ContractViolation("spectrum needs matching 1-D grids with at least 2 points")
        if np.any(np.diff(wl) <= 0):
            raise ContractViolation("wavelength grid must be strictly increasing")
        if np.any(pw < 0):
            raise ContractViolation("spectral power must be non-negative")
        object.__setattr__(self, "wavelength_nm", wl)
        object.__setattr__(self, "power", pw)

    @classmethod
    def gaussian(cls, center_nm: float, fwhm_nm: float, span_nm: float = 6.0,
                 step_nm: float = 0.002) -> "SpectralProfile":
        n = int(round(2 * span_nm / step_nm)) + 1
        wl = center_nm - span_nm + step_nm * np.arange(n)
        sigma = fwhm_nm / (2 * math.sqrt(2 * math.log(2)))
        return cls(wl, np.exp(-0.5 * ((wl - center_nm) / sigma) ** 2))

    @property
    def step_nm(self) -> float:
        return float(np.mean(np.diff(self.wavelength_nm)))

    def is_uniform(self, rtol: float = 1e-6) -> bool:
        d = np.diff(self.wavelength_nm)
        return bool(np.all(np.abs(d - d.mean()) <= rtol * d.mean()))

    def cell_widths(self) -> np.ndarray:
        return np.gradient(self.wavelength_nm)

    def integral(self) -> float:
        return float(np.sum(self.power * self.cell_widths()))

    def resampled(self) -> "SpectralProfile":
        wl = np.linspace(self.wavelength_nm[0], self.wavelength_nm[-1], self.wavelength_nm.size)
        return SpectralProfile(wl, np.interp(wl, self.wavelength_nm, self.power))

    def fwhm(self, units: str = "nm") -> float:
        """Full width at half maximum of the main peak, in nm or THz."""
        if units == "nm":
            return _fwhm(self.wavelength_nm, self.power)
        if units == "thz":
            nu = C_M_PER_S * 1e-3 / self.wavelength_nm            # THz
            density = self.power * self.wavelength_nm ** 2         # per unit frequency
            return _fwhm(nu[::-1], density[::-1])
        raise DomainError(f"unknown FWHM units '{units}'")


def _fwhm(x: np.ndarray, y: np.ndarray) -> float:
    peak = int(np.argmax(y))
    half = y[peak] / 2
    if half <= 0:
        raise NumericError("spectrum is empty")
    below_left = np.nonzero(y[:peak] < half)[0]
    below_right = np.nonzero(y[peak:] < half)[0]
    if below_left.size == 0 or below_right.size == 0:
        raise NumericError("spectrum does not fall to half maximum inside the grid")
    i = int(below_left[-1])
    left = x[i] + (half - y[i]) * (x[i + 1] - x[i]) / (y[i + 1] - y[i])
    j = peak + int(below_right[0])
    right = x[j - 1] + (half - y[j - 1]) * (x[j] - x[j - 1]) / (y[j] - y[j - 1])
    return float(right - left)


@dataclass(frozen=True, eq=False)
class AcceptanceResult:
    translated: SpectralProfile
    remainder: SpectralProfile
    efficiency: np.ndarray             # η on the input grid
    metadata: Dict[str, object] = field(default_factory=dict)


def channel_walkoff(fiber: FiberSpec, quartet: FrequencyQuartet,
                    axes: Optional[Mapping[str, Union[Axis, str]]] = None) -> float:
    """Δβ₁ = β₁(s1) − β₁(s2) in s/m."""
    axes = dict(axes or {})
    return float(group_slowness(fiber, quartet.omegas["s1"], axes.get("s1", Axis.FAST))
                 - group_slowness(fiber, quartet.omegas["s2"], axes.get("s2", Axis.FAST)))


def acceptance_filter(coupler: BsCoupler, spectrum: SpectralProfile, quartet: FrequencyQuartet,
                      walkoff: Optional[float] = None, fiber: Optional[FiberSpec] = None,
                      axes: Optional[Mapping[str, Union[Axis, str]]] = None) -> AcceptanceResult:
    """
    Split an s1-channel spectrum into its translated and depleted parts.

    η(Ω) = |ν(L; δ₀ + ½Δβ₁Ω)|² with Ω the detuning from the quartet's s1.
    walkoff (Δβ₁, s/m) defaults to the fiber's group-slowness difference.
    The translated part is moved by ω_p1 − ω_p2 onto a uniform s2 grid with
    the input step. Each output cell takes the mapped cumulative mass between
    its edges, so the total integral is conserved and the density has no
    binning ripple.
    """
    if quartet.kind != "bs":
        raise ContractViolation("acceptance filtering needs a BS quartet")
    if walkoff is None:
        if fiber is None:
            raise ContractViolation("supply either walkoff or a fiber to derive it from")
        walkoff = channel_walkoff(fiber, quartet, axes)

    resampled = not spectrum.is_uniform()
    if resampled:
        logger.warning("⚠️ Non-uniform input grid resampled before acceptance filtering")
        spectrum = spectrum.resampled()

    omega = omega_from_nm(spectrum.wavelength_nm)
    detuning = omega - quartet.omegas["s1"]
    _, nu = transfer_functions(coupler.delta + 0.5 * walkoff * detuning, coupler.kappa, coupler.length)
    eta = np.abs(nu) ** 2

    mass = spectrum.power * spectrum.cell_widths() * eta
    shift = quartet.omegas["p1"] - quartet.omegas["p2"]
    centers = spectrum.wavelength_nm
    step = spectrum.step_nm
    edges = np.concatenate(([centers[0] - step / 2], (centers[:-1] + centers[1:]) / 2, [centers[-1] + step / 2]))
    mapped_edges = nm_from_omega(omega_from_nm(edges) + shift)
    cumulative = np.concatenate(([0.0], np.cumsum(mass)))
    lo = float(mapped_edges[0])
    n_out = int(math.ceil((float(mapped_edges[-1]) - lo) / step))
    out_edges = lo + step * np.arange(n_out + 1)
    # mapped CDF is piecewise linear between mapped input cell edges
    deposited = np.diff(np.interp(out_edges, mapped_edges, cumulative))
    grid = out_edges[:-1] + step / 2

    return AcceptanceResult(
        translated=SpectralProfile(grid, deposited / step),
        remainder=SpectralProfile(spectrum.wavelength_nm, spectrum.power * (1 - eta)),
        efficiency=eta,
        metadata={
            "resampled": resampled,
            "walkoff_s_per_m": walkoff,
            "shift_rad_per_s": shift,
            "delta0_per_m": coupler.delta,
            "kappa_length": abs(coupler.kappa) * coupler.length,
        },
    )


def derive_walkoff(coupler: BsCoupler, spectrum: SpectralProfile, quartet: FrequencyQuartet,
                   target_fwhm_nm: float = 1.45, bracket: Tuple[float, float] = (0.0, 1e-12)) -> float:
    """Δβ₁ (s/m) for which the translated FWHM equals target_fwhm_nm."""

    def miss(walkoff: float) -> float:
        return acceptance_filter(coupler, spectrum, quartet, walkoff).translated.fwhm("nm") - target_fwhm_nm

    lo, hi = miss(bracket[0]), miss(bracket[1])
    if lo * hi > 0:
        raise CalibrationError(
            f"translated FWHM {target_fwhm_nm} nm not bracketed by walk-off {bracket} s/m"
        )
    walkoff = float(brentq(miss, bracket[0], bracket[1], xtol=1e-20, rtol=1e-10))
    logger.info(f"✅ Walk-off Δβ₁={walkoff:.4g} s/m narrows output to {target_fwhm_nm} nm")
    return walkoff
