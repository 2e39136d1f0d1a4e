"""
Fiber Dispersion & Phase Matching
=================================
Taylor model of the fiber propagation constant plus the two phase-matching
solvers the experiment needs:

- MI (one pump):  2ω_p = ω_s + ω_i   and   2β_p = β_s + β_i
- BS (two pumps): ω_p1 + ω_s1 = ω_s2 + ω_p2   and   β_p1 + β_s1 = β_s2 + β_p2

Convention: `beta()` returns the β₀/β₁-free propagation constant
    Σ_{k=2..4} β_k (ω − ω_ref)^k / k!   (+ Δn·ω/c on the slow axis)
Constant and linear-in-ω terms cancel in every mismatch used here, so they
are never carried.

Units: wavelengths in nm, angular frequencies in rad/s, β in 1/m. Taylor
coefficients are stored in ps^k/km (k = 2, 3, 4) and converted on use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import brentq, least_squares

from .errors import ContractViolation, DomainError, FitError, NoPhaseMatchError
from .logger import logger

# =============================================================================
# CONSTANTS
# =============================================================================
C_M_PER_S = 299_792_458.0
TWO_PI_C = 2.0 * math.pi * C_M_PER_S

# ps^k/km -> s^k/m
PS_KM_TO_SI = {2: 1e-24 / 1e3, 3: 1e-36 / 1e3, 4: 1e-48 / 1e3}

# Root-finding defaults (ordinary frequency)
MI_BRACKET_THZ = (0.1, 400.0)
ROOT_TOL_HZ = 1e6
SCAN_POINTS = 2048

ENERGY_TOLERANCE = 1e-9
ZDW_TOLERANCE = 1e-9

ArrayLike = Union[float, np.ndarray]


class Axis(str, Enum):
    FAST = "fast"
    SLOW = "slow"


MI_ROLES = ("p", "s", "i")
BS_ROLES = ("p1", "s1", "s2", "p2")


def _scalar_or_array(value: np.ndarray) -> ArrayLike:
    return float(value) if np.ndim(value) == 0 else value


def omega_from_nm(wavelength_nm: ArrayLike) -> ArrayLike:
    return _scalar_or_array(TWO_PI_C / (np.asarray(wavelength_nm, dtype=float) * 1e-9))


def nm_from_omega(omega: ArrayLike) -> ArrayLike:
    return _scalar_or_array(TWO_PI_C / np.asarray(omega, dtype=float) * 1e9)


# =============================================================================
# DATA CLASSES
# =============================================================================
@dataclass(frozen=True)
class FiberSpec:
    """
    Fiber under a 4th-order Taylor dispersion model.

    beta_coeffs = (β₂, β₃, β₄) at the reference wavelength, ps^k/km.
    The reference defaults to the ZDW, in which case β₂ is pinned to 0.
    The model is only trusted between valid_min_nm and valid_max_nm.
    zdw_wavelength may be None for test fibers that have no zero crossing.
    """
    name: str
    zdw_wavelength: Optional[float]
    beta_coeffs: Tuple[float, float, float]
    birefringence_dn: float
    gamma: float                       # 1/(W km)
    length: float                      # m
    reference_wavelength: Optional[float] = None
    valid_min_nm: float = 450.0
    valid_max_nm: float = 1700.0

    def __post_init__(self):
        object.__setattr__(self, "beta_coeffs", tuple(float(b) for b in self.beta_coeffs))
        if len(self.beta_coeffs) != 3:
            raise DomainError(f"{self.name}: beta_coeffs must hold (β2, β3, β4)")
        if self.reference_wavelength is None:
            if self.zdw_wavelength is None:
                raise DomainError(f"{self.name}: need a ZDW or an explicit reference wavelength")
            object.__setattr__(self, "reference_wavelength", float(self.zdw_wavelength))
        if self.length <= 0:
            raise DomainError(f"{self.name}: length must be > 0, got {self.length}")
        if self.gamma < 0:
            raise DomainError(f"{self.name}: gamma must be >= 0, got {self.gamma}")
        if self.birefringence_dn < 0:
            raise DomainError(f"{self.name}: birefringence_dn must be >= 0, got {self.birefringence_dn}")
        if not 0 < self.valid_min_nm < self.valid_max_nm:
            raise DomainError(f"{self.name}: empty validity window")
        if self.zdw_wavelength is not None:
            b2, b3, b4 = self.beta_si
            d = self.omega_zdw - self.omega_ref
            scale = abs(b2) + abs(b3 * d) + abs(b4 * d * d / 2) or 1.0
            if abs(b2 + b3 * d + b4 * d * d / 2) > ZDW_TOLERANCE * scale:
                raise DomainError(
                    f"{self.name}: β2 does not vanish at the ZDW ({self.zdw_wavelength} nm)"
                )

    @property
    def beta_si(self) -> Tuple[float, float, float]:
        return tuple(c * PS_KM_TO_SI[k] for k, c in zip((2, 3, 4), self.beta_coeffs))

    @property
    def omega_ref(self) -> float:
        return omega_from_nm(self.reference_wavelength)

    @property
    def omega_zdw(self) -> float:
        return omega_from_nm(self.zdw_wavelength)

    @property
    def gamma_si(self) -> float:
        """Nonlinearity in 1/(W m)."""
        return self.gamma / 1e3


@dataclass(frozen=True)
class FrequencyQuartet:
    """Four angular frequencies with role labels; kind is 'mi' or 'bs'."""
    kind: str
    omegas: Dict[str, float]
    energy_tolerance: float = ENERGY_TOLERANCE

    @classmethod
    def mi(cls, omega_p: float, omega_s: float, omega_i: float,
           tolerance: float = ENERGY_TOLERANCE) -> "FrequencyQuartet":
        return cls("mi", {"p": omega_p, "s": omega_s, "i": omega_i}, tolerance)

    @classmethod
    def bs(cls, omega_p1: float, omega_s1: float, omega_s2: float, omega_p2: float,
           tolerance: float = ENERGY_TOLERANCE) -> "FrequencyQuartet":
        return cls("bs", {"p1": omega_p1, "s1": omega_s1, "s2": omega_s2, "p2": omega_p2}, tolerance)

    @classmethod
    def from_wavelengths(cls, kind: str, wavelengths_nm: Mapping[str, float],
                         resolution_nm: Optional[float] = None) -> "FrequencyQuartet":
        """
        Build a quartet from wavelengths.

        With resolution_nm set, the wavelengths are taken as rounded to that
        resolution and the energy tolerance becomes the worst-case rounding
        bound, Σ ω_j (res/2)/λ_j relative to the input-side frequency sum.
        """
        roles = MI_ROLES if kind == "mi" else BS_ROLES
        missing = [r for r in roles if r not in wavelengths_nm]
        if missing:
            raise ContractViolation(f"quartet missing roles {missing}")
        omegas = {r: omega_from_nm(wavelengths_nm[r]) for r in roles}
        tolerance = ENERGY_TOLERANCE
        if resolution_nm is not None:
            weights = {"p": 2.0} if kind == "mi" else {}
            spread = sum(weights.get(r, 1.0) * omegas[r] * 0.5 * resolution_nm / wavelengths_nm[r]
                         for r in roles)
            tolerance = spread / cls(kind, omegas)._input_sum()
        return cls(kind, omegas, tolerance)

    def _input_sum(self) -> float:
        o = self.omegas
        return 2 * o["p"] if self.kind == "mi" else o["p1"] + o["s1"]

    def energy_residual(self) -> float:
        """Relative energy-conservation residual (input minus output over input)."""
        o = self.omegas
        if self.kind == "mi":
            out = o["s"] + o["i"]
        else:
            out = o["s2"] + o["p2"]
        return (self._input_sum() - out) / self._input_sum()

    def conserves_energy(self) -> bool:
        return abs(self.energy_residual()) <= self.energy_tolerance

    def wavelengths_nm(self) -> Dict[str, float]:
        return {r: nm_from_omega(w) for r, w in self.omegas.items()}


@dataclass(frozen=True)
class PhaseMatchSolution:
    quartet: FrequencyQuartet
    residual_mismatch: float                       # 1/m
    polarization: Dict[str, Axis] = field(default_factory=dict)
    tolerance: Optional[float] = None              # 1/m, None for plain evaluations

    @property
    def converged(self) -> bool:
        return self.tolerance is None or abs(self.residual_mismatch) <= self.tolerance


@dataclass(frozen=True)
class FiberFit:
    fiber: FiberSpec
    rms_residual_nm: float
    n_points: int
    free: Tuple[str, ...]


# =============================================================================
# PROPAGATION CONSTANT
# =============================================================================
def _check_window(fiber: FiberSpec, omega: ArrayLike) -> None:
    lo = omega_from_nm(fiber.valid_max_nm)
    hi = omega_from_nm(fiber.valid_min_nm)
    w = np.asarray(omega, dtype=float)
    if np.any(w < lo * (1 - 1e-12)) or np.any(w > hi * (1 + 1e-12)):
        raise DomainError(
            f"{fiber.name}: frequency outside validity window "
            f"{fiber.valid_min_nm:g}-{fiber.valid_max_nm:g} nm"
        )


def _axis(axis) -> Axis:
    return axis if isinstance(axis, Axis) else Axis(str(axis).lower())


def beta(fiber: FiberSpec, omega: ArrayLike, axis: Union[Axis, str] = Axis.FAST) -> ArrayLike:
    """β₀/β₁-free propagation constant (1/m); see module docstring."""
    _check_window(fiber, omega)
    b2, b3, b4 = fiber.beta_si
    d = np.asarray(omega, dtype=float) - fiber.omega_ref
    value = b2 * d ** 2 / 2 + b3 * d ** 3 / 6 + b4 * d ** 4 / 24
    if _axis(axis) is Axis.SLOW:
        value = value + fiber.birefringence_dn * np.asarray(omega, dtype=float) / C_M_PER_S
    return _scalar_or_array(value)


def beta2_at(fiber: FiberSpec, omega: ArrayLike) -> ArrayLike:
    """Group-velocity dispersion (s²/m) at omega."""
    b2, b3, b4 = fiber.beta_si
    d = np.asarray(omega, dtype=float) - fiber.omega_ref
    value = b2 + b3 * d + b4 * d ** 2 / 2
    return _scalar_or_array(value)


def group_slowness(fiber: FiberSpec, omega: ArrayLike, axis: Union[Axis, str] = Axis.FAST) -> ArrayLike:
    """Relative β₁ (s/m): dβ/dω without the constant group delay."""
    _check_window(fiber, omega)
    b2, b3, b4 = fiber.beta_si
    d = np.asarray(omega, dtype=float) - fiber.omega_ref
    value = b2 * d + b3 * d ** 2 / 2 + b4 * d ** 3 / 6
    if _axis(axis) is Axis.SLOW:
        value = value + fiber.birefringence_dn / C_M_PER_S
    return _scalar_or_array(value)


def _assign_axes(axes: Optional[Mapping[str, Union[Axis, str]]], roles: Sequence[str]) -> Dict[str, Axis]:
    axes = dict(axes or {})
    unknown = set(axes) - set(roles)
    if unknown:
        raise ContractViolation(f"unknown polarization roles {sorted(unknown)}; expected {roles}")
    return {r: _axis(axes.get(r, Axis.FAST)) for r in roles}


# =============================================================================
# MODULATION INSTABILITY
# =============================================================================
Propagation = Callable[[FiberSpec, ArrayLike, Axis], ArrayLike]


def mi_mismatch(fiber: FiberSpec, omega_p: float, detuning: ArrayLike,
                axes: Optional[Mapping[str, Union[Axis, str]]] = None,
                pump_power: float = 0.0, kerr_phase: bool = False,
                propagation: Propagation = beta) -> ArrayLike:
    """
    2β_p − β_s − β_i (− 2γP with kerr_phase) for ω_s,i = ω_p ± detuning.
    """
    axes = _assign_axes(axes, MI_ROLES)
    detuning = np.asarray(detuning, dtype=float)
    value = (2 * propagation(fiber, omega_p, axes["p"])
             - propagation(fiber, omega_p + detuning, axes["s"])
             - propagation(fiber, omega_p - detuning, axes["i"]))
    if kerr_phase:
        value = value - 2 * fiber.gamma_si * pump_power
    return value


def _first_root(func: Callable[[float], float], grid: np.ndarray, xtol: float) -> Optional[float]:
    values = np.array([func(x) for x in grid])
    if values[0] == 0.0:
        return float(grid[0])
    flips = np.nonzero(np.sign(values[:-1]) * np.sign(values[1:]) < 0)[0]
    if flips.size == 0:
        return None
    i = int(flips[0])
    return brentq(func, grid[i], grid[i + 1], xtol=xtol, maxiter=200)


def _tolerance_at(func: Callable[[float], float], root: float, xtol: float) -> float:
    return max(abs(func(root + xtol) - func(root - xtol)), 1e-12)


def solve_mi_sidebands(fiber: FiberSpec, pump_wavelength: float, pump_power: float = 0.0,
                       axes: Optional[Mapping[str, Union[Axis, str]]] = None,
                       kerr_phase: bool = False,
                       bracket_thz: Tuple[float, float] = MI_BRACKET_THZ,
                       tol_hz: float = ROOT_TOL_HZ) -> PhaseMatchSolution:
    """
    MI sidebands for a pump by 1-D root finding over the detuning Δω.

    The bracket is clipped so both sidebands stay inside the fiber's validity
    window; the first sign change from the small-detuning end is refined
    with brentq to tol_hz.
    """
    omega_p = omega_from_nm(pump_wavelength)
    _check_window(fiber, omega_p)
    axes = _assign_axes(axes, MI_ROLES)

    lo = 2 * math.pi * bracket_thz[0] * 1e12
    hi = min(
        2 * math.pi * bracket_thz[1] * 1e12,
        omega_p - omega_from_nm(fiber.valid_max_nm),
        omega_from_nm(fiber.valid_min_nm) - omega_p,
    ) * (1 - 1e-9)
    if hi <= lo:
        raise NoPhaseMatchError(f"{fiber.name}: pump {pump_wavelength} nm leaves no detuning bracket")

    def mismatch(detuning: float) -> float:
        return float(mi_mismatch(fiber, omega_p, detuning, axes, pump_power, kerr_phase))

    xtol = 2 * math.pi * tol_hz
    root = _first_root(mismatch, np.geomspace(lo, hi, SCAN_POINTS), xtol)
    if root is None:
        raise NoPhaseMatchError(
            f"{fiber.name}: no MI phase match for pump {pump_wavelength} nm "
            f"in {bracket_thz[0]}-{bracket_thz[1]} THz (pump outside tuning range)"
        )

    quartet = FrequencyQuartet.mi(omega_p, omega_p + root, omega_p - root)
    solution = PhaseMatchSolution(quartet, mismatch(root), axes, _tolerance_at(mismatch, root, xtol))
    wl = quartet.wavelengths_nm()
    logger.debug(f"MI {fiber.name}: pump {pump_wavelength:.2f} nm -> s {wl['s']:.2f} nm, i {wl['i']:.2f} nm")
    return solution


def tune_mi_sidebands(fiber: FiberSpec, pump_wavelengths: Sequence[float],
                      axes: Optional[Mapping[str, Union[Axis, str]]] = None,
                      **kwargs) -> List[Tuple[float, PhaseMatchSolution]]:
    """Sideband tuning curve; pumps with no phase match are skipped."""
    rows = []
    for pump in pump_wavelengths:
        try:
            rows.append((float(pump), solve_mi_sidebands(fiber, pump, axes=axes, **kwargs)))
        except NoPhaseMatchError as e:
            logger.warning(f"⚠️ {e}")
    return rows


# =============================================================================
# BRAGG SCATTERING
# =============================================================================
def bs_quartet(p1_nm: float, s1_nm: float, p2_nm: float) -> FrequencyQuartet:
    """Energy-conserving BS quartet; s2 follows from conservation."""
    o_p1, o_s1, o_p2 = omega_from_nm(p1_nm), omega_from_nm(s1_nm), omega_from_nm(p2_nm)
    return FrequencyQuartet.bs(o_p1, o_s1, o_p1 + o_s1 - o_p2, o_p2)


def _bs_mismatch(fiber: FiberSpec, omegas: Mapping[str, float], axes: Mapping[str, Axis]) -> float:
    return float(beta(fiber, omegas["p1"], axes["p1"]) + beta(fiber, omegas["s1"], axes["s1"])
                 - beta(fiber, omegas["s2"], axes["s2"]) - beta(fiber, omegas["p2"], axes["p2"]))


def solve_bs_residual(fiber: FiberSpec, quartet: FrequencyQuartet,
                      axes: Optional[Mapping[str, Union[Axis, str]]] = None) -> PhaseMatchSolution:
    """Δβ = β_p1 + β_s1 − β_s2 − β_p2 for a BS quartet; Δβ is not forced to 0."""
    if quartet.kind != "bs":
        raise ContractViolation(f"expected a BS quartet, got '{quartet.kind}'")
    if not quartet.conserves_energy():
        raise ContractViolation(
            f"quartet violates energy conservation: relative residual "
            f"{quartet.energy_residual():.3e} > {quartet.energy_tolerance:.1e}"
        )
    axes = _assign_axes(axes, BS_ROLES)
    return PhaseMatchSolution(quartet, _bs_mismatch(fiber, quartet.omegas, axes), axes)


def solve_bs_channel(fiber: FiberSpec, p1_nm: float, p2_nm: float,
                     axes: Optional[Mapping[str, Union[Axis, str]]] = None,
                     min_offset_thz: float = 1.0,
                     tol_hz: float = ROOT_TOL_HZ) -> PhaseMatchSolution:
    """
    BS channel matching: the s1 signal, on the high-frequency side of both
    pumps, whose quartet (s2 by energy conservation) has Δβ = 0.
    """
    axes = _assign_axes(axes, BS_ROLES)
    o_p1, o_p2 = omega_from_nm(p1_nm), omega_from_nm(p2_nm)
    _check_window(fiber, np.array([o_p1, o_p2]))
    shift = o_p1 - o_p2
    o_max = omega_from_nm(fiber.valid_min_nm)

    lo = max(o_p1, o_p2) + 2 * math.pi * min_offset_thz * 1e12
    hi = min(o_max, o_max - shift) * (1 - 1e-9)
    if hi <= lo:
        raise NoPhaseMatchError(f"{fiber.name}: no room for a BS signal channel")

    def mismatch(o_s1: float) -> float:
        return _bs_mismatch(fiber, {"p1": o_p1, "s1": o_s1, "s2": o_s1 + shift, "p2": o_p2}, axes)

    xtol = 2 * math.pi * tol_hz
    root = _first_root(mismatch, np.linspace(lo, hi, SCAN_POINTS), xtol)
    if root is None:
        raise NoPhaseMatchError(f"{fiber.name}: no BS channel phase-matched to pumps {p1_nm}/{p2_nm} nm")
    quartet = FrequencyQuartet.bs(o_p1, root, root + shift, o_p2)
    return PhaseMatchSolution(quartet, mismatch(root), axes, _tolerance_at(mismatch, root, xtol))


# =============================================================================
# FITTING
# =============================================================================
FIT_PARAMETERS = ("beta3", "beta4", "birefringence_dn")
FIT_SCALES = {"beta3": 0.05, "beta4": 1e-4, "birefringence_dn": 1e-5}
MISS_PENALTY_NM = 1e3


def _with_params(fiber: FiberSpec, values: Mapping[str, float]) -> FiberSpec:
    b2, b3, b4 = fiber.beta_coeffs
    b3 = values.get("beta3", b3)
    b4 = values.get("beta4", b4)
    dn = abs(values.get("birefringence_dn", fiber.birefringence_dn))
    if fiber.zdw_wavelength is not None and fiber.reference_wavelength != fiber.zdw_wavelength:
        # keep β2 pinned by the ZDW constraint
        d = (fiber.omega_zdw - fiber.omega_ref)
        b2 = -(b3 * PS_KM_TO_SI[3] * d + b4 * PS_KM_TO_SI[4] * d * d / 2) / PS_KM_TO_SI[2]
    return replace(fiber, beta_coeffs=(b2, b3, b4), birefringence_dn=dn)


def fit_fiber_to_points(points: Sequence[Tuple[float, float, float]], initial: FiberSpec,
                        free: Sequence[str] = ("beta4", "birefringence_dn"),
                        axes: Optional[Mapping[str, Union[Axis, str]]] = None,
                        max_nfev: int = 200) -> FiberFit:
    """
    Least-squares fit of dispersion coefficients to measured MI sidebands.

    points are (pump_nm, signal_nm, idler_nm). β₂ stays pinned by the ZDW.
    The linear phase-matching condition is homogeneous in (β₃, β₄, Δn), so
    their common scale is unobservable; the default free set keeps β₃ at the
    initial value.
    """
    points = [tuple(float(v) for v in p) for p in points]
    free = tuple(free)
    if not points:
        raise FitError("no MI data points to fit")
    if any(name not in FIT_PARAMETERS for name in free):
        raise FitError(f"free parameters must be among {FIT_PARAMETERS}, got {free}")
    if 2 * len(points) < len(free):
        raise FitError(f"{len(points)} point(s) cannot constrain {len(free)} free parameters")

    current = {"beta3": initial.beta_coeffs[1], "beta4": initial.beta_coeffs[2],
               "birefringence_dn": initial.birefringence_dn}
    scales = np.array([abs(current[n]) or FIT_SCALES[n] for n in free])
    x0 = np.array([current[n] for n in free]) / scales

    def residuals(x: np.ndarray) -> np.ndarray:
        trial = _with_params(initial, dict(zip(free, x * scales)))
        out = []
        for pump, signal, idler in points:
            try:
                wl = solve_mi_sidebands(trial, pump, axes=axes, tol_hz=1e3).quartet.wavelengths_nm()
                out.extend((wl["s"] - signal, wl["i"] - idler))
            except (NoPhaseMatchError, ValueError):
                out.extend((MISS_PENALTY_NM, MISS_PENALTY_NM))
        return np.array(out)

    result = least_squares(residuals, x0, method="trf", diff_step=1e-5,
                           xtol=1e-12, ftol=1e-12, gtol=1e-12, max_nfev=max_nfev)
    rms = float(np.sqrt(np.mean(result.fun ** 2)))
    if result.status <= 0 or rms >= MISS_PENALTY_NM / 2:
        raise FitError(f"dispersion fit did not converge: {result.message}", residual_nm=rms)

    fiber = _with_params(initial, dict(zip(free, result.x * scales)))
    logger.info(f"✅ Fitted {fiber.name}: β3={fiber.beta_coeffs[1]:.5g} ps³/km, "
                f"β4={fiber.beta_coeffs[2]:.5g} ps⁴/km, Δn={fiber.birefringence_dn:.4g} "
                f"(RMS {rms:.3g} nm over {len(points)} points)")
    return FiberFit(fiber, rms, len(points), free)
