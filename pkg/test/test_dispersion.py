#!/usr/bin/env python3
"""
Test Suite for Fiber Dispersion & Phase Matching
Tests the Taylor propagation model, MI sideband solver, BS residuals and
the preset fit
"""

import math
from dataclasses import replace

import numpy as np
import pytest

from bragg_qft.config import load_fiber_preset
from bragg_qft.dispersion import (
    Axis,
    FiberSpec,
    FrequencyQuartet,
    beta,
    beta2_at,
    bs_quartet,
    fit_fiber_to_points,
    mi_mismatch,
    omega_from_nm,
    solve_bs_channel,
    solve_bs_residual,
    solve_mi_sidebands,
    tune_mi_sidebands,
)
from bragg_qft.errors import ContractViolation, DomainError, FitError, NoPhaseMatchError

FIBER1 = load_fiber_preset("fiber1")
FIBER2 = load_fiber_preset("fiber2")

# Anomalous quadratic-only fiber: MI phase matches only through the Kerr term
QUAD = FiberSpec(name="quad", zdw_wavelength=None, beta_coeffs=(-20.0, 0.0, 0.0),
                 birefringence_dn=0.0, gamma=100.0, length=1.0, reference_wavelength=1000.0)


# ============================================================================
# TEST SCENARIO 1: Propagation Constant
# ============================================================================

def test_beta_vanishes_at_reference():
    """T1.1: β(ω_ref, fast) = 0"""
    value = beta(FIBER1.fiber, FIBER1.fiber.omega_ref, Axis.FAST)
    assert value == 0.0, f"Expected 0 at the expansion point, got {value}"

def test_beta2_zero_at_zdw():
    """T1.2: β2(ZDW) = 0 within 1e-9 of the coefficient scale"""
    fiber = FIBER1.fiber
    scale = abs(fiber.beta_si[1]) * fiber.omega_zdw * 1e-3
    value = beta2_at(fiber, fiber.omega_zdw)
    assert abs(value) <= 1e-9 * scale, f"β2 at ZDW = {value:.3e}"

def test_beta2_sign_flips_across_zdw():
    """T1.3: fiber1 β2 changes sign across 796 nm"""
    short = beta2_at(FIBER1.fiber, omega_from_nm(790.0))
    long = beta2_at(FIBER1.fiber, omega_from_nm(802.0))
    assert short * long < 0, f"No sign flip: β2(790)={short:.3e}, β2(802)={long:.3e}"

def test_beta_outside_window_raises():
    """T1.4: 2000 nm is outside the validity window → DomainError"""
    with pytest.raises(DomainError):
        beta(FIBER1.fiber, omega_from_nm(2000.0))

def test_zdw_inconsistent_coefficients_rejected():
    """T1.5: nonzero β2 at the declared ZDW is rejected"""
    with pytest.raises(DomainError):
        FiberSpec(name="bad", zdw_wavelength=796.0, beta_coeffs=(1.0, 0.06, 0.0),
                  birefringence_dn=0.0, gamma=1.0, length=1.0)

def test_slow_axis_adds_index_offset():
    """T1.6: slow − fast = Δn·ω/c"""
    fiber = FIBER1.fiber
    omega = omega_from_nm(808.0)
    diff = beta(fiber, omega, Axis.SLOW) - beta(fiber, omega, Axis.FAST)
    expected = fiber.birefringence_dn * omega / 299_792_458.0
    assert diff == pytest.approx(expected, rel=1e-12), f"Expected {expected}, got {diff}"


# ============================================================================
# TEST SCENARIO 2: MI Sidebands
# ============================================================================

def test_mi_808_matches_measured_sidebands():
    """T2.1: pump 808 nm on fiber1 → 683 ± 3 nm and 989 ± 3 nm"""
    solution = solve_mi_sidebands(FIBER1.fiber, 808.0, axes=FIBER1.mi_axes)
    wl = solution.quartet.wavelengths_nm()
    assert abs(wl["s"] - 683.0) <= 3.0, f"Signal at {wl['s']:.2f} nm"
    assert abs(wl["i"] - 989.0) <= 3.0, f"Idler at {wl['i']:.2f} nm"
    assert solution.converged, f"Residual {solution.residual_mismatch:.3e} above {solution.tolerance:.3e}"

def test_mi_solution_conserves_energy():
    """T2.2: solver quartet energy residual < 1e-9 and ω_s > ω_p > ω_i"""
    quartet = solve_mi_sidebands(FIBER1.fiber, 808.0, axes=FIBER1.mi_axes).quartet
    o = quartet.omegas
    assert abs(quartet.energy_residual()) < 1e-9, f"Residual {quartet.energy_residual():.3e}"
    assert o["s"] > o["p"] > o["i"], f"Labeling broken: {o}"

def test_measured_wavelengths_conserve_energy_to_5_digits():
    """T2.3: 2/808 = 1/683 + 1/989 to 5 significant figures"""
    lhs, rhs = 2 / 808, 1 / 683 + 1 / 989
    assert abs(lhs - rhs) / lhs < 5e-5, f"{lhs:.6e} vs {rhs:.6e}"

def test_mi_quadratic_oracle():
    """T2.4: quadratic fiber with Kerr phase → Ω² = −2γP/β2, symmetric sidebands"""
    power = 10.0
    solution = solve_mi_sidebands(QUAD, 1000.0, pump_power=power, kerr_phase=True, tol_hz=1e3)
    o = solution.quartet.omegas
    expected = math.sqrt(-2 * QUAD.gamma_si * power / QUAD.beta_si[0])
    up, down = o["s"] - o["p"], o["p"] - o["i"]
    assert up == pytest.approx(expected, rel=1e-6), f"Detuning {up:.6e} vs {expected:.6e}"
    assert up == pytest.approx(down, rel=1e-12), f"Asymmetric sidebands: {up} vs {down}"

def test_mi_without_kerr_on_quadratic_fiber_has_no_match():
    """T2.5: quadratic fiber, no Kerr term → NoPhaseMatchError"""
    with pytest.raises(NoPhaseMatchError):
        solve_mi_sidebands(QUAD, 1000.0)

def test_mi_mismatch_ignores_beta0_beta1():
    """T2.6: adding β0 + β1·ω leaves 2β_p − β_s − β_i unchanged"""
    omega_p = omega_from_nm(808.0)
    detuning = np.linspace(1e13, 1e14, 25)

    def shifted(fiber, omega, axis):
        return beta(fiber, omega, axis) + 5.0 + 5e-9 * np.asarray(omega)

    plain = mi_mismatch(FIBER1.fiber, omega_p, detuning, FIBER1.mi_axes)
    moved = mi_mismatch(FIBER1.fiber, omega_p, detuning, FIBER1.mi_axes, propagation=shifted)
    assert np.allclose(plain, moved, rtol=0, atol=1e-6), f"Max diff {np.max(np.abs(plain - moved)):.3e}"

def test_tuning_curve_skips_unmatched_pumps():
    """T2.7: tuning curve over 790–830 nm returns rows including 808 nm"""
    rows = tune_mi_sidebands(FIBER1.fiber, np.linspace(790, 830, 41), axes=FIBER1.mi_axes)
    pumps = [p for p, _ in rows]
    assert 808.0 in pumps, f"808 nm missing from tuning curve {pumps}"
    assert all(sol.quartet.omegas["s"] > sol.quartet.omegas["i"] for _, sol in rows)


# ============================================================================
# TEST SCENARIO 3: Bragg Scattering Residual
# ============================================================================

def test_bs_measured_quartet_within_rounding():
    """T3.1: (808, 683 → 845, 659) conserves energy within nm rounding"""
    quartet = FrequencyQuartet.from_wavelengths(
        "bs", {"p1": 808.0, "s1": 683.0, "s2": 659.0, "p2": 845.0}, resolution_nm=1.0)
    assert abs(quartet.energy_residual()) < 1e-3, f"Residual {quartet.energy_residual():.3e}"
    assert quartet.conserves_energy(), (
        f"Residual {quartet.energy_residual():.3e} beyond rounding bound {quartet.energy_tolerance:.3e}")

def test_bs_quartet_predicts_659():
    """T3.2: s2 from conservation rounds to 659 nm"""
    wl = bs_quartet(808.0, 683.0, 845.0).wavelengths_nm()
    assert round(wl["s2"]) == 659, f"s2 = {wl['s2']:.3f} nm"

def test_bs_degenerate_residual_zero():
    """T3.3: p1 = p2, s1 = s2 → Δβ = 0 exactly"""
    o_p, o_s = omega_from_nm(808.0), omega_from_nm(683.0)
    solution = solve_bs_residual(FIBER2.fiber, FrequencyQuartet.bs(o_p, o_s, o_s, o_p))
    assert solution.residual_mismatch == 0.0, f"Got {solution.residual_mismatch}"

def test_bs_quadratic_closed_form():
    """T3.4: quadratic fiber residual = β2[Σ±(ω−ω̄)²]/2"""
    quartet = bs_quartet(808.0, 683.0, 845.0)
    o, ref = quartet.omegas, QUAD.omega_ref
    expected = QUAD.beta_si[0] * ((o["s1"] - ref) ** 2 + (o["p1"] - ref) ** 2
                                  - (o["s2"] - ref) ** 2 - (o["p2"] - ref) ** 2) / 2
    got = solve_bs_residual(QUAD, quartet).residual_mismatch
    assert got == pytest.approx(expected, rel=1e-9), f"Expected {expected:.6e}, got {got:.6e}"

def test_bs_energy_violation_rejected():
    """T3.5: quartet off by 1 nm in s2 → ContractViolation"""
    quartet = FrequencyQuartet.from_wavelengths("bs", {"p1": 808.0, "s1": 683.0, "s2": 660.0, "p2": 845.0})
    with pytest.raises(ContractViolation):
        solve_bs_residual(FIBER2.fiber, quartet)

def test_bs_channel_matching_fiber2():
    """T3.6: fiber2 pumps 808/845 → phase-matched s1 near 683 nm, s2 near 659 nm"""
    solution = solve_bs_channel(FIBER2.fiber, 808.0, 845.0, FIBER2.bs_axes)
    wl = solution.quartet.wavelengths_nm()
    assert abs(wl["s1"] - 683.0) < 1.0, f"s1 = {wl['s1']:.2f} nm"
    assert abs(wl["s2"] - 659.0) < 1.0, f"s2 = {wl['s2']:.2f} nm"
    assert solution.converged and abs(solution.quartet.energy_residual()) < 1e-9


# ============================================================================
# TEST SCENARIO 4: Preset Fit
# ============================================================================

def test_fit_single_measured_point():
    """T4.1: (808, 683, 989) with 2 free coefficients → RMS < 0.5 nm"""
    b2, b3, b4 = FIBER1.fiber.beta_coeffs
    start = replace(FIBER1.fiber, beta_coeffs=(b2, b3, b4 * 1.1),
                    birefringence_dn=FIBER1.fiber.birefringence_dn * 0.9)
    fit = fit_fiber_to_points([(808.0, 683.0, 989.0)], start, axes=FIBER1.mi_axes)
    assert fit.rms_residual_nm < 0.5, f"RMS {fit.rms_residual_nm:.3f} nm"

def test_fit_recovers_synthetic_coefficients():
    """T4.2: points generated from fiber1 → β4 and Δn recovered within 1%"""
    truth = FIBER1.fiber
    points = []
    for pump in (800.0, 808.0, 815.0):
        wl = solve_mi_sidebands(truth, pump, axes=FIBER1.mi_axes, tol_hz=1e3).quartet.wavelengths_nm()
        points.append((pump, wl["s"], wl["i"]))
    b2, b3, b4 = truth.beta_coeffs
    start = replace(truth, beta_coeffs=(b2, b3, b4 * 1.05), birefringence_dn=truth.birefringence_dn * 0.95)
    fit = fit_fiber_to_points(points, start, axes=FIBER1.mi_axes)
    assert fit.fiber.beta_coeffs[2] == pytest.approx(b4, rel=1e-2), f"β4 {fit.fiber.beta_coeffs[2]} vs {b4}"
    assert fit.fiber.birefringence_dn == pytest.approx(truth.birefringence_dn, rel=1e-2)

def test_fit_empty_points_raises():
    """T4.3: no points → FitError"""
    with pytest.raises(FitError):
        fit_fiber_to_points([], FIBER1.fiber)

def test_fit_underdetermined_raises():
    """T4.4: one point cannot constrain three free coefficients"""
    with pytest.raises(FitError):
        fit_fiber_to_points([(808.0, 683.0, 989.0)], FIBER1.fiber,
                            free=("beta3", "beta4", "birefringence_dn"))


# ============================================================================
# RUN ALL TESTS
# ============================================================================

if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
