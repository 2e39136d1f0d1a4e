#!/usr/bin/env python3
"""
Experiment Runner
=================
    python -m bragg_qft <phasematch|translate|acceptance|g2|efficiency|sweep>
        [--config FILE | --scenario NAME] [--seed N] [--out DIR]
        [--sweep PARAM START:STOP:STEPS] [--set KEY=VALUE ...] [-v]

Writes one CSV per table (first line `# config_sha256=<hash>`; `g2` writes
g2_s1.csv and g2_s2.csv) and summary.json
into the output directory. Exit codes: 0 ok, 2 config error, 3 numeric error.
"""

import argparse
import math
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import orjson
import pandas as pd
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from . import logger as log_setup
from .bs_translator import (
    SpectralProfile,
    acceptance_filter,
    conversion_efficiency,
    derive_walkoff,
    transfer_functions,
)
from .config import (
    SWEEP_ALIASES,
    ScenarioConfig,
    config_hash,
    config_to_dict,
    load_config,
    load_scenario,
    with_overrides,
)
from .counting import (
    CHANNELS,
    ExperimentResult,
    G2Estimate,
    PulseTrainResult,
    car,
    expected_car,
    expected_g2,
    expected_tallies,
    g2_from_counts,
    run_efficiency_protocol,
    run_experiment,
)
from .dispersion import solve_mi_sidebands, tune_mi_sidebands
from .errors import BraggQftError, ConfigError, InsufficientStatisticsError
from .logger import logger
from .scenarios import Scenario, build_coupler, build_pumps, build_quartet, build_scenario

console = Console()

COMMANDS = ("phasematch", "translate", "acceptance", "g2", "efficiency", "sweep")
DEFAULT_SCENARIO = "paper_calibrated"
FLOAT_FORMAT = "%.10g"

Frames = Dict[str, pd.DataFrame]
Summary = Dict[str, Any]


# =============================================================================
# HELPERS
# =============================================================================
def parse_range(text: str) -> Tuple[float, float, int]:
    """'start:stop:steps' -> inclusive linspace arguments."""
    parts = text.split(":")
    try:
        start, stop, steps = float(parts[0]), float(parts[1]), int(parts[2])
    except (IndexError, ValueError):
        raise ConfigError("cli.sweep", f"range must look like start:stop:steps, got '{text}'") from None
    if len(parts) != 3 or steps < 1:
        raise ConfigError("cli.sweep", f"range must have 3 fields and steps >= 1, got '{text}'")
    return start, stop, steps


def sweep_values(config: ScenarioConfig) -> Tuple[str, np.ndarray]:
    if config.sweep_param is None:
        raise ConfigError("scenario.sweep_param", "this command needs a sweep (--sweep PARAM START:STOP:STEPS)")
    param = SWEEP_ALIASES.get(config.sweep_param, config.sweep_param)
    return param, np.linspace(config.sweep_start, config.sweep_stop, config.sweep_steps)


def _safe(func: Callable[[], float]) -> float:
    try:
        return func()
    except InsufficientStatisticsError:
        return math.nan


def _tally_row(run_id: str, result: PulseTrainResult) -> Dict[str, Any]:
    return {"run_id": run_id, **result.as_row(),
            "g2": _safe(lambda: g2_from_counts(result).value), "car": _safe(lambda: car(result))}


# =============================================================================
# COMMANDS
# =============================================================================
def cmd_phasematch(config: ScenarioConfig, scenario: Scenario) -> Tuple[Frames, Summary]:
    fiber = scenario.fiber1
    pumps = np.linspace(config.phasematch_start_nm, config.phasematch_stop_nm, config.phasematch_steps)
    rows = []
    for pump, solution in tune_mi_sidebands(fiber.fiber, pumps, axes=fiber.mi_axes):
        wl = solution.quartet.wavelengths_nm()
        rows.append({"pump_nm": pump, "signal_nm": wl["s"], "idler_nm": wl["i"],
                     "residual_per_m": solution.residual_mismatch})
    point = solve_mi_sidebands(fiber.fiber, config.mi_pump_wavelength_nm, axes=fiber.mi_axes)
    wl = point.quartet.wavelengths_nm()
    summary = {"pump_nm": config.mi_pump_wavelength_nm, "signal_nm": wl["s"], "idler_nm": wl["i"],
               "energy_residual": point.quartet.energy_residual(), "rows": len(rows)}
    return {"phasematch": pd.DataFrame(rows, columns=["pump_nm", "signal_nm", "idler_nm", "residual_per_m"])}, summary


def cmd_translate(config: ScenarioConfig, scenario: Scenario) -> Tuple[Frames, Summary]:
    columns = ["z_m", "mu_re", "mu_im", "nu_re", "nu_im", "efficiency"]
    if config.sweep_param is None:
        coupler = scenario.coupler
        z = np.linspace(0.0, coupler.length, config.translate_z_steps)
        mu, nu = transfer_functions(coupler.delta, coupler.kappa, z)
        frame = pd.DataFrame({"z_m": z, "mu_re": mu.real, "mu_im": mu.imag,
                              "nu_re": nu.real, "nu_im": nu.imag, "efficiency": np.abs(nu) ** 2})
        summary = {"kappa_length": abs(coupler.kappa) * coupler.length,
                   "delta_length": coupler.delta * coupler.length,
                   "efficiency": conversion_efficiency(coupler)}
        return {"translate": frame[columns]}, summary

    param, values = sweep_values(config)
    rows = []
    for value in values:
        swept = with_overrides(config, **{param: value})
        p1, p2 = build_pumps(swept, scenario.fiber2)
        coupler = build_coupler(swept, scenario.fiber2, p1, p2, build_quartet(swept, scenario.fiber2))
        mu, nu = transfer_functions(coupler.delta, coupler.kappa, coupler.length)
        rows.append({param: value, "z_m": coupler.length, "mu_re": mu.real, "mu_im": mu.imag,
                     "nu_re": nu.real, "nu_im": nu.imag, "efficiency": abs(nu) ** 2})
    frame = pd.DataFrame(rows, columns=[param] + columns)
    best = frame.loc[frame["efficiency"].idxmax()]
    return {"translate": frame}, {"sweep_param": param, "peak_efficiency": best["efficiency"],
                                  f"peak_{param}": best[param]}


def cmd_acceptance(config: ScenarioConfig, scenario: Scenario) -> Tuple[Frames, Summary]:
    quartet = scenario.quartet
    spectrum = SpectralProfile.gaussian(quartet.wavelengths_nm()["s1"], config.acceptance_input_fwhm_nm,
                                        config.acceptance_span_nm, config.acceptance_step_nm)
    walkoff = config.acceptance_walkoff_s_per_m
    if walkoff is None:
        walkoff = derive_walkoff(scenario.coupler, spectrum, quartet, config.acceptance_target_fwhm_nm)
    result = acceptance_filter(scenario.coupler, spectrum, quartet, walkoff)

    source_rows = pd.DataFrame({"wavelength_nm": spectrum.wavelength_nm, "input": spectrum.power,
                                "translated": 0.0, "remainder": result.remainder.power})
    output_rows = pd.DataFrame({"wavelength_nm": result.translated.wavelength_nm, "input": 0.0,
                                "translated": result.translated.power, "remainder": 0.0})
    frame = pd.concat([output_rows, source_rows], ignore_index=True).sort_values("wavelength_nm", kind="stable")

    total_in = spectrum.integral()
    summary = {
        "walkoff_s_per_m": walkoff,
        "input_fwhm_nm": spectrum.fwhm("nm"),
        "translated_fwhm_nm": result.translated.fwhm("nm"),
        "input_fwhm_thz": spectrum.fwhm("thz"),
        "translated_fwhm_thz": result.translated.fwhm("thz"),
        "energy_residual": (result.translated.integral() + result.remainder.integral() - total_in) / total_in,
        "resampled": result.metadata["resampled"],
    }
    return {"acceptance": frame.reset_index(drop=True)}, summary


def _estimate(experiment: ExperimentResult, channel: str) -> G2Estimate:
    try:
        return experiment.g2(channel)
    except InsufficientStatisticsError:
        return G2Estimate(math.nan)


def _channel_summary(scenario: Scenario, experiment: ExperimentResult) -> Summary:
    """Per channel: measured g² with run scatter, merged CAR and the analytic expectations."""
    out = {}
    for channel in CHANNELS:
        expected = expected_tallies(scenario.source, scenario.coupler, scenario.detectors, scenario.noise, channel)
        estimate = _estimate(experiment, channel)
        out[channel] = {
            "g2": estimate.value,
            "g2_std_error": estimate.std_error,
            "g2_std_dev": estimate.std_dev,
            "car": _safe(lambda: car(experiment.merged[channel])),
            "expected_g2": _safe(lambda: expected_g2(expected)),
            "expected_car": _safe(lambda: expected_car(expected)),
        }
    return out


def _experiment(config: ScenarioConfig, scenario: Scenario) -> ExperimentResult:
    return run_experiment(scenario.source, scenario.coupler, scenario.detectors, scenario.noise,
                          config.n_runs, config.pulses_per_run, config.seed, scenario.decorrelate)


def cmd_g2(config: ScenarioConfig, scenario: Scenario) -> Tuple[Frames, Summary]:
    experiment = _experiment(config, scenario)
    frames = {}
    for ch in CHANNELS:
        rows = [_tally_row(str(i), run[ch]) for i, run in enumerate(experiment.runs)]
        rows.append(_tally_row("all", experiment.merged[ch]))
        frames[f"g2_{ch}"] = pd.DataFrame(rows)
    return frames, _channel_summary(scenario, experiment)


def cmd_efficiency(config: ScenarioConfig, scenario: Scenario) -> Tuple[Frames, Summary]:
    report = run_efficiency_protocol(scenario.source, scenario.coupler, scenario.detectors,
                                     scenario.noise, config.efficiency_pulses, config.seed)
    rows = []
    for run_id, result in (("pumps_on", report.pumps_on), ("pumps_off", report.pumps_off),
                           ("source_blocked", report.source_blocked)):
        for ch in CHANNELS:
            rows.append({"run_id": run_id, "channel": ch, **result[ch].as_row(), "counts": result[ch].counts})
    expected = conversion_efficiency(scenario.coupler)
    estimators = pd.DataFrame([
        {"estimator": "depletion", "value": report.depletion.value,
         "std_error": report.depletion.std_error, "expected": expected},
        {"estimator": "creation", "value": report.creation.value,
         "std_error": report.creation.std_error, "expected": expected},
    ])
    summary = {"expected": expected,
               "depletion": report.depletion.value, "depletion_std_error": report.depletion.std_error,
               "creation": report.creation.value, "creation_std_error": report.creation.std_error}
    return {"efficiency": pd.DataFrame(rows), "efficiency_estimators": estimators}, summary


def cmd_sweep(config: ScenarioConfig, scenario: Scenario) -> Tuple[Frames, Summary]:
    param, values = sweep_values(config)
    rows = []
    for value in values:
        swept = with_overrides(config, **{param: value})
        point = build_scenario(swept)
        experiment = _experiment(swept, point)
        for channel, stats in _channel_summary(point, experiment).items():
            rows.append({param: value, "channel": channel, "epsilon": point.source.epsilon, **stats})
        logger.info(f"🔄 {param}={value:.6g} done")
    return {"sweep": pd.DataFrame(rows)}, {"sweep_param": param, "points": len(values)}


HANDLERS = {
    "phasematch": cmd_phasematch,
    "translate": cmd_translate,
    "acceptance": cmd_acceptance,
    "g2": cmd_g2,
    "efficiency": cmd_efficiency,
    "sweep": cmd_sweep,
}


# =============================================================================
# OUTPUT
# =============================================================================
def write_csv(path: Path, frame: pd.DataFrame, digest: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# config_sha256={digest}\n")
        frame.to_csv(fh, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def write_summary(path: Path, command: str, config: ScenarioConfig, scenario: Scenario,
                  digest: str, results: Summary) -> None:
    payload = {"command": command, "config_sha256": digest, "config": config_to_dict(config),
               **scenario.provenance(), "results": results}
    path.write_bytes(orjson.dumps(payload, option=orjson.OPT_SORT_KEYS | orjson.OPT_INDENT_2
                                  | orjson.OPT_SERIALIZE_NUMPY, default=_json_default))


def _json_default(value: Any) -> Any:
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"not serializable: {type(value)}")


def render_summary(command: str, digest: str, results: Summary, artifacts: Sequence[Path]) -> None:
    table = Table(title=f"📊 {command} ({digest[:12]})", show_header=True, header_style="bold cyan")
    table.add_column("Quantity", style="bold")
    table.add_column("Value", justify="right")

    def add(prefix: str, data: Dict[str, Any]) -> None:
        for key, value in data.items():
            if isinstance(value, dict):
                add(f"{prefix}{key}.", value)
            elif isinstance(value, float):
                table.add_row(f"{prefix}{key}", f"{value:.6g}")
            else:
                table.add_row(f"{prefix}{key}", str(value))

    add("", results)
    for path in artifacts:
        table.add_row("artifact", str(path))
    console.print(table)


# =============================================================================
# ENTRY POINTS
# =============================================================================
def run_scenario(command: str, config: ScenarioConfig, quiet: bool = False) -> List[Path]:
    """Run one subcommand and write its artifacts; returns the written paths."""
    if command not in HANDLERS:
        raise ConfigError("cli.command", f"unknown command '{command}'")
    scenario = build_scenario(config)
    digest = config_hash(config, scenario.provenance())
    logger.info(f"🎬 {command}: scenario '{config.scenario_name}' seed={config.seed} hash={digest[:12]}")

    frames, results = HANDLERS[command](config, scenario)

    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    artifacts = []
    for name, frame in frames.items():
        path = out_dir / f"{name}.csv"
        write_csv(path, frame, digest)
        artifacts.append(path)
    summary_path = out_dir / "summary.json"
    write_summary(summary_path, command, config, scenario, digest, results)
    artifacts.append(summary_path)
    if not quiet:
        render_summary(command, digest, results, artifacts)
    return artifacts


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    source = common.add_mutually_exclusive_group()
    source.add_argument("--config", type=Path, help="scenario file (key=value)")
    source.add_argument("--scenario", help=f"named scenario in presets/ (default {DEFAULT_SCENARIO})")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--sweep", nargs=2, metavar=("PARAM", "START:STOP:STEPS"))
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")
    common.add_argument("--quiet", action="store_true", help="no summary table")

    parser = argparse.ArgumentParser(prog="bragg_qft",
                                     description="Bragg-scattering quantum frequency translation simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        sub.add_parser(command, parents=[common], help=(HANDLERS[command].__doc__ or command).strip())
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    values: Dict[str, Any] = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError("cli.set", f"expected KEY=VALUE, got '{item}'")
        values[key.strip()] = value.strip()
    if args.seed is not None:
        values["seed"] = args.seed
    if args.out is not None:
        values["output_dir"] = str(args.out)
    if args.sweep:
        start, stop, steps = parse_range(args.sweep[1])
        values.update(sweep_param=args.sweep[0], sweep_start=start, sweep_stop=stop, sweep_steps=steps)
    return values


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    log_setup.configure(verbose=args.verbose)
    try:
        overrides = _overrides(args)
        if args.config is not None:
            config = load_config(args.config, overrides)
        else:
            config = load_scenario(args.scenario or DEFAULT_SCENARIO, overrides)
        run_scenario(args.command, config, quiet=args.quiet)
    except ConfigError as e:
        logger.error(f"❌ Config error: {e}")
        console.print(Panel(str(e), title="❌ Config error", border_style="red"))
        return 2
    except BraggQftError as e:
        logger.error(f"❌ {type(e).__name__}: {e}")
        console.print(Panel(str(e), title=f"❌ {type(e).__name__}", border_style="red"))
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
