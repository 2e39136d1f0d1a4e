#!/usr/bin/env python3
"""
Fit the MI fiber preset to measured sidebands and rewrite presets/fiber1.env.

    python tools/fit_fiber_presets.py                       # built-in 808 nm point
    python tools/fit_fiber_presets.py --points tuning.csv   # pump_nm,signal_nm,idler_nm
    python tools/fit_fiber_presets.py --dry-run
"""

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import pandas as pd
from rich.console import Console
from rich.table import Table

sys.path.insert(0, str(Path(__file__).parent.parent))

from bragg_qft.config import dump_fiber_preset, load_fiber_preset, preset_dir  # noqa: E402
from bragg_qft.dispersion import fit_fiber_to_points, solve_mi_sidebands  # noqa: E402
from bragg_qft.errors import BraggQftError  # noqa: E402

console = Console()

# Measured MI operating point: 808 nm pump -> 683 nm signal, 989 nm idler
MEASURED_POINTS = [(808.0, 683.0, 989.0)]


def load_points(path):
    if path is None:
        return MEASURED_POINTS
    frame = pd.read_csv(path, comment="#")
    return list(frame[["pump_nm", "signal_nm", "idler_nm"]].itertuples(index=False, name=None))


def main():
    parser = argparse.ArgumentParser(description="Fit beta4 and birefringence of the MI fiber preset")
    parser.add_argument("--preset", default="fiber1")
    parser.add_argument("--points", type=Path, help="CSV with pump_nm,signal_nm,idler_nm")
    parser.add_argument("--free", default="beta4,birefringence_dn")
    parser.add_argument("--dry-run", action="store_true", help="print only, do not rewrite the preset")
    args = parser.parse_args()

    try:
        preset = load_fiber_preset(args.preset)
        points = load_points(args.points)
        fit = fit_fiber_to_points(points, preset.fiber, free=args.free.split(","), axes=preset.mi_axes)
    except BraggQftError as e:
        console.print(f"[red]❌ Fit failed: {e}[/red]")
        return 3

    table = Table(title=f"🔧 {args.preset}: fitted tuning points (RMS {fit.rms_residual_nm:.3g} nm)")
    for column in ("Pump nm", "Signal nm", "Fit", "Idler nm", "Fit"):
        table.add_column(column, justify="right")
    for pump, signal, idler in points:
        wl = solve_mi_sidebands(fit.fiber, pump, axes=preset.mi_axes).quartet.wavelengths_nm()
        table.add_row(f"{pump:.1f}", f"{signal:.1f}", f"{wl['s']:.2f}", f"{idler:.1f}", f"{wl['i']:.2f}")
    console.print(table)

    if args.dry_run:
        return 0
    fitted = replace(preset, fiber=fit.fiber)
    header = (f"MI source fiber; {', '.join(fit.free)} DERIVED by tools/fit_fiber_presets.py\n"
              f"from {fit.n_points} measured point(s), RMS residual {fit.rms_residual_nm:.3g} nm")
    path = preset_dir() / f"{args.preset}.env"
    path.write_text(dump_fiber_preset(fitted, header), encoding="utf-8")
    console.print(f"✅ Wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
