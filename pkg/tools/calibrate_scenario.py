#!/usr/bin/env python3
"""
Print the values the paper_calibrated scenario derives from its anchors
(overlap -> |ν|², ε and noise means -> noise fractions and CAR) next to the
analytic g² and CAR predictions for both channels.
"""

import sys
from pathlib import Path

from rich.console import Console
from rich.table import Table

sys.path.insert(0, str(Path(__file__).parent.parent))

from bragg_qft.bs_translator import conversion_efficiency  # noqa: E402
from bragg_qft.config import load_scenario  # noqa: E402
from bragg_qft.counting import CHANNELS, expected_car, expected_g2, expected_tallies  # noqa: E402
from bragg_qft.errors import BraggQftError  # noqa: E402
from bragg_qft.mi_source import herald_rate_hz, mean_pairs  # noqa: E402
from bragg_qft.scenarios import build_scenario, noise_fraction  # noqa: E402

console = Console()


def main(name="paper_calibrated"):
    try:
        scenario = build_scenario(load_scenario(name))
    except BraggQftError as e:
        console.print(f"[red]❌ {e}[/red]")
        return 3

    source, coupler = scenario.source, scenario.coupler
    derived = Table(title=f"🔧 {name}: DERIVED parameters")
    derived.add_column("Quantity", style="bold")
    derived.add_column("Value", justify="right")
    derived.add_row("ε", f"{source.epsilon:.5f}")
    derived.add_row("mean pairs / pulse", f"{mean_pairs(source):.5f}")
    derived.add_row("herald rate", f"{herald_rate_hz(source):,.0f} Hz")
    derived.add_row("|κ|L", f"{abs(coupler.kappa) * coupler.length:.4f}")
    derived.add_row("|ν|²", f"{conversion_efficiency(coupler):.4f}")
    derived.add_row("noise mean s1", f"{scenario.noise.s1_mean:.4g}")
    derived.add_row("noise mean s2", f"{scenario.noise.s2_mean:.4g}")
    console.print(derived)

    predicted = Table(title="📊 Analytic predictions")
    for column in ("Channel", "Noise fraction", "g²(0)", "CAR"):
        predicted.add_column(column, justify="right")
    for channel in CHANNELS:
        tallies = expected_tallies(source, coupler, scenario.detectors, scenario.noise, channel)
        fraction = noise_fraction(source, coupler, scenario.detectors, scenario.noise, channel)
        predicted.add_row(channel, f"{fraction:.3f}", f"{expected_g2(tallies):.3f}",
                          f"{expected_car(tallies):.2f}")
    console.print(predicted)
    return 0


if __name__ == "__main__":
    sys.exit(main(*sys.argv[1:2]))
