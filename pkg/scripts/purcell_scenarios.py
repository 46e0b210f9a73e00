#!/usr/bin/env python3
"""Run the bundled emitter-cavity scenarios through the Purcell chain and
print the headline numbers side by side."""

import json
import subprocess
import sys

SCENARIOS = ("siv1", "siv3", "siv4")
FIELDS = (
    "f_p", "r_lambda", "r_mu", "r_r", "f_cav", "i_pl",
    "eta_qe_bulk", "eta_qe_phc", "eta_qe_cav", "beta_total", "beta_radiative",
)

rows = {}
for name in SCENARIOS:
    proc = subprocess.run(
        [sys.executable, "-m", "sivcav.cli", "purcell", "--scenario", name],
        capture_output=True, text=True, check=True,
    )
    rows[name] = json.loads(proc.stdout)["results"]

header = f"{'quantity':>16}" + "".join(f"{name:>12}" for name in SCENARIOS)
print(header)
print("-" * len(header))
for field in FIELDS:
    cells = []
    for name in SCENARIOS:
        entry = rows[name].get(field)
        cells.append(f"{entry['value']:12.4g}" if entry else f"{'-':>12}")
    print(f"{field:>16}" + "".join(cells))
for name in SCENARIOS:
    rates = rows[name].get("rates_phc")
    if rates:
        print(f"{name}: gamma_phc = {rates['value']['gamma_total'] / 1e6:.1f} MHz")
