#!/usr/bin/env python3
"""Regenerate the bundled synthetic cavity field map.

The map is a smooth separable profile cos(pi x / L) cos(pi y / L) with
L = 390 nm on a 41 x 41 grid spanning +/-200 nm at 10 nm spacing. Grid nodes
are chosen so the bundled scenario positions land exactly on nodes:
(110, 0) gives |eps|^2 = cos^2(pi 110/390) ~= 0.400 and (130, 0) gives
cos^2(pi/3) = 0.25 exactly.
"""

import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from sivcav.models import FieldMap
from sivcav.purcell import save_field_map

L = 390.0
coords = np.arange(-200.0, 201.0, 10.0)
x, y = np.meshgrid(coords, coords)
grid = np.cos(np.pi * x / L) * np.cos(np.pi * y / L)

out = os.path.join(
    os.path.dirname(__file__), "..", "src", "sivcav", "scenarios", "o_mode_field.csv"
)
save_field_map(FieldMap(grid, 10.0, (-200.0, -200.0)), out)
print(f"wrote {os.path.normpath(out)} ({grid.shape[0]}x{grid.shape[1]} grid)")
