#!/usr/bin/env python3
"""Regenerate tests/data/golden_2x3.dsnf from the in-memory pattern it encodes."""
import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1]))

from models import ReferencePattern  # noqa: E402
from services.frame_io import save_pattern  # noqa: E402

target = pathlib.Path(__file__).resolve().parents[1] / 'tests' / 'data' / 'golden_2x3.dsnf'
pattern = ReferencePattern(
    data=[[0.5, -1.0, 0.0], [2.0, 0.25, 0.0]],
    mask=[[False, False, True], [False, False, True]],
    frame_count=100,
    temperature_c=30.5,
)
save_pattern(pattern, target)
print(f'Wrote {target} ({target.stat().st_size} bytes)')
