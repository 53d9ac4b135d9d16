#!/usr/bin/env python3
"""
Default scenario: simulate one sensor, build patterns at 10..50 C, correlate
the 30 C flat-field queries and identify the capture temperature.

Usage: run_default_scenario.py OUT_DIR [SEED]
"""
import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1]))

import config  # noqa: E402
from cli import main  # noqa: E402

out = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else 'scenario')
seed = sys.argv[2] if len(sys.argv) > 2 else '0'
temps = [f't{t:.2f}' for t in config.SIM_TEMPERATURES_C]

steps = [
    ['simulate', '--out', str(out / 'sim'), '--seed', seed],
    ['fingerprint', *[str(out / 'sim' / 'cam0' / 'dark' / t) for t in temps], '--out', str(out / 'patterns')],
    ['correlate', str(out / 'sim' / 'cam0' / 'query' / 'lens0'), '--patterns', str(out / 'patterns'), '--out', str(out / 'corr')],
    ['estimate-temp', str(out / 'corr' / 'series.csv'), '--out', str(out / 'thermal')],
]
for args in steps:
    print('$ darksignal ' + ' '.join(args))
    code = main(args)
    if code:
        sys.exit(code)
print(f'Thermal fit: {out / "thermal" / "thermal_fit.json"}')
