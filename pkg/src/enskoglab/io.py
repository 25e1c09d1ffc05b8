"""Plain-text output formats: JSON Lines event logs, CSV tables, run manifests.

Floats are written with ``repr`` so identical runs give identical bytes.
"""

from __future__ import annotations

import csv
import json
import platform
import sys
from pathlib import Path

import numpy as np

SNAPSHOT_HEADER = ["t", "particle", "qx", "qy", "qz", "wx", "wy", "wz"]
ENERGY_HEADER = ["t", "kinetic", "potential", "total"]
SCAN_HEADER = ["r_x", "r_y", "r_z", "v_x", "v_y", "v_z", "st_enskog", "st_boltzmann", "vlasov"]


def _f(x):
    return repr(float(x))


def write_events(path, events):
    """One JSON object per line, in event order."""
    with open(path, "w") as fh:
        for ev in events:
            fh.write(json.dumps(ev.to_record(), sort_keys=True) + "\n")


def read_events(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_snapshots(path, configs):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SNAPSHOT_HEADER)
        for cfg in configs:
            for k in range(cfg.N):
                w.writerow([_f(cfg.time), k, *map(_f, cfg.positions[k]), *map(_f, cfg.velocities[k])])


def write_table(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([x if isinstance(x, (int, np.integer, str)) else _f(x) for x in row])


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


def manifest(command, config, seed, outputs, wall_time, threads=1):
    from . import __version__

    return {
        "command": command,
        "config": config,
        "seed": seed,
        "threads": threads,
        "outputs": sorted(str(p) for p in outputs),
        "version": __version__,
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "platform": platform.platform(),
        "wall_time_s": wall_time,
    }
