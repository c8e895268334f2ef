"""CSV and JSON writers shared by the CLI."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

SCHEMA = "# fracbridge-csv v1"
ECHO_PREFIX = "# cfg: "


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows, echo=None):
    """Write a CSV with the schema comment, an optional config echo and a header row."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        fh.write(SCHEMA + "\n")
        for line in echo or []:
            fh.write(ECHO_PREFIX + line + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])
    return path


def write_path_csv(path, sampled, echo=None):
    """Columns t, y1..yn for a single-realization path."""
    v = np.asarray(sampled.values).reshape(sampled.values.shape[0], -1)
    header = ["t"] + [f"y{i + 1}" for i in range(v.shape[1])]
    rows = ([t] + list(row) for t, row in zip(sampled.grid.times, v))
    return write_csv(path, header, rows, echo)


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_csv(path):
    """Header and rows of a CSV written by write_csv, comments skipped."""
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    r = list(csv.reader(lines))
    return r[0], r[1:]
