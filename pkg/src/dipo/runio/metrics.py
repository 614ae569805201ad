"""Per-round metrics as CSV.

Floats are written with ``repr`` so they parse back exactly, independent of
locale; list-valued columns are joined with ``;``.
"""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Any

from ..rl.train import METRIC_FIELDS


def _fmt(value: Any) -> str:
    if isinstance(value, (list, tuple)):
        return ";".join(_fmt(v) for v in value)
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return repr(float(value))
    if hasattr(value, "item"):  # numpy scalar
        return _fmt(value.item())
    return str(value)


def metrics_append(path: str | Path, row: dict[str, Any]) -> None:
    """Append one row, writing the header first if the file is new or empty."""
    missing = [f for f in METRIC_FIELDS if f not in row]
    if missing:
        raise ValueError(f"metrics row lacks {missing}")
    path = Path(path)
    fresh = not path.exists() or path.stat().st_size == 0
    with open(path, "a", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        if fresh:
            w.writerow(METRIC_FIELDS)
        w.writerow([_fmt(row[k]) for k in METRIC_FIELDS])


def _parse(name: str, text: str):
    if name in ("round", "env_steps"):
        return int(text)
    if name == "per_goal_fractions":
        return [float(x) for x in text.split(";")] if text else []
    return float(text)


def read_metrics(path: str | Path) -> list[dict[str, Any]]:
    with open(path, newline="", encoding="utf-8") as f:
        return [{k: _parse(k, v) for k, v in row.items()} for row in csv.DictReader(f)]
