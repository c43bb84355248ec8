"""File formats: JSON-lines traces, CSV summaries, JSON configs and reports."""

from __future__ import annotations

import csv
import json
import os
from typing import List, Optional

import numpy as np

from .errors import ConfigError, ModelError
from .model import TraceStep

_CSV_FIELDS = ["step", "perf_before", "perf_after", "bene_size", "neut_size",
               "chosen_index", "chosen_polarity", "forced", "failed",
               "perf_true", "in_target_set"]


def trace_jsonl_bytes(steps: List[TraceStep]) -> bytes:
    lines = [json.dumps(s.to_dict(), sort_keys=True) for s in steps]
    return ("\n".join(lines) + ("\n" if lines else "")).encode()


def write_trace_jsonl(path: str, steps: List[TraceStep]) -> None:
    with open(path, "wb") as fh:
        fh.write(trace_jsonl_bytes(steps))


def write_trace_csv(path: str, steps: List[TraceStep]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=_CSV_FIELDS)
        w.writeheader()
        for s in steps:
            w.writerow(s.to_dict())


def write_path_csv(path: str, coords_path: np.ndarray) -> None:
    """Organism coordinate trajectory, one row per step."""
    arr = np.asarray(coords_path, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step"] + [f"c{i}" for i in range(arr.shape[1])])
        for i, row in enumerate(arr):
            w.writerow([i] + [repr(float(v)) for v in row])


def write_json_report(path: str, report: dict) -> None:
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file is not valid JSON: {e}")
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    return cfg


def dump_config(cfg: dict) -> str:
    return json.dumps(cfg, indent=2, sort_keys=True)


def load_dataset_csv(path: str, dim_x: Optional[int] = None) -> tuple:
    """Read a dataset with a header row: condition columns then targets.

    Columns whose names start with ``x`` are conditions and columns starting
    with ``y`` are target outputs; alternatively ``dim_x`` splits the columns
    positionally.  Returns (X, Y) with Y possibly None.
    """
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except FileNotFoundError:
        raise ConfigError(f"dataset file not found: {path}")
    if len(rows) < 2:
        raise ConfigError("dataset needs a header row and at least one data row")
    header = [h.strip() for h in rows[0]]
    if dim_x is None:
        x_cols = [i for i, h in enumerate(header) if h.lower().startswith("x")]
        y_cols = [i for i, h in enumerate(header) if h.lower().startswith("y")]
        if not x_cols:
            raise ConfigError("dataset header has no condition columns (x...)")
    else:
        x_cols = list(range(dim_x))
        y_cols = list(range(dim_x, len(header)))
    try:
        data = np.array([[float(v) for v in row] for row in rows[1:]])
    except ValueError as e:
        raise ConfigError(f"dataset has a non-numeric entry: {e}")
    if not np.all(np.isfinite(data)):
        raise ModelError("dataset has non-finite entries")
    X = data[:, x_cols]
    Y = data[:, y_cols] if y_cols else None
    return X, Y


def ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path
