"""Delimited report writers: CSV for tables/curves, JSON for nested
summaries, binary PGM (P5) for heatmaps.

PGM mapping is linear with error rate 0.0 -> 0 and 1.0 -> 255, rounded
to nearest; values outside [0,1] are clipped first.
"""

import csv
import json
import math

import numpy as np

from .errors import ConfigError
from .train import LOG_COLUMNS


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fmt(x):
    if isinstance(x, float):
        return "nan" if math.isnan(x) else repr(x)
    return x


def write_training_log(path, step_logs):
    rows = [[s.step, s.epoch, _fmt(s.lr), _fmt(s.loss_main), _fmt(s.loss_aux),
             _fmt(s.loss_total)] for s in step_logs]
    write_csv(path, LOG_COLUMNS, rows)


def write_corruption_report(path_csv, path_json, report):
    rows = []
    for i, name in enumerate(report.names):
        for s in range(5):
            rows.append([name, s + 1, _fmt(float(report.errors[i, s]))])
    write_csv(path_csv, ("corruption", "severity", "error"), rows)
    payload = {
        "uce": report.uce,
        "mean_uce": report.mean_uce,
        "ce": report.ce,
        "provenance": report.provenance,
    }
    write_json(path_json, payload)


def write_lambda_curve(path, rows):
    """rows: (lambda, accuracy) or (lambda, accuracy, mean_uce)."""
    header = ("lambda", "accuracy", "mean_uce")[:len(rows[0])] if rows else \
        ("lambda", "accuracy")
    write_csv(path, header, [[_fmt(float(v)) for v in r] for r in rows])


def write_fourier_csv(path, fmap):
    """Centered grid, one row per spatial-frequency row."""
    grid = fmap.centered
    rows = [[_fmt(float(v)) for v in row] for row in grid]
    write_csv(path, [f"f{j - grid.shape[1] // 2}" for j in range(grid.shape[1])], rows)


def write_lowpass_csv(path, curve):
    write_csv(path, ("bandwidth", "accuracy"), [[b, _fmt(float(a))] for b, a in curve])


def write_affinity_csv(path, rows):
    write_csv(path, ("policy", "affinity_pp"), [[n, _fmt(float(v))] for n, v in rows])


def write_pgm(path, grid):
    """8-bit binary PGM; grid values in [0,1] map linearly onto 0..255."""
    arr = np.asarray(grid, dtype=np.float64)
    if arr.ndim != 2:
        raise ConfigError(f"PGM wants a 2-D grid, got shape {arr.shape}")
    pixels = np.rint(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode())
        fh.write(pixels.tobytes())


def read_pgm(path):
    """Inverse of write_pgm, for golden tests."""
    with open(path, "rb") as fh:
        data = fh.read()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ConfigError(f"{path}: not a binary PGM")
    w, h = (int(t) for t in parts[1].split())
    maxval = int(parts[2])
    pixels = np.frombuffer(parts[3], dtype=np.uint8, count=h * w).reshape(h, w)
    return pixels, maxval
