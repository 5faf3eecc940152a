"""Photon-count contrast and population normalization for measured data."""

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class CalibrationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ContrastRecord:
    I_sig_mean: float
    I_ref_mean: float
    I_sig_std: float = 0.0
    I_ref_std: float = 0.0
    n_datasets: int = 1

    def __post_init__(self):
        if self.n_datasets < 1:
            raise ValueError("n_datasets must be >= 1")
        if self.I_sig_std < 0 or self.I_ref_std < 0:
            raise ValueError("standard deviations must be >= 0")


def contrast(rec):
    """Return ``(C, dC)`` with C = (I_sig - I_ref)/I_ref and
    dC = (dI_sig*I_ref + dI_ref*I_sig)/I_sig**2."""
    if rec.I_ref_mean == 0:
        raise ValueError("reference mean is zero")
    if rec.I_sig_mean == 0:
        raise ValueError("signal mean is zero; contrast error undefined")
    c = (rec.I_sig_mean - rec.I_ref_mean) / rec.I_ref_mean
    dc = (rec.I_sig_std * rec.I_ref_mean + rec.I_ref_std * rec.I_sig_mean) / rec.I_sig_mean ** 2
    return float(c), float(dc)


def normalize_population(c, c_min, c_max):
    """Map contrast onto a |0> population: (C - C_min)/(C_max - C_min).

    Returns ``(population, in_range)``. Out-of-range values are kept and a
    CalibrationWarning is issued.
    """
    if not c_max > c_min:
        raise ValueError("calibration requires C_max > C_min")
    p = (np.asarray(c, dtype=float) - c_min) / (c_max - c_min)
    in_range = bool(np.all((p >= 0) & (p <= 1)))
    if not in_range:
        warnings.warn("population outside [0, 1]; calibration extremes exceeded",
                      CalibrationWarning, stacklevel=2)
    return (float(p) if np.ndim(p) == 0 else p), in_range


def records_from_counts(sig, ref):
    """ContrastRecord from repeated count datasets (axis 0 = dataset)."""
    sig = np.atleast_1d(np.asarray(sig, dtype=float))
    ref = np.atleast_1d(np.asarray(ref, dtype=float))
    n = len(sig)
    ddof = 1 if n > 1 else 0
    return ContrastRecord(float(sig.mean()), float(ref.mean()),
                          float(sig.std(ddof=ddof)), float(ref.std(ddof=ddof)), n)


FIELDS = ("I_sig_mean", "I_ref_mean", "I_sig_std", "I_ref_std", "n_datasets")


def read_count_records(path):
    """Read a CSV with an ``x`` column plus the ContrastRecord fields."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    if not rows:
        raise ValueError(f"{path}: no records")
    missing = [f for f in ("x",) + FIELDS[:2] if f not in rows[0]]
    if missing:
        raise ValueError(f"{path}: missing columns {missing}")
    xs, recs = [], []
    for k, row in enumerate(rows, start=2):
        try:
            xs.append(float(row["x"]))
            recs.append(ContrastRecord(
                float(row["I_sig_mean"]), float(row["I_ref_mean"]),
                float(row.get("I_sig_std") or 0.0), float(row.get("I_ref_std") or 0.0),
                int(float(row.get("n_datasets") or 1))))
        except ValueError as exc:
            raise ValueError(f"{path}:{k}: {exc}") from None
    return np.array(xs), recs


def write_normalized_csv(path, xs, cs, dcs, ps):
    path = Path(path)
    lines = ["x,contrast,contrast_err,population"]
    lines.extend(f"{x:.12g},{c:.9g},{d:.9g},{p:.9g}" for x, c, d, p in zip(xs, cs, dcs, ps))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_normalized_csv(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1], data[:, 2], data[:, 3]
