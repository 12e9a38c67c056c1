"""Reconstruction quality and convergence metrics."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import MetricUndefinedError

SNR_CAP_DB = 300.0


def _sum_sq(values: np.ndarray) -> float:
    return float(np.sum(np.abs(values) ** 2))


def snr(estimate: np.ndarray, reference: np.ndarray, denominator: str = "estimate") -> float:
    """-10 log10(||estimate - reference||^2 / ||estimate||^2) in dB.

    The signal norm is taken from the first argument; pass
    denominator="truth" to normalize by the reference instead. Capped at
    +300 dB so exact matches stay serializable.
    """
    a = np.asarray(estimate)
    b = np.asarray(reference)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if denominator not in ("estimate", "truth"):
        raise ValueError("denominator must be 'estimate' or 'truth'")
    base = a if denominator == "estimate" else b
    signal = _sum_sq(base)
    if signal == 0:
        raise MetricUndefinedError("SNR undefined for a zero signal")
    error = _sum_sq(a - b)
    if error == 0:
        return SNR_CAP_DB
    return float(min(-10.0 * np.log10(error / signal), SNR_CAP_DB))


def successive_error(current: np.ndarray, previous: np.ndarray) -> float:
    """Relative change ||current - previous|| / ||current||."""
    a = np.asarray(current)
    b = np.asarray(previous)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    norm = float(np.linalg.norm(a))
    if norm == 0:
        raise MetricUndefinedError("successive error undefined for a zero iterate")
    return float(np.linalg.norm(a - b)) / norm


def data_snr(clean: np.ndarray, noisy: np.ndarray) -> float:
    """Noise level of measured intensities: -10 log10(||noisy-clean||^2/||noisy||^2)."""
    c = np.asarray(clean)
    n = np.asarray(noisy)
    if c.shape != n.shape:
        raise ValueError(f"shape mismatch {c.shape} vs {n.shape}")
    signal = _sum_sq(n)
    if signal == 0:
        raise MetricUndefinedError("data SNR undefined for all-zero measurements")
    error = _sum_sq(n - c)
    if error == 0:
        return SNR_CAP_DB
    return float(min(-10.0 * np.log10(error / signal), SNR_CAP_DB))


@dataclass
class ConvergenceTrace:
    """Per-iteration diagnostics; the three lists always grow together."""

    successive_errors: list[float] = field(default_factory=list)
    objectives: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)

    def append(self, successive: float, objective: float, elapsed: float) -> None:
        self.successive_errors.append(float(successive))
        self.objectives.append(float(objective))
        self.seconds.append(float(elapsed))

    def __len__(self) -> int:
        return len(self.successive_errors)

    def save_csv(self, path) -> None:
        with Path(path).open("w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["iteration", "successive_error", "objective", "seconds"])
            rows = zip(self.successive_errors, self.objectives, self.seconds)
            for k, (err, obj, sec) in enumerate(rows):
                writer.writerow([k, repr(err), repr(obj), repr(sec)])
