"""Proximal operators and projections used by the solvers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateProbeError


@dataclass(frozen=True)
class TvConfig:
    """Inner-loop settings for the total-variation prox."""

    inner_iterations: int = 20
    dual_step: float = 0.125  # dual projection scheme converges for steps <= 0.25

    def __post_init__(self):
        if self.inner_iterations < 1:
            raise ValueError("inner_iterations must be >= 1")
        if not 0.0 < self.dual_step <= 0.25:
            raise ValueError("dual_step must lie in (0, 0.25]")


def _forward_diff(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # forward differences, Neumann boundary: last row/col difference is zero
    gr = np.zeros_like(u)
    gc = np.zeros_like(u)
    gr[:-1, :] = u[1:, :] - u[:-1, :]
    gc[:, :-1] = u[:, 1:] - u[:, :-1]
    return gr, gc


def _divergence(pr: np.ndarray, pc: np.ndarray) -> np.ndarray:
    # negative adjoint of _forward_diff
    div = np.zeros_like(pr)
    div[:-1, :] += pr[:-1, :]
    div[1:, :] -= pr[:-1, :]
    div[:, :-1] += pc[:, :-1]
    div[:, 1:] -= pc[:, :-1]
    return div


def total_variation(u: np.ndarray) -> float:
    """Isotropic TV with forward differences and Neumann boundary."""
    gr, gc = _forward_diff(np.asarray(u, dtype=float))
    return float(np.sum(np.sqrt(gr * gr + gc * gc)))


def tv_objective(u: np.ndarray, anchor: np.ndarray, weight: float) -> float:
    """Value of weight*TV(u) + 0.5*||u - anchor||^2."""
    diff = np.asarray(u, dtype=float) - np.asarray(anchor, dtype=float)
    return weight * total_variation(u) + 0.5 * float(np.sum(diff * diff))


def tv_prox(field: np.ndarray, weight: float, cfg: TvConfig = TvConfig()) -> np.ndarray:
    """Approximate argmin_u weight*TV(u) + 0.5*||u - field||^2 (isotropic TV).

    Fixed-step dual projection scheme with a fixed iteration count: inexact
    on purpose, the outer solvers tolerate it. Never returns an iterate with
    a worse objective than the input.
    """
    u0 = np.asarray(field, dtype=float)
    if weight < 0:
        raise ValueError("weight must be >= 0")
    if weight == 0.0 or u0.size == 0:
        return u0.copy()
    pr = np.zeros_like(u0)
    pc = np.zeros_like(u0)
    step = cfg.dual_step
    for _ in range(cfg.inner_iterations):
        gr, gc = _forward_diff(_divergence(pr, pc) - u0 / weight)
        scale = 1.0 + step * np.sqrt(gr * gr + gc * gc)
        pr = (pr + step * gr) / scale
        pc = (pc + step * gc) / scale
    out = u0 - weight * _divergence(pr, pc)
    if tv_objective(out, u0, weight) > tv_objective(u0, u0, weight):
        return u0.copy()
    return out


def poisson_prox(frames: np.ndarray, intensity: np.ndarray, penalty: float) -> np.ndarray:
    """Closed-form prox of the photon-counting likelihood, pointwise.

    Minimizes 0.5*(|z|^2 - I*log|z|^2) + (penalty/2)*|z - z0|^2 per pixel.
    The output keeps the phase of the input; the magnitude is the positive
    root of the stationarity quadratic (1+p) r^2 - p|z0| r - I = 0. Where
    the input is zero and I > 0 the phase is fixed to +1 so runs stay
    reproducible.
    """
    z0 = np.asarray(frames, dtype=np.complex128)
    data = np.asarray(intensity, dtype=float)
    if penalty <= 0:
        raise ValueError("penalty must be > 0")
    if data.shape != z0.shape:
        raise ValueError(f"intensity shape {data.shape} != frame shape {z0.shape}")
    if not np.all(np.isfinite(data)) or np.any(data < 0):
        raise ValueError("intensity must be finite and nonnegative")
    magnitude = np.abs(z0)
    rho = (
        np.sqrt(4.0 * (1.0 + penalty) * data + (penalty * magnitude) ** 2)
        + penalty * magnitude
    ) / (2.0 * (1.0 + penalty))
    safe = np.where(magnitude > 0, magnitude, 1.0)
    phase = np.where(magnitude > 0, z0 / safe, 1.0 + 0.0j)
    return rho * phase


def probe_projection(probe: np.ndarray) -> np.ndarray:
    """Scale the probe to unit Frobenius norm."""
    w = np.asarray(probe, dtype=np.complex128)
    norm = np.linalg.norm(w)
    if norm == 0 or not np.isfinite(norm):
        raise DegenerateProbeError("cannot normalize a zero or non-finite probe")
    return w / norm


def nonneg_projection(field: np.ndarray) -> np.ndarray:
    """Pointwise max(0, field)."""
    return np.maximum(np.asarray(field, dtype=float), 0.0)
