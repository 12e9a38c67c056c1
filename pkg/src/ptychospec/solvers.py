"""Joint reconstruction of thickness maps, probe, and contrast stack.

Two joint solvers share one operator-splitting loop: "spa" consumes the
full complex spectrum dictionary, "spia" only its real (absorption) part.
Each iteration sweeps probe -> thickness -> contrast -> data frames and
then refreshes the two multiplier blocks. A sequential baseline
(:func:`two_step_baseline`) first runs blind ptychography with the
decomposition coupling switched off, then fits thicknesses per pixel
through the dictionary after removing the per-energy global phase.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DivergenceError, GeometryError
from .forward import (
    ScanGeometry,
    object_denominator,
    probe_denominator,
    ptycho_adjoint,
    ptycho_forward,
)
from .metrics import ConvergenceTrace
from .primitives import extract_patch, unitary_dft2
from .regularizers import (
    TvConfig,
    nonneg_projection,
    poisson_prox,
    probe_projection,
    total_variation,
    tv_prox,
)
from .spectra import Dictionary, DictionaryFactors

MODES = ("spa", "spia")
DIVERGENCE_LIMIT = 1e12


@dataclass(frozen=True)
class SolverConfig:
    """Penalty weights and iteration control for the solvers.

    data_penalty, coupling_penalty and tv_weight map to the CLI flags
    --lambda, --beta and --delta. A coupling_penalty of None picks
    0.1 * data_penalty * mean(object_denominator) from the initial probe.
    """

    data_penalty: float = 1.0
    coupling_penalty: float | None = None
    tv_weight: float = 0.0
    max_iterations: int = 100
    stop_tolerance: float = 0.0
    tv: TvConfig = field(default_factory=TvConfig)
    probe_reg_factor: float = 1e-3
    contrast_reg_factor: float = 1e-3

    def __post_init__(self):
        if self.data_penalty <= 0:
            raise ValueError("data_penalty must be > 0")
        if self.coupling_penalty is not None and self.coupling_penalty < 0:
            raise ValueError("coupling_penalty must be >= 0")
        if self.tv_weight < 0:
            raise ValueError("tv_weight must be >= 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.stop_tolerance < 0:
            raise ValueError("stop_tolerance must be >= 0")
        if self.probe_reg_factor <= 0 or self.contrast_reg_factor <= 0:
            raise ValueError("regularization factors must be > 0")


@dataclass
class SolverState:
    """Mutable per-run state; one logical owner mutates it between reads."""

    probe: np.ndarray                 # (pr, pc) complex, unit norm
    thickness: np.ndarray             # (rows, cols, C) float, >= 0
    contrast: np.ndarray              # (rows, cols, L) complex
    frame_estimates: np.ndarray       # (L, J, pr, pc) complex
    frame_multipliers: np.ndarray     # (L, J, pr, pc) complex
    thickness_multiplier: np.ndarray  # (rows, cols, C); complex for spa, real for spia
    iteration: int = 0
    trace: ConvergenceTrace = field(default_factory=ConvergenceTrace)

    @property
    def num_energies(self) -> int:
        return self.contrast.shape[-1]


def initialize(
    measurements: np.ndarray,
    factors: DictionaryFactors,
    geom: ScanGeometry,
    initial_probe: np.ndarray | None = None,
    real_coupling: bool = False,
) -> SolverState:
    """Starting state: unit contrast, data-seeded probe, zero multipliers.

    The default probe seed is the inverse transform of the mean root
    intensity over all frames; pass ``initial_probe`` to start from a known
    illumination instead.
    """
    data = np.asarray(measurements, dtype=float)
    if data.ndim != 4:
        raise ValueError("measurements must have shape (L, J, rows, cols)")
    if data.shape[1] != geom.num_positions or data.shape[2:] != geom.patch_shape:
        raise GeometryError(
            f"measurement shape {data.shape} does not match geometry "
            f"(J={geom.num_positions}, patch={geom.patch_shape})"
        )
    if not np.all(np.isfinite(data)) or np.any(data < 0):
        raise ValueError("measurements must be finite and nonnegative")
    num_energies = data.shape[0]
    if initial_probe is None:
        seed = np.sqrt(data).mean(axis=(0, 1))
        probe = probe_projection(unitary_dft2(seed.astype(np.complex128), inverse=True))
    else:
        probe = probe_projection(initial_probe)
    rows, cols = geom.image_shape
    contrast = np.ones((rows, cols, num_energies), dtype=np.complex128)
    frames = np.stack(
        [ptycho_forward(probe, contrast[..., l], geom) for l in range(num_energies)]
    )
    return SolverState(
        probe=probe,
        thickness=np.zeros((rows, cols, factors.num_components)),
        contrast=contrast,
        frame_estimates=frames,
        frame_multipliers=np.zeros_like(frames),
        thickness_multiplier=np.zeros(
            (rows, cols, factors.num_components),
            dtype=float if real_coupling else np.complex128,
        ),
    )


def _probe_step(state: SolverState, geom: ScanGeometry, reg_factor: float) -> np.ndarray:
    """Preconditioned least-squares step on the probe, before projection."""
    den = probe_denominator(state.contrast, geom)
    peak = float(den.max())
    if peak <= 0:
        raise GeometryError("illumination denominator vanished (zero contrast)")
    reg = reg_factor * peak
    num = reg * state.probe
    for l in range(state.num_energies):
        exits = unitary_dft2(
            state.frame_estimates[l] + state.frame_multipliers[l], inverse=True
        )
        for j, off in enumerate(geom.offsets):
            num += exits[j] * np.conj(
                extract_patch(state.contrast[..., l], off, geom.patch_shape)
            )
    return num / (den + reg)


def probe_update(state: SolverState, geom: ScanGeometry, reg_factor: float) -> np.ndarray:
    """One preconditioned descent step on the probe, then renormalize."""
    return probe_projection(_probe_step(state, geom, reg_factor))


def _denoise_nonneg(fitted: np.ndarray, smoothing: float, tv_cfg: TvConfig) -> np.ndarray:
    if smoothing > 0:
        out = np.empty_like(fitted)
        for c in range(fitted.shape[-1]):
            out[..., c] = tv_prox(fitted[..., c], smoothing, tv_cfg)
        fitted = out
    return nonneg_projection(fitted)


def thickness_update_spa(
    contrast: np.ndarray,
    multiplier: np.ndarray,
    factors: DictionaryFactors,
    smoothing: float,
    tv_cfg: TvConfig,
) -> np.ndarray:
    """Thickness from the complex-dictionary split: fit, denoise, clip.

    smoothing is the TV weight divided by the coupling penalty; zero skips
    the denoiser entirely.
    """
    fitted = np.real((contrast - 1.0) @ factors.pinv - multiplier)
    return _denoise_nonneg(fitted, smoothing, tv_cfg)


def thickness_update_spia(
    contrast: np.ndarray,
    multiplier: np.ndarray,
    factors: DictionaryFactors,
    smoothing: float,
    tv_cfg: TvConfig,
) -> np.ndarray:
    """Real-dictionary variant: only the real contrast drives the fit."""
    fitted = np.real(contrast - 1.0) @ factors.pinv - multiplier
    return _denoise_nonneg(fitted, smoothing, tv_cfg)


def _backprojected_frames(state: SolverState, geom: ScanGeometry) -> np.ndarray:
    stack = np.empty(geom.image_shape + (state.num_energies,), dtype=np.complex128)
    for l in range(state.num_energies):
        stack[..., l] = ptycho_adjoint(
            state.probe, state.frame_multipliers[l] + state.frame_estimates[l], geom
        )
    return stack


def contrast_update_spa(
    state: SolverState,
    factors: DictionaryFactors,
    geom: ScanGeometry,
    data_penalty: float,
    coupling_penalty: float,
    reg_factor: float,
) -> np.ndarray:
    """Closed-form contrast solve in the dictionary eigenbasis.

    The per-pixel normal equations couple energies only through the Gram
    matrix of the pseudo-inverse; rotating into its eigenbasis makes the
    system diagonal, so one pointwise division solves it exactly.
    """
    weights = object_denominator(state.probe, geom)
    reg = reg_factor * data_penalty * float(weights.max())
    rhs = data_penalty * _backprojected_frames(state, geom) + reg * state.contrast
    if coupling_penalty != 0.0:
        target = state.thickness_multiplier + state.thickness + factors.pinv.sum(axis=0)
        rhs = rhs + coupling_penalty * (target @ factors.pinv.conj().T)
    rotated = rhs @ factors.basis
    denom = data_penalty * weights[..., None] + reg + coupling_penalty * factors.eigenvalues
    return (rotated / denom) @ factors.basis.conj().T


def contrast_update_spia(
    state: SolverState,
    factors: DictionaryFactors,
    geom: ScanGeometry,
    data_penalty: float,
    coupling_penalty: float,
    reg_factor: float,
) -> np.ndarray:
    """Split contrast solve for the real-dictionary mode.

    The real part goes through the real eigenbasis exactly as in the
    complex solve; the imaginary part is unconstrained by the dictionary
    and reduces to a pointwise division.
    """
    weights = object_denominator(state.probe, geom)
    reg = reg_factor * data_penalty * float(weights.max())
    back = _backprojected_frames(state, geom)
    pointwise = data_penalty * weights[..., None] + reg
    imag = (data_penalty * back.imag + reg * state.contrast.imag) / pointwise
    rhs = data_penalty * back.real + reg * state.contrast.real
    if coupling_penalty != 0.0:
        target = state.thickness_multiplier + state.thickness + factors.pinv.sum(axis=0)
        rhs = rhs + coupling_penalty * (target @ factors.pinv.T)
    rotated = rhs @ factors.basis
    denom = pointwise + coupling_penalty * factors.eigenvalues
    real = (rotated / denom) @ factors.basis.T
    return real + 1j * imag


def _modeled_frames(state: SolverState, geom: ScanGeometry) -> np.ndarray:
    return np.stack(
        [
            ptycho_forward(state.probe, state.contrast[..., l], geom)
            for l in range(state.num_energies)
        ]
    )


def _fitted_thickness(contrast: np.ndarray, factors: DictionaryFactors, mode: str) -> np.ndarray:
    if mode == "spa":
        return (contrast - 1.0) @ factors.pinv
    return np.real(contrast - 1.0) @ factors.pinv


def _guarded_successive(current: np.ndarray, previous: np.ndarray) -> float:
    norm = float(np.linalg.norm(current))
    if norm == 0:
        return np.inf
    return float(np.linalg.norm(np.asarray(current) - previous)) / norm


def _objective(tv_weight: float, thickness: np.ndarray, modeled: np.ndarray, measurements: np.ndarray) -> float:
    """Monitoring objective: TV of each channel plus the photon fidelity."""
    value = 0.0
    if tv_weight > 0:
        value += tv_weight * sum(
            total_variation(thickness[..., c]) for c in range(thickness.shape[-1])
        )
    power = np.abs(modeled) ** 2
    logs = np.where(
        measurements > 0,
        measurements * np.log(np.maximum(power, 1e-300)),
        0.0,
    )
    return value + 0.5 * float(np.sum(power - logs))


def _check_finite(state: SolverState) -> None:
    for name in ("probe", "thickness", "contrast", "frame_estimates", "frame_multipliers", "thickness_multiplier"):
        block = getattr(state, name)
        norm = np.linalg.norm(block.ravel())
        if not np.isfinite(norm) or norm > DIVERGENCE_LIMIT:
            raise DivergenceError(state.iteration, f"{name} norm {norm:.3e}")


def admm_iteration(
    state: SolverState,
    measurements: np.ndarray,
    cfg: SolverConfig,
    factors: DictionaryFactors,
    geom: ScanGeometry,
    mode: str = "spa",
) -> SolverState:
    """One full update sweep; appends diagnostics and returns the state."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    beta = cfg.coupling_penalty
    if beta is None:
        raise ValueError("coupling_penalty must be resolved before iterating")
    if cfg.tv_weight > 0 and beta == 0:
        raise ValueError("tv_weight > 0 requires a positive coupling_penalty")
    smoothing = cfg.tv_weight / beta if cfg.tv_weight > 0 else 0.0
    lam = cfg.data_penalty
    started = time.perf_counter()
    previous_thickness = state.thickness

    state.probe = probe_update(state, geom, cfg.probe_reg_factor)
    if mode == "spa":
        state.thickness = thickness_update_spa(
            state.contrast, state.thickness_multiplier, factors, smoothing, cfg.tv
        )
        state.contrast = contrast_update_spa(
            state, factors, geom, lam, beta, cfg.contrast_reg_factor
        )
    else:
        state.thickness = thickness_update_spia(
            state.contrast, state.thickness_multiplier, factors, smoothing, cfg.tv
        )
        state.contrast = contrast_update_spia(
            state, factors, geom, lam, beta, cfg.contrast_reg_factor
        )
    modeled = _modeled_frames(state, geom)
    state.frame_estimates = poisson_prox(
        modeled - state.frame_multipliers, measurements, lam
    )
    state.frame_multipliers = state.frame_multipliers + state.frame_estimates - modeled
    state.thickness_multiplier = state.thickness_multiplier + state.thickness - _fitted_thickness(
        state.contrast, factors, mode
    )
    state.iteration += 1
    _check_finite(state)
    state.trace.append(
        _guarded_successive(state.thickness, previous_thickness),
        _objective(cfg.tv_weight, state.thickness, modeled, measurements),
        time.perf_counter() - started,
    )
    return state


def _factors_for_mode(dictionary, mode: str) -> DictionaryFactors:
    matrix = dictionary.matrix if isinstance(dictionary, Dictionary) else np.asarray(dictionary)
    if mode == "spa":
        return DictionaryFactors.from_matrix(matrix)
    if mode == "spia":
        return DictionaryFactors.from_real_matrix(np.real(matrix))
    raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


def _resolve_config(cfg: SolverConfig, state: SolverState, geom: ScanGeometry) -> SolverConfig:
    if cfg.coupling_penalty is None:
        weights = object_denominator(state.probe, geom)
        cfg = replace(cfg, coupling_penalty=0.1 * cfg.data_penalty * float(weights.mean()))
    if cfg.tv_weight > 0 and cfg.coupling_penalty == 0:
        raise ValueError("tv_weight > 0 requires a positive coupling_penalty")
    return cfg


def run_solver(
    measurements: np.ndarray,
    dictionary,
    geom: ScanGeometry,
    cfg: SolverConfig,
    mode: str = "spa",
    initial_probe: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, ConvergenceTrace]:
    """Iterate the joint solver to max_iterations or the stop tolerance.

    Stops early once the successive thickness error falls below
    cfg.stop_tolerance (a tolerance of zero disables early stopping).
    Returns (thickness, probe, contrast, trace).
    """
    factors = _factors_for_mode(dictionary, mode)
    state = initialize(
        measurements, factors, geom,
        initial_probe=initial_probe,
        real_coupling=(mode == "spia"),
    )
    cfg = _resolve_config(cfg, state, geom)
    for _ in range(cfg.max_iterations):
        admm_iteration(state, measurements, cfg, factors, geom, mode)
        if cfg.stop_tolerance > 0 and state.trace.successive_errors[-1] < cfg.stop_tolerance:
            break
    return state.thickness, state.probe, state.contrast, state.trace


def phase_align(contrast_image: np.ndarray) -> np.ndarray:
    """Remove the global phase: rotate so the mean value points along +1.

    Solves argmin_t ||exp(-it) Y - 1||^2. When the mean is exactly zero the
    rotation is undefined; the input is returned unrotated with a warning.
    """
    y = np.asarray(contrast_image, dtype=np.complex128)
    pivot = y.sum()
    if pivot == 0:
        warnings.warn(
            "global phase undefined (zero mean contrast); skipping alignment",
            RuntimeWarning,
            stacklevel=2,
        )
        return y.copy()
    return y * np.exp(-1j * np.angle(pivot))


def dictionary_fit(
    contrast: np.ndarray,
    factors: DictionaryFactors,
    real_dictionary: bool = False,
    align: bool = True,
) -> np.ndarray:
    """Spectral unmixing stage: per-energy phase alignment, then a clipped
    per-pixel least-squares fit through the dictionary pseudo-inverse."""
    y = np.asarray(contrast, dtype=np.complex128)
    if align:
        y = np.stack([phase_align(y[..., l]) for l in range(y.shape[-1])], axis=-1)
    if real_dictionary:
        fitted = np.real(y - 1.0) @ factors.pinv
    else:
        fitted = np.real((y - 1.0) @ factors.pinv)
    return nonneg_projection(fitted)


def two_step_baseline(
    measurements: np.ndarray,
    dictionary,
    geom: ScanGeometry,
    cfg: SolverConfig,
    real_dictionary: bool = False,
    align: bool = True,
    initial_probe: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, ConvergenceTrace]:
    """Blind ptychography with a shared probe, then a dictionary fit.

    Stage 1 runs the joint machinery with the decomposition coupling
    switched off (coupling penalty 0, no TV), which decouples the contrast
    update per energy; thickness and its multiplier never enter, so the
    trace follows the successive contrast error instead. Stage 2 aligns
    each energy's global phase and fits thicknesses per pixel. Uses the
    same iteration budget as the joint solvers for fair comparisons.
    Returns (thickness, probe, contrast, trace).
    """
    mode = "spia" if real_dictionary else "spa"
    factors = _factors_for_mode(dictionary, mode)
    state = initialize(
        measurements, factors, geom,
        initial_probe=initial_probe,
        real_coupling=real_dictionary,
    )
    lam = cfg.data_penalty
    for _ in range(cfg.max_iterations):
        started = time.perf_counter()
        previous = state.contrast
        state.probe = probe_update(state, geom, cfg.probe_reg_factor)
        state.contrast = contrast_update_spa(
            state, factors, geom, lam, 0.0, cfg.contrast_reg_factor
        )
        modeled = _modeled_frames(state, geom)
        state.frame_estimates = poisson_prox(
            modeled - state.frame_multipliers, measurements, lam
        )
        state.frame_multipliers = state.frame_multipliers + state.frame_estimates - modeled
        state.iteration += 1
        _check_finite(state)
        err = _guarded_successive(state.contrast, previous)
        state.trace.append(
            err,
            _objective(0.0, state.thickness, modeled, measurements),
            time.perf_counter() - started,
        )
        if cfg.stop_tolerance > 0 and err < cfg.stop_tolerance:
            break
    thickness = dictionary_fit(
        state.contrast, factors, real_dictionary=real_dictionary, align=align
    )
    return thickness, state.probe, state.contrast, state.trace
