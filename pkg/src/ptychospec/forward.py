"""Scanning-probe forward operator, its adjoint, and illumination weights.

Conventions: object-plane images have shape (rows, cols); per-energy
contrast stacks have shape (rows, cols, L); frame stacks have shape
(J, pr, pc) for one energy or (L, J, pr, pc) for all energies, where J is
the number of scan positions and (pr, pc) the probe patch shape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GeometryError
from .primitives import embed_patch_add, extract_patch, unitary_dft2


@dataclass(frozen=True, eq=False)
class ScanGeometry:
    """Ordered scan offsets shared by every energy channel.

    offsets: (J, 2) integer array of (row, col) patch origins.
    patch_shape / image_shape: (rows, cols) of probe patches and object.
    """

    offsets: np.ndarray
    patch_shape: tuple[int, int]
    image_shape: tuple[int, int]

    def __post_init__(self):
        offsets = np.atleast_2d(np.asarray(self.offsets, dtype=np.intp))
        if offsets.ndim != 2 or offsets.shape[1] != 2 or offsets.shape[0] < 1:
            raise GeometryError(f"offsets must form a (J, 2) array, got {offsets.shape}")
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "patch_shape", tuple(int(v) for v in self.patch_shape))
        object.__setattr__(self, "image_shape", tuple(int(v) for v in self.image_shape))
        pr, pc = self.patch_shape
        nr, nc = self.image_shape
        if pr < 1 or pc < 1 or pr > nr or pc > nc:
            raise GeometryError(f"patch {self.patch_shape} does not fit image {self.image_shape}")
        if len({(int(r), int(c)) for r, c in offsets}) != offsets.shape[0]:
            raise GeometryError("scan offsets must be unique")
        for r, c in offsets:
            if r < 0 or c < 0 or r + pr > nr or c + pc > nc:
                raise GeometryError(
                    f"offset ({r}, {c}) puts a {self.patch_shape} patch outside {self.image_shape}"
                )

    @property
    def num_positions(self) -> int:
        return self.offsets.shape[0]


def _check_probe(probe: np.ndarray, geom: ScanGeometry) -> None:
    if probe.shape != geom.patch_shape:
        raise ValueError(f"probe shape {probe.shape} != patch shape {geom.patch_shape}")


def ptycho_forward(probe: np.ndarray, image: np.ndarray, geom: ScanGeometry) -> np.ndarray:
    """Far-field frames DFT(probe * patch_j(image)) for every scan position."""
    probe = np.asarray(probe)
    image = np.asarray(image)
    _check_probe(probe, geom)
    if image.shape != geom.image_shape:
        raise ValueError(f"image shape {image.shape} != geometry {geom.image_shape}")
    exits = np.empty((geom.num_positions, *geom.patch_shape), dtype=np.complex128)
    for j, off in enumerate(geom.offsets):
        exits[j] = probe * extract_patch(image, off, geom.patch_shape)
    return unitary_dft2(exits)


def ptycho_adjoint(probe: np.ndarray, frames: np.ndarray, geom: ScanGeometry) -> np.ndarray:
    """Adjoint of the image argument: sum_j embed_j(conj(probe) * IDFT(frame_j))."""
    probe = np.asarray(probe)
    frames = np.asarray(frames)
    _check_probe(probe, geom)
    if frames.shape != (geom.num_positions, *geom.patch_shape):
        raise ValueError(f"frame stack shape {frames.shape} does not match geometry")
    exits = unitary_dft2(frames, inverse=True)
    out = np.zeros(geom.image_shape, dtype=np.complex128)
    conj_probe = np.conj(probe)
    for j, off in enumerate(geom.offsets):
        embed_patch_add(out, conj_probe * exits[j], off)
    return out


def object_denominator(probe: np.ndarray, geom: ScanGeometry) -> np.ndarray:
    """Illumination weight map sum_j embed_j(|probe|^2) over the object."""
    probe = np.asarray(probe)
    _check_probe(probe, geom)
    power = np.abs(probe) ** 2
    out = np.zeros(geom.image_shape)
    for off in geom.offsets:
        embed_patch_add(out, power, off)
    return out


def probe_denominator(contrast: np.ndarray, geom: ScanGeometry) -> np.ndarray:
    """Contrast weight map sum over energies and positions of |patch|^2.

    Accepts a (rows, cols, L) stack or a single (rows, cols) image.
    """
    stack = np.asarray(contrast)
    if stack.ndim == 2:
        stack = stack[..., None]
    if stack.ndim != 3 or stack.shape[:2] != geom.image_shape:
        raise ValueError(f"contrast shape {contrast.shape} does not match geometry")
    front = np.moveaxis(stack, -1, 0)  # (L, rows, cols) so patches slice trailing axes
    out = np.zeros(geom.patch_shape)
    for off in geom.offsets:
        patch = extract_patch(front, off, geom.patch_shape)
        out += np.sum(np.abs(patch) ** 2, axis=0)
    return out


def intensities(probe: np.ndarray, image: np.ndarray, geom: ScanGeometry) -> np.ndarray:
    """Squared modulus of the forward frames for one energy."""
    return np.abs(ptycho_forward(probe, image, geom)) ** 2
