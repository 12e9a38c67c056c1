"""Unitary 2-D DFT and patch extract/embed primitives.

All functions are pure except :func:`embed_patch_add`, which accumulates
into a caller-owned buffer. Patches are always copied, never aliased.
"""

from __future__ import annotations

import numpy as np

from .errors import GeometryError


def unitary_dft2(field: np.ndarray, inverse: bool = False) -> np.ndarray:
    """2-D DFT over the trailing two axes with 1/sqrt(size) scaling both ways.

    The unitary normalization makes the transform norm-preserving and the
    inverse its exact adjoint. Leading axes are transformed independently.
    """
    field = np.asarray(field)
    if field.ndim < 2 or field.shape[-1] == 0 or field.shape[-2] == 0:
        raise ValueError(f"expected a nonempty 2-D field, got shape {field.shape}")
    if inverse:
        return np.fft.ifft2(field, norm="ortho")
    return np.fft.fft2(field, norm="ortho")


def _check_patch_bounds(image_shape, offset, patch_shape) -> tuple[int, int]:
    r, c = int(offset[0]), int(offset[1])
    pr, pc = int(patch_shape[0]), int(patch_shape[1])
    if r < 0 or c < 0 or r + pr > image_shape[-2] or c + pc > image_shape[-1]:
        raise GeometryError(
            f"{pr}x{pc} patch at offset ({r}, {c}) leaves image of shape "
            f"{image_shape[-2]}x{image_shape[-1]}"
        )
    return r, c


def extract_patch(image: np.ndarray, offset, patch_shape) -> np.ndarray:
    """Copy the contiguous sub-block of `image` starting at `offset`.

    No wraparound: the patch must fit entirely inside the image.
    """
    image = np.asarray(image)
    r, c = _check_patch_bounds(image.shape, offset, patch_shape)
    return image[..., r : r + patch_shape[0], c : c + patch_shape[1]].copy()


def embed_patch_add(accumulator: np.ndarray, patch: np.ndarray, offset) -> np.ndarray:
    """Add `patch` into `accumulator` at `offset`; adjoint of extract_patch.

    Mutates and returns `accumulator`. Parallel callers must supply their
    own accumulation buffers.
    """
    patch = np.asarray(patch)
    r, c = _check_patch_bounds(accumulator.shape, offset, patch.shape[-2:])
    accumulator[..., r : r + patch.shape[-2], c : c + patch.shape[-1]] += patch
    return accumulator
