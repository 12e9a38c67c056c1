"""Spectrum dictionary algebra and I/O.

A dictionary holds one reference contrast spectrum per material component:
a (C, L) matrix with components along rows and energies along columns.
The solvers consume its right pseudo-inverse and the eigendecomposition of
the pseudo-inverse Gram matrix.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import IllConditionedDictionaryError

DEFAULT_CONDITION_LIMIT = 1e8


@dataclass(frozen=True, eq=False)
class Dictionary:
    """Reference spectra: matrix (C, L), one labelled component per row.

    Energies are metadata only (plot axes, provenance); the solvers never
    read them.
    """

    matrix: np.ndarray
    labels: tuple[str, ...]
    energies: np.ndarray

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=np.complex128)
        if matrix.ndim != 2:
            raise ValueError("dictionary matrix must be 2-D")
        if matrix.shape[0] > matrix.shape[1]:
            raise ValueError(
                f"need at least as many energies as components, got {matrix.shape}"
            )
        if not np.all(np.isfinite(matrix)):
            raise ValueError("dictionary entries must be finite")
        if len(self.labels) != matrix.shape[0]:
            raise ValueError("one label per component row required")
        energies = np.asarray(self.energies, dtype=float)
        if energies.shape != (matrix.shape[1],):
            raise ValueError("one energy value per column required")
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "labels", tuple(str(l) for l in self.labels))
        object.__setattr__(self, "energies", energies)

    @property
    def num_components(self) -> int:
        return self.matrix.shape[0]

    @property
    def num_energies(self) -> int:
        return self.matrix.shape[1]


def pseudo_inverse(matrix: np.ndarray, cond_limit: float = DEFAULT_CONDITION_LIMIT) -> np.ndarray:
    """Right pseudo-inverse M^H (M M^H)^{-1} of a full-row-rank wide matrix."""
    m = np.asarray(matrix)
    if m.ndim != 2 or m.shape[0] > m.shape[1]:
        raise ValueError(f"expected a wide (C <= L) matrix, got shape {m.shape}")
    gram = m @ m.conj().T
    condition = float(np.linalg.cond(gram))
    if not np.isfinite(condition) or condition > cond_limit:
        raise IllConditionedDictionaryError(condition, cond_limit)
    return m.conj().T @ np.linalg.inv(gram)


def real_pseudo_inverse(matrix: np.ndarray, cond_limit: float = DEFAULT_CONDITION_LIMIT) -> np.ndarray:
    """Real-arithmetic variant of :func:`pseudo_inverse`."""
    m = np.asarray(matrix)
    if np.iscomplexobj(m):
        raise ValueError("expected a real matrix; pass matrix.real explicitly")
    return pseudo_inverse(m.astype(float), cond_limit)


def gram_eigendecomposition(pinv: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of pinv @ pinv^H: (unitary basis, eigenvalues).

    Eigenvalues are clipped to >= 0 and sorted descending; each basis
    column has its free phase fixed so its first significant entry is real
    positive, making the factorization reproducible across platforms.
    """
    p = np.asarray(pinv)
    if not np.all(np.isfinite(p)):
        raise ValueError("pseudo-inverse entries must be finite")
    gram = p @ p.conj().T
    gram = (gram + gram.conj().T) / 2.0
    eigenvalues, basis = np.linalg.eigh(gram)
    order = np.argsort(-eigenvalues, kind="stable")
    eigenvalues = np.clip(eigenvalues[order], 0.0, None)
    basis = basis[:, order].copy()
    for k in range(basis.shape[1]):
        column = basis[:, k]
        significant = np.abs(column) > 1e-12
        if not significant.any():
            continue
        pivot = column[np.argmax(significant)]
        basis[:, k] = column * (np.conj(pivot) / np.abs(pivot))
    return basis, eigenvalues


@dataclass(frozen=True, eq=False)
class DictionaryFactors:
    """Pseudo-inverse plus the eigenbasis used by the contrast solve.

    pinv: (L, C) right pseudo-inverse of the spectra matrix.
    basis/eigenvalues: eigendecomposition of pinv @ pinv^H, descending.
    """

    pinv: np.ndarray
    basis: np.ndarray
    eigenvalues: np.ndarray

    @classmethod
    def from_matrix(cls, matrix: np.ndarray, cond_limit: float = DEFAULT_CONDITION_LIMIT) -> "DictionaryFactors":
        pinv = pseudo_inverse(np.asarray(matrix, dtype=np.complex128), cond_limit)
        basis, eigenvalues = gram_eigendecomposition(pinv)
        return cls(pinv=pinv, basis=basis, eigenvalues=eigenvalues)

    @classmethod
    def from_real_matrix(cls, matrix: np.ndarray, cond_limit: float = DEFAULT_CONDITION_LIMIT) -> "DictionaryFactors":
        pinv = real_pseudo_inverse(matrix, cond_limit)
        basis, eigenvalues = gram_eigendecomposition(pinv)
        return cls(pinv=pinv, basis=basis, eigenvalues=eigenvalues)

    @property
    def num_components(self) -> int:
        return self.pinv.shape[1]


def contrast_from_thickness(thickness: np.ndarray, dictionary) -> np.ndarray:
    """Linearized per-energy transmission 1 + X @ D (shape rows, cols, L)."""
    matrix = dictionary.matrix if isinstance(dictionary, Dictionary) else np.asarray(dictionary)
    return 1.0 + np.asarray(thickness) @ matrix


def synthesize_dictionary(components: int, energies: int, seed: int) -> Dictionary:
    """Deterministic random dictionary with smooth, peaked absorption curves.

    Real parts are strictly positive (baseline plus Gaussian peaks);
    imaginary parts are smaller smooth dispersive-looking curves. Rows are
    distinct and the result always satisfies the conditioning precondition
    of :func:`pseudo_inverse`.
    """
    if components < 1 or energies < components:
        raise ValueError("need 1 <= components <= energies")
    rng = np.random.default_rng(seed)
    grid = np.linspace(0.0, 1.0, energies)
    rows = []
    for _ in range(components):
        real = np.full(energies, 0.2 + 0.3 * rng.random())
        for _ in range(2):
            center = rng.uniform(0.1, 0.9)
            width = rng.uniform(0.08, 0.25)
            real += rng.uniform(0.4, 1.0) * np.exp(-0.5 * ((grid - center) / width) ** 2)
        imag = np.zeros(energies)
        for _ in range(2):
            center = rng.uniform(0.1, 0.9)
            width = rng.uniform(0.1, 0.3)
            arg = (grid - center) / width
            imag += rng.uniform(-0.4, 0.4) * arg * np.exp(-0.5 * arg**2)
        rows.append(real + 1j * imag)
    dictionary = Dictionary(
        matrix=np.array(rows),
        labels=tuple(f"m{c}" for c in range(components)),
        energies=np.arange(energies, dtype=float),
    )
    pseudo_inverse(dictionary.matrix)  # fail fast on a degenerate draw
    return dictionary


def save_dictionary(dictionary: Dictionary, path) -> None:
    """Write the CSV layout: label, e0_re, e0_im, ..., one row per component."""
    path = Path(path)
    header = ["label"]
    for k in range(dictionary.num_energies):
        header += [f"e{k}_re", f"e{k}_im"]
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for label, row in zip(dictionary.labels, dictionary.matrix):
            record = [label]
            for value in row:
                record += [repr(float(value.real)), repr(float(value.imag))]
            writer.writerow(record)


def load_dictionary(path, energies: np.ndarray | None = None) -> Dictionary:
    """Read the CSV layout written by :func:`save_dictionary`.

    The format carries no energy values; pass them explicitly or accept
    column indices as placeholders.
    """
    path = Path(path)
    with path.open(newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty dictionary file") from None
        if not header or header[0].strip() != "label" or len(header) % 2 == 0:
            raise ValueError(f"{path}: malformed header {header!r}")
        num_energies = (len(header) - 1) // 2
        labels, rows = [], []
        for record in reader:
            if not record:
                continue
            if len(record) != 1 + 2 * num_energies:
                raise ValueError(f"{path}: row for {record[0]!r} has wrong width")
            labels.append(record[0])
            values = [float(v) for v in record[1:]]
            rows.append(np.array(values[0::2]) + 1j * np.array(values[1::2]))
    if not rows:
        raise ValueError(f"{path}: no component rows")
    if energies is None:
        energies = np.arange(num_energies, dtype=float)
    return Dictionary(matrix=np.array(rows), labels=tuple(labels), energies=energies)
