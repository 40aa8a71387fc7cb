"""Spin operators, tensor products and the labelled dense eigensolver."""
from __future__ import annotations

import logging
from functools import lru_cache
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import linalg
from scipy.optimize import linear_sum_assignment

from ..models import EigenSystem, HermitianOperator, SpinOperatorSet, StateLabel
from ..schemas import ValidationError, require_half_integer

logger = logging.getLogger(__name__)

LABEL_OVERLAP_THRESHOLD = 0.7


@lru_cache(maxsize=16)
def _ladder(spin: float) -> SpinOperatorSet:
    dim = int(round(2 * spin)) + 1
    m = spin - np.arange(dim)
    iz = np.diag(m).astype(complex)
    iplus = np.zeros((dim, dim), dtype=complex)
    # Row k holds |m_k>; I+ maps column k+1 (m-1) onto row k (m).
    for k in range(dim - 1):
        lower = m[k + 1]
        iplus[k, k + 1] = np.sqrt(spin * (spin + 1) - lower * (lower + 1))
    iminus = iplus.conj().T
    ix = (iplus + iminus) / 2
    iy = (iplus - iminus) / 2j
    for matrix in (ix, iy, iz, iplus, iminus):
        matrix.setflags(write=False)
    return SpinOperatorSet(spin=spin, ix=ix, iy=iy, iz=iz, iplus=iplus, iminus=iminus)


def spin_operators(spin: float) -> SpinOperatorSet:
    """Return Ix, Iy, Iz, I+ and I- for ``spin`` with Iz descending from +spin."""
    value = require_half_integer(spin, "spin")
    if value < 0:
        raise ValidationError("Spin must be non-negative")
    return _ladder(value)


def operator(matrix: np.ndarray, ops: SpinOperatorSet) -> HermitianOperator:
    return HermitianOperator(np.asarray(matrix, dtype=complex), ops.basis)


def kron(a: HermitianOperator, b: HermitianOperator) -> HermitianOperator:
    """Tensor product; the left factor is read as the electron when both carry labels."""
    basis: Optional[Tuple[StateLabel, ...]] = None
    if a.basis is not None and b.basis is not None:
        basis = tuple(StateLabel(left.m_i, right.m_i) for left in a.basis for right in b.basis)
    return HermitianOperator(np.kron(a.entries, b.entries), basis)


def product_basis(electron_spin: float, nuclear_spin: float) -> Tuple[StateLabel, ...]:
    electron = spin_operators(electron_spin).projections
    nucleus = spin_operators(nuclear_spin).projections
    return tuple(StateLabel(ms, mi) for ms in electron for mi in nucleus)


def _fix_phases(vectors: np.ndarray) -> np.ndarray:
    fixed = vectors.copy()
    for k in range(fixed.shape[1]):
        column = fixed[:, k]
        pivot = int(np.argmax(np.abs(column)))
        value = column[pivot]
        if abs(value) > 0:
            fixed[:, k] = column * (np.conj(value) / abs(value))
    return fixed


def _assign_labels(overlaps: np.ndarray, basis: Sequence[StateLabel]) -> Tuple[StateLabel, ...]:
    # overlaps[j, k] = |<basis_j|v_k>|^2
    best = np.argmax(overlaps, axis=0)
    maxima = overlaps[best, np.arange(overlaps.shape[1])]
    if len(set(best.tolist())) == len(best) and float(np.min(maxima)) >= LABEL_OVERLAP_THRESHOLD:
        return tuple(basis[j] for j in best)
    logger.warning(
        "Strongly mixed eigenstates (min overlap %.3f); labelling by optimal assignment",
        float(np.min(maxima)),
    )
    rows, cols = linear_sum_assignment(-overlaps)
    labels: list[Optional[StateLabel]] = [None] * overlaps.shape[1]
    for row, col in zip(rows, cols):
        labels[col] = basis[row]
    return tuple(labels)  # type: ignore[arg-type]


def eigensystem(h: HermitianOperator) -> EigenSystem:
    """Diagonalise ``h``: ascending eigenvalues, phase-fixed vectors, product-basis labels."""
    if not h.is_hermitian():
        raise ValidationError("eigensystem() requires a Hermitian operator")
    matrix = (h.entries + h.entries.conj().T) / 2
    values, vectors = linalg.eigh(matrix)
    vectors = _fix_phases(vectors)
    labels = None
    overlaps = None
    if h.basis is not None:
        overlaps = np.abs(vectors) ** 2
        labels = _assign_labels(overlaps, h.basis)
    return EigenSystem(eigenvalues=values, eigenvectors=vectors, labels=labels, overlaps=overlaps)
