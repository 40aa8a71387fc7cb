"""Allowed-transition enumeration and synthetic line spectra."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.signal import find_peaks

from ..models import EigenSystem, HermitianOperator, SpectrumLine, StateLabel, Transition
from ..schemas import ChargeState, DeviceParams, ElectronBranch, Mechanism, ValidationError
from .hamiltonians import static_hamiltonian, unit_drive_operator
from .spin_algebra import eigensystem

ELEMENT_THRESHOLD = 1e-9
TRANSITION_COLUMNS = ["mechanism", "from", "to", "frequency_hz", "matrix_element"]

SelectionRule = Callable[[StateLabel, StateLabel], bool]


def _same_electron(a: StateLabel, b: StateLabel) -> bool:
    return a.m_s == b.m_s


SELECTION_RULES: Dict[Mechanism, SelectionRule] = {
    Mechanism.NMR: lambda a, b: _same_electron(a, b) and abs(a.m_i - b.m_i) == 1,
    Mechanism.NER1: lambda a, b: _same_electron(a, b) and abs(a.m_i - b.m_i) == 1,
    Mechanism.NER2: lambda a, b: _same_electron(a, b) and abs(a.m_i - b.m_i) == 2,
    Mechanism.ESR: lambda a, b: a.m_s is not None and a.m_s != b.m_s and a.m_i == b.m_i,
    Mechanism.EDSR: lambda a, b: a.m_s is not None and a.m_s != b.m_s and a.total_m == b.total_m,
}


def transitions(
    es: EigenSystem,
    v_unit: HermitianOperator,
    mechanism: Mechanism,
    *,
    charge_state: Optional[ChargeState] = None,
    branch: Optional[ElectronBranch] = None,
    threshold: float = ELEMENT_THRESHOLD,
) -> List[Transition]:
    """Allowed transitions of ``mechanism`` sorted by frequency.

    A pair is allowed when its labels obey the mechanism's selection rule and the unit-drive
    matrix element exceeds ``threshold``. Hyperfine mixing in the neutral donor gives every
    operator small cross-branch elements; the label rule keeps those out.
    """
    mechanism = Mechanism.parse(mechanism)
    if not es.labeled:
        raise ValidationError("transitions() needs a labelled eigensystem")
    labels = es.labels
    assert labels is not None
    if charge_state is None:
        charge_state = ChargeState.IONISED if labels[0].m_s is None else ChargeState.NEUTRAL
    rule = SELECTION_RULES[mechanism]
    elements = np.abs(es.eigenvectors.conj().T @ v_unit.entries @ es.eigenvectors)
    found: List[Transition] = []
    for i in range(es.dim):
        for j in range(i + 1, es.dim):
            a, b = labels[i], labels[j]
            if not rule(a, b):
                continue
            if branch is not None and a.m_s != branch.m_s:
                continue
            element = float(elements[i, j])
            if element <= threshold:
                continue
            frequency = float(es.eigenvalues[j] - es.eigenvalues[i])
            if frequency <= 0:
                continue
            found.append(Transition(a, b, frequency, mechanism, element, charge_state))
    found.sort(key=lambda t: (t.frequency, t.upper_m))
    return found


def transitions_for(
    p: DeviceParams,
    mechanism: Mechanism,
    charge_state: ChargeState,
    *,
    branch: Optional[ElectronBranch] = None,
    threshold: float = ELEMENT_THRESHOLD,
) -> List[Transition]:
    """Diagonalise the static Hamiltonian and enumerate transitions in one call."""
    es = eigensystem(static_hamiltonian(charge_state, p))
    v_unit = unit_drive_operator(mechanism, charge_state, p)
    return transitions(es, v_unit, mechanism, charge_state=charge_state, branch=branch, threshold=threshold)


def candidate_pairs(
    es: EigenSystem, mechanism: Mechanism, *, branch: Optional[ElectronBranch] = None
) -> List[tuple[StateLabel, StateLabel]]:
    """Every label pair obeying the selection rule, whether or not the element vanishes."""
    if es.labels is None:
        raise ValidationError("candidate_pairs() needs a labelled eigensystem")
    rule = SELECTION_RULES[Mechanism.parse(mechanism)]
    ordered = sorted(es.labels, key=lambda label: es.energy(label))
    pairs = []
    for i, a in enumerate(ordered):
        for b in ordered[i + 1:]:
            if rule(a, b) and (branch is None or a.m_s == branch.m_s):
                pairs.append((a, b))
    pairs.sort(key=lambda pair: (max(pair[0].m_i, pair[1].m_i), pair[0].sort_key))
    return pairs


def nmr_plus_frequency(p: DeviceParams, m_i: float) -> float:
    """First-order NMR+ line between m_i - 1 and m_i."""
    _check_upper_m(p, m_i)
    return p.nuclear_zeeman + (m_i - 0.5) * p.fq_plus


def _check_upper_m(p: DeviceParams, m_i: float) -> None:
    labels = p.nuclear_labels
    if m_i not in labels or m_i == labels[-1]:
        raise ValidationError(f"m_I = {m_i} does not label the upper state of a Delta m = 1 pair")


@dataclass(frozen=True)
class SampledSpectrum:
    frequency: np.ndarray
    intensity: np.ndarray

    @property
    def empty(self) -> bool:
        return self.intensity.size == 0

    def peak_centers(self) -> np.ndarray:
        if self.empty:
            return np.zeros(0)
        peaks, _ = find_peaks(self.intensity)
        return self.frequency[peaks]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"frequency_hz": self.frequency, "intensity": self.intensity})


def line_shapes(lines: Sequence[Transition], fwhm: float) -> List[SpectrumLine]:
    """Unit-height power-broadened shapes centred on each transition."""
    if fwhm <= 0:
        raise ValidationError("fwhm must be > 0")
    return [SpectrumLine(center=line.frequency, fwhm=fwhm) for line in lines]


def lorentzian_sum(shapes: Sequence[SpectrumLine], grid: np.ndarray | Sequence[float]) -> SampledSpectrum:
    frequency = np.asarray(grid, dtype=float)
    if not shapes:
        return SampledSpectrum(np.zeros(0), np.zeros(0))
    centers = np.array([shape.center for shape in shapes])
    if frequency.size and (centers.min() < frequency.min() or centers.max() > frequency.max()):
        raise ValidationError("Frequency grid does not cover every line")
    heights = np.array([shape.height for shape in shapes])[:, None]
    half = np.array([shape.fwhm for shape in shapes])[:, None] / 2.0
    intensity = np.sum(heights / (1.0 + ((frequency[None, :] - centers[:, None]) / half) ** 2), axis=0)
    return SampledSpectrum(frequency, intensity)


def spectrum(lines: Sequence[Transition], fwhm: float, grid: np.ndarray | Sequence[float]) -> SampledSpectrum:
    """Sum of unit-height Lorentzians evaluated on ``grid``."""
    return lorentzian_sum(line_shapes(lines, fwhm), grid)


def default_grid(lines: Sequence[Transition], fwhm: float, points: int = 2001) -> np.ndarray:
    if not lines:
        return np.zeros(0)
    centers = [line.frequency for line in lines]
    margin = 5 * fwhm
    return np.linspace(min(centers) - margin, max(centers) + margin, points)


def transitions_frame(lines: Iterable[Transition]) -> pd.DataFrame:
    rows = [line.model_dump() for line in lines]
    return pd.DataFrame(rows, columns=TRANSITION_COLUMNS)
