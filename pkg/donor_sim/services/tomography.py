"""Gate-set benchmark on the ionised {-5/2, -7/2} nuclear qubit.

Circuits are fiducial x germ^p x fiducial, as in gate set tomography, but the fiducials are
treated as ideal state preparation and measurement. Gates are reconstructed by linear
inversion of the length-one circuits; the long circuits feed a model-consistency check.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..models import StateLabel
from ..schemas import ValidationError
from .dynamics import two_level_propagator

logger = logging.getLogger(__name__)

QUBIT_ZERO = StateLabel(None, -2.5)
QUBIT_ONE = StateLabel(None, -3.5)

GATES = ("I", "X", "Y")
GATE_NAMES = {"I": "idle", "X": "x_pi2", "Y": "y_pi2"}
FIDUCIALS: Tuple[Tuple[str, ...], ...] = ((), ("X",), ("Y",), ("X", "X", "X"), ("Y", "Y", "Y"), ("X", "X"))
GERMS: Tuple[Tuple[str, ...], ...] = (("I",), ("X",), ("Y",), ("X", "Y"), ("X", "X", "Y"))
BOOTSTRAP_SAMPLES = 50

_PAULIS = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)
_ZERO = np.array([[1, 0], [0, 0]], dtype=complex)


@dataclass(frozen=True)
class GateErrors:
    """Injected coherent errors. Over-rotations in rad, detuning in Hz."""

    over_rotation: Mapping[str, float] = field(default_factory=dict)
    detuning_hz: float = 0.0
    gate_duration_s: float = 255e-6
    idle_detuning_hz: float = 1e6

    def __post_init__(self) -> None:
        unknown = set(self.over_rotation) - set(GATES)
        if unknown:
            raise ValidationError(f"Unknown gates: {sorted(unknown)}")
        if self.gate_duration_s <= 0 or self.idle_detuning_hz <= 0:
            raise ValidationError("Gate duration and idle detuning must be > 0")


@dataclass(frozen=True)
class GateEstimate:
    name: str
    ptm: np.ndarray
    fidelity: float
    uncertainty: float

    def model_dump(self) -> Dict[str, object]:
        return {
            "fidelity": self.fidelity,
            "uncertainty": self.uncertainty,
            "ptm": [float(v) for v in self.ptm.reshape(-1)],
        }


@dataclass(frozen=True)
class GateReport:
    gates: Dict[str, GateEstimate]
    circuits: int
    depth: int
    shots: Optional[int]
    max_deviation: float

    def model_dump(self) -> Dict[str, object]:
        return {
            "qubit": {"zero": str(QUBIT_ZERO), "one": str(QUBIT_ONE)},
            "circuits": self.circuits,
            "depth": self.depth,
            "shots": self.shots,
            "max_deviation": self.max_deviation,
            "gates": {GATE_NAMES[name]: estimate.model_dump() for name, estimate in self.gates.items()},
        }


def ideal_unitaries() -> Dict[str, np.ndarray]:
    c = s = math.sqrt(0.5)
    return {
        "I": np.eye(2, dtype=complex),
        "X": np.array([[c, -1j * s], [-1j * s, c]]),
        "Y": np.array([[c, -s], [s, c]], dtype=complex),
    }


def gate_unitaries(errors: GateErrors) -> Dict[str, np.ndarray]:
    """Rectangular-pulse unitaries in the qubit frame with the injected errors."""
    duration = errors.gate_duration_s
    nominal = 1.0 / (4.0 * duration)

    def rate(gate: str) -> float:
        return (math.pi / 2 + errors.over_rotation.get(gate, 0.0)) / (2 * math.pi * duration)

    # A far-detuned stimulus only leaves its light shift fR^2 / (2 D) behind.
    light_shift = nominal ** 2 / (2.0 * errors.idle_detuning_hz)
    idle_twist = errors.over_rotation.get("I", 0.0) / (2 * math.pi * duration)
    return {
        "I": two_level_propagator(errors.detuning_hz + light_shift + idle_twist, 0.0, 0.0, duration),
        "X": two_level_propagator(errors.detuning_hz, rate("X"), 0.0, duration),
        "Y": two_level_propagator(errors.detuning_hz, rate("Y"), -math.pi / 2, duration),
    }


def ptm(u: np.ndarray) -> np.ndarray:
    """Pauli transfer matrix R_ij = Tr(P_i U P_j U^dagger) / 2."""
    return np.array([[0.5 * np.real(np.trace(pi @ u @ pj @ u.conj().T)) for pj in _PAULIS] for pi in _PAULIS])


def average_fidelity(r: np.ndarray, ideal: np.ndarray, d: int = 2) -> float:
    process = float(np.trace(ideal.T @ r)) / d ** 2
    return min(max((d * process + 1.0) / (d + 1.0), 0.0), 1.0)


def unitary_fidelity(u: np.ndarray, v: np.ndarray) -> float:
    """(|Tr(U^dagger V)|^2 + d) / (d (d + 1))."""
    d = u.shape[0]
    return (abs(np.trace(u.conj().T @ v)) ** 2 + d) / (d * (d + 1))


def _sequence_unitary(gates: Sequence[str], table: Mapping[str, np.ndarray]) -> np.ndarray:
    u = np.eye(2, dtype=complex)
    for gate in gates:
        u = table[gate] @ u
    return u


def build_circuits(depth: int) -> List[Tuple[int, Tuple[str, ...], int, int]]:
    """(prep fiducial, germ, power, measurement fiducial) for base lengths 1, 2, 4 ... <= depth."""
    if depth < 1:
        raise ValidationError("depth L must be >= 1")
    lengths = [1]
    while lengths[-1] * 2 <= depth:
        lengths.append(lengths[-1] * 2)
    seen = set()
    circuits = []
    for length in lengths:
        for germ in GERMS:
            power = length // len(germ)
            if power < 1 or (germ, power) in seen:
                continue
            seen.add((germ, power))
            for prep in range(len(FIDUCIALS)):
                for meas in range(len(FIDUCIALS)):
                    circuits.append((prep, germ, power, meas))
    return circuits


def _frames() -> Tuple[np.ndarray, np.ndarray]:
    ideal = ideal_unitaries()
    states, effects = [], []
    for fiducial in FIDUCIALS:
        u = _sequence_unitary(fiducial, ideal)
        rho = u @ _ZERO @ u.conj().T
        states.append([np.real(np.trace(p @ rho)) for p in _PAULIS])
        effect = u.conj().T @ _ZERO @ u
        effects.append([0.5 * np.real(np.trace(effect @ p)) for p in _PAULIS])
    return np.array(states).T, np.array(effects)


def _predict(circuits, transfer: Mapping[str, np.ndarray]) -> np.ndarray:
    states, effects = _frames()
    out = np.empty(len(circuits))
    for k, (prep, germ, power, meas) in enumerate(circuits):
        vector = states[:, prep]
        for _ in range(power):
            for gate in germ:
                vector = transfer[gate] @ vector
        out[k] = effects[meas] @ vector
    return np.clip(out, 0.0, 1.0)


def _invert(circuits, observed: np.ndarray) -> Dict[str, np.ndarray]:
    states, effects = _frames()
    left, right = np.linalg.pinv(effects), np.linalg.pinv(states)
    index = {(prep, germ, power, meas): k for k, (prep, germ, power, meas) in enumerate(circuits)}
    estimates = {}
    size = len(FIDUCIALS)
    for gate in GATES:
        data = np.empty((size, size))
        for prep in range(size):
            for meas in range(size):
                data[meas, prep] = observed[index[(prep, (gate,), 1, meas)]]
        estimates[gate] = left @ data @ right
    return estimates


def gst_lite(
    gate_errors: GateErrors,
    shots: Optional[int],
    depth: int,
    seed: int = 0,
    *,
    bootstrap: int = BOOTSTRAP_SAMPLES,
) -> GateReport:
    """Simulate the circuit list, reconstruct the gates and score them against the ideals.

    ``shots=None`` uses exact probabilities.
    """
    if shots is not None and shots < 1:
        raise ValidationError("shots must be >= 1 or None")
    circuits = build_circuits(depth)
    truth = {gate: ptm(u) for gate, u in gate_unitaries(gate_errors).items()}
    exact = _predict(circuits, truth)
    rng = np.random.default_rng(seed)
    if shots is None:
        observed = exact
    else:
        observed = rng.binomial(shots, exact) / shots
    estimates = _invert(circuits, observed)
    ideals = {gate: ptm(u) for gate, u in ideal_unitaries().items()}
    fidelities = {gate: average_fidelity(estimates[gate], ideals[gate]) for gate in GATES}

    spread = {gate: 0.0 for gate in GATES}
    if shots is not None and bootstrap > 0:
        samples = {gate: [] for gate in GATES}
        clipped = np.clip(observed, 0.0, 1.0)
        for _ in range(bootstrap):
            resampled = rng.binomial(shots, clipped) / shots
            for gate, r in _invert(circuits, resampled).items():
                samples[gate].append(average_fidelity(r, ideals[gate]))
        spread = {gate: float(np.std(values, ddof=1)) for gate, values in samples.items()}

    deviation = float(np.max(np.abs(_predict(circuits, estimates) - observed)))
    logger.info("Gate benchmark: %d circuits, depth %d, max deviation %.2e", len(circuits), depth, deviation)
    gates = {
        gate: GateEstimate(GATE_NAMES[gate], estimates[gate], fidelities[gate], spread[gate]) for gate in GATES
    }
    return GateReport(gates=gates, circuits=len(circuits), depth=depth, shots=shots, max_deviation=deviation)
