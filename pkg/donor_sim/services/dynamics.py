"""Driven dynamics: rotating-frame two-level model, full propagation and pulse sequences."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..models import HermitianOperator, QuantumState, StateLabel, Trajectory, Transition
from ..schemas import (
    ChargeState,
    DeviceParams,
    DriveSpec,
    Envelope,
    Mechanism,
    NoiseModel,
    ValidationError,
)
from . import coherence
from .hamiltonians import amplitude_factor, drive_operator, static_hamiltonian, unit_drive_operator
from .spin_algebra import eigensystem

logger = logging.getLogger(__name__)

STEPS_PER_PERIOD = 20
DRAW_CHUNK = 256

TwoLevels = Union[Transition, Tuple[StateLabel, StateLabel]]


# --- rotating-frame two-level model -------------------------------------------------------------

def two_level_propagator(detuning, f_rabi, phase: float, duration: float) -> np.ndarray:
    """exp(-2 pi i H T) for H = [[-D/2, (fR/2)e^{i phase}], [(fR/2)e^{-i phase}, D/2]].

    ``detuning`` may be an array; the result then has shape (n, 2, 2).
    """
    d = np.asarray(detuning, dtype=float)
    fr = np.broadcast_to(np.asarray(f_rabi, dtype=float), d.shape)
    omega = np.hypot(d, fr)
    angle = np.pi * omega * duration
    with np.errstate(invalid="ignore", divide="ignore"):
        nz = np.where(omega > 0, -d / omega, 0.0)
        nx = np.where(omega > 0, fr / omega, 0.0)
    cos, sin = np.cos(angle), np.sin(angle)
    off = nx * np.exp(1j * phase)
    u = np.empty(d.shape + (2, 2), dtype=complex)
    u[..., 0, 0] = cos - 1j * sin * nz
    u[..., 1, 1] = cos + 1j * sin * nz
    u[..., 0, 1] = -1j * sin * off
    u[..., 1, 0] = -1j * sin * np.conj(off)
    return u


def rabi_flip_probability(detuning: float, f_rabi: float, duration: float) -> float:
    """Generalised Rabi formula (fR^2 / W^2) sin^2(pi W t), W = sqrt(D^2 + fR^2)."""
    omega = math.hypot(detuning, f_rabi)
    if omega == 0:
        return 0.0
    return (f_rabi / omega) ** 2 * math.sin(math.pi * omega * duration) ** 2


def _pair_labels(two_levels: TwoLevels) -> Tuple[StateLabel, StateLabel]:
    if isinstance(two_levels, Transition):
        return two_levels.labels
    first, second = two_levels
    return (first, second)


def evolve_rwa(
    two_levels: TwoLevels,
    detuning: float,
    f_rabi: float,
    phase: float,
    duration: float,
    psi0: Optional[Sequence[complex]] = None,
) -> QuantumState:
    """Resonant-pulse evolution in the frame rotating at the drive frequency."""
    if duration < 0:
        raise ValidationError("duration must be >= 0")
    start = np.array([1.0, 0.0], dtype=complex) if psi0 is None else np.asarray(psi0, dtype=complex)
    u = two_level_propagator(detuning, f_rabi, phase, duration)
    return QuantumState(u @ start, _pair_labels(two_levels))


PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def bloch_vector(state: QuantumState) -> Tuple[float, float, float]:
    return (state.expectation(PAULI_X), state.expectation(PAULI_Y), state.expectation(PAULI_Z))


# --- Rabi rates -------------------------------------------------------------------------------

def nmr_enhancement(p: DeviceParams) -> float:
    """Hyperfine enhancement of the neutral-donor NMR drive, 1 + A / (2 gamma_n B0)."""
    return 1.0 + p.a / (2.0 * p.nuclear_zeeman)


def _element(t: Transition, v: HermitianOperator, p: DeviceParams) -> float:
    es = eigensystem(static_hamiltonian(t.charge_state, p))
    return abs(v.element(es.vector(t.from_label), es.vector(t.to_label)))


def rabi_rate(t: Transition, spec: DriveSpec, p: DeviceParams) -> float:
    """Rabi frequency f_R in Hz; a pulse of length T flips with sin^2(pi f_R T)."""
    if spec.mechanism is not t.mechanism or spec.charge_state is not t.charge_state:
        raise ValidationError(
            f"{spec.mechanism.value}/{spec.charge_state.value} drive cannot address a "
            f"{t.mechanism.value}/{t.charge_state.value} transition"
        )
    if spec.delta_q is not None:
        v = unit_drive_operator(spec.mechanism, spec.charge_state, p, spec.delta_q)
        return _element(t, v, p) * spec.calibration
    factor = amplitude_factor(spec.mechanism, p) * spec.amplitude
    if spec.mechanism is Mechanism.NMR and spec.charge_state is ChargeState.NEUTRAL:
        factor *= nmr_enhancement(p)
    return factor * t.matrix_element * spec.calibration


def amplitude_for_rabi(t: Transition, f_rabi: float, p: DeviceParams, *, calibration: float = 1.0) -> float:
    """Invert :func:`rabi_rate` for the canonical drive of ``t``."""
    factor = amplitude_factor(t.mechanism, p) * calibration
    if t.mechanism is Mechanism.NMR and t.charge_state is ChargeState.NEUTRAL:
        factor *= nmr_enhancement(p)
    if t.matrix_element <= 0 or factor <= 0:
        raise ValidationError("Transition cannot be driven")
    return f_rabi / (factor * t.matrix_element)


# --- adiabatic passage --------------------------------------------------------------------------

def landau_zener_probability(f_rabi: float, rate: float) -> float:
    """Adiabatic flip probability 1 - exp(-pi^2 fR^2 / rate) for a linear sweep (rate in Hz/s)."""
    if f_rabi <= 0:
        return 0.0
    if rate <= 0:
        return 1.0
    return 1.0 - math.exp(-(math.pi ** 2) * f_rabi ** 2 / rate)


def adiabatic_inversion(t: Transition, chirp: float, duration: float, f_rabi: float) -> float:
    """Flip probability of a chirp sweeping t.frequency -+ ``chirp`` in ``duration``."""
    if chirp <= 0 or duration <= 0:
        raise ValidationError("Chirp span and duration must be > 0")
    return landau_zener_probability(f_rabi, 2.0 * chirp / duration)


def chirped_inversion(f_rabi: float, chirp: float, duration: float, steps: int = 20000) -> float:
    """Flip probability from piecewise propagation of a linear chirp across resonance."""
    if steps < 1:
        raise ValidationError("steps must be >= 1")
    dt = duration / steps
    centers = -chirp + 2.0 * chirp * (np.arange(steps) + 0.5) / steps
    us = two_level_propagator(centers, f_rabi, 0.0, dt)
    psi = np.array([1.0, 0.0], dtype=complex)
    for u in us:
        psi = u @ psi
    return float(abs(psi[1]) ** 2)


# --- full Hilbert-space propagation -------------------------------------------------------------

def _instant_phase(spec: DriveSpec, t: np.ndarray | float):
    if spec.envelope is Envelope.ADIABATIC_CHIRP:
        start = spec.frequency - spec.chirp_span
        return 2 * np.pi * (start * t + 0.5 * spec.sweep_rate * t * t) + spec.phase
    return 2 * np.pi * spec.frequency * t + spec.phase


def _max_frequency(drives: Sequence[DriveSpec]) -> float:
    return max((d.frequency + d.chirp_span for d in drives), default=0.0)


def evolve_full(
    h0: HermitianOperator,
    drives: Sequence[DriveSpec],
    psi0: QuantumState | Sequence[complex],
    t_grid: Sequence[float],
    p: DeviceParams,
    *,
    step: Optional[float] = None,
) -> Trajectory:
    """Piecewise-constant propagation of H0 + sum V_k cos(2 pi f_k t + phase_k).

    Each drive is on from t = 0 for its duration. The step must resolve the fastest drive
    with at least 20 points per period.
    """
    times = np.asarray(t_grid, dtype=float)
    if times.ndim != 1 or times.size == 0 or np.any(np.diff(times) < 0):
        raise ValidationError("t_grid must be a non-empty ascending sequence")
    f_max = _max_frequency(drives)
    limit = 1.0 / (STEPS_PER_PERIOD * f_max) if f_max > 0 else math.inf
    if step is None:
        step = limit
    elif step > limit * (1 + 1e-12):
        raise ValidationError(f"Time step {step:.3e} s is coarser than 1/(20 f_max) = {limit:.3e} s")
    amplitudes = [drive_operator(d, p).entries for d in drives]
    start = np.asarray(psi0.amplitudes if isinstance(psi0, QuantumState) else psi0, dtype=complex)
    if start.shape != (h0.dim,):
        raise ValidationError("Initial state does not match the Hamiltonian dimension")
    h_static = h0.entries

    def propagate(psi: np.ndarray, t0: float, t1: float) -> np.ndarray:
        span = t1 - t0
        if span <= 0:
            return psi
        count = 1 if not drives else max(1, math.ceil(span / step - 1e-9))
        dt = span / count
        for k in range(count):
            mid = t0 + (k + 0.5) * dt
            h = h_static.copy()
            for spec, v in zip(drives, amplitudes):
                if mid <= spec.duration:
                    h = h + v * math.cos(_instant_phase(spec, mid))
            values, vectors = np.linalg.eigh(h)
            psi = vectors @ (np.exp(-2j * np.pi * values * dt) * (vectors.conj().T @ psi))
        return psi

    states = np.empty((times.size, h0.dim), dtype=complex)
    psi = start.copy()
    previous = 0.0
    for index, t in enumerate(times):
        psi = propagate(psi, previous, t)
        states[index] = psi
        previous = t
    logger.debug("Propagated %d grid points with step %.3e s", times.size, step)
    return Trajectory(times, states, h0.basis)


def basis_state(h: HermitianOperator, label: StateLabel) -> QuantumState:
    """Eigenstate of ``h`` carrying ``label``."""
    es = eigensystem(h)
    return QuantumState(es.vector(label), h.basis)


def population(trajectory: Trajectory, h: HermitianOperator, label: StateLabel) -> np.ndarray:
    """Population of the labelled eigenstate of ``h`` along ``trajectory``."""
    vector = eigensystem(h).vector(label)
    return np.abs(trajectory.states @ vector.conj()) ** 2


# --- pulse sequences ------------------------------------------------------------------------

@dataclass(frozen=True)
class Pulse:
    drive: DriveSpec


@dataclass(frozen=True)
class FreeEvolution:
    duration: float

    def __post_init__(self) -> None:
        if self.duration <= 0:
            raise ValidationError("Free evolution must have a positive duration")


@dataclass(frozen=True)
class ChargeEvent:
    """Electron load or ionisation; each event may kick the nucleus to a neighbouring m_I."""

    kind: str = "ionise"

    def __post_init__(self) -> None:
        if self.kind not in ("load", "ionise"):
            raise ValidationError(f"Unknown charge event: {self.kind!r}")


@dataclass(frozen=True)
class Readout:
    label: StateLabel


Segment = Union[Pulse, FreeEvolution, ChargeEvent, Readout]


@dataclass(frozen=True)
class PulseSequence:
    """Segments acting on the two-level subspace of ``transition``, starting in its lower state."""

    transition: Transition
    segments: Tuple[Segment, ...]

    def __post_init__(self) -> None:
        if not self.segments:
            raise ValidationError("A pulse sequence needs at least one segment")
        for index, segment in enumerate(self.segments):
            if isinstance(segment, Readout) and index != len(self.segments) - 1:
                raise ValidationError("Readout may only close a sequence")
            if isinstance(segment, Pulse) and segment.drive.mechanism is not self.transition.mechanism:
                raise ValidationError("Pulse mechanism does not match the sequence transition")
        if not any(isinstance(segment, Pulse) for segment in self.segments):
            raise ValidationError("A pulse sequence needs at least one pulse")

    @property
    def frame_frequency(self) -> float:
        return next(s.drive.frequency for s in self.segments if isinstance(s, Pulse))

    @property
    def readout_label(self) -> StateLabel:
        last = self.segments[-1]
        return last.label if isinstance(last, Readout) else self.transition.to_label


@dataclass(frozen=True)
class SequenceResult:
    probabilities: Dict[StateLabel, float]
    stderr: Dict[StateLabel, float]
    counts: Dict[StateLabel, int] = field(default_factory=dict)
    readout_label: Optional[StateLabel] = None

    def probability(self, label: Optional[StateLabel] = None) -> float:
        key = label or self.readout_label
        return self.probabilities.get(key, 0.0)


def pulse_for_rotation(
    t: Transition,
    p: DeviceParams,
    angle: float,
    f_rabi: float,
    *,
    phase: float = 0.0,
    detuning: float = 0.0,
) -> DriveSpec:
    """Rectangular pulse rotating ``t`` by ``angle`` at Rabi frequency ``f_rabi``.

    ``detuning`` is t.frequency minus the drive frequency.
    """
    if f_rabi <= 0 or angle <= 0:
        raise ValidationError("Rotation angle and Rabi frequency must be > 0")
    return DriveSpec(
        mechanism=t.mechanism,
        charge_state=t.charge_state,
        frequency=t.frequency - detuning,
        amplitude=amplitude_for_rabi(t, f_rabi, p),
        duration=angle / (2 * math.pi * f_rabi),
        phase=phase,
    )


def ramsey_sequence(t: Transition, p: DeviceParams, tau: float, *, f_rabi: float, detuning: float = 0.0) -> PulseSequence:
    half = Pulse(pulse_for_rotation(t, p, math.pi / 2, f_rabi, detuning=detuning))
    segments: List[Segment] = [half]
    if tau > 0:
        segments.append(FreeEvolution(tau))
    segments += [half, Readout(t.to_label)]
    return PulseSequence(t, tuple(segments))


def hahn_sequence(t: Transition, p: DeviceParams, tau: float, *, f_rabi: float, detuning: float = 0.0) -> PulseSequence:
    half = Pulse(pulse_for_rotation(t, p, math.pi / 2, f_rabi, detuning=detuning))
    full = Pulse(pulse_for_rotation(t, p, math.pi, f_rabi, detuning=detuning))
    wait: List[Segment] = [FreeEvolution(tau)] if tau > 0 else []
    segments = [half, *wait, full, *wait, half, Readout(t.from_label)]
    return PulseSequence(t, tuple(segments))


def _neighbour_kick(label: StateLabel, rng: np.random.Generator, spin: float) -> StateLabel:
    options = [m for m in (label.m_i - 1, label.m_i + 1) if abs(m) <= spin]
    return StateLabel(label.m_s, options[int(rng.integers(len(options)))])


def _simulate_chunk(
    seq: PulseSequence,
    p: DeviceParams,
    noise: NoiseModel,
    sensitivities: Tuple[float, float],
    rates: Dict[int, float],
    count: int,
    seed: np.random.SeedSequence,
) -> Tuple[np.ndarray, List[Optional[StateLabel]]]:
    rng = np.random.default_rng(seed)
    d_b, d_q = sensitivities
    offset = d_b * rng.normal(0.0, 1.0, count) * noise.sigma_b + d_q * rng.normal(0.0, 1.0, count) * noise.sigma_fq
    rho = noise.echo_correlation
    frame = seq.frame_frequency
    lower, upper = seq.transition.labels
    psi = np.zeros((count, 2), dtype=complex)
    psi[:, 0] = 1.0
    leaked: List[Optional[StateLabel]] = [None] * count
    free_index = 0
    for index, segment in enumerate(seq.segments):
        if isinstance(segment, Pulse):
            detuning = seq.transition.frequency + offset - segment.drive.frequency
            u = two_level_propagator(detuning, rates[index], segment.drive.phase, segment.drive.duration)
            psi = np.einsum("nij,nj->ni", u, psi)
        elif isinstance(segment, FreeEvolution):
            if free_index > 0 and rho < 1.0:
                offset = rho * offset + math.sqrt(1 - rho * rho) * (
                    d_b * rng.normal(0.0, 1.0, count) * noise.sigma_b + d_q * rng.normal(0.0, 1.0, count) * noise.sigma_fq
                )
            free_index += 1
            detuning = seq.transition.frequency + offset - frame
            phase = np.pi * detuning * segment.duration
            psi = psi * np.stack([np.exp(1j * phase), np.exp(-1j * phase)], axis=1)
        elif isinstance(segment, ChargeEvent) and noise.readout_flip_per_shot > 0:
            kicked = rng.random(count) < noise.readout_flip_per_shot
            draws = rng.random(count)
            for n in np.flatnonzero(kicked):
                if leaked[n] is not None:
                    continue
                current = lower if draws[n] < abs(psi[n, 0]) ** 2 else upper
                target = _neighbour_kick(current, rng, p.spin)
                psi[n] = 0.0
                if target == lower:
                    psi[n, 0] = 1.0
                elif target == upper:
                    psi[n, 1] = 1.0
                else:
                    leaked[n] = target
    return np.abs(psi) ** 2, leaked


def run_sequence(
    seq: PulseSequence,
    p: DeviceParams,
    noise: NoiseModel,
    shots: int,
    seed: int,
    *,
    draws: Optional[int] = None,
    workers: int = 1,
) -> SequenceResult:
    """Monte-Carlo execution over quasi-static noise draws followed by shocked readout.

    Draws are processed in fixed chunks with their own spawned seeds, so the result does not
    depend on ``workers``.
    """
    if shots < 0:
        raise ValidationError("shots must be >= 0")
    total = draws if draws is not None else max(shots, 1)
    if total < 1:
        raise ValidationError("draws must be >= 1")
    root = np.random.SeedSequence(seed)
    sim_seed, readout_seed = root.spawn(2)
    chunk_sizes = [min(DRAW_CHUNK, total - start) for start in range(0, total, DRAW_CHUNK)]
    chunk_seeds = sim_seed.spawn(len(chunk_sizes))
    sensitivities = coherence.frequency_sensitivities(seq.transition, p)
    rates = {
        index: rabi_rate(seq.transition, segment.drive, p)
        for index, segment in enumerate(seq.segments)
        if isinstance(segment, Pulse)
    }

    def work(args):
        size, child = args
        return _simulate_chunk(seq, p, noise, sensitivities, rates, size, child)

    jobs = list(zip(chunk_sizes, chunk_seeds))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, jobs))
    else:
        results = [work(job) for job in jobs]

    lower, upper = seq.transition.labels
    per_draw: Dict[StateLabel, List[np.ndarray]] = {lower: [], upper: []}
    leaked_labels: List[Optional[StateLabel]] = []
    for populations, leaked in results:
        per_draw[lower].append(populations[:, 0])
        per_draw[upper].append(populations[:, 1])
        leaked_labels.extend(leaked)
    probabilities: Dict[StateLabel, float] = {}
    stderr: Dict[StateLabel, float] = {}
    for label, chunks in per_draw.items():
        values = np.concatenate(chunks)
        probabilities[label] = float(values.mean())
        stderr[label] = float(values.std(ddof=1) / math.sqrt(values.size)) if values.size > 1 else 0.0
    for label in leaked_labels:
        if label is not None:
            probabilities[label] = probabilities.get(label, 0.0) + 1.0 / total
    counts: Dict[StateLabel, int] = {}
    if shots > 0:
        # Every shot repeats the sequence, so each is a fresh single readout.
        counts = coherence.readout_with_shock(
            probabilities, 1, noise.readout_flip_per_shot, readout_seed, spin=p.spin, runs=shots
        )
    logger.debug("Ran %d noise draws over %d chunks", total, len(chunk_sizes))
    return SequenceResult(probabilities, stderr, counts, seq.readout_label)
