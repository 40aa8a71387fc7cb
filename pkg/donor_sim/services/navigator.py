"""Moving the donor between its levels: transition-graph routing and flip-flop initialisation plans."""
from __future__ import annotations

import heapq
import logging
from collections import deque
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from scipy.stats import norm

from ..models import Route, StateLabel, Transition, format_m
from ..schemas import (
    ChargeState,
    DeviceParams,
    DriveSpec,
    IONISED_ONLY,
    Mechanism,
    NEUTRAL_ONLY,
    NoiseModel,
    RouteCost,
    ValidationError,
    require_half_integer,
)
from . import coherence
from .dynamics import landau_zener_probability, rabi_rate
from .hamiltonians import static_hamiltonian, unit_drive_operator
from .perturbation import edsr_frequency, esr_frequency
from .spectroscopy import transitions, transitions_for
from .spin_algebra import eigensystem

logger = logging.getLogger(__name__)

# Drive strength per mechanism used to price edges by pi-pulse time (T for NMR/ESR, Hz otherwise).
REFERENCE_AMPLITUDES: Dict[Mechanism, float] = {
    Mechanism.NMR: 1e-3,
    Mechanism.ESR: 1e-5,
    Mechanism.NER1: 1e3,
    Mechanism.NER2: 1e3,
    Mechanism.EDSR: 1e5,
}

ORACLE = "oracle"
CLOSED_FORM = "closed-form"

LOAD = "load"
READ = "read"
A_ESR = "aESR"
A_EDSR = "aEDSR"


@dataclass(frozen=True)
class Edge:
    target: StateLabel
    weight: float
    mechanism: Mechanism


def charge_state_of(label: StateLabel) -> ChargeState:
    return ChargeState.IONISED if label.m_s is None else ChargeState.NEUTRAL


class TransitionGraph:
    """Eigenstates joined by the allowed transitions of the enabled mechanisms."""

    def __init__(
        self,
        p: DeviceParams,
        charge_state: ChargeState | str,
        mechanisms: Iterable[Mechanism | str],
        cost: RouteCost | str = RouteCost.HOPS,
        *,
        reference_amplitudes: Optional[Mapping[Mechanism, float]] = None,
    ) -> None:
        self.charge_state = ChargeState.parse(charge_state)
        self.cost = RouteCost.parse(cost)
        self.mechanisms = tuple(sorted({Mechanism.parse(m) for m in mechanisms}, key=lambda m: m.value))
        amplitudes = dict(REFERENCE_AMPLITUDES)
        amplitudes.update(reference_amplitudes or {})
        es = eigensystem(static_hamiltonian(self.charge_state, p))
        assert es.labels is not None
        self.nodes: Tuple[StateLabel, ...] = tuple(sorted(es.labels, key=lambda label: label.sort_key))
        self._edges: Dict[StateLabel, Dict[StateLabel, Edge]] = {label: {} for label in self.nodes}
        for mechanism in self.mechanisms:
            if not self._supports(mechanism):
                logger.debug("Skipping %s on the %s donor", mechanism.value, self.charge_state.value)
                continue
            v_unit = unit_drive_operator(mechanism, self.charge_state, p)
            for line in transitions(es, v_unit, mechanism, charge_state=self.charge_state):
                self._add(line, self._weight(line, p, amplitudes[mechanism]))

    def _supports(self, mechanism: Mechanism) -> bool:
        if self.charge_state is ChargeState.IONISED:
            return mechanism not in NEUTRAL_ONLY
        return mechanism not in IONISED_ONLY

    def _weight(self, line: Transition, p: DeviceParams, amplitude: float) -> float:
        if self.cost is RouteCost.HOPS:
            return 1.0
        drive = DriveSpec(
            mechanism=line.mechanism,
            charge_state=line.charge_state,
            frequency=line.frequency,
            amplitude=amplitude,
            duration=1.0,
        )
        return 1.0 / (2.0 * rabi_rate(line, drive, p))

    def _add(self, line: Transition, weight: float) -> None:
        a, b = line.labels
        for source, target in ((a, b), (b, a)):
            current = self._edges[source].get(target)
            if current is None or weight < current.weight:
                self._edges[source][target] = Edge(target, weight, line.mechanism)

    def neighbours(self, label: StateLabel) -> List[Edge]:
        self._check(label)
        return sorted(self._edges[label].values(), key=lambda edge: edge.target.sort_key)

    def _check(self, label: StateLabel) -> None:
        if label not in self._edges:
            raise ValidationError(f"{label} is not a level of the {self.charge_state.value} donor")

    @property
    def edge_count(self) -> int:
        return sum(len(edges) for edges in self._edges.values()) // 2

    def reachable(self, source: StateLabel) -> set:
        self._check(source)
        seen = {source}
        queue = deque([source])
        while queue:
            label = queue.popleft()
            for edge in self._edges[label].values():
                if edge.target not in seen:
                    seen.add(edge.target)
                    queue.append(edge.target)
        return seen

    def is_connected(self) -> bool:
        return len(self.reachable(self.nodes[0])) == len(self.nodes)

    def shortest_path(self, source: StateLabel, target: StateLabel) -> Route:
        """Dijkstra with ties broken by the lexicographic order of the visited labels."""
        self._check(source)
        self._check(target)
        start = (0.0, (source.sort_key,), source, (source,), ())
        best: Dict[StateLabel, Tuple[float, tuple]] = {source: (0.0, (source.sort_key,))}
        heap = [start]
        done = set()
        while heap:
            cost, keys, label, path, mechanisms = heapq.heappop(heap)
            if label in done:
                continue
            done.add(label)
            if label == target:
                return Route(source, target, path, mechanisms, cost)
            for edge in self._edges[label].values():
                if edge.target in done:
                    continue
                candidate = (cost + edge.weight, keys + (edge.target.sort_key,))
                known = best.get(edge.target)
                if known is None or candidate < known:
                    best[edge.target] = candidate
                    heapq.heappush(
                        heap,
                        (candidate[0], candidate[1], edge.target, path + (edge.target,), mechanisms + (edge.mechanism,)),
                    )
        return Route(source, target)


def route(
    source: StateLabel | str,
    target: StateLabel | str,
    mechanisms: Iterable[Mechanism | str],
    cost: RouteCost | str,
    p: DeviceParams,
) -> Route:
    """Optimal path between two levels; ``Route.found`` is False when none exists."""
    source = source if isinstance(source, StateLabel) else StateLabel.parse(source)
    target = target if isinstance(target, StateLabel) else StateLabel.parse(target)
    charge_state = charge_state_of(source)
    if charge_state_of(target) is not charge_state:
        raise ValidationError("Source and target belong to different charge states")
    graph = TransitionGraph(p, charge_state, mechanisms, cost)
    result = graph.shortest_path(source, target)
    if not result.found:
        logger.info("No %s path from %s to %s", "/".join(m.value for m in graph.mechanisms), source, target)
    return result


# --- flip-flop initialisation ---------------------------------------------------------------

@dataclass(frozen=True)
class PlanStep:
    """One AWG segment. A swept tone starts at carrier + IQ and moves by ``sweep_hz``."""

    kind: str
    carrier_hz: float = 0.0
    iq_offset_hz: float = 0.0
    duration_s: float = 0.0
    sweep_hz: float = 0.0
    subspace: Optional[float] = None

    @property
    def is_pulse(self) -> bool:
        return self.kind in (A_ESR, A_EDSR)

    @property
    def center_hz(self) -> float:
        return self.carrier_hz + self.iq_offset_hz + 0.5 * self.sweep_hz

    @property
    def window(self) -> Tuple[float, float]:
        start = self.carrier_hz + self.iq_offset_hz
        return (min(start, start + self.sweep_hz), max(start, start + self.sweep_hz))

    def model_dump(self) -> Dict[str, object]:
        return {
            "kind": self.kind,
            "subspace": None if self.subspace is None else format_m(self.subspace),
            "carrier_hz": self.carrier_hz,
            "iq_offset_hz": self.iq_offset_hz,
            "sweep_hz": self.sweep_hz,
            "duration_s": self.duration_s,
        }


@dataclass(frozen=True)
class SubspaceFrequencies:
    """Carrier and IQ arithmetic for the subspace {m - 1, m}.

    ``hyperfine_hz`` and ``zeeman_hz`` are the effective A and gamma_n B0 that make the
    sideband identities reproduce the chosen frequency source exactly.
    """

    m_upper: float
    carrier_hz: float
    hyperfine_hz: float
    zeeman_hz: float
    delta_f_hz: float

    @property
    def esr_lower_iq(self) -> float:
        return -self.hyperfine_hz / 2 - self.zeeman_hz - self.delta_f_hz

    @property
    def esr_upper_iq(self) -> float:
        return self.hyperfine_hz / 2 - self.zeeman_hz - self.delta_f_hz

    @property
    def edsr_iq(self) -> float:
        return self.delta_f_hz


def _subspaces(p: DeviceParams) -> List[float]:
    return sorted(p.nuclear_labels)[1:]


def _check_m(p: DeviceParams, value: float, field: str) -> float:
    m = require_half_integer(value, field)
    if m not in p.nuclear_labels:
        raise ValidationError(f"{field} = {value} is not a nuclear projection of spin {p.spin}")
    return m


def _oracle_lines(p: DeviceParams) -> Tuple[Dict[float, float], Dict[float, float]]:
    esr = {line.from_label.m_i: line.frequency for line in transitions_for(p, Mechanism.ESR, ChargeState.NEUTRAL)}
    edsr = {line.upper_m: line.frequency for line in transitions_for(p, Mechanism.EDSR, ChargeState.NEUTRAL)}
    return esr, edsr


def plan_frequencies(
    p: DeviceParams,
    m_upper: float,
    delta_f: float,
    *,
    source: str = ORACLE,
    lines: Optional[Tuple[Mapping[float, float], Mapping[float, float]]] = None,
) -> SubspaceFrequencies:
    """Carrier at the flip-flop line of the subspace, sidebands on its two ESR lines."""
    m_upper = _check_m(p, m_upper, "m_upper")
    if m_upper == min(p.nuclear_labels):
        raise ValidationError("The lowest projection has no subspace below it")
    if delta_f <= 0:
        raise ValidationError("delta_f must be > 0")
    if source == ORACLE:
        esr, edsr = lines if lines is not None else _oracle_lines(p)
        carrier, lower, upper = edsr[m_upper], esr[m_upper - 1], esr[m_upper]
    elif source == CLOSED_FORM:
        carrier = edsr_frequency(p, m_upper)
        lower, upper = esr_frequency(p, m_upper - 1), esr_frequency(p, m_upper)
    else:
        raise ValidationError(f"Unknown frequency source: {source!r}")
    hyperfine = upper - lower
    zeeman = carrier - hyperfine / 2 - lower
    return SubspaceFrequencies(m_upper, carrier, hyperfine, zeeman, delta_f)


def _raise_block(f: SubspaceFrequencies, duration: float, load_time: float, read_time: float) -> List[PlanStep]:
    sweep = 2 * f.delta_f_hz
    m = f.m_upper
    return [
        PlanStep(LOAD, duration_s=load_time, subspace=m),
        PlanStep(A_ESR, f.carrier_hz, f.esr_lower_iq, duration, sweep, m),
        PlanStep(A_ESR, f.carrier_hz, f.esr_upper_iq, duration, sweep, m),
        PlanStep(A_EDSR, f.carrier_hz, f.edsr_iq, duration, -sweep, m),
        PlanStep(READ, duration_s=read_time, subspace=m),
    ]


def _lower_block(f: SubspaceFrequencies, duration: float, load_time: float, read_time: float) -> List[PlanStep]:
    m = f.m_upper
    return [
        PlanStep(LOAD, duration_s=load_time, subspace=m),
        PlanStep(A_EDSR, f.carrier_hz, f.edsr_iq, duration, -2 * f.delta_f_hz, m),
        PlanStep(READ, duration_s=read_time, subspace=m),
    ]


def plan_initialization(
    p: DeviceParams,
    target: float,
    current: Optional[float] = None,
    *,
    delta_f: float = 1e6,
    pulse_duration: float = 1e-3,
    repetitions: int = 20,
    load_time: float = 1e-4,
    read_time: float = 1e-3,
    source: str = ORACLE,
) -> List[PlanStep]:
    """Steps that bring the nucleus to ``target`` using adiabatic ESR and flip-flop pulses only.

    A known ``current`` gives the shortest chain of raise or lower blocks. An unknown start
    sweeps ``repetitions`` times through raise blocks for every subspace up to the target,
    then as often through lower blocks for every subspace above it.
    """
    target = _check_m(p, target, "target")
    if pulse_duration <= 0:
        raise ValidationError("pulse_duration must be > 0")
    if repetitions < 1:
        raise ValidationError("repetitions must be >= 1")
    lines = _oracle_lines(p) if source == ORACLE else None
    cache: Dict[float, SubspaceFrequencies] = {}

    def freqs(m: float) -> SubspaceFrequencies:
        if m not in cache:
            cache[m] = plan_frequencies(p, m, delta_f, source=source, lines=lines)
        return cache[m]

    timing = (pulse_duration, load_time, read_time)
    steps: List[PlanStep] = []
    if current is not None:
        current = _check_m(p, current, "current")
        if current < target:
            for m in (s for s in _subspaces(p) if current < s <= target):
                steps += _raise_block(freqs(m), *timing)
        else:
            for m in (s for s in reversed(_subspaces(p)) if target < s <= current):
                steps += _lower_block(freqs(m), *timing)
        return steps
    below = [s for s in _subspaces(p) if s <= target]
    above = [s for s in _subspaces(p) if s > target]
    for _ in range(repetitions if below else 0):
        for m in below:
            steps += _raise_block(freqs(m), *timing)
    for _ in range(repetitions if above else 0):
        for m in above:
            steps += _lower_block(freqs(m), *timing)
    logger.debug("Initialisation plan to %s: %d steps", format_m(target), len(steps))
    return steps


def pulse_count(plan: Sequence[PlanStep]) -> int:
    return sum(1 for step in plan if step.is_pulse)


@dataclass(frozen=True)
class PlanVerification:
    target: float
    step_populations: Tuple[float, ...]
    populations: Dict[StateLabel, float]

    @property
    def final_population(self) -> float:
        return self.step_populations[-1] if self.step_populations else self.nuclear_population(self.target)

    def nuclear_population(self, m_i: float) -> float:
        return sum(value for label, value in self.populations.items() if label.m_i == m_i)


def _reset_electron(populations: Dict[StateLabel, float]) -> Dict[StateLabel, float]:
    reset: Dict[StateLabel, float] = {}
    for label, value in populations.items():
        down = StateLabel(-0.5, label.m_i)
        reset[down] = reset.get(down, 0.0) + value
    return reset


def _shock(populations: Dict[StateLabel, float], flip_prob: float, spin: float) -> Dict[StateLabel, float]:
    if flip_prob <= 0:
        return populations
    shocked = {label: 0.0 for label in populations}
    for label, value in populations.items():
        options = [m for m in (label.m_i - 1, label.m_i + 1) if abs(m) <= spin]
        shocked[label] += (1 - flip_prob) * value
        for m in options:
            neighbour = StateLabel(label.m_s, m)
            shocked[neighbour] = shocked.get(neighbour, 0.0) + flip_prob * value / len(options)
    return shocked


def _window_fraction(frequency: float, sigma: float, low: float, high: float) -> float:
    """Share of a Gaussian-broadened line that falls inside the sweep window."""
    if sigma <= 0:
        return 1.0 if low <= frequency <= high else 0.0
    return float(norm.cdf(high, frequency, sigma) - norm.cdf(low, frequency, sigma))


def verify_plan(
    plan: Sequence[PlanStep],
    p: DeviceParams,
    target: float,
    *,
    start: Optional[float] = None,
    step_probability: Optional[float] = None,
    rabi_esr: float = 1e5,
    rabi_edsr: float = 1e5,
    noise: Optional[NoiseModel] = None,
    flip_per_read: Optional[float] = None,
) -> PlanVerification:
    """Propagate level populations through the plan.

    Each swept pulse inverts every line of its kind with the Landau-Zener probability (or
    ``step_probability``), weighted by how much of the line sits inside its window. With a
    ``noise`` model the lines are Gaussian-broadened by their quasi-static dephasing width, and
    reads kick the nucleus with ``noise.readout_flip_per_shot`` unless ``flip_per_read`` is
    given. Read and load leave the electron down. ``start`` None means an even mixture over all
    nuclear projections.
    """
    target = _check_m(p, target, "target")
    if step_probability is not None and not 0.0 <= step_probability <= 1.0:
        raise ValidationError("step_probability must lie in [0, 1]")
    if flip_per_read is None:
        flip_per_read = noise.readout_flip_per_shot if noise is not None else 0.0
    if not 0.0 <= flip_per_read <= 1.0:
        raise ValidationError("flip_per_read must lie in [0, 1]")
    if start is None:
        labels = p.nuclear_labels
        populations = {StateLabel(-0.5, m): 1.0 / len(labels) for m in labels}
    else:
        populations = {StateLabel(-0.5, _check_m(p, start, "start")): 1.0}
    lines = {
        A_ESR: transitions_for(p, Mechanism.ESR, ChargeState.NEUTRAL),
        A_EDSR: transitions_for(p, Mechanism.EDSR, ChargeState.NEUTRAL),
    }
    quiet = noise is None or (noise.sigma_b == 0 and noise.sigma_fq == 0)
    widths = {
        line: 0.0 if quiet else coherence.dephasing_rate(line, noise, p)
        for kind_lines in lines.values()
        for line in kind_lines
    }
    rabi = {A_ESR: rabi_esr, A_EDSR: rabi_edsr}
    history: List[float] = []
    for step in plan:
        if step.kind in (LOAD, READ):
            populations = _reset_electron(populations)
            if step.kind == READ:
                populations = _shock(populations, flip_per_read, p.spin)
        elif step.is_pulse:
            low, high = step.window
            if step_probability is not None:
                flip = step_probability
            else:
                flip = landau_zener_probability(rabi[step.kind], abs(step.sweep_hz) / step.duration_s)
            for line in lines[step.kind]:
                weight = flip * _window_fraction(line.frequency, widths[line], low, high)
                if weight <= 0:
                    continue
                a, b = line.labels
                pa, pb = populations.get(a, 0.0), populations.get(b, 0.0)
                populations[a] = (1 - weight) * pa + weight * pb
                populations[b] = (1 - weight) * pb + weight * pa
        else:
            raise ValidationError(f"Unknown plan step kind: {step.kind!r}")
        history.append(sum(value for label, value in populations.items() if label.m_i == target))
    return PlanVerification(target, tuple(history), dict(populations))
