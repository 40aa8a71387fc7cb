from collections import deque
from dataclasses import replace

import pytest

from donor_sim.models import StateLabel
from donor_sim.schemas import ChargeState, Mechanism, NoiseModel, ValidationError
from donor_sim.services.navigator import (
    A_EDSR,
    A_ESR,
    CLOSED_FORM,
    LOAD,
    READ,
    PlanStep,
    TransitionGraph,
    plan_frequencies,
    plan_initialization,
    pulse_count,
    route,
    verify_plan,
)
from donor_sim.services.spectroscopy import transitions_for


def _bfs_hops(p, charge_state, mechanisms):
    """Hop distances over every pair, from an adjacency list built straight off the spectra."""
    adjacency = {}
    for mechanism in mechanisms:
        for line in transitions_for(p, mechanism, charge_state):
            a, b = line.labels
            adjacency.setdefault(a, set()).add(b)
            adjacency.setdefault(b, set()).add(a)
    distances = {}
    for source in adjacency:
        seen = {source: 0}
        queue = deque([source])
        while queue:
            label = queue.popleft()
            for other in adjacency[label]:
                if other not in seen:
                    seen[other] = seen[label] + 1
                    queue.append(other)
        distances[source] = seen
    return distances


def test_esr_is_a_single_hop(params):
    result = route("d-7/2", "u-7/2", ["esr"], "hops", params)

    assert result.found
    assert result.hops == 1
    assert result.mechanisms == (Mechanism.ESR,)
    assert result.path == (StateLabel(-0.5, -3.5), StateLabel(0.5, -3.5))


def test_ner1_alone_cannot_cross_the_middle(params):
    result = route("-1/2", "+1/2", ["ner1"], "hops", params)

    assert not result.found
    assert result.hops == 0
    assert result.cost == float("inf")


def test_ner2_bridges_the_middle(params):
    result = route("-1/2", "1/2", ["ner1", "ner2"], "hops", params)

    assert result.found
    assert result.hops == 2
    assert set(result.mechanisms) == {Mechanism.NER1, Mechanism.NER2}


@pytest.mark.parametrize(
    "charge_state, mechanisms",
    [
        (ChargeState.IONISED, [Mechanism.NMR]),
        (ChargeState.IONISED, [Mechanism.NER1]),
        (ChargeState.IONISED, [Mechanism.NER1, Mechanism.NER2]),
        (ChargeState.NEUTRAL, [Mechanism.ESR, Mechanism.EDSR]),
        (ChargeState.NEUTRAL, [Mechanism.NMR]),
        (ChargeState.NEUTRAL, [Mechanism.ESR, Mechanism.NMR]),
    ],
)
def test_shortest_paths_match_breadth_first_search(params, charge_state, mechanisms):
    graph = TransitionGraph(params, charge_state, mechanisms)
    distances = _bfs_hops(params, charge_state, mechanisms)

    for source in graph.nodes:
        for target in graph.nodes:
            result = graph.shortest_path(source, target)
            expected = distances.get(source, {source: 0}).get(target)
            if expected is None:
                assert not result.found
            else:
                assert result.found
                assert result.hops == expected
                assert result.path[0] == source and result.path[-1] == target


def test_connectivity_depends_on_mechanisms(params):
    assert TransitionGraph(params, ChargeState.NEUTRAL, ["esr", "edsr"]).is_connected()
    assert TransitionGraph(params, ChargeState.IONISED, ["nmr"]).is_connected()
    assert TransitionGraph(params, ChargeState.IONISED, ["ner1", "ner2"]).is_connected()
    assert not TransitionGraph(params, ChargeState.IONISED, ["ner1"]).is_connected()
    assert not TransitionGraph(params, ChargeState.NEUTRAL, ["esr"]).is_connected()


def test_mechanisms_of_the_other_charge_state_are_skipped(params):
    graph = TransitionGraph(params, ChargeState.IONISED, ["esr", "nmr"])

    assert graph.edge_count == 7


def test_time_cost_routes_are_deterministic(params):
    first = route("d-7/2", "d7/2", ["esr", "edsr", "nmr"], "time", params)
    second = route("d-7/2", "d7/2", ["esr", "edsr", "nmr"], "time", params)

    assert first.found
    assert first.cost > 0
    assert first == second


def test_route_rejects_mixed_charge_states(params):
    with pytest.raises(ValidationError):
        route("d-7/2", "-5/2", ["nmr"], "hops", params)
    with pytest.raises(ValidationError):
        route("d-9/2", "d-7/2", ["esr"], "hops", params)


def test_plan_to_the_current_state_is_empty(params):
    assert plan_initialization(params, 1.5, current=1.5) == []


def test_known_start_raise_plan(params):
    plan = plan_initialization(params, 3.5, current=-3.5)
    pulses = [step for step in plan if step.is_pulse]

    assert len(plan) == 35
    assert pulse_count(plan) == 21
    assert [step.kind for step in plan[:5]] == [LOAD, A_ESR, A_ESR, A_EDSR, READ]
    assert [step.subspace for step in plan[::5]] == [-2.5, -1.5, -0.5, 0.5, 1.5, 2.5, 3.5]
    assert all(step.sweep_hz == pytest.approx(2e6) for step in pulses if step.kind == A_ESR)
    assert all(step.sweep_hz == pytest.approx(-2e6) for step in pulses if step.kind == A_EDSR)


def test_known_start_lower_plan(params):
    plan = plan_initialization(params, -3.5, current=3.5)

    assert pulse_count(plan) == 7
    assert {step.kind for step in plan if step.is_pulse} == {A_EDSR}
    assert [step.subspace for step in plan[::3]] == [3.5, 2.5, 1.5, 0.5, -0.5, -1.5, -2.5]


def test_unknown_start_plan_structure(params):
    plan = plan_initialization(params, 0.5, repetitions=20)
    raise_steps = plan[: 20 * 4 * 5]
    lower_steps = plan[20 * 4 * 5:]

    assert pulse_count(plan) == 20 * 4 * 3 + 20 * 3
    assert [step.subspace for step in raise_steps[::5][:4]] == [-2.5, -1.5, -0.5, 0.5]
    assert all(step.subspace <= 0.5 for step in raise_steps)
    assert [step.subspace for step in lower_steps[::3][:3]] == [1.5, 2.5, 3.5]
    assert all(step.subspace > 0.5 for step in lower_steps)


def test_sideband_identities_land_on_exact_lines(params):
    esr = {line.from_label.m_i: line.frequency for line in transitions_for(params, Mechanism.ESR, ChargeState.NEUTRAL)}
    edsr = {line.upper_m: line.frequency for line in transitions_for(params, Mechanism.EDSR, ChargeState.NEUTRAL)}

    plan = plan_initialization(params, 3.5, current=-3.5)

    for block in range(7):
        _, lower, upper, flip_flop, _ = plan[5 * block: 5 * block + 5]
        m = lower.subspace
        assert lower.center_hz == pytest.approx(esr[m - 1], abs=1e-3)
        assert upper.center_hz == pytest.approx(esr[m], abs=1e-3)
        assert flip_flop.center_hz == pytest.approx(edsr[m], abs=1e-3)
        assert lower.carrier_hz == flip_flop.carrier_hz == edsr[m]


def test_effective_hyperfine_is_the_esr_spacing(params):
    esr = {line.from_label.m_i: line.frequency for line in transitions_for(params, Mechanism.ESR, ChargeState.NEUTRAL)}

    frequencies = plan_frequencies(params, 0.5, 1e6)

    assert frequencies.hyperfine_hz == pytest.approx(esr[0.5] - esr[-0.5], abs=1e-6)
    assert frequencies.esr_upper_iq - frequencies.esr_lower_iq == pytest.approx(frequencies.hyperfine_hz)
    assert frequencies.edsr_iq == 1e6


def test_closed_form_frequencies_track_the_oracle(params):
    for m in (-2.5, 0.5, 3.5):
        oracle = plan_frequencies(params, m, 1e6)
        closed = plan_frequencies(params, m, 1e6, source=CLOSED_FORM)
        assert closed.carrier_hz == pytest.approx(oracle.carrier_hz, abs=2e3)
        assert closed.hyperfine_hz == pytest.approx(oracle.hyperfine_hz, abs=2e3)


def test_plan_frequency_validation(params):
    with pytest.raises(ValidationError):
        plan_frequencies(params, -3.5, 1e6)
    with pytest.raises(ValidationError):
        plan_frequencies(params, 0.5, 0.0)
    with pytest.raises(ValidationError):
        plan_frequencies(params, 0.5, 1e6, source="guess")
    with pytest.raises(ValidationError):
        plan_initialization(params, 4.5)
    with pytest.raises(ValidationError):
        plan_initialization(params, 0.5, repetitions=0)


def test_lowering_with_imperfect_steps(params):
    plan = plan_initialization(params, -3.5, current=3.5)

    verification = verify_plan(plan, params, -3.5, start=3.5, step_probability=0.99)

    assert verification.final_population == pytest.approx(0.99 ** 7, abs=1e-9)
    assert verification.final_population == pytest.approx(0.932065, abs=1e-6)


def test_adiabatic_plans_reach_the_target(params):
    known = plan_initialization(params, 3.5, current=-3.5)
    unknown = plan_initialization(params, 0.5)

    assert verify_plan(known, params, 3.5, start=-3.5).final_population >= 0.999
    assert verify_plan(unknown, params, 0.5).final_population >= 0.999


def test_mistuned_sideband_leaves_the_state(params):
    plan = plan_initialization(params, 2.5, current=3.5)
    plan[1] = replace(plan[1], iq_offset_hz=plan[1].iq_offset_hz + 10e6)

    verification = verify_plan(plan, params, 2.5, start=3.5)

    assert verification.final_population == pytest.approx(0.0, abs=1e-12)
    assert verification.nuclear_population(3.5) == pytest.approx(1.0, abs=1e-12)


def test_readout_shocks_cost_population(params):
    plan = plan_initialization(params, -3.5, current=3.5)

    clean = verify_plan(plan, params, -3.5, start=3.5)
    shocked = verify_plan(plan, params, -3.5, start=3.5, flip_per_read=0.01)

    assert shocked.final_population < clean.final_population
    assert sum(shocked.populations.values()) == pytest.approx(1.0, abs=1e-12)


def test_noisier_model_lowers_the_final_population(params):
    plan = plan_initialization(params, -3.5, current=3.5)

    quiet = verify_plan(plan, params, -3.5, start=3.5, noise=NoiseModel(readout_flip_per_shot=0.0))
    noisy = verify_plan(plan, params, -3.5, start=3.5, noise=NoiseModel(sigma_b=1e-4, readout_flip_per_shot=0.0))
    kicked = verify_plan(plan, params, -3.5, start=3.5, noise=NoiseModel(readout_flip_per_shot=0.01))

    assert quiet.final_population == pytest.approx(verify_plan(plan, params, -3.5, start=3.5).final_population)
    assert noisy.final_population < quiet.final_population
    assert kicked.final_population < quiet.final_population
    assert sum(noisy.populations.values()) == pytest.approx(1.0, abs=1e-12)


def test_verify_plan_validation(params):
    with pytest.raises(ValidationError):
        verify_plan([PlanStep("wait")], params, 0.5)
    with pytest.raises(ValidationError):
        verify_plan([], params, 0.5, step_probability=1.5)
    with pytest.raises(ValidationError):
        verify_plan([], params, 0.5, flip_per_read=-0.1)


def test_plan_step_dump():
    step = PlanStep(A_ESR, 1.0, 2.0, 1e-3, 2e6, -2.5)

    assert step.model_dump() == {
        "kind": A_ESR,
        "subspace": "-5/2",
        "carrier_hz": 1.0,
        "iq_offset_hz": 2.0,
        "sweep_hz": 2e6,
        "duration_s": 1e-3,
    }
    assert step.window == (3.0, 2e6 + 3.0)
