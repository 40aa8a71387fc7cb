"""Command-line surface: every command writes CSV or JSON with a reproducibility header."""
from __future__ import annotations

import functools
import io
import json
from enum import Enum
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import click
import numpy as np
import pandas as pd
from flask import Blueprint, current_app

from ..models import StateLabel, Transition, format_m, parse_m
from ..schemas import (
    ChargeState,
    DecayModel,
    DeviceParams,
    DriveSpec,
    EchoPulse,
    ElectronBranch,
    Mechanism,
    NoiseModel,
    RouteCost,
    SequenceTemplate,
    StarkModel,
    ValidationError,
)
from ..services import coherence, navigator, perturbation, spectroscopy, stark, tomography
from ..services.device import get_device, load_device_params
from ..services.dynamics import rabi_rate
from ..services.hamiltonians import static_hamiltonian, unit_drive_operator
from ..services.spin_algebra import eigensystem

commands_bp = Blueprint("commands", __name__, cli_group=None)

MECHANISMS: Dict[str, Tuple[Mechanism, ChargeState]] = {
    "nmr+": (Mechanism.NMR, ChargeState.IONISED),
    "nmr0": (Mechanism.NMR, ChargeState.NEUTRAL),
    "ner1+": (Mechanism.NER1, ChargeState.IONISED),
    "ner2+": (Mechanism.NER2, ChargeState.IONISED),
    "esr": (Mechanism.ESR, ChargeState.NEUTRAL),
    "edsr": (Mechanism.EDSR, ChargeState.NEUTRAL),
}
MECHANISM_CHOICE = click.Choice(sorted(MECHANISMS), case_sensitive=False)
BRANCH_CHOICE = click.Choice(["down", "up", "both"], case_sensitive=False)
RABI_COLUMNS = ["mechanism", "from", "to", "frequency_hz", "matrix_element", "rabi_hz"]

# Options that name files are left out of the header so outputs do not depend on paths.
_UNECHOED = {"output", "params", "curve", "input_file"}


# --- shared plumbing ------------------------------------------------------------------------

def params_option(func):
    return click.option(
        "--params",
        "params",
        type=click.Path(dir_okay=False),
        default=None,
        help="Device-parameter file (defaults to DONOR_PARAMS or config/device_defaults.cfg).",
    )(func)


def output_option(func):
    return click.option(
        "--output",
        "-o",
        "output",
        type=click.Path(dir_okay=False, allow_dash=True),
        default="-",
        show_default=True,
        help="Destination file, '-' for stdout.",
    )(func)


def handle_errors(func):
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except ValidationError as exc:
            current_app.logger.warning("Command failed: %s", exc)
            raise click.ClickException(str(exc)) from exc
        except (np.linalg.LinAlgError, FloatingPointError, RuntimeError) as exc:
            current_app.logger.error("Numeric failure", exc_info=exc)
            raise click.ClickException(f"numeric failure: {exc}") from exc

    return wrapper


def device_params(path: Optional[str]) -> DeviceParams:
    if path:
        return load_device_params(path, stark_preset=current_app.config.get("STARK_PRESET"))
    return get_device()


def _branch(value: Optional[str]) -> Optional[ElectronBranch]:
    if value is None or value.lower() == "both":
        return None
    return ElectronBranch.parse(value)


def _format(value: Any) -> str:
    if isinstance(value, StateLabel):
        return str(value)
    if isinstance(value, (list, tuple)):
        return ",".join(_format(item) for item in value)
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return "none"
    return str(value)


def _header(command: str, params: DeviceParams, results: Optional[Mapping[str, Any]] = None) -> List[str]:
    options = click.get_current_context().params
    lines = [f"# donor-sim {command}"]
    lines += [f"# option {key} = {_format(options[key])}" for key in sorted(options) if key not in _UNECHOED]
    lines += [f"# result {key} = {_format(value)}" for key, value in sorted((results or {}).items())]
    lines += [f"# param {key} = {_format(value)}" for key, value in sorted(params.model_dump().items())]
    return lines


def write_csv(
    frame: pd.DataFrame,
    command: str,
    params: DeviceParams,
    output: str,
    results: Optional[Mapping[str, Any]] = None,
) -> None:
    buffer = io.StringIO()
    frame.to_csv(
        buffer,
        index=False,
        float_format=current_app.config.get("CSV_FLOAT_FORMAT", "%.10g"),
        lineterminator="\n",
        na_rep="",
    )
    text = "\n".join(_header(command, params, results)) + "\n" + buffer.getvalue()
    with click.open_file(output, "w") as handle:
        handle.write(text)


def write_json(payload: Dict[str, Any], command: str, params: DeviceParams, output: str) -> None:
    options = click.get_current_context().params
    document = {
        "command": command,
        "options": {key: _format(options[key]) for key in sorted(options) if key not in _UNECHOED},
        "params": params.model_dump(),
        **payload,
    }
    text = json.dumps(document, indent=2, sort_keys=True, allow_nan=True) + "\n"
    with click.open_file(output, "w") as handle:
        handle.write(text)


def _mechanism_list(ctx, param, value: str) -> Tuple[Mechanism, ...]:
    tokens = [token.strip().lower() for token in value.split(",") if token.strip()]
    if not tokens:
        raise click.BadParameter("at least one mechanism is required")
    mechanisms = []
    for token in tokens:
        if token not in MECHANISMS:
            raise click.BadParameter(f"unknown mechanism {token!r}; choose from {', '.join(sorted(MECHANISMS))}")
        mechanisms.append(MECHANISMS[token][0])
    return tuple(mechanisms)


def _label(ctx, param, value: Optional[str]) -> Optional[StateLabel]:
    if value is None:
        return None
    try:
        return StateLabel.parse(value)
    except ValidationError as exc:
        raise click.BadParameter(str(exc)) from exc


def _projection(ctx, param, value: Optional[str]) -> Optional[float]:
    if value is None:
        return None
    try:
        return parse_m(value)
    except ValidationError as exc:
        raise click.BadParameter(str(exc)) from exc


def _transition_pair(ctx, param, value: str) -> Tuple[StateLabel, StateLabel]:
    parts = value.split(":")
    if len(parts) != 2:
        raise click.BadParameter("expected two labels separated by ':', e.g. m-7/2:m-5/2")
    try:
        return StateLabel.parse(parts[0]), StateLabel.parse(parts[1])
    except ValidationError as exc:
        raise click.BadParameter(str(exc)) from exc


def find_transition(p: DeviceParams, token: str, pair: Tuple[StateLabel, StateLabel]) -> Transition:
    mechanism, charge_state = MECHANISMS[token]
    for line in spectroscopy.transitions_for(p, mechanism, charge_state):
        if line.connects(*pair):
            return line
    raise ValidationError(f"{pair[0]}:{pair[1]} is not an allowed {token} transition")


# --- spectra ------------------------------------------------------------------------------

@commands_bp.cli.command("spectrum")
@click.option("--mechanism", "-m", type=MECHANISM_CHOICE, required=True)
@click.option("--branch", type=BRANCH_CHOICE, default="down", show_default=True, help="Electron branch for nmr0.")
@click.option("--fwhm", type=float, default=5e3, show_default=True, help="Lorentzian FWHM in Hz.")
@click.option("--points", type=click.IntRange(min=2), default=2001, show_default=True)
@click.option("--curve", type=click.Path(dir_okay=False), default=None, help="Also write the sampled curve here.")
@params_option
@output_option
@handle_errors
def spectrum_command(mechanism, branch, fwhm, points, curve, params, output):
    """Allowed transitions of one mechanism, with an optional sampled line spectrum."""
    p = device_params(params)
    kind, charge_state = MECHANISMS[mechanism.lower()]
    chosen = _branch(branch) if kind is Mechanism.NMR and charge_state is ChargeState.NEUTRAL else None
    lines = spectroscopy.transitions_for(p, kind, charge_state, branch=chosen)
    write_csv(spectroscopy.transitions_frame(lines), "spectrum", p, output)
    if curve:
        sampled = spectroscopy.spectrum(lines, fwhm, spectroscopy.default_grid(lines, fwhm, points))
        write_csv(sampled.to_frame(), "spectrum", p, curve)


@commands_bp.cli.command("rabi")
@click.option("--mechanism", "-m", type=MECHANISM_CHOICE, required=True)
@click.option("--branch", type=BRANCH_CHOICE, default="down", show_default=True)
@click.option(
    "--amplitude",
    type=float,
    default=None,
    help="B1 (T) for NMR/ESR, modulation depth (Hz) for NER/EDSR; defaults to a reference drive.",
)
@params_option
@output_option
@handle_errors
def rabi_command(mechanism, branch, amplitude, params, output):
    """Rabi frequency of every selection-rule pair; forbidden pairs leave rabi_hz empty."""
    p = device_params(params)
    kind, charge_state = MECHANISMS[mechanism.lower()]
    amplitude = navigator.REFERENCE_AMPLITUDES[kind] if amplitude is None else amplitude
    chosen = _branch(branch) if charge_state is ChargeState.NEUTRAL else None
    es = eigensystem(static_hamiltonian(charge_state, p))
    v_unit = unit_drive_operator(kind, charge_state, p)
    rows = []
    for lower, upper in spectroscopy.candidate_pairs(es, kind, branch=chosen):
        element = abs(v_unit.element(es.vector(lower), es.vector(upper)))
        frequency = es.energy(upper) - es.energy(lower)
        rate = float("nan")
        if element > spectroscopy.ELEMENT_THRESHOLD:
            line = Transition(lower, upper, frequency, kind, element, charge_state)
            drive = DriveSpec(kind, charge_state, frequency, amplitude, 1.0)
            rate = rabi_rate(line, drive, p)
        else:
            element = 0.0
        rows.append(
            {
                "mechanism": kind.value,
                "from": str(lower),
                "to": str(upper),
                "frequency_hz": frequency,
                "matrix_element": element,
                "rabi_hz": rate,
            }
        )
    write_csv(pd.DataFrame(rows, columns=RABI_COLUMNS), "rabi", p, output)


# --- Stark ----------------------------------------------------------------------------------

def _stark_model(p: DeviceParams, preset: Optional[str]) -> StarkModel:
    return StarkModel.preset(preset) if preset else p.stark


@commands_bp.cli.command("stark-scan")
@click.option("--mechanism", "-m", type=MECHANISM_CHOICE, required=True)
@click.option("--branch", type=BRANCH_CHOICE, default="down", show_default=True)
@click.option("--vmax", type=float, default=0.4, show_default=True, help="Scan from -vmax to +vmax volts.")
@click.option("--points", type=click.IntRange(min=2), default=9, show_default=True)
@click.option("--preset", type=click.Choice(["esr", "nmr"]), default=None, help="Override the Stark slopes.")
@params_option
@output_option
@handle_errors
def stark_scan_command(mechanism, branch, vmax, points, preset, params, output):
    """Line frequencies against gate voltage (fan-out)."""
    p = device_params(params)
    kind, charge_state = MECHANISMS[mechanism.lower()]
    chosen = _branch(branch) if charge_state is ChargeState.NEUTRAL and kind is Mechanism.NMR else None
    voltages = np.linspace(-vmax, vmax, points)
    scan = stark.fanout_scan(
        p,
        _stark_model(p, preset),
        kind,
        voltages,
        charge_state=charge_state,
        branch=chosen,
        workers=current_app.config.get("MC_WORKERS", 1),
    )
    write_csv(scan.to_frame(), "stark-scan", p, output)


@commands_bp.cli.command("stark-echo")
@click.option("--pulse", type=click.Choice([e.value for e in EchoPulse]), default="unipolar", show_default=True)
@click.option("--vdc", type=float, default=0.04, show_default=True, help="Pulse amplitude in volts.")
@click.option("--tau-max", type=float, default=20e-6, show_default=True)
@click.option("--points", type=click.IntRange(min=8), default=201, show_default=True)
@click.option("--preset", type=click.Choice(["esr", "nmr"]), default=None)
@params_option
@output_option
@handle_errors
def stark_echo_command(pulse, vdc, tau_max, points, preset, params, output):
    """Hahn echo on the neutral d-7/2 <-> d-5/2 line with a gate pulse in the first wait."""
    p = device_params(params)
    model = _stark_model(p, preset)
    taus = np.linspace(0.0, tau_max, points)
    curve = stark.stark_echo(p, model, pulse, vdc, taus)
    results: Dict[str, Any] = {"detuning_hz": stark.echo_detuning(p, model, pulse, vdc)}
    fit = stark.fit_fringe_frequency(curve)
    results["fringe_hz"] = fit.frequency if fit.ok else None
    frame = pd.DataFrame({"tau_s": curve.tau, "probability": curve.probability})
    write_csv(frame, "stark-echo", p, output, results)


# --- coherence ------------------------------------------------------------------------------

def _decay_command(template: SequenceTemplate, *, transition, mechanism, sigma_b, sigma_fq, tau_max, points, draws,
                   seed, detuning, f_rabi, echo_correlation, fit, params, output) -> None:
    p = device_params(params)
    line = find_transition(p, mechanism.lower(), transition)
    noise = NoiseModel(sigma_b=sigma_b, sigma_fq=sigma_fq, seed=seed, echo_correlation=echo_correlation)
    taus = np.linspace(0.0, tau_max, points)
    curve = coherence.simulate_decay(
        template,
        line,
        noise,
        taus,
        draws,
        seed,
        p,
        f_rabi=f_rabi,
        detuning=detuning,
        workers=current_app.config.get("MC_WORKERS", 1),
    )
    results: Dict[str, Any] = {"sigma_f_hz": coherence.dephasing_rate(line, noise, p)}
    if fit:
        outcome = coherence.fit_decay(curve, fit)
        results.update({"fit_status": outcome.status, "fit_t2_s": outcome.t2, "fit_beta": outcome.beta})
    write_csv(coherence.decay_frame(curve), template.value, p, output, results)


def _decay_options(func):
    options = [
        click.option("--transition", "-t", callback=_transition_pair, required=True, help="e.g. m-7/2:m-5/2"),
        click.option("--mechanism", "-m", type=MECHANISM_CHOICE, default="nmr+", show_default=True),
        click.option("--sigma-b", type=click.FloatRange(min=0), default=0.0, show_default=True, help="Field noise (T)."),
        click.option("--sigma-fq", type=click.FloatRange(min=0), default=0.0, show_default=True, help="Quadrupole noise (Hz)."),
        click.option("--tau-max", type=click.FloatRange(min=0), default=50e-3, show_default=True),
        click.option("--points", type=click.IntRange(min=2), default=41, show_default=True),
        click.option("--draws", type=click.IntRange(min=coherence.MIN_DRAWS), default=500, show_default=True),
        click.option("--seed", type=click.IntRange(min=0), required=True),
        click.option("--detuning", type=float, default=0.0, show_default=True, help="Line minus drive frequency (Hz)."),
        click.option("--f-rabi", type=click.FloatRange(min=0, min_open=True), default=None),
        click.option("--fit", type=click.Choice([m.value for m in DecayModel]), default=None),
        params_option,
        output_option,
    ]
    for option in reversed(options):
        func = option(func)
    return func


@commands_bp.cli.command("ramsey")
@_decay_options
@handle_errors
def ramsey_command(**kwargs):
    """Monte-Carlo Ramsey decay of one transition under quasi-static noise."""
    _decay_command(SequenceTemplate.RAMSEY, echo_correlation=1.0, **kwargs)


@commands_bp.cli.command("hahn")
@_decay_options
@click.option(
    "--echo-correlation",
    type=click.FloatRange(0.0, 1.0),
    default=1.0,
    show_default=True,
    help="Correlation of the noise between the two echo halves.",
)
@handle_errors
def hahn_command(**kwargs):
    """Monte-Carlo Hahn-echo decay of one transition."""
    _decay_command(SequenceTemplate.HAHN, **kwargs)


# --- navigation -----------------------------------------------------------------------------

@commands_bp.cli.command("plan-init")
@click.option("--target", callback=_projection, required=True, help="Target m_I, e.g. +1/2.")
@click.option("--current", callback=_projection, default=None, help="Known starting m_I; omit when unknown.")
@click.option("--delta-f", type=click.FloatRange(min=0, min_open=True), default=None)
@click.option("--duration", type=click.FloatRange(min=0, min_open=True), default=None)
@click.option("--repetitions", type=click.IntRange(min=1), default=None)
@click.option("--source", type=click.Choice([navigator.ORACLE, navigator.CLOSED_FORM]), default=navigator.ORACLE)
@click.option("--verify/--no-verify", default=False, show_default=True)
@click.option("--step-probability", type=click.FloatRange(0.0, 1.0), default=None)
@click.option("--sigma-b", type=click.FloatRange(min=0), default=0.0, show_default=True, help="Field noise (T).")
@click.option("--sigma-fq", type=click.FloatRange(min=0), default=0.0, show_default=True, help="Quadrupole noise (Hz).")
@click.option("--readout-flip", type=click.FloatRange(0.0, 1.0), default=0.0, show_default=True, help="Nuclear kick per read.")
@params_option
@output_option
@handle_errors
def plan_init_command(target, current, delta_f, duration, repetitions, source, verify, step_probability, sigma_b, sigma_fq,
                      readout_flip, params, output):
    """Flip-flop initialisation schedule with carrier and IQ frequencies."""
    p = device_params(params)
    config = current_app.config
    plan = navigator.plan_initialization(
        p,
        target,
        current,
        delta_f=delta_f or config["PLAN_DELTA_F_HZ"],
        pulse_duration=duration or config["PLAN_PULSE_DURATION_S"],
        repetitions=repetitions or config["PLAN_REPETITIONS"],
        load_time=config["PLAN_LOAD_TIME_S"],
        read_time=config["PLAN_READ_TIME_S"],
        source=source,
    )
    payload: Dict[str, Any] = {
        "target": format_m(target),
        "current": None if current is None else format_m(current),
        "pulses": navigator.pulse_count(plan),
        "steps": [step.model_dump() for step in plan],
    }
    if verify:
        report = navigator.verify_plan(
            plan,
            p,
            target,
            start=current,
            step_probability=step_probability,
            rabi_esr=config["PLAN_RABI_ESR_HZ"],
            rabi_edsr=config["PLAN_RABI_EDSR_HZ"],
            noise=NoiseModel(sigma_b=sigma_b, sigma_fq=sigma_fq, readout_flip_per_shot=readout_flip),
        )
        payload["verification"] = {
            "final_population": report.final_population,
            "step_populations": list(report.step_populations),
        }
    write_json(payload, "plan-init", p, output)


@commands_bp.cli.command("route")
@click.option("--from", "source", callback=_label, required=True, help="e.g. d-7/2 or -1/2.")
@click.option("--to", "target", callback=_label, required=True)
@click.option("--mechanisms", callback=_mechanism_list, default="esr,edsr", show_default=True)
@click.option("--cost", type=click.Choice([c.value for c in RouteCost]), default="hops", show_default=True)
@params_option
@output_option
@handle_errors
def route_command(source, target, mechanisms, cost, params, output):
    """Shortest path between two levels over the allowed transitions."""
    p = device_params(params)
    result = navigator.route(source, target, mechanisms, cost, p)
    write_json({"route": result.model_dump()}, "route", p, output)


# --- gate benchmark -------------------------------------------------------------------------

def _over_rotations(ctx, param, values: Sequence[str]) -> Dict[str, float]:
    parsed: Dict[str, float] = {}
    for item in values:
        gate, _, angle = item.partition("=")
        gate = gate.strip().upper()
        try:
            parsed[gate] = float(angle)
        except ValueError:
            raise click.BadParameter(f"expected GATE=RADIANS, got {item!r}") from None
        if gate not in tomography.GATES:
            raise click.BadParameter(f"unknown gate {gate!r}; choose from {', '.join(tomography.GATES)}")
    return parsed


@commands_bp.cli.command("gst")
@click.option("--depth", type=int, default=8, show_default=True, help="Longest base circuit length L.")
@click.option("--shots", type=click.IntRange(min=0), default=1000, show_default=True, help="0 means exact probabilities.")
@click.option("--seed", type=click.IntRange(min=0), required=True)
@click.option("--over-rotation", multiple=True, callback=_over_rotations, help="GATE=RADIANS, repeatable.")
@click.option("--detuning", type=float, default=0.0, show_default=True, help="Drive detuning in Hz.")
@params_option
@output_option
@handle_errors
def gst_command(depth, shots, seed, over_rotation, detuning, params, output):
    """Gate-set benchmark of the ionised {-5/2, -7/2} qubit."""
    p = device_params(params)
    errors = tomography.GateErrors(over_rotation=over_rotation, detuning_hz=detuning)
    report = tomography.gst_lite(errors, shots or None, depth, seed)
    write_json({"report": report.model_dump()}, "gst", p, output)


# --- parameter extraction ---------------------------------------------------------------------

@commands_bp.cli.command("extract")
@click.option("--input", "input_file", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--mechanism", "-m", type=click.Choice(["nmr+", "nmr0", "esr"]), required=True)
@click.option("--branch", type=click.Choice(["down", "up"]), default="down", show_default=True)
@params_option
@output_option
@handle_errors
def extract_command(input_file, mechanism, branch, params, output):
    """Recover Hamiltonian constants from a spectrum table written by ``spectrum``."""
    p = device_params(params)
    frame = pd.read_csv(input_file, comment="#")
    missing = {"from", "to", "frequency_hz"} - set(frame.columns)
    if missing:
        raise ValidationError(f"Spectrum table lacks columns: {sorted(missing)}")
    rows = []
    for record in frame.to_dict("records"):
        lower, upper = StateLabel.parse(str(record["from"])), StateLabel.parse(str(record["to"]))
        rows.append((max(lower.m_i, upper.m_i), float(record["frequency_hz"])))
    rows.sort()
    frequencies = [frequency for _, frequency in rows]
    results: Dict[str, Any] = {}
    if mechanism == "nmr+":
        middle = dict(rows).get(0.5)
        if middle is None:
            raise ValidationError("The table has no -1/2 <-> +1/2 line")
        b0 = perturbation.extract_B0_from_nmr_plus(middle, p)
        results["B0_T"] = b0
        results["fq_plus_hz"] = perturbation.extract_fq(frequencies, p, charge_state=ChargeState.IONISED)
    elif mechanism == "nmr0":
        a = perturbation.extract_A_from_nmr0(frequencies, p, branch=branch)
        results["A_hz"] = a
        results["fq_neutral_hz"] = perturbation.extract_fq(frequencies, p, branch=branch, a=a)
    else:
        results["A_hz"] = perturbation.extract_A_from_esr(frequencies, p)
    write_json({"extracted": results}, "extract", p, output)
