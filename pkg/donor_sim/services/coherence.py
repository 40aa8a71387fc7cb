"""Quasi-static noise, dephasing observables, decay fits and shocked readout."""
from __future__ import annotations

import logging
import math
import warnings
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import OptimizeWarning, curve_fit

from ..models import DecayCurve, FitResult, StateLabel, Transition
from ..schemas import (
    ChargeState,
    DecayModel,
    DeviceParams,
    Mechanism,
    NoiseModel,
    SequenceTemplate,
    ValidationError,
)
from .hamiltonians import static_hamiltonian
from .spectroscopy import transitions_for
from .spin_algebra import eigensystem

logger = logging.getLogger(__name__)

GAMMA_PHOSPHORUS = 17.23e6
FIELD_STEP_REL = 1e-5
QUADRUPOLE_STEP_HZ = 1e4
MIN_DRAWS = 100
MIN_FIT_POINTS = 8


def _transition_frequency(t: Transition, p: DeviceParams) -> float:
    es = eigensystem(static_hamiltonian(t.charge_state, p))
    return abs(es.energy(t.to_label) - es.energy(t.from_label))


def _with_fq(p: DeviceParams, charge_state: ChargeState, fq: float) -> DeviceParams:
    if charge_state is ChargeState.IONISED:
        return p.replace(fq_plus=fq)
    return p.replace(fq_neutral=fq)


def frequency_sensitivities(t: Transition, p: DeviceParams) -> Tuple[float, float]:
    """(df/dB0 in Hz/T, df/dfq dimensionless) by central differences on exact spectra."""
    h_b = FIELD_STEP_REL * p.b0
    d_b = (
        _transition_frequency(t, p.replace(b0=p.b0 + h_b)) - _transition_frequency(t, p.replace(b0=p.b0 - h_b))
    ) / (2 * h_b)
    fq = p.fq(t.charge_state)
    h_q = min(QUADRUPOLE_STEP_HZ, 0.5 * (p.nuclear_zeeman - abs(fq)))
    d_q = (
        _transition_frequency(t, _with_fq(p, t.charge_state, fq + h_q))
        - _transition_frequency(t, _with_fq(p, t.charge_state, fq - h_q))
    ) / (2 * h_q)
    return float(d_b), float(d_q)


def dephasing_rate(t: Transition, noise: NoiseModel, p: DeviceParams) -> float:
    """Gaussian width of the transition frequency under quasi-static noise (Hz)."""
    d_b, d_q = frequency_sensitivities(t, p)
    return math.hypot(d_b * noise.sigma_b, d_q * noise.sigma_fq)


def t2_star(sigma_f: float) -> float:
    """Gaussian dephasing time sqrt(2) / (2 pi sigma_f)."""
    if sigma_f <= 0:
        return math.inf
    return math.sqrt(2.0) / (2.0 * math.pi * sigma_f)


def species_t2_ratio(gamma_reference: float, gamma_other: float) -> float:
    """T2*(reference) / T2*(other) under pure field noise."""
    if gamma_reference <= 0 or gamma_other <= 0:
        raise ValidationError("Gyromagnetic ratios must be > 0")
    return gamma_other / gamma_reference


def calibrate_electric_noise(
    p: DeviceParams,
    sigma_b: float,
    *,
    ratio: Optional[float] = None,
    outer_upper_m: Optional[float] = None,
) -> float:
    """sigma_fq that makes the middle NMR+ line live ``ratio`` times longer than the outer one."""
    ratio = p.coherence.middle_enhancement if ratio is None else ratio
    if ratio < 1:
        raise ValidationError("The middle transition cannot dephase faster than the outer one")
    lines = {line.upper_m: line for line in transitions_for(p, Mechanism.NMR, ChargeState.IONISED)}
    outer = lines[outer_upper_m if outer_upper_m is not None else p.spin]
    middle = lines[0.5]
    b_mid, _ = frequency_sensitivities(middle, p)
    b_out, q_out = frequency_sensitivities(outer, p)
    if q_out == 0:
        raise ValidationError("Outer transition is insensitive to quadrupole noise")
    target = (ratio * b_mid * sigma_b) ** 2 - (b_out * sigma_b) ** 2
    return math.sqrt(max(target, 0.0)) / abs(q_out)


# --- Monte-Carlo decay ------------------------------------------------------------------------

def simulate_decay(
    seq_template: SequenceTemplate | str,
    transition: Transition,
    noise: NoiseModel,
    taus: Sequence[float],
    draws: int,
    seed: int,
    p: DeviceParams,
    *,
    f_rabi: Optional[float] = None,
    detuning: float = 0.0,
    workers: int = 1,
) -> DecayCurve:
    """Ramsey flip probability or Hahn return probability against free-evolution time."""
    from .dynamics import hahn_sequence, ramsey_sequence, run_sequence

    template = SequenceTemplate.parse(seq_template)
    if draws < MIN_DRAWS:
        raise ValidationError(f"draws must be >= {MIN_DRAWS}")
    if f_rabi is None:
        f_rabi = max(1e4, 100.0 * dephasing_rate(transition, noise, p), 100.0 * abs(detuning))
    builder = ramsey_sequence if template is SequenceTemplate.RAMSEY else hahn_sequence
    quiet = NoiseModel(
        sigma_b=noise.sigma_b,
        sigma_fq=noise.sigma_fq,
        readout_flip_per_shot=0.0,
        t1e=noise.t1e,
        seed=noise.seed,
        echo_correlation=noise.echo_correlation,
    )
    tau = np.asarray(taus, dtype=float)
    probability = np.empty_like(tau)
    stderr = np.empty_like(tau)
    for index, value in enumerate(tau):
        seq = builder(transition, p, float(value), f_rabi=f_rabi, detuning=detuning)
        result = run_sequence(seq, p, quiet, 0, seed, draws=draws, workers=workers)
        probability[index] = result.probability()
        stderr[index] = result.stderr.get(seq.readout_label, 0.0)
    logger.debug("Simulated %s decay over %d delays x %d draws", template.value, tau.size, draws)
    return DecayCurve(tau, probability, stderr)


def simulate_relaxation(t_wait: Sequence[float], t1: float, draws: int, seed: int) -> DecayCurve:
    """Spin-up survival after waiting ``t_wait`` with exponential relaxation time ``t1``."""
    if t1 <= 0:
        raise ValidationError("t1 must be > 0")
    if draws < 1:
        raise ValidationError("draws must be >= 1")
    rng = np.random.default_rng(seed)
    waits = np.asarray(t_wait, dtype=float)
    survive = rng.random((waits.size, draws)) < np.exp(-waits / t1)[:, None]
    fraction = survive.mean(axis=1)
    stderr = np.sqrt(fraction * (1 - fraction) / draws)
    return DecayCurve(waits, fraction, stderr)


def decay_frame(curve: DecayCurve) -> pd.DataFrame:
    return pd.DataFrame({"tau_s": curve.tau, "probability": curve.probability, "stderr": curve.stderr})


# --- fitting --------------------------------------------------------------------------------

def _stretched(tau, amplitude, t2, beta, offset):
    return amplitude * np.exp(-np.power(np.abs(tau) / t2, beta)) + offset


def _fringe(tau, amplitude, t2, frequency, phase, offset):
    return amplitude * np.exp(-((tau / t2) ** 2)) * np.cos(2 * np.pi * frequency * tau + phase) + offset


def _half_life_guess(tau: np.ndarray, values: np.ndarray) -> float:
    start, end = values[0], values[-1]
    halfway = start - 0.5 * (start - end)
    crossed = np.flatnonzero((values - halfway) * np.sign(start - end) <= 0)
    if crossed.size:
        return float(max(tau[crossed[0]], tau[1] if tau.size > 1 else tau[0]))
    return float(tau[-1] / 2)


def fit_decay(
    curve: DecayCurve | Tuple[Sequence[float], Sequence[float]],
    model: DecayModel | str = DecayModel.STRETCHED_EXP,
) -> FitResult:
    """Least-squares fit of amplitude * exp(-(tau/T2)^beta) + offset (or a Gaussian-damped fringe)."""
    model = DecayModel.parse(model)
    if isinstance(curve, DecayCurve):
        tau, values = np.asarray(curve.tau, float), np.asarray(curve.probability, float)
    else:
        tau, values = (np.asarray(column, dtype=float) for column in curve)
    if tau.size < MIN_FIT_POINTS or tau.size != values.size:
        raise ValidationError(f"A decay fit needs at least {MIN_FIT_POINTS} points")
    if float(np.ptp(values)) < 1e-3:
        return FitResult.failed("no decay within the sampled window")
    t_guess = _half_life_guess(tau, values)
    amplitude0, offset0 = values[0] - values[-1], values[-1]
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", OptimizeWarning)
            if model is DecayModel.RAMSEY_FRINGE:
                spectrum = np.abs(np.fft.rfft(values - values.mean()))
                freqs = np.fft.rfftfreq(tau.size, d=float(np.mean(np.diff(tau))))
                f0 = float(freqs[int(np.argmax(spectrum[1:])) + 1]) if spectrum.size > 1 else 0.0
                mean = float(values.mean())
                params, _ = curve_fit(
                    _fringe, tau, values,
                    p0=[values[0] - mean, tau[-1] / 2, f0, 0.0, mean],
                    maxfev=20000,
                )
                amplitude, t2, frequency, _, offset = params
                beta = 2.0
                fitted = _fringe(tau, *params)
            else:
                fixed_beta = {DecayModel.GAUSSIAN: 2.0, DecayModel.EXPONENTIAL: 1.0}.get(model)
                frequency = 0.0
                if fixed_beta is None:
                    params, _ = curve_fit(
                        _stretched, tau, values,
                        p0=[amplitude0, t_guess, 1.5, offset0],
                        bounds=([-np.inf, 1e-15, 0.2, -np.inf], [np.inf, np.inf, 6.0, np.inf]),
                        maxfev=20000,
                    )
                    amplitude, t2, beta, offset = params
                else:
                    def shape(x, a, t, o):
                        return _stretched(x, a, t, fixed_beta, o)

                    params, _ = curve_fit(
                        shape, tau, values,
                        p0=[amplitude0, t_guess, offset0],
                        bounds=([-np.inf, 1e-15, -np.inf], [np.inf, np.inf, np.inf]),
                        maxfev=20000,
                    )
                    amplitude, t2, offset = params
                    beta = fixed_beta
                fitted = _stretched(tau, amplitude, t2, beta, offset)
    except (RuntimeError, ValueError, OptimizeWarning) as exc:
        logger.warning("Decay fit did not converge: %s", exc)
        return FitResult.failed(str(exc))
    t2 = abs(float(t2))
    if t2 > 10 * float(tau.max()):
        return FitResult.failed("fitted decay time far exceeds the sampled window")
    residual = float(np.linalg.norm(values - fitted))
    return FitResult(
        t2=t2,
        beta=float(beta),
        amplitude=float(amplitude),
        offset=float(offset),
        residual_norm=residual,
        frequency=abs(float(frequency)),
    )


# --- readout ---------------------------------------------------------------------------------

def _shock_walk(start: np.ndarray, shots: int, flip_prob: float, rng: np.random.Generator, spin: float) -> np.ndarray:
    """Nuclear projection of every run after each shot (shots x runs).

    A kicked shot moves the label to a uniformly chosen neighbour before it is read; the label
    carries over to the next shot, so repeated kicks random-walk through the manifold.
    """
    m = np.asarray(start, dtype=float).copy()
    history = np.empty((shots, m.size))
    kicked = rng.random((shots, m.size)) < flip_prob
    upward = rng.random((shots, m.size)) < 0.5
    for shot in range(shots):
        step = np.where(upward[shot], 1.0, -1.0)
        step = np.where(m >= spin, -1.0, np.where(m <= -spin, 1.0, step))
        m = np.where(kicked[shot], m + step, m)
        history[shot] = m
    return history


def readout_with_shock(
    probabilities: Mapping[StateLabel, float],
    shots: int,
    flip_prob: float,
    seed,
    *,
    spin: float = 3.5,
    runs: int = 1,
) -> Dict[StateLabel, int]:
    """Repeated projective readout of one donor per run.

    Each run draws its label from ``probabilities`` once, then reads it ``shots`` times; every
    shot first kicks the nuclear label to a random neighbour with ``flip_prob``. Counts cover
    all ``runs * shots`` outcomes.
    """
    if shots < 0:
        raise ValidationError("shots must be >= 0")
    if runs < 1:
        raise ValidationError("runs must be >= 1")
    if not 0.0 <= flip_prob <= 1.0:
        raise ValidationError("flip_prob must lie in [0, 1]")
    labels = sorted(probabilities, key=lambda label: label.sort_key)
    weights = np.array([probabilities[label] for label in labels], dtype=float)
    if np.any(weights < -1e-12) or abs(weights.sum() - 1.0) > 1e-6:
        raise ValidationError("Readout probabilities must be normalised")
    weights = np.clip(weights, 0.0, None)
    weights = weights / weights.sum()
    rng = np.random.default_rng(seed)
    starts = [labels[index] for index in rng.choice(len(labels), size=runs, p=weights)]
    history = _shock_walk(np.array([label.m_i for label in starts]), shots, flip_prob, rng, spin)
    counts: Dict[StateLabel, int] = {label: 0 for label in labels}
    for m_s in {label.m_s for label in starts}:
        columns = [run for run, label in enumerate(starts) if label.m_s == m_s]
        values, tallies = np.unique(history[:, columns], return_counts=True)
        for value, tally in zip(values, tallies):
            label = StateLabel(m_s, float(value))
            counts[label] = counts.get(label, 0) + int(tally)
    return counts


def shock_survival(shots: int, flip_prob: float, runs: int, seed: int, *, m_i: float = 0.5, spin: float = 3.5) -> float:
    """Fraction of runs that still find the nucleus at ``m_i`` after ``shots`` shocked readouts."""
    if runs < 1:
        raise ValidationError("runs must be >= 1")
    if shots < 0:
        raise ValidationError("shots must be >= 0")
    if abs(m_i) > spin:
        raise ValidationError(f"m_i = {m_i} lies outside spin {spin}")
    if not 0.0 <= flip_prob <= 1.0:
        raise ValidationError("flip_prob must lie in [0, 1]")
    if shots == 0:
        return 1.0
    rng = np.random.default_rng(seed)
    history = _shock_walk(np.full(runs, float(m_i)), shots, flip_prob, rng, spin)
    return float(np.mean(history[-1] == m_i))
