"""Gate-voltage dependence of A, gamma_e B0 and f_q: fan-out scans, slope extraction and the Stark echo."""
from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from fractions import Fraction
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import OptimizeWarning, curve_fit

from ..models import DecayCurve, FitResult, StateLabel, Transition
from ..schemas import (
    ChargeState,
    DeviceParams,
    EchoPulse,
    ElectronBranch,
    Mechanism,
    StarkModel,
    ValidationError,
    check_mechanism,
)
from .dynamics import two_level_propagator
from .perturbation import second_order_coefficients
from .spectroscopy import transitions_for

logger = logging.getLogger(__name__)

OUTSIDE_WINDOW = "outside_linearity_window"
ECHO_TARGET = (StateLabel(-0.5, -3.5), StateLabel(-0.5, -2.5))
SCAN_COLUMNS = ["voltage_v", "line_label", "frequency_hz"]

# Central-difference steps for the exact-spectrum Jacobian (Hz).
_STEPS = {"dA_dV": 1e3, "dGammaEB0_dV": 1e4, "dfq_plus_dV": 100.0, "dfq0_dV": 100.0}

LineKey = Tuple[StateLabel, StateLabel]


def default_charge_state(mechanism: Mechanism) -> ChargeState:
    if mechanism in (Mechanism.ESR, Mechanism.EDSR):
        return ChargeState.NEUTRAL
    return ChargeState.IONISED


def params_at_voltage(p: DeviceParams, s: StarkModel, dv: float) -> DeviceParams:
    """Constants after a gate-voltage step ``dv``; other constants are untouched.

    The hyperfine gets the quadratic term A eta2 E^2 with E = field_per_volt * dv. Steps beyond
    the linearity window still evaluate but carry the ``outside_linearity_window`` flag.
    """
    dv = float(dv)
    if not math.isfinite(dv):
        raise ValidationError("Voltage step must be finite")
    if dv == 0.0:
        return p
    field_strength = s.field_per_volt * dv
    a = p.a + s.dA_dV * dv + p.a * s.eta2 * field_strength ** 2
    gamma_e = p.gamma_e + s.dGammaEB0_dV * dv / p.b0
    flags = p.flags
    if abs(dv) > s.linearity_window_v:
        logger.warning("Voltage step %.3f V leaves the +-%.3f V linear window", dv, s.linearity_window_v)
        if OUTSIDE_WINDOW not in flags:
            flags = flags + (OUTSIDE_WINDOW,)
    return p.replace(
        a=a,
        gamma_e=gamma_e,
        fq_plus=p.fq_plus + s.dfq_plus_dV * dv,
        fq_neutral=p.fq_neutral + s.dfq0_dV * dv,
        flags=flags,
    )


def _line_key(t: Transition) -> LineKey:
    first, second = sorted(t.labels, key=lambda label: (label.m_i, label.sort_key))
    return (first, second)


def line_label(key: LineKey) -> str:
    return f"{key[0]}:{key[1]}"


@dataclass(frozen=True)
class StarkScan:
    """Exact line frequencies (rows: voltages, columns: lines)."""

    mechanism: Mechanism
    charge_state: ChargeState
    voltages: np.ndarray
    lines: Tuple[LineKey, ...]
    frequencies: np.ndarray
    branch: Optional[ElectronBranch] = None

    def __post_init__(self) -> None:
        if self.frequencies.shape != (len(self.voltages), len(self.lines)):
            raise ValidationError("Scan matrix does not match its voltage grid and line list")

    def upper_m(self, index: int) -> float:
        return max(label.m_i for label in self.lines[index])

    def slopes(self) -> np.ndarray:
        """Least-squares slope of every line against voltage (Hz/V)."""
        if len(np.unique(self.voltages)) < 2:
            raise ValidationError("Slope extraction needs at least two distinct voltages")
        coefficients = np.polyfit(self.voltages, self.frequencies, 1)
        return np.atleast_1d(coefficients[0])

    def to_frame(self) -> pd.DataFrame:
        rows = [
            {"voltage_v": float(v), "line_label": line_label(key), "frequency_hz": float(self.frequencies[i, j])}
            for i, v in enumerate(self.voltages)
            for j, key in enumerate(self.lines)
        ]
        return pd.DataFrame(rows, columns=SCAN_COLUMNS)


def _line_frequencies(
    p: DeviceParams,
    mechanism: Mechanism,
    charge_state: ChargeState,
    branch: Optional[ElectronBranch],
) -> Dict[LineKey, float]:
    return {_line_key(t): t.frequency for t in transitions_for(p, mechanism, charge_state, branch=branch)}


def fanout_scan(
    p: DeviceParams,
    s: StarkModel,
    mechanism: Mechanism | str,
    voltages: Sequence[float],
    *,
    charge_state: Optional[ChargeState | str] = None,
    branch: Optional[ElectronBranch | str] = None,
    workers: int = 1,
) -> StarkScan:
    """Diagonalise at every voltage and collect each allowed line."""
    mechanism = Mechanism.parse(mechanism)
    charge_state = default_charge_state(mechanism) if charge_state is None else ChargeState.parse(charge_state)
    check_mechanism(mechanism, charge_state)
    branch = None if branch is None else ElectronBranch.parse(branch)
    grid = np.asarray(voltages, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValidationError("Voltage grid must be a non-empty 1-D sequence")

    def at(v: float) -> Dict[LineKey, float]:
        return _line_frequencies(params_at_voltage(p, s, v), mechanism, charge_state, branch)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            columns = list(pool.map(at, grid))
    else:
        columns = [at(v) for v in grid]
    keys = sorted(columns[0], key=lambda key: (max(k.m_i for k in key), key[0].sort_key))
    if any(set(column) != set(keys) for column in columns):
        raise ValidationError("The allowed line set changes across the voltage grid")
    matrix = np.array([[column[key] for key in keys] for column in columns])
    logger.debug("Fan-out scan of %d %s lines over %d voltages", len(keys), mechanism.value, grid.size)
    return StarkScan(mechanism, charge_state, grid, tuple(keys), matrix, branch)


# --- slope extraction ---------------------------------------------------------------------------

def _fitted_fields(scan: StarkScan) -> Tuple[str, ...]:
    if scan.charge_state is ChargeState.IONISED:
        return ("dfq_plus_dV",)
    if scan.mechanism is Mechanism.ESR:
        return ("dA_dV", "dGammaEB0_dV")
    if scan.mechanism is Mechanism.NMR:
        return ("dA_dV", "dfq0_dV")
    return ("dA_dV", "dGammaEB0_dV", "dfq0_dV")


def _perturbed(p: DeviceParams, name: str, step: float) -> DeviceParams:
    if name == "dA_dV":
        return p.replace(a=p.a + step)
    if name == "dGammaEB0_dV":
        return p.replace(gamma_e=p.gamma_e + step / p.b0)
    if name == "dfq_plus_dV":
        return p.replace(fq_plus=p.fq_plus + step)
    return p.replace(fq_neutral=p.fq_neutral + step)


def line_jacobian(scan: StarkScan, p: DeviceParams, names: Sequence[str]) -> np.ndarray:
    """d f_line / d parameter from exact spectra, one column per Stark field in ``names``."""
    columns = []
    for name in names:
        step = _STEPS[name]
        up = _line_frequencies(_perturbed(p, name, step), scan.mechanism, scan.charge_state, scan.branch)
        down = _line_frequencies(_perturbed(p, name, -step), scan.mechanism, scan.charge_state, scan.branch)
        columns.append([(up[key] - down[key]) / (2 * step) for key in scan.lines])
    return np.array(columns).T


def _model_from(values: Dict[str, float], fixed: Optional[StarkModel]) -> StarkModel:
    base = fixed if fixed is not None else StarkModel.zero()
    data = {item.name: getattr(base, item.name) for item in fields(StarkModel)}
    data.update(values)
    return StarkModel(**data)


def _pairs_esr(scan: StarkScan, slopes: np.ndarray, p: DeviceParams) -> Dict[str, float]:
    by_m = {scan.lines[j][0].m_i: slopes[j] for j in range(len(scan.lines))}
    b = second_order_coefficients(p.spin).b
    ratio = p.a / p.electron_zeeman
    positives = [m for m in by_m if m > 0 and -m in by_m]
    if not positives:
        raise ValidationError("ESR pair algebra needs lines of opposite m_I")
    d_a = float(np.mean([(by_m[m] - by_m[-m]) / (2 * m) for m in positives]))
    d_gamma = float(
        np.mean([(by_m[m] + by_m[-m] - 4 * float(b[_frac(m)]) * ratio * d_a) / 2 for m in positives])
    )
    return {"dA_dV": d_a, "dGammaEB0_dV": d_gamma}


def _frac(m: float) -> Fraction:
    return Fraction(m).limit_denominator(2)


def _pairs_nmr(scan: StarkScan, slopes: np.ndarray, p: DeviceParams) -> Dict[str, float]:
    uppers = {scan.upper_m(j): slopes[j] for j in range(len(scan.lines))}
    if scan.charge_state is ChargeState.IONISED:
        ms = np.array(sorted(uppers))
        slope, _ = np.polyfit(ms - 0.5, np.array([uppers[m] for m in ms]), 1)
        return {"dfq_plus_dV": float(slope)}
    if scan.branch is not ElectronBranch.DOWN:
        raise ValidationError("Neutral NMR pair algebra is defined on the electron-down branch")
    g = second_order_coefficients(p.spin, ElectronBranch.DOWN).g
    ratio = p.a / p.electron_zeeman
    pairs = [m for m in uppers if m > 0.5 and (1 - m) in uppers]
    if not pairs:
        raise ValidationError("NMR pair algebra needs mirror lines m and 1 - m")
    # g(m) + g(1 - m) = 1/2, so each pair sum carries dA (1 + A / gamma_e B0).
    d_a = float(np.mean([(uppers[m] + uppers[1 - m]) / (1 + ratio) for m in pairs]))
    d_fq = float(
        np.mean(
            [
                (uppers[m] - uppers[1 - m] - 2 * float(g[_frac(m)] - g[_frac(1 - m)]) * ratio * d_a) / (2 * m - 1)
                for m in pairs
            ]
        )
    )
    return {"dA_dV": d_a, "dfq0_dV": d_fq}


def extract_stark_slopes(
    scan: StarkScan,
    p: DeviceParams,
    *,
    method: str = "jacobian",
    fixed: Optional[StarkModel] = None,
) -> StarkModel:
    """Recover the Stark slopes a scan is sensitive to.

    ``jacobian`` solves slopes = J x in the least-squares sense with J from exact spectra at
    zero voltage; ``pairs`` combines the slopes of mirror lines through the second-order
    tables. Fields the scan cannot see come from ``fixed`` (zero when omitted); in the
    jacobian method their contribution is removed before solving.
    """
    slopes = scan.slopes()
    names = _fitted_fields(scan)
    if method == "pairs":
        if scan.mechanism is Mechanism.ESR:
            values = _pairs_esr(scan, slopes, p)
        elif scan.mechanism in (Mechanism.NMR, Mechanism.NER1):
            values = _pairs_nmr(scan, slopes, p)
        else:
            raise ValidationError(f"No pair algebra for {scan.mechanism.value}; use the jacobian method")
        return _model_from(values, fixed)
    if method != "jacobian":
        raise ValidationError(f"Unknown extraction method: {method!r}")
    known = [item.name for item in fields(StarkModel) if item.name in _STEPS and item.name not in names]
    target = slopes.copy()
    if fixed is not None and known:
        target = target - line_jacobian(scan, p, known) @ np.array([getattr(fixed, name) for name in known])
    jacobian = line_jacobian(scan, p, names)
    if np.linalg.matrix_rank(jacobian) < len(names):
        raise ValidationError("Scan lines do not constrain every Stark slope")
    solution, *_ = np.linalg.lstsq(jacobian, target, rcond=None)
    return _model_from(dict(zip(names, (float(x) for x in solution))), fixed)


# --- Stark echo ----------------------------------------------------------------------------

def _echo_line(p: DeviceParams, s: StarkModel, dv: float) -> float:
    lines = _line_frequencies(params_at_voltage(p, s, dv), Mechanism.NMR, ChargeState.NEUTRAL, ElectronBranch.DOWN)
    return lines[ECHO_TARGET]


def echo_detuning(p: DeviceParams, s: StarkModel, pulse: EchoPulse | str, v_dc: float) -> float:
    """Mean frequency offset of the neutral d-7/2 <-> d-5/2 line during the first free period."""
    pulse = EchoPulse.parse(pulse)
    if pulse is EchoPulse.NONE or v_dc == 0:
        return 0.0
    rest = _echo_line(p, s, 0.0)
    shift_up = _echo_line(p, s, v_dc) - rest
    if pulse is EchoPulse.UNIPOLAR:
        return shift_up
    # +V_DC and -V_DC for tau/2 each: only the even part of the shift survives.
    return 0.5 * (shift_up + _echo_line(p, s, -v_dc) - rest)


def _x_rotation(angle: float) -> np.ndarray:
    return two_level_propagator(0.0, 1.0, 0.0, angle / (2 * math.pi))


def stark_echo(
    p: DeviceParams,
    s: StarkModel,
    pulse: EchoPulse | str,
    v_dc: float,
    taus: Sequence[float],
) -> DecayCurve:
    """Return probability of X/2 - tau - X - tau - X/2 with a voltage pulse in the first tau."""
    tau = np.asarray(taus, dtype=float)
    if np.any(tau < 0):
        raise ValidationError("Free precession times must be >= 0")
    shift = echo_detuning(p, s, pulse, v_dc)
    theta = 2 * math.pi * shift * tau
    free = np.zeros(tau.shape + (2, 2), dtype=complex)
    free[..., 0, 0] = np.exp(0.5j * theta)
    free[..., 1, 1] = np.exp(-0.5j * theta)
    half, full = _x_rotation(math.pi / 2), _x_rotation(math.pi)
    u = half @ full @ free @ half
    probability = np.abs(u[..., 0, 0]) ** 2
    logger.debug("Stark echo with %s pulse: detuning %.3f Hz", EchoPulse.parse(pulse).value, shift)
    return DecayCurve(tau, probability, np.zeros_like(tau))


def _sinusoid(tau, amplitude, frequency, phase, offset):
    return amplitude * np.sin(2 * np.pi * frequency * tau + phase) + offset


def fit_fringe_frequency(curve: DecayCurve) -> FitResult:
    """Fit P sin(2 pi f tau + phi) + P_offset; ``frequency`` carries f."""
    tau, values = np.asarray(curve.tau, float), np.asarray(curve.probability, float)
    if tau.size < 8:
        raise ValidationError("A fringe fit needs at least 8 points")
    if float(np.ptp(values)) < 1e-6:
        return FitResult.failed("no oscillation within the sampled window")
    dt = float(np.mean(np.diff(tau)))
    padded = 16 * tau.size
    spectrum = np.abs(np.fft.rfft(values - values.mean(), n=padded))
    freqs = np.fft.rfftfreq(padded, d=dt)
    f0 = float(freqs[int(np.argmax(spectrum[1:])) + 1])
    amplitude0 = 0.5 * float(np.ptp(values))
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", OptimizeWarning)
            params, _ = curve_fit(
                _sinusoid, tau, values, p0=[amplitude0, f0, math.pi / 2, float(values.mean())], maxfev=20000
            )
    except (RuntimeError, ValueError, OptimizeWarning) as exc:
        logger.warning("Fringe fit did not converge: %s", exc)
        return FitResult.failed(str(exc))
    amplitude, frequency, _, offset = params
    residual = float(np.linalg.norm(values - _sinusoid(tau, *params)))
    return FitResult(
        t2=math.inf,
        beta=float("nan"),
        amplitude=abs(float(amplitude)),
        offset=float(offset),
        residual_norm=residual,
        frequency=abs(float(frequency)),
    )
