"""Validated input payloads: device constants, noise settings and drive specifications."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from typing import Any, Dict, Mapping, Optional, Sequence, Tuple


class ValidationError(ValueError):
    """Raised when incoming parameters fail validation."""


class _ParsableEnum(str, Enum):
    @classmethod
    def parse(cls, value: Any):
        if isinstance(value, cls):
            return value
        if isinstance(value, str):
            candidate = value.strip().lower()
            for member in cls:
                if member.value == candidate:
                    return member
        raise ValidationError(f"Invalid {cls.__name__}: {value!r}")


class Mechanism(_ParsableEnum):
    NMR = "nmr"
    ESR = "esr"
    NER1 = "ner1"
    NER2 = "ner2"
    EDSR = "edsr"


class ChargeState(_ParsableEnum):
    IONISED = "ionised"
    NEUTRAL = "neutral"


class ElectronBranch(_ParsableEnum):
    DOWN = "down"
    UP = "up"

    @property
    def m_s(self) -> float:
        return -0.5 if self is ElectronBranch.DOWN else 0.5


class Envelope(_ParsableEnum):
    RECTANGULAR = "rectangular"
    ADIABATIC_CHIRP = "adiabatic-chirp"


class EchoPulse(_ParsableEnum):
    NONE = "none"
    UNIPOLAR = "unipolar"
    BIPOLAR = "bipolar"


class DecayModel(_ParsableEnum):
    GAUSSIAN = "gaussian"
    STRETCHED_EXP = "stretched_exp"
    EXPONENTIAL = "exponential"
    RAMSEY_FRINGE = "ramsey_fringe"


class SequenceTemplate(_ParsableEnum):
    RAMSEY = "ramsey"
    HAHN = "hahn"


class RouteCost(_ParsableEnum):
    HOPS = "hops"
    TIME = "time"


NEUTRAL_ONLY = frozenset({Mechanism.ESR, Mechanism.EDSR})
IONISED_ONLY = frozenset({Mechanism.NER1, Mechanism.NER2})


def check_mechanism(mechanism: Mechanism, charge_state: ChargeState) -> None:
    if mechanism in NEUTRAL_ONLY and charge_state is not ChargeState.NEUTRAL:
        raise ValidationError(f"{mechanism.value} requires the neutral donor")
    if mechanism in IONISED_ONLY and charge_state is not ChargeState.IONISED:
        raise ValidationError(f"{mechanism.value} is only modelled on the ionised donor")


def _require_float(
    value: Any,
    field: str,
    *,
    minimum: Optional[float] = None,
    maximum: Optional[float] = None,
    positive: bool = False,
    allow_none: bool = False,
) -> Optional[float]:
    if value is None:
        if allow_none:
            return None
        raise ValidationError(f"Field '{field}' is required")
    if isinstance(value, bool):
        raise ValidationError(f"Field '{field}' must be a number")
    try:
        number = float(value)
    except (TypeError, ValueError):
        raise ValidationError(f"Field '{field}' must be a number") from None
    if not math.isfinite(number):
        raise ValidationError(f"Field '{field}' must be finite")
    if positive and number <= 0:
        raise ValidationError(f"Field '{field}' must be > 0")
    if minimum is not None and number < minimum:
        raise ValidationError(f"Field '{field}' must be >= {minimum}")
    if maximum is not None and number > maximum:
        raise ValidationError(f"Field '{field}' must be <= {maximum}")
    return number


def _require_int(value: Any, field: str, *, minimum: Optional[int] = None, allow_none: bool = False) -> Optional[int]:
    if value is None:
        if allow_none:
            return None
        raise ValidationError(f"Field '{field}' is required")
    if isinstance(value, bool):
        raise ValidationError(f"Field '{field}' must be an integer")
    try:
        integer = int(value)
    except (TypeError, ValueError):
        raise ValidationError(f"Field '{field}' must be an integer") from None
    if minimum is not None and integer < minimum:
        raise ValidationError(f"Field '{field}' must be >= {minimum}")
    return integer


def require_half_integer(value: Any, field: str) -> float:
    number = _require_float(value, field)
    if abs(2 * number - round(2 * number)) > 1e-12:
        raise ValidationError(f"Field '{field}' must be a multiple of 1/2, got {value!r}")
    return round(2 * number) / 2


def _from_prefixed(cls, payload: Mapping[str, Any], prefix: str) -> Dict[str, Any]:
    data: Dict[str, Any] = {}
    for item in fields(cls):
        key = f"{prefix}{item.name.upper()}"
        if key in payload:
            data[item.name] = payload[key]
    return data


@dataclass(frozen=True, slots=True)
class StarkModel:
    """Per-volt slopes of the Hamiltonian constants, in Hz/V."""

    dA_dV: float = 9.8e6
    dGammaEB0_dV: float = -1.4e6
    dfq_plus_dV: float = -2.07e3
    dfq0_dV: float = -300e3
    eta1: float = 0.0
    eta2: float = 0.0
    field_per_volt: float = 1.0e6
    linearity_window_v: float = 0.5

    def __post_init__(self) -> None:
        for item in fields(self):
            _require_float(getattr(self, item.name), item.name)
        if self.linearity_window_v <= 0:
            raise ValidationError("Field 'linearity_window_v' must be > 0")

    @classmethod
    def preset(cls, name: str) -> "StarkModel":
        key = name.strip().lower()
        if key == "esr":
            return cls()
        if key == "nmr":
            return cls(dA_dV=11.57e6)
        raise ValidationError(f"Unknown Stark preset: {name!r}")

    @classmethod
    def zero(cls) -> "StarkModel":
        return cls(dA_dV=0.0, dGammaEB0_dV=0.0, dfq_plus_dV=0.0, dfq0_dV=0.0)

    def linear_field_coefficient(self, a: float) -> float:
        """Return eta1 (m/V), derived from dA_dV when not set explicitly."""
        if self.eta1:
            return self.eta1
        if a == 0 or self.field_per_volt == 0:
            return 0.0
        return self.dA_dV / (a * self.field_per_volt)

    @classmethod
    def model_validate(cls, payload: Mapping[str, Any], *, prefix: str = "STARK_") -> "StarkModel":
        if not isinstance(payload, Mapping):
            raise ValidationError("Stark model must be a mapping")
        return cls(**{k: _require_float(v, k) for k, v in _from_prefixed(cls, payload, prefix).items()})

    def model_dump(self, *, prefix: str = "STARK_") -> Dict[str, Any]:
        return {f"{prefix}{item.name.upper()}": getattr(self, item.name) for item in fields(self)}


@dataclass(frozen=True, slots=True)
class CoherenceParams:
    """Measured coherence values kept as fit fixtures (seconds)."""

    t2n_plus_star_nmr: float = 29.4e-3
    t2n_plus_star_ner: float = 29.8e-3
    middle_enhancement: float = 1.5
    t2n_p_star: float = 24.5e-3
    t2e_star: float = 11.06e-6
    t2e_hahn: float = 510e-6
    beta_e_hahn: float = 1.67
    t2n0_hahn: float = 247e-6
    t1e: float = 2.44

    def __post_init__(self) -> None:
        for item in fields(self):
            _require_float(getattr(self, item.name), item.name, positive=True)

    @classmethod
    def model_validate(cls, payload: Mapping[str, Any], *, prefix: str = "COHERENCE_") -> "CoherenceParams":
        if not isinstance(payload, Mapping):
            raise ValidationError("Coherence parameters must be a mapping")
        return cls(**{k: _require_float(v, k) for k, v in _from_prefixed(cls, payload, prefix).items()})

    def model_dump(self, *, prefix: str = "COHERENCE_") -> Dict[str, Any]:
        return {f"{prefix}{item.name.upper()}": getattr(self, item.name) for item in fields(self)}


_DEVICE_KEYS = {
    "gamma_n": "GAMMA_N",
    "gamma_e": "GAMMA_E",
    "b0": "B0",
    "a": "A",
    "fq_plus": "FQ_PLUS",
    "fq_neutral": "FQ_NEUTRAL",
    "spin": "NUCLEAR_SPIN",
}


@dataclass(frozen=True, slots=True)
class DeviceParams:
    """Physical constants of one donor in one device. Frequencies in Hz, fields in T."""

    gamma_n: float = 5.55e6
    gamma_e: float = 27.97e9
    b0: float = 0.9995
    a: float = 96.584e6
    fq_plus: float = -44.1e3
    fq_neutral: float = -52.5e3
    spin: float = 3.5
    stark: StarkModel = field(default_factory=StarkModel)
    coherence: CoherenceParams = field(default_factory=CoherenceParams)
    flags: Tuple[str, ...] = ()

    def __post_init__(self) -> None:
        for name in _DEVICE_KEYS:
            _require_float(getattr(self, name), name)
        require_half_integer(self.spin, "spin")
        if self.spin <= 0:
            raise ValidationError("Field 'spin' must be > 0")
        if self.gamma_e * self.b0 <= 0:
            raise ValidationError("gamma_e * B0 must be > 0")
        if self.a < 0:
            raise ValidationError("Field 'a' must be >= 0")
        zeeman = abs(self.gamma_n * self.b0)
        for name in ("fq_plus", "fq_neutral"):
            if abs(getattr(self, name)) >= zeeman:
                raise ValidationError(f"|{name}| must stay below gamma_n * B0")

    @property
    def nuclear_zeeman(self) -> float:
        return self.gamma_n * self.b0

    @property
    def electron_zeeman(self) -> float:
        return self.gamma_e * self.b0

    @property
    def nuclear_labels(self) -> Tuple[float, ...]:
        count = int(round(2 * self.spin)) + 1
        return tuple(self.spin - k for k in range(count))

    def fq(self, charge_state: ChargeState) -> float:
        return self.fq_plus if charge_state is ChargeState.IONISED else self.fq_neutral

    def replace(self, **changes: Any) -> "DeviceParams":
        return replace(self, **changes)

    @classmethod
    def model_validate(cls, payload: Mapping[str, Any]) -> "DeviceParams":
        if not isinstance(payload, Mapping):
            raise ValidationError("Device parameters must be a mapping")
        data: Dict[str, Any] = {}
        for name, key in _DEVICE_KEYS.items():
            if key in payload:
                data[name] = _require_float(payload[key], key)
        stark = payload.get("stark")
        if isinstance(stark, StarkModel):
            data["stark"] = stark
        else:
            data["stark"] = StarkModel.model_validate(payload)
        data["coherence"] = CoherenceParams.model_validate(payload)
        return cls(**data)

    def model_dump(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {key: getattr(self, name) for name, key in _DEVICE_KEYS.items()}
        data.update(self.stark.model_dump())
        data.update(self.coherence.model_dump())
        return data


@dataclass(frozen=True, slots=True)
class NoiseModel:
    """Quasi-static noise widths and readout imperfections."""

    sigma_b: float = 0.0
    sigma_fq: float = 0.0
    readout_flip_per_shot: float = 1e-3
    t1e: float = 2.44
    seed: int = 0
    echo_correlation: float = 1.0

    def __post_init__(self) -> None:
        _require_float(self.sigma_b, "sigma_b", minimum=0.0)
        _require_float(self.sigma_fq, "sigma_fq", minimum=0.0)
        _require_float(self.readout_flip_per_shot, "readout_flip_per_shot", minimum=0.0, maximum=1.0)
        _require_float(self.t1e, "t1e", positive=True)
        _require_int(self.seed, "seed", minimum=0)
        _require_float(self.echo_correlation, "echo_correlation", minimum=0.0, maximum=1.0)

    @classmethod
    def model_validate(cls, payload: Mapping[str, Any]) -> "NoiseModel":
        if not isinstance(payload, Mapping):
            raise ValidationError("Noise model must be a mapping")
        return cls(
            sigma_b=_require_float(payload.get("sigmaB", 0.0), "sigmaB", minimum=0.0),
            sigma_fq=_require_float(payload.get("sigmaFq", 0.0), "sigmaFq", minimum=0.0),
            readout_flip_per_shot=_require_float(
                payload.get("readoutFlip", 1e-3), "readoutFlip", minimum=0.0, maximum=1.0
            ),
            t1e=_require_float(payload.get("t1e", 2.44), "t1e", positive=True),
            seed=_require_int(payload.get("seed", 0), "seed", minimum=0),
            echo_correlation=_require_float(
                payload.get("echoCorrelation", 1.0), "echoCorrelation", minimum=0.0, maximum=1.0
            ),
        )

    def model_dump(self) -> Dict[str, Any]:
        return {
            "sigmaB": self.sigma_b,
            "sigmaFq": self.sigma_fq,
            "readoutFlip": self.readout_flip_per_shot,
            "t1e": self.t1e,
            "seed": self.seed,
            "echoCorrelation": self.echo_correlation,
        }


QuadrupoleComponents = Tuple[Tuple[float, float, float], Tuple[float, float, float], Tuple[float, float, float]]


def _quadrupole_components(value: Any) -> Optional[QuadrupoleComponents]:
    if value is None:
        return None
    if not isinstance(value, Sequence) or len(value) != 3:
        raise ValidationError("Field 'deltaQ' must be a 3x3 nested list")
    rows = []
    for row in value:
        if not isinstance(row, Sequence) or len(row) != 3:
            raise ValidationError("Field 'deltaQ' must be a 3x3 nested list")
        rows.append(tuple(_require_float(item, "deltaQ") for item in row))
    return tuple(rows)  # type: ignore[return-value]


@dataclass(frozen=True, slots=True)
class DriveSpec:
    """One drive tone, H(t) = H0 + V cos(2 pi f t + phase).

    ``amplitude`` is B1 in T for NMR/ESR, the quadrupole modulation depth in Hz for NER,
    and the hyperfine modulation depth in Hz for EDSR. ``delta_q`` optionally replaces the
    single NER1 depth by a full symmetric modulation tensor (Hz).
    """

    mechanism: Mechanism
    charge_state: ChargeState
    frequency: float
    amplitude: float
    duration: float
    phase: float = 0.0
    envelope: Envelope = Envelope.RECTANGULAR
    chirp_span: float = 0.0
    chirp_rate: float = 0.0
    delta_q: Optional[QuadrupoleComponents] = None
    calibration: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "mechanism", Mechanism.parse(self.mechanism))
        object.__setattr__(self, "charge_state", ChargeState.parse(self.charge_state))
        object.__setattr__(self, "envelope", Envelope.parse(self.envelope))
        _require_float(self.frequency, "frequency", minimum=0.0)
        _require_float(self.amplitude, "amplitude", minimum=0.0)
        _require_float(self.duration, "duration", positive=True)
        _require_float(self.phase, "phase")
        _require_float(self.chirp_span, "chirp_span", minimum=0.0)
        _require_float(self.chirp_rate, "chirp_rate")
        _require_float(self.calibration, "calibration", positive=True)
        check_mechanism(self.mechanism, self.charge_state)
        if self.envelope is Envelope.ADIABATIC_CHIRP and self.chirp_span <= 0:
            raise ValidationError("An adiabatic chirp needs a positive chirp_span")
        if self.delta_q is not None and self.mechanism not in (Mechanism.NER1, Mechanism.NER2):
            raise ValidationError("delta_q applies to NER drives only")

    @property
    def sweep_rate(self) -> float:
        """Chirp rate in Hz/s; a full sweep covers 2 * chirp_span in ``duration``."""
        if self.chirp_rate:
            return self.chirp_rate
        return 2.0 * self.chirp_span / self.duration

    @classmethod
    def model_validate(cls, payload: Mapping[str, Any]) -> "DriveSpec":
        if not isinstance(payload, Mapping):
            raise ValidationError("Drive specification must be a mapping")
        return cls(
            mechanism=Mechanism.parse(payload.get("mechanism")),
            charge_state=ChargeState.parse(payload.get("chargeState")),
            frequency=_require_float(payload.get("frequency"), "frequency", minimum=0.0),
            amplitude=_require_float(payload.get("amplitude"), "amplitude", minimum=0.0),
            duration=_require_float(payload.get("duration"), "duration", positive=True),
            phase=_require_float(payload.get("phase", 0.0), "phase"),
            envelope=Envelope.parse(payload.get("envelope", Envelope.RECTANGULAR)),
            chirp_span=_require_float(payload.get("chirpSpan", 0.0), "chirpSpan", minimum=0.0),
            chirp_rate=_require_float(payload.get("chirpRate", 0.0), "chirpRate"),
            delta_q=_quadrupole_components(payload.get("deltaQ")),
            calibration=_require_float(payload.get("calibration", 1.0), "calibration", positive=True),
        )

    def model_dump(self) -> Dict[str, Any]:
        return {
            "mechanism": self.mechanism.value,
            "chargeState": self.charge_state.value,
            "frequency": self.frequency,
            "amplitude": self.amplitude,
            "duration": self.duration,
            "phase": self.phase,
            "envelope": self.envelope.value,
            "chirpSpan": self.chirp_span,
            "chirpRate": self.chirp_rate,
            "deltaQ": None if self.delta_q is None else [list(row) for row in self.delta_q],
            "calibration": self.calibration,
        }
