"""Computed domain objects shared by the service modules."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, NamedTuple, Optional, Tuple

import numpy as np

from .schemas import ChargeState, Mechanism, ValidationError, require_half_integer


def format_m(value: float) -> str:
    """Render a half-integer projection as a signed fraction, e.g. -7/2 or +1."""
    fraction = Fraction(value).limit_denominator(2)
    sign = "-" if fraction < 0 else "+"
    magnitude = abs(fraction)
    if magnitude.denominator == 1:
        return f"{sign}{magnitude.numerator}"
    return f"{sign}{magnitude.numerator}/{magnitude.denominator}"


def parse_m(text: str) -> float:
    token = text.strip()
    if token.startswith("m"):
        token = token[1:]
    try:
        value = float(Fraction(token))
    except (ValueError, ZeroDivisionError):
        raise ValidationError(f"Invalid spin projection: {text!r}") from None
    return require_half_integer(value, "m")


class StateLabel(NamedTuple):
    """Product-basis tag. ``m_s`` is None for the ionised (nucleus-only) donor."""

    m_s: Optional[float]
    m_i: float

    def __str__(self) -> str:
        if self.m_s is None:
            return format_m(self.m_i)
        return ("u" if self.m_s > 0 else "d") + format_m(self.m_i)

    @property
    def sort_key(self) -> Tuple[float, float]:
        return (0.0 if self.m_s is None else self.m_s, self.m_i)

    @property
    def total_m(self) -> float:
        return self.m_i + (self.m_s or 0.0)

    @classmethod
    def parse(cls, text: str) -> "StateLabel":
        token = text.strip()
        if not token:
            raise ValidationError("Empty state label")
        head = token[0].lower()
        if head in ("u", "d"):
            return cls(0.5 if head == "u" else -0.5, parse_m(token[1:]))
        return cls(None, parse_m(token))


@dataclass(frozen=True)
class SpinOperatorSet:
    """Angular-momentum matrices in the |m> basis ordered +spin -> -spin."""

    spin: float
    ix: np.ndarray
    iy: np.ndarray
    iz: np.ndarray
    iplus: np.ndarray
    iminus: np.ndarray

    @property
    def dim(self) -> int:
        return self.iz.shape[0]

    @property
    def identity(self) -> np.ndarray:
        return np.eye(self.dim, dtype=complex)

    @property
    def projections(self) -> Tuple[float, ...]:
        return tuple(float(v) for v in np.real(np.diag(self.iz)))

    @property
    def basis(self) -> Tuple[StateLabel, ...]:
        return tuple(StateLabel(None, m) for m in self.projections)

    def component(self, axis: str) -> np.ndarray:
        return {"x": self.ix, "y": self.iy, "z": self.iz}[axis]


@dataclass(frozen=True)
class HermitianOperator:
    """Dense operator in Hz (E/h), optionally tagged with its product basis."""

    entries: np.ndarray
    basis: Optional[Tuple[StateLabel, ...]] = None

    def __post_init__(self) -> None:
        matrix = np.asarray(self.entries, dtype=complex)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValidationError("Operator must be a square matrix")
        if self.basis is not None and len(self.basis) != matrix.shape[0]:
            raise ValidationError("Basis length does not match operator dimension")
        object.__setattr__(self, "entries", matrix)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def is_hermitian(self, rtol: float = 1e-9) -> bool:
        scale = float(np.max(np.abs(self.entries))) if self.entries.size else 0.0
        if scale == 0.0:
            return True
        return bool(np.max(np.abs(self.entries - self.entries.conj().T)) <= rtol * scale)

    def scaled(self, factor: float) -> "HermitianOperator":
        return HermitianOperator(self.entries * factor, self.basis)

    def element(self, bra: np.ndarray, ket: np.ndarray) -> complex:
        return complex(np.vdot(bra, self.entries @ ket))


@dataclass(frozen=True)
class EigenSystem:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    labels: Optional[Tuple[StateLabel, ...]] = None
    overlaps: Optional[np.ndarray] = None

    @property
    def dim(self) -> int:
        return len(self.eigenvalues)

    @property
    def labeled(self) -> bool:
        return self.labels is not None

    def index_of(self, label: StateLabel) -> int:
        if self.labels is None:
            raise ValidationError("Eigensystem carries no basis labels")
        try:
            return self.labels.index(label)
        except ValueError:
            raise ValidationError(f"Unknown state label {label}") from None

    def energy(self, label: StateLabel) -> float:
        return float(self.eigenvalues[self.index_of(label)])

    def vector(self, label: StateLabel) -> np.ndarray:
        return self.eigenvectors[:, self.index_of(label)]


@dataclass(frozen=True)
class Transition:
    """An allowed transition; ``from_label`` is the lower-energy state."""

    from_label: StateLabel
    to_label: StateLabel
    frequency: float
    mechanism: Mechanism
    matrix_element: float
    charge_state: ChargeState

    @property
    def upper_m(self) -> float:
        return max(self.from_label.m_i, self.to_label.m_i)

    @property
    def labels(self) -> Tuple[StateLabel, StateLabel]:
        return (self.from_label, self.to_label)

    def connects(self, a: StateLabel, b: StateLabel) -> bool:
        return {a, b} == {self.from_label, self.to_label}

    def model_dump(self) -> Dict[str, Any]:
        return {
            "mechanism": self.mechanism.value,
            "from": str(self.from_label),
            "to": str(self.to_label),
            "frequency_hz": self.frequency,
            "matrix_element": self.matrix_element,
        }


@dataclass(frozen=True)
class SpectrumLine:
    center: float
    height: float = 1.0
    fwhm: float = 5e3

    def __post_init__(self) -> None:
        if self.fwhm <= 0:
            raise ValidationError("Line width must be > 0")


@dataclass(frozen=True)
class QuantumState:
    amplitudes: np.ndarray
    labels: Optional[Tuple[StateLabel, ...]] = None

    def __post_init__(self) -> None:
        vector = np.asarray(self.amplitudes, dtype=complex)
        norm = float(np.linalg.norm(vector))
        if abs(norm - 1.0) > 1e-9:
            raise ValidationError(f"State is not normalised (norm {norm:.12f})")
        object.__setattr__(self, "amplitudes", vector)

    @property
    def populations(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def expectation(self, operator: np.ndarray) -> float:
        return float(np.real(np.vdot(self.amplitudes, operator @ self.amplitudes)))


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    labels: Optional[Tuple[StateLabel, ...]] = None

    @property
    def populations(self) -> np.ndarray:
        return np.abs(self.states) ** 2

    @property
    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.states, axis=1)


@dataclass(frozen=True)
class DecayCurve:
    tau: np.ndarray
    probability: np.ndarray
    stderr: np.ndarray

    def __post_init__(self) -> None:
        if not (len(self.tau) == len(self.probability) == len(self.stderr)):
            raise ValidationError("Decay curve columns differ in length")


@dataclass(frozen=True)
class FitResult:
    t2: float
    beta: float
    amplitude: float
    offset: float
    residual_norm: float
    status: str = "ok"
    message: str = ""
    frequency: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @classmethod
    def failed(cls, message: str) -> "FitResult":
        nan = float("nan")
        return cls(t2=nan, beta=nan, amplitude=nan, offset=nan, residual_norm=nan, status="failed", message=message)


@dataclass(frozen=True)
class Route:
    source: StateLabel
    target: StateLabel
    path: Tuple[StateLabel, ...] = ()
    mechanisms: Tuple[Mechanism, ...] = ()
    cost: float = float("inf")

    @property
    def found(self) -> bool:
        return bool(self.path)

    @property
    def hops(self) -> int:
        return max(len(self.path) - 1, 0)

    def model_dump(self) -> Dict[str, Any]:
        return {
            "from": str(self.source),
            "to": str(self.target),
            "found": self.found,
            "hops": self.hops if self.found else None,
            "cost": self.cost if self.found else None,
            "path": [str(label) for label in self.path],
            "mechanisms": [mechanism.value for mechanism in self.mechanisms],
        }


@dataclass(frozen=True)
class SecondOrderCoefficients:
    """Rational second-order tables keyed by the upper m_I of each pair (b keyed by m_I)."""

    g: Dict[Fraction, Fraction] = field(default_factory=dict)
    c: Dict[Fraction, Fraction] = field(default_factory=dict)
    b: Dict[Fraction, Fraction] = field(default_factory=dict)
