"""Static donor Hamiltonians and drive operators, all in Hz."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..models import HermitianOperator
from ..schemas import ChargeState, DeviceParams, DriveSpec, Mechanism, ValidationError, check_mechanism
from .spin_algebra import kron, operator, spin_operators

_AXES = ("x", "y", "z")


@dataclass(frozen=True)
class QuadrupoleTensor:
    """Symmetric 3x3 coupling Q_ab in Hz, entering as sum_ab Q_ab I_a I_b."""

    q: np.ndarray

    def __post_init__(self) -> None:
        matrix = np.asarray(self.q, dtype=float)
        if matrix.shape != (3, 3):
            raise ValidationError("Quadrupole tensor must be 3x3")
        if not np.allclose(matrix, matrix.T, rtol=0.0, atol=1e-12 * max(1.0, float(np.max(np.abs(matrix))))):
            raise ValidationError("Quadrupole tensor must be symmetric")
        object.__setattr__(self, "q", matrix)

    @classmethod
    def axial(cls, fq: float) -> "QuadrupoleTensor":
        """Traceless axial tensor with adjacent first-order NMR spacing equal to ``fq``."""
        k = -fq / 3.0
        return cls(k * np.diag([-0.5, -0.5, 1.0]))

    @classmethod
    def zero(cls) -> "QuadrupoleTensor":
        return cls(np.zeros((3, 3)))

    @classmethod
    def from_components(cls, components: Sequence[Sequence[float]]) -> "QuadrupoleTensor":
        return cls(np.asarray(components, dtype=float))

    @property
    def is_axial(self) -> bool:
        off = self.q - np.diag(np.diag(self.q))
        return bool(np.all(off == 0.0) and self.q[0, 0] == self.q[1, 1])

    @property
    def trace(self) -> float:
        return float(np.trace(self.q))


def quadrupole_matrix(q: QuadrupoleTensor, spin: float) -> np.ndarray:
    ops = spin_operators(spin)
    if q.is_axial:
        # Ix^2 + Iy^2 = I(I+1) - Iz^2 keeps the axial term exactly diagonal.
        iz2 = ops.iz @ ops.iz
        casimir = spin * (spin + 1) * ops.identity
        return q.q[0, 0] * (casimir - iz2) + q.q[2, 2] * iz2
    matrix = np.zeros((ops.dim, ops.dim), dtype=complex)
    for a, axis_a in enumerate(_AXES):
        for b, axis_b in enumerate(_AXES):
            if q.q[a, b] != 0.0:
                matrix = matrix + q.q[a, b] * (ops.component(axis_a) @ ops.component(axis_b))
    return (matrix + matrix.conj().T) / 2


def h_ionised(p: DeviceParams, q: Optional[QuadrupoleTensor] = None) -> HermitianOperator:
    """H+ = -gamma_n B0 Iz + sum Q_ab Ia Ib on the bare nucleus."""
    tensor = q if q is not None else QuadrupoleTensor.axial(p.fq_plus)
    ops = spin_operators(p.spin)
    return operator(-p.nuclear_zeeman * ops.iz + quadrupole_matrix(tensor, p.spin), ops)


def _electron_nuclear(p: DeviceParams):
    return spin_operators(0.5), spin_operators(p.spin)


def h_neutral(p: DeviceParams, q: Optional[QuadrupoleTensor] = None, *, secular: bool = False) -> HermitianOperator:
    """H0 = B0(-gamma_n Iz + gamma_e Sz) + A S.I + Q with the electron as the left factor.

    ``secular`` drops the flip-flop part A(SxIx + SyIy).
    """
    tensor = q if q is not None else QuadrupoleTensor.axial(p.fq_neutral)
    electron, nucleus = _electron_nuclear(p)
    one_e, one_n = electron.identity, nucleus.identity
    matrix = p.b0 * (-p.gamma_n * np.kron(one_e, nucleus.iz) + p.gamma_e * np.kron(electron.iz, one_n))
    matrix = matrix + p.a * np.kron(electron.iz, nucleus.iz)
    if not secular:
        matrix = matrix + p.a * (np.kron(electron.ix, nucleus.ix) + np.kron(electron.iy, nucleus.iy))
    matrix = matrix + np.kron(one_e, quadrupole_matrix(tensor, p.spin))
    basis = kron(operator(one_e, electron), operator(one_n, nucleus)).basis
    return HermitianOperator(matrix, basis)


def static_hamiltonian(charge_state: ChargeState, p: DeviceParams) -> HermitianOperator:
    if ChargeState.parse(charge_state) is ChargeState.IONISED:
        return h_ionised(p)
    return h_neutral(p)


def _nuclear_term(matrix: np.ndarray, charge_state: ChargeState, p: DeviceParams) -> HermitianOperator:
    electron, nucleus = _electron_nuclear(p)
    nuclear = operator(matrix, nucleus)
    if charge_state is ChargeState.IONISED:
        return nuclear
    return kron(operator(electron.identity, electron), nuclear)


def unit_drive_operator(
    mechanism: Mechanism,
    charge_state: ChargeState,
    p: DeviceParams,
    delta_q: Optional[Sequence[Sequence[float]]] = None,
) -> HermitianOperator:
    """Drive operator for unit amplitude (dimensionless spin matrix)."""
    mechanism = Mechanism.parse(mechanism)
    charge_state = ChargeState.parse(charge_state)
    check_mechanism(mechanism, charge_state)
    electron, nucleus = _electron_nuclear(p)
    if mechanism is Mechanism.NMR:
        return _nuclear_term(nucleus.ix, charge_state, p)
    if mechanism is Mechanism.NER1:
        if delta_q is not None:
            return _nuclear_term(quadrupole_matrix(QuadrupoleTensor.from_components(delta_q), p.spin), charge_state, p)
        return _nuclear_term(nucleus.ix @ nucleus.iz + nucleus.iz @ nucleus.ix, charge_state, p)
    if mechanism is Mechanism.NER2:
        if delta_q is not None:
            return _nuclear_term(quadrupole_matrix(QuadrupoleTensor.from_components(delta_q), p.spin), charge_state, p)
        return _nuclear_term(nucleus.ix @ nucleus.ix - nucleus.iy @ nucleus.iy, charge_state, p)
    basis = kron(operator(electron.identity, electron), operator(nucleus.identity, nucleus)).basis
    if mechanism is Mechanism.ESR:
        return HermitianOperator(np.kron(electron.ix, nucleus.identity), basis)
    # EDSR keeps only the flip-flop part of a hyperfine modulation.
    return HermitianOperator(np.kron(electron.ix, nucleus.ix) + np.kron(electron.iy, nucleus.iy), basis)


def hyperfine_dispersive_operator(p: DeviceParams) -> HermitianOperator:
    """The Sz Iz part of a hyperfine modulation: it shifts levels and drives nothing."""
    electron, nucleus = _electron_nuclear(p)
    return kron(operator(electron.iz, electron), operator(nucleus.iz, nucleus))


def amplitude_factor(mechanism: Mechanism, p: DeviceParams) -> float:
    """Hz per unit of DriveSpec.amplitude for the unit operator."""
    if mechanism is Mechanism.NMR:
        return p.gamma_n
    if mechanism is Mechanism.ESR:
        return p.gamma_e
    return 1.0


def drive_operator(spec: DriveSpec, p: DeviceParams) -> HermitianOperator:
    """Amplitude operator V with H(t) = H_static + V cos(2 pi f t + phase)."""
    unit = unit_drive_operator(spec.mechanism, spec.charge_state, p, spec.delta_q)
    if spec.delta_q is not None:
        return unit.scaled(spec.calibration)
    return unit.scaled(amplitude_factor(spec.mechanism, p) * spec.amplitude * spec.calibration)
