import numpy as np
import pytest

from donor_sim.schemas import ChargeState, DriveSpec, Mechanism, ValidationError
from donor_sim.services.hamiltonians import (
    QuadrupoleTensor,
    drive_operator,
    h_ionised,
    h_neutral,
    hyperfine_dispersive_operator,
    quadrupole_matrix,
    static_hamiltonian,
    unit_drive_operator,
)
from donor_sim.services.spin_algebra import spin_operators


def test_axial_quadrupole_gives_linear_nmr_plus_spacing(params):
    energies = np.real(np.diag(h_ionised(params).entries))
    projections = spin_operators(params.spin).projections
    levels = dict(zip(projections, energies))

    for m in projections[:-1]:
        line = levels[m - 1] - levels[m]
        assert line == pytest.approx(params.nuclear_zeeman + (m - 0.5) * params.fq_plus, abs=1e-6)


def test_axial_quadrupole_is_exactly_diagonal():
    matrix = quadrupole_matrix(QuadrupoleTensor.axial(-44.1e3), 3.5)

    assert np.count_nonzero(matrix - np.diag(np.diag(matrix))) == 0


def test_general_quadrupole_tensor_matches_axial_form():
    axial = QuadrupoleTensor.axial(-44.1e3)
    general = QuadrupoleTensor.from_components(axial.q + np.diag([1e-9, 0.0, 0.0]))

    assert not general.is_axial
    assert np.allclose(quadrupole_matrix(general, 3.5), quadrupole_matrix(axial, 3.5), atol=1e-6)


@pytest.mark.parametrize(
    "components",
    [np.zeros((2, 2)), [[0.0, 1.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]],
)
def test_quadrupole_tensor_validates_shape_and_symmetry(components):
    with pytest.raises(ValidationError):
        QuadrupoleTensor.from_components(components)


def test_neutral_hamiltonian_is_hermitian_and_secular_part_diagonal(params):
    full = h_neutral(params)
    secular = h_neutral(params, secular=True)

    assert full.dim == 16
    assert full.is_hermitian()
    off_diagonal = secular.entries - np.diag(np.diag(secular.entries))
    assert np.max(np.abs(off_diagonal)) == 0
    assert np.allclose(np.diag(full.entries), np.diag(secular.entries))


def test_static_hamiltonian_selects_charge_state(params):
    assert static_hamiltonian(ChargeState.IONISED, params).dim == 8
    assert static_hamiltonian("neutral", params).dim == 16


@pytest.mark.parametrize(
    "mechanism, charge_state",
    [(Mechanism.ESR, ChargeState.IONISED), (Mechanism.EDSR, ChargeState.IONISED), (Mechanism.NER1, ChargeState.NEUTRAL)],
)
def test_unit_drive_rejects_unsupported_charge_states(params, mechanism, charge_state):
    with pytest.raises(ValidationError):
        unit_drive_operator(mechanism, charge_state, params)


def test_ner1_operator_has_no_middle_element(params):
    v = unit_drive_operator(Mechanism.NER1, ChargeState.IONISED, params)
    index = {label.m_i: k for k, label in enumerate(v.basis)}

    assert v.entries[index[0.5], index[-0.5]] == 0
    assert abs(v.entries[index[1.5], index[0.5]]) > 0


def test_drive_operator_scales_by_gyromagnetic_ratio(params):
    spec = DriveSpec(Mechanism.NMR, ChargeState.IONISED, 5.5e6, 1e-3, 1e-3)
    unit = unit_drive_operator(Mechanism.NMR, ChargeState.IONISED, params)

    assert np.allclose(drive_operator(spec, params).entries, params.gamma_n * 1e-3 * unit.entries)


def test_dispersive_hyperfine_operator_is_diagonal(params):
    v = hyperfine_dispersive_operator(params)

    assert np.allclose(v.entries, np.diag(np.diag(v.entries)))
