from fractions import Fraction

import numpy as np
import pytest

from donor_sim.schemas import ChargeState, ElectronBranch, Mechanism, ValidationError
from donor_sim.services.perturbation import (
    TABULATED,
    edsr_frequency,
    esr_frequency,
    esr_spacing,
    extract_A_from_esr,
    extract_A_from_nmr0,
    extract_B0_from_nmr_plus,
    extract_fq,
    ladder_frequencies,
    nmr0_frequency,
    second_order_coefficients,
    second_order_shift,
)
from donor_sim.services.spectroscopy import transitions_for

UPPERS = [Fraction(k, 2) for k in range(-5, 8, 2)]
LADDER = [Fraction(k, 2) for k in range(-7, 8, 2)]


def _exact(p, mechanism, branch=None):
    lines = transitions_for(p, mechanism, ChargeState.NEUTRAL, branch=branch)
    return {line.upper_m: line.frequency for line in lines}


def test_down_branch_nmr_coefficients():
    table = second_order_coefficients(3.5, ElectronBranch.DOWN).g

    assert [table[m] for m in UPPERS] == [Fraction(n, 4) for n in (7, 5, 3, 1, -1, -3, -5)]
    for m in UPPERS:
        assert table[m] == (1 - m) / 2


def test_nmr_coefficients_sum_to_one_half_across_the_middle():
    table = second_order_coefficients(3.5).g

    for m in UPPERS:
        assert table[m] + table[1 - m] == Fraction(1, 2)


def test_esr_coefficients():
    tables = second_order_coefficients(3.5)

    assert [tables.b[m] for m in LADDER] == [Fraction(63, 8) - m * m / 2 for m in LADDER]
    assert tables.b[Fraction(7, 2)] == Fraction(7, 4)
    assert [tables.c[m] for m in UPPERS] == [3, 2, 1, 0, -1, -2, -3]


def test_second_order_shift_edge_cases():
    assert second_order_shift(96.584e6, 27.97e9, 0.9995, -0.5, -3.5) == 0.0
    assert second_order_shift(0.0, 27.97e9, 0.9995, 0.5, 0.5) == 0.0
    with pytest.raises(ValidationError):
        second_order_shift(96.584e6, 27.97e9, 0.9995, 1.0, 0.5)
    with pytest.raises(ValidationError):
        second_order_shift(96.584e6, 27.97e9, 0.9995, 0.5, 4.5)


def test_tabulated_shift_is_antisymmetric():
    for m in LADDER:
        up = second_order_shift(96.584e6, 27.97e9, 0.9995, 0.5, float(m), exact_denominators=False)
        down = second_order_shift(96.584e6, 27.97e9, 0.9995, -0.5, float(-m), exact_denominators=False)
        assert up == pytest.approx(-down, rel=1e-12, abs=1e-9)


def test_tabulated_mirror_pair_sum_is_quadrupole_free(params):
    expected = 2 * params.nuclear_zeeman + params.a + params.a ** 2 / (2 * params.electron_zeeman)

    for fq in (-52.5e3, 0.0, 30e3):
        p = params.replace(fq_neutral=fq)
        for m in (-2.5, -1.5, -0.5):
            total = nmr0_frequency(p, m, mode=TABULATED) + nmr0_frequency(p, 1 - m, mode=TABULATED)
            assert total == pytest.approx(expected, rel=1e-9)


@pytest.mark.parametrize("branch", [ElectronBranch.DOWN, ElectronBranch.UP])
def test_refined_nmr0_tracks_diagonalisation(params, branch):
    rng = np.random.default_rng(7)
    for _ in range(100):
        scale = rng.uniform(0.8, 1.2, size=3)
        p = params.replace(a=params.a * scale[0], fq_neutral=params.fq_neutral * scale[1], b0=params.b0 * scale[2])
        exact = _exact(p, Mechanism.NMR, branch)
        for m, frequency in exact.items():
            assert nmr0_frequency(p, m, branch) == pytest.approx(frequency, abs=2e3)


def test_refined_esr_and_edsr_track_diagonalisation(params):
    rng = np.random.default_rng(11)
    for _ in range(100):
        scale = rng.uniform(0.8, 1.2, size=3)
        p = params.replace(a=params.a * scale[0], fq_neutral=params.fq_neutral * scale[1], b0=params.b0 * scale[2])
        for m, frequency in _exact(p, Mechanism.ESR).items():
            assert esr_frequency(p, m) == pytest.approx(frequency, abs=2e3)
        for m, frequency in _exact(p, Mechanism.EDSR).items():
            assert edsr_frequency(p, m) == pytest.approx(frequency, abs=2e3)


def test_refined_nmr0_is_sub_khz_at_the_device_point(params):
    for branch in ElectronBranch:
        for m, frequency in _exact(params, Mechanism.NMR, branch).items():
            assert nmr0_frequency(params, m, branch) == pytest.approx(frequency, abs=500.0)


def test_tabulated_mode_is_within_a_few_khz(params):
    for m, frequency in _exact(params, Mechanism.NMR, ElectronBranch.DOWN).items():
        assert nmr0_frequency(params, m, mode=TABULATED) == pytest.approx(frequency, abs=8e3)


def test_zero_hyperfine_reduces_to_nuclear_zeeman_and_quadrupole(params):
    p = params.replace(a=0.0)

    for m in UPPERS:
        m = float(m)
        expected = p.nuclear_zeeman + (m - 0.5) * p.fq_neutral
        assert nmr0_frequency(p, m) == pytest.approx(expected, abs=1e-6)


def test_zero_quadrupole_orders_lines_by_second_order_shift(params):
    p = params.replace(fq_neutral=0.0)

    lines = [nmr0_frequency(p, m) for m in (-2.5, -1.5, -0.5, 0.5, 1.5, 2.5, 3.5)]

    assert np.all(np.diff(lines) < 0)


def test_esr_spacing_tracks_hyperfine(params):
    for m in UPPERS:
        m = float(m)
        assert esr_spacing(params, m) == pytest.approx(params.a, rel=0.02)
        assert esr_spacing(params, m, mode=TABULATED) == pytest.approx(esr_spacing(params, m), abs=20e3)


def test_unknown_mode_and_bad_labels_raise(params):
    with pytest.raises(ValidationError):
        nmr0_frequency(params, 0.5, mode="exact")
    with pytest.raises(ValidationError):
        nmr0_frequency(params, -3.5)
    with pytest.raises(ValidationError):
        esr_frequency(params, 0.25)


def test_extract_hyperfine_from_neutral_nmr(params):
    down = ladder_frequencies(transitions_for(params, Mechanism.NMR, ChargeState.NEUTRAL, branch=ElectronBranch.DOWN))
    up = ladder_frequencies(transitions_for(params, Mechanism.NMR, ChargeState.NEUTRAL, branch=ElectronBranch.UP))

    assert extract_A_from_nmr0(down, params) == pytest.approx(96.584e6, abs=2e3)
    assert extract_A_from_nmr0(up, params, branch="up") == pytest.approx(96.584e6, abs=2e3)
    assert extract_A_from_nmr0(down, params, refine=False) == pytest.approx(96.584e6, rel=1e-3)


def test_extract_quadrupole(params, nmr_plus_lines):
    down = ladder_frequencies(transitions_for(params, Mechanism.NMR, ChargeState.NEUTRAL, branch=ElectronBranch.DOWN))
    ionised = ladder_frequencies(nmr_plus_lines.values())

    assert extract_fq(down, params) == pytest.approx(-52.5e3, abs=0.5e3)
    assert extract_fq(ionised, params, charge_state=ChargeState.IONISED) == pytest.approx(-44.1e3, abs=1.0)


def test_extract_field_from_middle_line(params, nmr_plus_lines):
    assert extract_B0_from_nmr_plus(nmr_plus_lines[0.5].frequency, params) == pytest.approx(0.9995, rel=1e-9)
    assert extract_B0_from_nmr_plus(5.547225e6, 5.55e6) == pytest.approx(0.9995)
    with pytest.raises(ValidationError):
        extract_B0_from_nmr_plus(-1.0, params)


def test_extract_hyperfine_from_esr(params):
    esr = ladder_frequencies(transitions_for(params, Mechanism.ESR, ChargeState.NEUTRAL))

    assert extract_A_from_esr(esr, params) == pytest.approx(96.584e6, abs=2e3)


def test_extraction_rejects_wrong_line_count(params):
    with pytest.raises(ValidationError):
        extract_A_from_nmr0([1.0] * 6, params)
    with pytest.raises(ValidationError):
        extract_fq([1.0] * 8, params, charge_state="ionised")
    with pytest.raises(ValidationError):
        extract_A_from_esr([1.0] * 7, params)
