import pytest

from donor_sim.models import StateLabel, format_m, parse_m
from donor_sim.schemas import (
    ChargeState,
    CoherenceParams,
    DeviceParams,
    DriveSpec,
    Envelope,
    Mechanism,
    NoiseModel,
    StarkModel,
    ValidationError,
    require_half_integer,
)


def test_device_params_parses_file_keys():
    params = DeviceParams.model_validate(
        {
            "A": "97.0e6",
            "B0": 1.0,
            "FQ_PLUS": -40e3,
            "STARK_DA_DV": 11.57e6,
            "COHERENCE_T1E": 3.0,
            "IGNORED": "value",
        }
    )

    assert params.a == 97.0e6
    assert params.b0 == 1.0
    assert params.fq_plus == -40e3
    assert params.gamma_n == 5.55e6
    assert params.stark.dA_dV == 11.57e6
    assert params.coherence.t1e == 3.0


def test_device_params_rejects_invalid_values():
    with pytest.raises(ValidationError):
        DeviceParams.model_validate({"A": "abc"})

    with pytest.raises(ValidationError):
        DeviceParams.model_validate({"NUCLEAR_SPIN": 1.25})

    with pytest.raises(ValidationError):
        DeviceParams.model_validate({"A": -1.0})

    with pytest.raises(ValidationError):
        DeviceParams.model_validate({"FQ_PLUS": 6e6})

    with pytest.raises(ValidationError):
        DeviceParams.model_validate({"B0": float("inf")})

    with pytest.raises(ValidationError):
        DeviceParams.model_validate(["A", 1.0])


def test_device_params_dump_uses_file_keys():
    dumped = DeviceParams().model_dump()

    assert dumped["A"] == 96.584e6
    assert dumped["NUCLEAR_SPIN"] == 3.5
    assert dumped["STARK_DA_DV"] == 9.8e6
    assert dumped["COHERENCE_T2E_HAHN"] == 510e-6
    assert DeviceParams.model_validate(dumped) == DeviceParams()


def test_device_params_derived_values(params):
    assert params.nuclear_zeeman == pytest.approx(5.547225e6)
    assert params.nuclear_labels == (3.5, 2.5, 1.5, 0.5, -0.5, -1.5, -2.5, -3.5)
    assert params.fq(ChargeState.IONISED) == -44.1e3
    assert params.fq(ChargeState.NEUTRAL) == -52.5e3
    assert params.replace(a=0.0).a == 0.0


def test_stark_presets_and_zero_model():
    assert StarkModel.preset("ESR").dA_dV == 9.8e6
    assert StarkModel.preset("nmr").dA_dV == 11.57e6
    zero = StarkModel.zero()
    assert (zero.dA_dV, zero.dGammaEB0_dV, zero.dfq_plus_dV, zero.dfq0_dV) == (0.0, 0.0, 0.0, 0.0)
    assert StarkModel().linear_field_coefficient(96.584e6) == pytest.approx(9.8e6 / (96.584e6 * 1e6))

    with pytest.raises(ValidationError):
        StarkModel(linearity_window_v=0.0)


def test_coherence_params_must_be_positive():
    with pytest.raises(ValidationError):
        CoherenceParams.model_validate({"COHERENCE_T1E": 0.0})


def test_noise_model_parses_and_dumps():
    noise = NoiseModel.model_validate({"sigmaB": "1e-6", "sigmaFq": 20, "seed": "7"})

    assert noise.sigma_b == 1e-6
    assert noise.sigma_fq == 20.0
    assert noise.seed == 7
    assert NoiseModel.model_validate(noise.model_dump()) == noise


def test_noise_model_rejects_invalid_values():
    with pytest.raises(ValidationError):
        NoiseModel.model_validate({"sigmaB": -1.0})

    with pytest.raises(ValidationError):
        NoiseModel.model_validate({"readoutFlip": 2.0})

    with pytest.raises(ValidationError):
        NoiseModel.model_validate({"seed": True})

    with pytest.raises(ValidationError):
        NoiseModel(echo_correlation=1.5)


def test_drive_spec_normalizes_enums():
    spec = DriveSpec.model_validate(
        {
            "mechanism": "NMR",
            "chargeState": "ionised",
            "frequency": 5.5e6,
            "amplitude": "1e-3",
            "duration": 1e-3,
        }
    )

    assert spec.mechanism is Mechanism.NMR
    assert spec.charge_state is ChargeState.IONISED
    assert spec.envelope is Envelope.RECTANGULAR
    assert spec.model_dump()["chargeState"] == "ionised"
    assert DriveSpec.model_validate(spec.model_dump()) == spec


def test_drive_spec_dump_keeps_chirp_rate_and_tensor():
    spec = DriveSpec(
        Mechanism.NER1,
        ChargeState.IONISED,
        5.5e6,
        0.0,
        1e-3,
        chirp_rate=3e8,
        delta_q=((0.0, 0.0, 250.0), (0.0, 0.0, 0.0), (250.0, 0.0, 0.0)),
    )

    dumped = spec.model_dump()
    restored = DriveSpec.model_validate(dumped)

    assert dumped["chirpRate"] == 3e8
    assert dumped["deltaQ"] == [[0.0, 0.0, 250.0], [0.0, 0.0, 0.0], [250.0, 0.0, 0.0]]
    assert restored == spec
    assert restored.sweep_rate == 3e8
    assert DriveSpec.model_validate({**dumped, "deltaQ": None}).delta_q is None

    with pytest.raises(ValidationError):
        DriveSpec.model_validate({**dumped, "deltaQ": [[1.0, 2.0]]})


def test_drive_spec_rejects_invalid_combinations():
    with pytest.raises(ValidationError):
        DriveSpec(Mechanism.ESR, ChargeState.IONISED, 28e9, 1e-5, 1e-6)

    with pytest.raises(ValidationError):
        DriveSpec(Mechanism.NER1, ChargeState.NEUTRAL, 5.5e6, 1e3, 1e-3)

    with pytest.raises(ValidationError):
        DriveSpec(Mechanism.NMR, ChargeState.IONISED, 5.5e6, 1e-3, 0.0)

    with pytest.raises(ValidationError):
        DriveSpec(Mechanism.NMR, ChargeState.IONISED, 5.5e6, 1e-3, 1e-3, envelope="adiabatic-chirp")

    with pytest.raises(ValidationError):
        DriveSpec(Mechanism.NMR, ChargeState.IONISED, 5.5e6, 1e-3, 1e-3, delta_q=((0, 0, 0), (0, 0, 0), (0, 0, 0)))

    with pytest.raises(ValidationError):
        DriveSpec.model_validate({"mechanism": "laser", "chargeState": "ionised"})


def test_chirp_rate_defaults_to_full_sweep():
    spec = DriveSpec(Mechanism.ESR, ChargeState.NEUTRAL, 28e9, 1e-5, 1e-3, envelope="adiabatic-chirp", chirp_span=1e6)

    assert spec.sweep_rate == pytest.approx(2e9)


def test_state_labels_parse_and_print():
    assert StateLabel.parse("d-7/2") == StateLabel(-0.5, -3.5)
    assert StateLabel.parse("U5/2") == StateLabel(0.5, 2.5)
    assert StateLabel.parse("+1/2") == StateLabel(None, 0.5)
    assert str(StateLabel(-0.5, -3.5)) == "d-7/2"
    assert str(StateLabel(None, 0.5)) == "+1/2"

    with pytest.raises(ValidationError):
        StateLabel.parse("")

    with pytest.raises(ValidationError):
        StateLabel.parse("x1/2")


def test_projection_helpers():
    assert parse_m("m-5/2") == -2.5
    assert parse_m("3") == 3.0
    assert format_m(-2.5) == "-5/2"
    assert require_half_integer("1.5", "m") == 1.5

    with pytest.raises(ValidationError):
        parse_m("1/3")

    with pytest.raises(ValidationError):
        require_half_integer(0.25, "m")
