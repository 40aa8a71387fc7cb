import logging
from pathlib import Path

import pytest
from flask import Flask

from donor_sim.schemas import DeviceParams, ValidationError
from donor_sim.services.device import (
    configure_device,
    get_device,
    load_device_params,
    read_params_file,
    resolve_path,
)

DEFAULTS = Path(__file__).resolve().parents[1] / "config" / "device_defaults.cfg"


def test_default_file_matches_built_in_constants():
    params = load_device_params(DEFAULTS)
    builtin = DeviceParams()

    assert params.a == builtin.a
    assert params.b0 == builtin.b0
    assert params.fq_plus == builtin.fq_plus
    assert params.stark == builtin.stark
    assert params.coherence == builtin.coherence


def test_missing_file_falls_back_with_warning(tmp_path, caplog):
    with caplog.at_level(logging.WARNING):
        params = load_device_params(tmp_path / "absent.cfg")

    assert params == DeviceParams()
    assert "not found" in caplog.text


def test_file_keys_override_the_stark_preset(tmp_path):
    override = tmp_path / "override.cfg"
    override.write_text("A = 97.0e6\nSTARK_DA_DV = 1.0e6\nlowercase = 3\n", encoding="utf-8")
    plain = tmp_path / "plain.cfg"
    plain.write_text("B0 = 1.0\n", encoding="utf-8")

    assert read_params_file(override) == {"A": 97.0e6, "STARK_DA_DV": 1.0e6}
    assert load_device_params(override, stark_preset="nmr").stark.dA_dV == 1.0e6
    assert load_device_params(plain, stark_preset="nmr").stark.dA_dV == 11.57e6
    assert load_device_params(plain).b0 == 1.0


def test_stark_preset_applies_with_the_default_file(app):
    assert not any(key.startswith("STARK_") for key in read_params_file(DEFAULTS))
    assert load_device_params(DEFAULTS, stark_preset="nmr").stark.dA_dV == 11.57e6
    assert load_device_params(DEFAULTS, stark_preset="esr").stark.dA_dV == 9.8e6

    app.config["STARK_PRESET"] = "nmr"
    configure_device(app, DEFAULTS)
    with app.app_context():
        assert get_device().stark.dA_dV == 11.57e6


def test_unreadable_or_invalid_files_raise(tmp_path):
    broken = tmp_path / "broken.cfg"
    broken.write_text("A = = 1\n", encoding="utf-8")
    invalid = tmp_path / "invalid.cfg"
    invalid.write_text("NUCLEAR_SPIN = 0.3\n", encoding="utf-8")

    with pytest.raises(ValidationError):
        load_device_params(broken)
    with pytest.raises(ValidationError):
        load_device_params(invalid)
    with pytest.raises(ValidationError):
        load_device_params(None, stark_preset="edsr")


def test_relative_paths_resolve_against_the_project_root(tmp_path):
    assert resolve_path("config/a.cfg", tmp_path) == tmp_path / "config" / "a.cfg"
    assert resolve_path(tmp_path / "b.cfg", Path("/elsewhere")) == tmp_path / "b.cfg"


def test_app_registers_device_params(app, tmp_path):
    custom = tmp_path / "device.cfg"
    custom.write_text("B0 = 1.5\n", encoding="utf-8")

    with app.app_context():
        assert get_device().b0 == 0.9995
        configure_device(app, custom)
        assert get_device().b0 == 1.5
        assert app.config["DEVICE_PARAMS_PATH"] == str(custom)


def test_get_device_requires_configuration():
    bare = Flask(__name__)

    with bare.app_context():
        with pytest.raises(RuntimeError):
            get_device()
