"""Device-parameter loading and the per-app registry."""
from __future__ import annotations

import logging
from pathlib import Path
from typing import Any, Dict, Optional

from flask import Config, Flask, current_app

from ..schemas import DeviceParams, StarkModel, ValidationError

logger = logging.getLogger(__name__)

_PARAMS_KEY = "donor_device_params"


def resolve_path(path: str | Path, root: Optional[Path] = None) -> Path:
    candidate = Path(path)
    if not candidate.is_absolute() and root is not None:
        candidate = root / candidate
    return candidate


def read_params_file(path: Path) -> Dict[str, Any]:
    """Flat UPPERCASE keys of a Python-syntax params file."""
    config = Config(str(path.parent))
    try:
        config.from_pyfile(str(path))
    except (OSError, SyntaxError) as exc:
        raise ValidationError(f"Cannot read device parameters from {path}: {exc}") from exc
    return {key: value for key, value in config.items() if key.isupper()}


def load_device_params(path: Optional[str | Path], *, stark_preset: Optional[str] = None) -> DeviceParams:
    """Validate a params file over the built-in defaults.

    The Stark preset seeds the slopes; keys in the file win over it. A missing file falls
    back to the defaults with a warning.
    """
    payload: Dict[str, Any] = {}
    if stark_preset:
        payload.update(StarkModel.preset(stark_preset).model_dump())
    if path:
        location = Path(path)
        if location.exists():
            payload.update(read_params_file(location))
        else:
            logger.warning("Device parameter file not found at %s; using defaults", location)
    params = DeviceParams.model_validate(payload)
    logger.debug("Loaded device parameters: A=%.1f Hz, B0=%.6f T", params.a, params.b0)
    return params


def configure_device(app: Flask, path: Optional[str | Path] = None) -> DeviceParams:
    """Load the configured device parameters and register them on the app."""
    root = Path(app.root_path).parent
    configured = path if path is not None else app.config.get("DEVICE_PARAMS")
    location = resolve_path(configured, root) if configured else None
    params = load_device_params(location, stark_preset=app.config.get("STARK_PRESET"))
    app.config["DEVICE_PARAMS_PATH"] = str(location) if location else ""
    app.extensions[_PARAMS_KEY] = params
    return params


def get_device() -> DeviceParams:
    """Return the device parameters registered on the current app."""
    params = current_app.extensions.get(_PARAMS_KEY)
    if params is None:
        raise RuntimeError("Device parameters have not been configured")
    return params


__all__ = [
    "configure_device",
    "get_device",
    "load_device_params",
    "read_params_file",
    "resolve_path",
]
