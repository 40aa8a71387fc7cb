import os
from typing import Dict, Type


class Config:
    DEBUG = False
    TESTING = False
    LOG_LEVEL = os.environ.get("LOG_LEVEL", "INFO")
    LOGGING_CONFIG = os.environ.get("LOGGING_CONFIG", "logging.conf")
    DEVICE_PARAMS = os.environ.get("DONOR_PARAMS", "config/device_defaults.cfg")
    STARK_PRESET = os.environ.get("STARK_PRESET", "esr")
    MC_WORKERS = int(os.environ.get("MC_WORKERS", "1"))
    CSV_FLOAT_FORMAT = os.environ.get("CSV_FLOAT_FORMAT", "%.10g")

    # Adiabatic pulse settings are not reported with the initialisation data; these are assumptions.
    PLAN_DELTA_F_HZ = float(os.environ.get("PLAN_DELTA_F_HZ", "1e6"))
    PLAN_PULSE_DURATION_S = float(os.environ.get("PLAN_PULSE_DURATION_S", "1e-3"))
    PLAN_REPETITIONS = int(os.environ.get("PLAN_REPETITIONS", "20"))
    PLAN_RABI_ESR_HZ = float(os.environ.get("PLAN_RABI_ESR_HZ", "1e5"))
    PLAN_RABI_EDSR_HZ = float(os.environ.get("PLAN_RABI_EDSR_HZ", "1e5"))
    PLAN_LOAD_TIME_S = float(os.environ.get("PLAN_LOAD_TIME_S", "1e-4"))
    PLAN_READ_TIME_S = float(os.environ.get("PLAN_READ_TIME_S", "1e-3"))


class DevelopmentConfig(Config):
    DEBUG = True


class ProductionConfig(Config):
    DEBUG = False


class TestingConfig(Config):
    TESTING = True
    LOGGING_CONFIG = ""


config_by_name: Dict[str, Type[Config]] = {
    "development": DevelopmentConfig,
    "production": ProductionConfig,
    "testing": TestingConfig,
}
