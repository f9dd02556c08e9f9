import sys
from pathlib import Path
sys.path.append(str(Path(__file__).parent.parent.parent))

import logging

import numpy as np
import pytest

from src.config import Settings, configure_logging, get_settings
from tests.unit.matrices import haar_unitary, near_identity_unitary, y_rotation


def test_settings_defaults(monkeypatch):
    for key in ("GZSC_LOG_LEVEL", "GZSC_MAX_WORKERS", "GZSC_MP_DPS", "GZSC_SPARSE_DIMENSION_GUARD"):
        monkeypatch.delenv(key, raising=False)
    settings = Settings(_env_file=None)

    assert settings.log_level == "INFO"
    assert settings.max_workers >= 1
    assert settings.dimension_guard == 5000
    assert settings.sparse_dimension_guard == 250000
    assert settings.exact_dim_limit == 200
    assert settings.mp_dps >= 15


def test_settings_environment_override(monkeypatch):
    monkeypatch.setenv("GZSC_LOG_LEVEL", "debug")
    monkeypatch.setenv("GZSC_MAX_WORKERS", "2")
    monkeypatch.setenv("GZSC_SPARSE_DIMENSION_GUARD", "100")
    settings = Settings(_env_file=None)

    assert settings.log_level == "DEBUG"
    assert settings.max_workers == 2
    assert settings.sparse_dimension_guard == 100


def test_settings_invalid_log_level(monkeypatch):
    monkeypatch.setenv("GZSC_LOG_LEVEL", "chatty")

    with pytest.raises(ValueError):
        Settings(_env_file=None)


def test_get_settings_is_cached():
    assert get_settings() is get_settings()


def test_configure_logging_installs_single_handler():
    configure_logging(level="WARNING", json_logs=True)
    configure_logging(level="INFO", json_logs=False)
    root = logging.getLogger()

    assert len(root.handlers) == 1
    assert root.level == logging.INFO


def test_helpers_are_unitary():
    for g in (haar_unitary(3, 1), near_identity_unitary(3, 2), y_rotation(3, 0.7)):
        assert np.allclose(g.conj().T @ g, np.eye(3), atol=1e-12)
