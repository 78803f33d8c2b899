import logging

import pytest
from pydantic import ValidationError

from sov_verify.core.config import Settings, get_settings
from sov_verify.core.exceptions import BudgetExceeded, StuckDiagram, SovVerifyError
from sov_verify.core.logger import setup_logging


def test_defaults():
    settings = get_settings()
    assert settings.threads == 4
    assert settings.default_format == "json"
    assert settings.epsilon_sequence == [0.2, 0.1, 0.05, 0.025]
    assert settings.log_file is None


def test_environment_override(monkeypatch):
    monkeypatch.setenv("SOV_VERIFY_THREADS", "2")
    monkeypatch.setenv("sov_verify_mb_n_max", "5")
    settings = get_settings()
    assert settings.threads == 2
    assert settings.mb_n_max == 5


def test_settings_are_cached():
    assert get_settings() is get_settings()


@pytest.mark.parametrize("field, value", [("threads", 0), ("quad_rel_tol", 0.0), ("default_format", "xml")])
def test_invalid_values_rejected(field, value):
    with pytest.raises(ValidationError):
        Settings(**{field: value})


def test_errors_carry_detail():
    error = BudgetExceeded("out of time", report={"checks": []})
    assert isinstance(error, SovVerifyError)
    assert error.detail == "out of time"
    assert error.report == {"checks": []}


def test_stuck_diagram_keeps_diagram():
    error = StuckDiagram("no rule", diagram="d")
    assert error.diagram == "d"
    assert str(error) == "no rule"


def test_setup_logging_replaces_handlers(tmp_path):
    log_file = tmp_path / "run.log"
    settings = Settings(log_file=str(log_file), log_level="DEBUG")
    setup_logging(settings)
    setup_logging(settings, level="warning")
    root = logging.getLogger("sov_verify")
    assert root.level == logging.WARNING
    assert len(root.handlers) == 2
    root.warning("hello")
    for handler in root.handlers:
        handler.flush()
    assert "hello" in log_file.read_text()
    for handler in list(root.handlers):
        handler.close()
        root.removeHandler(handler)


def test_settings_model_config(monkeypatch):
    assert Settings.model_config["env_prefix"] == "SOV_VERIFY_"
    monkeypatch.setenv("SOV_VERIFY_QUAD_MAX_LEVEL", "3")
    monkeypatch.setenv("SOV_VERIFY_EPSILON_DEFAULT", "0.1")
    settings = get_settings()
    assert settings.quad_max_level == 3
    assert settings.epsilon_default == 0.1


def test_epsilon_default_reaches_chain(monkeypatch, chain2):
    assert chain2.with_epsilon().epsilon == 0.05
    monkeypatch.setenv("SOV_VERIFY_EPSILON_DEFAULT", "0.1")
    get_settings.cache_clear()
    assert chain2.with_epsilon().epsilon == 0.1
    assert chain2.with_epsilon(0.0).epsilon == 0.0
