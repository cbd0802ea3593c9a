import os
import sys

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

import pytest
import structlog

from endocost.observability import configure_default_logging, get_logger


@pytest.fixture
def restore_structlog():
    saved = structlog.get_config()
    yield
    structlog.configure(**saved)


def test_import_leaves_structlog_configured():
    assert structlog.is_configured()


def test_default_logging_drops_debug_and_keeps_stdout_clean(restore_structlog, capsys):
    structlog.reset_defaults()
    configure_default_logging()
    logger = get_logger("endocost.regret")
    logger.debug("qp_solved", iterations=12)
    logger.info("run_completed", horizon=1024)
    logger.warning("solver_slow", iterations=5000)
    captured = capsys.readouterr()
    assert captured.out == ""
    assert "qp_solved" not in captured.err
    assert "run_completed" not in captured.err
    assert "solver_slow" in captured.err


def test_default_logging_level_is_adjustable(restore_structlog, capsys):
    configure_default_logging("debug")
    get_logger("endocost.regret").debug("qp_solved")
    assert "qp_solved" in capsys.readouterr().err
