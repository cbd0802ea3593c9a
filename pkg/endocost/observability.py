import logging
import logging.config
import sys
from typing import Any, Dict, Optional

import structlog


def configure_default_logging(log_level: str = "WARNING") -> None:
    """Level-filtered stderr logging for library use before configure_logging runs"""
    structlog.configure(
        processors=[
            structlog.processors.add_log_level,
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.dev.ConsoleRenderer(colors=False),
        ],
        wrapper_class=structlog.make_filtering_bound_logger(logging.getLevelName(log_level.upper())),
        logger_factory=structlog.PrintLoggerFactory(file=sys.stderr),
        context_class=dict,
        cache_logger_on_first_use=False,
    )


def configure_logging(log_level: str = "WARNING",
                      environment: str = "development",
                      log_file: Optional[str] = None) -> None:
    """Configure structured logging with structlog"""

    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.stdlib.PositionalArgumentsFormatter(),
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            structlog.processors.UnicodeDecoder(),
            structlog.processors.JSONRenderer() if environment == "production"
            else structlog.dev.ConsoleRenderer(colors=sys.stderr.isatty())
        ],
        wrapper_class=structlog.stdlib.BoundLogger,
        logger_factory=structlog.stdlib.LoggerFactory(),
        context_class=dict,
        cache_logger_on_first_use=True,
    )

    # stdout carries command output (tables, slope lines); logs go to stderr
    handlers: Dict[str, Dict[str, Any]] = {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'plain',
            'stream': sys.stderr
        }
    }
    if log_file:
        handlers['file'] = {
            'class': 'logging.handlers.RotatingFileHandler',
            'formatter': 'plain',
            'filename': log_file,
            'maxBytes': 10485760,  # 10MB
            'backupCount': 5
        }

    logging.config.dictConfig({
        'version': 1,
        'disable_existing_loggers': False,
        'formatters': {
            'plain': {
                'format': '%(message)s'
            }
        },
        'handlers': handlers,
        'loggers': {
            'endocost': {
                'handlers': list(handlers),
                'level': log_level.upper(),
                'propagate': False
            }
        },
        'root': {
            'handlers': ['console'],
            'level': 'WARNING'
        }
    })


def get_logger(name: str) -> structlog.stdlib.BoundLogger:
    """Get a configured structlog logger"""
    return structlog.get_logger(name)


def log_run_completed(logger: structlog.stdlib.BoundLogger,
                      row: Any,
                      elapsed: float) -> None:
    """Log a finished run with structured data"""
    logger.info(
        "run_completed",
        topology=row.topology,
        allocator=row.allocator,
        environment=row.environment,
        horizon=row.T,
        seed=row.seed,
        static_regret=row.static_regret,
        dynamic_regret=row.dynamic_regret,
        elapsed_ms=elapsed * 1000,
    )


if not structlog.is_configured():
    configure_default_logging()
