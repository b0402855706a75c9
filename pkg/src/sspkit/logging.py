"""Structured logging on stderr with run context support."""

import logging
import sys
from typing import Any

import numpy as np
import structlog
from structlog.typing import EventDict, Processor, WrappedLogger

from .exceptions import ConfigurationError

LOG_FORMATS = ("console", "json")


def _numpy_to_builtin(_: WrappedLogger, __: str, event_dict: EventDict) -> EventDict:
    """Numpy scalars and small arrays become plain values so every renderer can print them."""
    for key, value in event_dict.items():
        if isinstance(value, np.generic):
            event_dict[key] = value.item()
        elif isinstance(value, np.ndarray) and value.size <= 16:
            event_dict[key] = value.tolist()
    return event_dict


def _shared_processors() -> list[Processor]:
    return [
        structlog.contextvars.merge_contextvars,
        structlog.stdlib.add_log_level,
        structlog.processors.TimeStamper(fmt="iso", utc=True),
        _numpy_to_builtin,
    ]


def configure_logging(level: str = "INFO", fmt: str = "console") -> None:
    """Route structlog and standard library records to stderr.

    stdout stays free for reports and tables. ``fmt`` is ``console`` (colored when stderr is a terminal) or
    ``json`` (one object per line). An unknown level or format is a configuration error.
    """
    log_level = logging.getLevelNamesMapping().get(level.upper())
    if log_level is None:
        raise ConfigurationError(f"Unknown log level '{level}'", instance="--log-level")
    if fmt.lower() not in LOG_FORMATS:
        raise ConfigurationError(f"Unknown log format '{fmt}'", instance="--log-format")

    renderer: Processor
    if fmt.lower() == "json":
        renderer = structlog.processors.JSONRenderer()
        tail: list[Processor] = [structlog.processors.format_exc_info, renderer]
    else:
        renderer = structlog.dev.ConsoleRenderer(colors=sys.stderr.isatty())
        tail = [renderer]

    structlog.configure(
        processors=[
            *_shared_processors(),
            structlog.stdlib.add_logger_name,
            structlog.processors.CallsiteParameterAdder([structlog.processors.CallsiteParameter.FUNC_NAME]),
            structlog.stdlib.ProcessorFormatter.wrap_for_formatter,
        ],
        wrapper_class=structlog.make_filtering_bound_logger(log_level),
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        cache_logger_on_first_use=False,
    )

    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(
        structlog.stdlib.ProcessorFormatter(
            foreign_pre_chain=_shared_processors(),
            processors=[structlog.stdlib.ProcessorFormatter.remove_processors_meta, *tail],
        )
    )
    root_logger = logging.getLogger()
    root_logger.handlers.clear()
    root_logger.addHandler(handler)
    root_logger.setLevel(log_level)


def get_logger(name: str | None = None) -> Any:
    """Get a configured structlog logger instance."""
    return structlog.get_logger(name)


def add_run_context(**context: Any) -> None:
    """Bind values (run id, command, model) into every following log event."""
    structlog.contextvars.bind_contextvars(**context)


def clear_run_context(*keys: str) -> None:
    structlog.contextvars.unbind_contextvars(*keys)


def reset_run_context() -> None:
    """Drop all bound run context."""
    structlog.contextvars.clear_contextvars()
