"""Flat ``key = value`` configuration files parsed into Pydantic schemas."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any

from pydantic import BaseModel
from pydantic import ValidationError as PydanticValidationError

from .exceptions import ConfigurationError, InputError
from .schemas import EvalConfig, TrainConfig

_TRAIN_KEYS = {field.alias or name for name, field in TrainConfig.model_fields.items()}
_EVAL_KEYS = set(EvalConfig.model_fields)
KNOWN_KEYS = frozenset(_TRAIN_KEYS | _EVAL_KEYS)


def read_flat(path: Path) -> dict[str, tuple[str, int]]:
    """Read ``key = value`` lines into ``{key: (value, line)}``; ``#`` starts a comment."""
    if not path.is_file():
        raise InputError(f"Config file not found: {path}", instance=str(path))
    entries: dict[str, tuple[str, int]] = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key or not value:
            raise ConfigurationError("Expected 'key = value'", instance=f"{path}:{lineno}")
        if key not in KNOWN_KEYS:
            raise ConfigurationError(f"Unknown config key '{key}'", instance=f"{path}:{lineno}")
        if key in entries:
            raise ConfigurationError(f"Duplicate config key '{key}'", instance=f"{path}:{lineno}")
        entries[key] = (value, lineno)
    return entries


def _validate[M: BaseModel](schema: type[M], values: dict[str, Any], instance: str | None) -> M:
    try:
        return schema.model_validate(values)
    except PydanticValidationError as exc:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}" for err in exc.errors()
        )
        raise ConfigurationError(problems, instance=instance) from None


def load_config(path: str | Path, **overrides: Any) -> TrainConfig:
    """Parse the training keys of a config file; ``overrides`` win over file values."""
    path = Path(path)
    entries = read_flat(path)
    values: dict[str, Any] = {k: v for k, (v, _) in entries.items() if k in _TRAIN_KEYS}
    values.update({("lambda" if k == "lam" else k): v for k, v in overrides.items() if v is not None})
    return _validate(TrainConfig, values, str(path))


def load_eval_config(path: str | Path | None, **overrides: Any) -> EvalConfig:
    """Parse the evaluation keys of a config file (defaults only when ``path`` is None)."""
    values: dict[str, Any] = {}
    instance = None
    if path is not None:
        instance = str(path)
        values = {k: v for k, (v, _) in read_flat(Path(path)).items() if k in _EVAL_KEYS}
    values.update({k: v for k, v in overrides.items() if v is not None})
    return _validate(EvalConfig, values, instance)


def with_overrides(config: TrainConfig, **changes: Any) -> TrainConfig:
    """Re-validated copy of ``config`` with ``changes`` applied."""
    values = config.model_dump(by_alias=True)
    values.update({("lambda" if k == "lam" else k): v for k, v in changes.items() if v is not None})
    return _validate(TrainConfig, values, None)


def config_hash(config: BaseModel) -> str:
    """SHA-256 of the canonical JSON dump."""
    payload = json.dumps(config.model_dump(mode="json", by_alias=True), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()
