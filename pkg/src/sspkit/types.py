"""Shared array aliases and a JSON-safe Pydantic type for manifests."""

from __future__ import annotations

from enum import Enum
from pathlib import Path
from typing import Annotated, Any

import numpy as np
import numpy.typing as npt
from pydantic import PlainSerializer

type FloatArray = npt.NDArray[np.float64]
type IntArray = npt.NDArray[np.int64]
type Triple = tuple[int, int, int]

MAX_REPR = 200


def describe_value(value: Any) -> dict[str, str]:
    """Placeholder for a value JSON cannot hold: its type and a truncated repr."""
    text = repr(value)
    if len(text) > MAX_REPR:
        text = text[:MAX_REPR] + "..."
    return {"_type": type(value).__name__, "_module": type(value).__module__, "_repr": text}


def to_json_value(value: Any) -> Any:
    """Recursively convert numpy values, paths and enums to JSON values; anything else is described."""
    match value:
        case np.generic():
            return to_json_value(value.item())
        case np.ndarray():
            return to_json_value(value.tolist())
        case Enum():
            return to_json_value(value.value)
        case None | bool() | int() | str():
            return value
        case float():
            return value if np.isfinite(value) else repr(value)
        case Path():
            return str(value)
        case dict():
            return {str(k): to_json_value(v) for k, v in value.items()}
        case list() | tuple():
            return [to_json_value(v) for v in value]
        case _:
            return describe_value(value)


JsonSafe = Annotated[Any, PlainSerializer(to_json_value, return_type=Any)]
"""Pydantic type that serializes numpy values, paths and enums, and degrades anything else to a description."""
