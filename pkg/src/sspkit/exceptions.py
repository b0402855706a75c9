"""Custom exceptions with RFC 9457 Problem Details support."""

from __future__ import annotations

from typing import Any


class ErrorType:
    """URN-based error type identifiers for RFC 9457 Problem Details."""

    PARSE = "urn:sspkit:error:parse"
    VOCABULARY = "urn:sspkit:error:vocabulary"
    STATISTICS = "urn:sspkit:error:statistics"
    SHAPE = "urn:sspkit:error:shape"
    CONFIGURATION = "urn:sspkit:error:configuration"
    DEGENERATE_INPUT = "urn:sspkit:error:degenerate-input"
    FOLD_IN = "urn:sspkit:error:fold-in"
    CONTRACT_VIOLATION = "urn:sspkit:error:contract-violation"
    SAMPLING = "urn:sspkit:error:sampling"
    TRAINING_DIVERGED = "urn:sspkit:error:training-diverged"
    FEATURE = "urn:sspkit:error:feature"
    INPUT = "urn:sspkit:error:input"
    COMPATIBILITY = "urn:sspkit:error:compatibility"
    INTERNAL_ERROR = "urn:sspkit:error:internal"


class SspkitError(Exception):
    """Base exception for sspkit with RFC 9457 Problem Details support.

    ``instance`` identifies the offending artifact (a file path, optionally suffixed with ``:line``).
    ``exit_code`` is the process exit status the CLI uses when the error escapes a command.
    """

    def __init__(
        self,
        detail: str,
        *,
        type_uri: str = ErrorType.INTERNAL_ERROR,
        title: str = "Internal Error",
        exit_code: int = 70,
        instance: str | None = None,
        **extensions: Any,
    ) -> None:
        super().__init__(detail)
        self.type_uri = type_uri
        self.title = title
        self.exit_code = exit_code
        self.detail = detail
        self.instance = instance
        self.extensions = extensions


class ParseError(SspkitError):
    """Malformed input line exception."""

    def __init__(self, detail: str, *, instance: str | None = None, **extensions: Any) -> None:
        super().__init__(
            detail,
            type_uri=ErrorType.PARSE,
            title="Parse Error",
            exit_code=65,
            instance=instance,
            **extensions,
        )


class VocabularyError(SspkitError):
    """Unknown symbol exception."""

    def __init__(self, detail: str, *, instance: str | None = None, **extensions: Any) -> None:
        super().__init__(
            detail,
            type_uri=ErrorType.VOCABULARY,
            title="Unknown Symbol",
            exit_code=65,
            instance=instance,
            **extensions,
        )


class StatisticsError(SspkitError):
    """Missing per-relation statistics exception."""

    def __init__(self, detail: str, *, instance: str | None = None, **extensions: Any) -> None:
        super().__init__(
            detail,
            type_uri=ErrorType.STATISTICS,
            title="Statistics Unavailable",
            exit_code=65,
            instance=instance,
            **extensions,
        )


class ShapeError(SspkitError):
    """Dimension mismatch exception."""

    def __init__(self, detail: str, *, instance: str | None = None, **extensions: Any) -> None:
        super().__init__(
            detail,
            type_uri=ErrorType.SHAPE,
            title="Shape Mismatch",
            exit_code=65,
            instance=instance,
            **extensions,
        )


class ConfigurationError(SspkitError):
    """Invalid configuration exception."""

    def __init__(self, detail: str, *, instance: str | None = None, **extensions: Any) -> None:
        super().__init__(
            detail,
            type_uri=ErrorType.CONFIGURATION,
            title="Invalid Configuration",
            exit_code=78,
            instance=instance,
            **extensions,
        )


class DegenerateInputError(SspkitError):
    """Both semantic vectors are zero, so no composition exists."""

    def __init__(self, detail: str, *, instance: str | None = None, **extensions: Any) -> None:
        super().__init__(
            detail,
            type_uri=ErrorType.DEGENERATE_INPUT,
            title="Degenerate Input",
            exit_code=65,
            instance=instance,
            **extensions,
        )


class FoldInError(SspkitError):
    """Description has no in-vocabulary words to fold in."""

    def __init__(self, detail: str, *, instance: str | None = None, **extensions: Any) -> None:
        super().__init__(
            detail,
            type_uri=ErrorType.FOLD_IN,
            title="Fold-in Failed",
            exit_code=65,
            instance=instance,
            **extensions,
        )


class ContractViolationError(SspkitError):
    """Caller broke a documented precondition (for example a non-unit normal vector)."""

    def __init__(self, detail: str, *, instance: str | None = None, **extensions: Any) -> None:
        super().__init__(
            detail,
            type_uri=ErrorType.CONTRACT_VIOLATION,
            title="Contract Violation",
            exit_code=70,
            instance=instance,
            **extensions,
        )


class SamplingError(SspkitError):
    """Negative sampling retry budget exhausted."""

    def __init__(self, detail: str, *, instance: str | None = None, **extensions: Any) -> None:
        super().__init__(
            detail,
            type_uri=ErrorType.SAMPLING,
            title="Sampling Failed",
            exit_code=70,
            instance=instance,
            **extensions,
        )


class TrainingDivergedError(SspkitError):
    """Non-finite parameter or loss detected during training."""

    def __init__(self, detail: str, *, instance: str | None = None, **extensions: Any) -> None:
        super().__init__(
            detail,
            type_uri=ErrorType.TRAINING_DIVERGED,
            title="Training Diverged",
            exit_code=70,
            instance=instance,
            **extensions,
        )


class FeatureError(SspkitError):
    """Entity has neither an embedding nor a description to build features from."""

    def __init__(self, detail: str, *, instance: str | None = None, **extensions: Any) -> None:
        super().__init__(
            detail,
            type_uri=ErrorType.FEATURE,
            title="Feature Unavailable",
            exit_code=65,
            instance=instance,
            **extensions,
        )


class InputError(SspkitError):
    """Missing, empty or mismatched input artifact."""

    def __init__(self, detail: str, *, instance: str | None = None, **extensions: Any) -> None:
        super().__init__(
            detail,
            type_uri=ErrorType.INPUT,
            title="Invalid Input",
            exit_code=66,
            instance=instance,
            **extensions,
        )


class CompatibilityError(SspkitError):
    """Checkpoint was produced from different prepared data."""

    def __init__(self, detail: str, *, instance: str | None = None, **extensions: Any) -> None:
        super().__init__(
            detail,
            type_uri=ErrorType.COMPATIBILITY,
            title="Incompatible Artifacts",
            exit_code=65,
            instance=instance,
            **extensions,
        )
