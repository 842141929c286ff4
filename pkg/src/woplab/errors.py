"""Exception classes shared across the package."""


class WoplabError(Exception):
    """Base class for all package-specific failures."""


class DimensionError(WoplabError, ValueError):
    """Array shapes do not conform to the operation's contract."""


class InvalidCoefficientError(WoplabError, ValueError):
    """Wave-speed field violates positivity or shape requirements."""


class InstabilityError(WoplabError, RuntimeError):
    """Time integration produced NaN/Inf; carries the offending step index."""

    def __init__(self, step: int, message: str | None = None):
        self.step = step
        super().__init__(message or f"non-finite field detected at step {step}")


class ResolvabilityError(WoplabError, ValueError):
    """Requested mode content is not resolvable on the grid."""


class FormatError(WoplabError, ValueError):
    """On-disk artifact is malformed; carries the byte offset of the failure."""

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class DegenerateTargetError(WoplabError, ValueError):
    """A target field has zero norm, so relative error is undefined."""


class PoisonedUpdateError(WoplabError, RuntimeError):
    """An optimizer update received non-finite gradients."""


class StaleTapeError(WoplabError, RuntimeError):
    """backward() was called twice on the same recorded tape."""


class NonScalarLossError(WoplabError, ValueError):
    """backward() requires a scalar loss node."""


class ConfigError(WoplabError, ValueError):
    """Run configuration failed validation; carries the offending field path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")
