"""Exception types shared across the package."""


class WpakitError(Exception):
    """Base class for all package errors."""


class MatchParseError(WpakitError):
    """Raised when a match document cannot be parsed.

    Carries the JSON path of the offending element so callers can point
    users at the exact spot in the input file.
    """

    def __init__(self, path: str, reason: str):
        self.path = path
        self.reason = reason
        super().__init__(f"{path}: {reason}")


class MatchValidationError(WpakitError):
    """Raised when a parsed match fails semantic validation."""

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(str(v) for v in self.violations[:5])
        more = f" (+{len(self.violations) - 5} more)" if len(self.violations) > 5 else ""
        super().__init__(f"{len(self.violations)} validation violation(s): {lines}{more}")


class ReplayError(WpakitError):
    """Raised when an event stream is internally inconsistent during replay."""

    def __init__(self, tick: int, reason: str):
        self.tick = tick
        self.reason = reason
        super().__init__(f"tick {tick}: {reason}")


class MeshError(WpakitError):
    """Raised for malformed navigation meshes or unknown areas."""


class SchemaMismatchError(WpakitError):
    """Raised when rows do not conform to the schema a model was trained with."""


class ModelFormatError(WpakitError):
    """Raised for corrupt, truncated, or version-incompatible model files."""


class StateFileError(WpakitError):
    """Raised for corrupt, truncated, or version-incompatible state table files."""
