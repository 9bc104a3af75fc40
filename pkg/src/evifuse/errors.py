"""Exception hierarchy and process exit codes.

Exit codes: 0 success, 2 validation error, 3 data/format error,
4 internal invariant breach.
"""


class EngineError(Exception):
    """Base class for all engine errors."""

    exit_code = 1


class ValidationError(EngineError):
    """Bad parameters, malformed manifests, or inconsistent inputs."""

    exit_code = 2


class ManifestError(ValidationError):
    """Manifest validation failure carrying every problem found."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__(
            "invalid manifest:\n" + "\n".join(f"  - {p}" for p in self.problems)
        )


class DataError(EngineError):
    """Unreadable or malformed data files (tensors, logs, images)."""

    exit_code = 3


class InvariantViolation(EngineError):
    """A mathematical invariant the engine guarantees was breached."""

    exit_code = 4
