"""Typed failure modes shared across the package."""


class WwdampError(Exception):
    """Base class for package errors."""


class MapDegenerateError(WwdampError):
    """The free surface touches the bottom; the strip map is singular."""


class SolverConvergenceError(WwdampError):
    """The preconditioned CG iteration failed to reach tolerance."""


class BlowUpError(WwdampError):
    """The surface left the admissible regime during time stepping."""

    def __init__(self, message, t=None, diagnostics=None):
        super().__init__(message)
        self.t = t
        self.diagnostics = diagnostics or {}


class ConfigError(WwdampError):
    """Configuration failed validation; message names the offending field."""


class CheckpointError(WwdampError):
    """Checkpoint file is missing, truncated or has a bad header."""


class VerificationError(WwdampError):
    """A verification check failed beyond its tolerance."""

    def __init__(self, message, failing_tags=()):
        super().__init__(message)
        self.failing_tags = list(failing_tags)
