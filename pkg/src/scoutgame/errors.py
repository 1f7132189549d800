"""Exception hierarchy shared across the library."""


class ScoutGameError(Exception):
    """Base class for all library errors."""


class DegenerateSignal(ScoutGameError):
    """The no-detection signal has (numerically) zero probability."""


class MissingPolicy(ScoutGameError):
    """A policy entry required for a positive-probability (signal, world) pair is absent."""


class NoConvergence(ScoutGameError):
    """A subgame solve did not reach the residual tolerance.

    Carries the best point found so that callers can inspect or reuse it.
    """

    def __init__(self, message, best=None, residual=None):
        super().__init__(message)
        self.best = best
        self.residual = residual


class SingularSystem(ScoutGameError):
    """A linear system in the sensitivity computation is singular or too ill-conditioned."""


class InvalidPreference(ScoutGameError):
    """Preference matrix violates positivity or row-diagonal dominance."""


class UnsupportedPair(ScoutGameError):
    """Requested a policy map for a (signal, world) pair that is never realized."""


class RelativeInteriorRequired(ScoutGameError):
    """Operation requires a signal structure in the relative interior of the simplex."""


class GradientUnavailable(ScoutGameError):
    """Sensitivity failed at an iterate and no fallback produced a usable gradient."""


class ConfigError(ScoutGameError):
    """Malformed or inconsistent run configuration."""
