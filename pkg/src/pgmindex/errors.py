"""Exception hierarchy shared by every module of the package."""


class PgmError(Exception):
    """Base class for all errors raised by pgmindex."""


class EmptyInput(PgmError, ValueError):
    pass


class InvalidEpsilon(PgmError, ValueError):
    pass


class InvalidRange(PgmError, ValueError):
    pass


class InvalidInterval(PgmError, ValueError):
    pass


class InvalidSequence(PgmError, ValueError):
    pass


class InvalidProbability(PgmError, ValueError):
    pass


class InsufficientSamples(PgmError, ValueError):
    pass


class DegenerateFit(PgmError, ValueError):
    pass


class InfeasibleBound(PgmError, ValueError):
    pass


class NoisyMeasurement(PgmError, RuntimeError):
    pass


class InvalidSpec(PgmError, ValueError):
    pass


class CorruptFile(PgmError, ValueError):
    pass


class UnsortedData(PgmError, ValueError):
    pass


class ConfigError(PgmError, ValueError):
    pass


def check_epsilon(epsilon, name="epsilon"):
    """Return ``epsilon`` as an int, raising InvalidEpsilon unless it is an integer >= 1."""
    try:
        value = int(epsilon)
    except (TypeError, ValueError):
        raise InvalidEpsilon(f"{name} must be an integer >= 1, got {epsilon!r}") from None
    if value != epsilon or value < 1:
        raise InvalidEpsilon(f"{name} must be an integer >= 1, got {epsilon!r}")
    return value
