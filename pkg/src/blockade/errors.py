"""Exception hierarchy. Config-type errors map to CLI exit code 2, numerical ones to 3."""


class BlockadeError(Exception):
    pass


class ConfigError(BlockadeError, ValueError):
    """Invalid system description or configuration file."""


class BasisError(ConfigError):
    pass


class SolverError(BlockadeError, RuntimeError):
    """A numerical solve failed or has no unique answer."""


class NonUniqueSteadyStateError(SolverError):
    pass


class ConvergenceError(SolverError):
    pass


class UndefinedCorrelationError(SolverError):
    """A correlation function has a vanishing normalization."""
