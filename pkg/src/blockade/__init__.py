"""Unconventional photon blockade in weakly nonlinear coupled cavities.

Subpackages: ``fock`` (bases and operators), ``models`` (system specs and
config files), ``dynamics`` (Lindblad steady states and correlations),
``weakdrive`` (weak-pump amplitude expansion), ``analytics`` (closed-form
optimum) and ``cli``.
"""

from .errors import (BlockadeError, ConfigError, ConvergenceError, NonUniqueSteadyStateError,
                     SolverError, UndefinedCorrelationError)

__version__ = "0.1.0"
