"""
Closed-form interference conditions for the symmetric Kerr molecule.

For two degenerate modes (equal detuning ``dE`` and linewidth ``gamma``)
coupled with tunnelling ``J``, the two-photon amplitude of the driven mode
vanishes when both polynomial residuals of :func:`condition_residuals` are
zero. Solving them gives the optimal detuning and auxiliary-mode Kerr
strength returned by :func:`optimal_exact`; :func:`optimal_approx` is the
leading order for ``J >> gamma``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigError

__all__ = ["OptimalPoint", "optimal_exact", "optimal_approx", "condition_residuals"]


@dataclass(frozen=True)
class OptimalPoint:
    delta_e_opt: float
    u_opt: float
    branch: int
    feasible: bool


def _check_positive(J, gamma):
    if not (J > 0 and gamma > 0) or not (math.isfinite(J) and math.isfinite(gamma)):
        raise ConfigError(f"J and gamma must be positive and finite, got J={J!r}, gamma={gamma!r}")


def optimal_exact(J: float, gamma: float) -> tuple[OptimalPoint, OptimalPoint]:
    """Exact optimum ``(dE_opt, U_opt)`` on the ``+`` and ``-`` branches.

    A branch is infeasible (values NaN) when ``J <= gamma / sqrt(2)``: the
    inner square-root argument is then negative, or the Kerr denominator
    ``2 J**2 - gamma**2`` vanishes.
    """
    _check_positive(J, gamma)
    arg = math.sqrt(9 * J**4 + 8 * gamma**2 * J**2) - gamma**2 - 3 * J**2
    denom = 2.0 * (2 * J**2 - gamma**2)
    if arg < 0 or denom <= 0:
        nan = float("nan")
        return OptimalPoint(nan, nan, +1, False), OptimalPoint(nan, nan, -1, False)
    out = []
    for sign in (+1, -1):
        de = sign * 0.5 * math.sqrt(arg)
        u = de * (5 * gamma**2 + 4 * de**2) / denom
        out.append(OptimalPoint(de, u, sign, True))
    return tuple(out)


def optimal_approx(J: float, gamma: float) -> OptimalPoint:
    """Large-``J`` asymptote of the positive branch."""
    _check_positive(J, gamma)
    de = gamma / (2 * math.sqrt(3))
    u = 2 / (3 * math.sqrt(3)) * gamma**3 / J**2
    return OptimalPoint(de, u, +1, True)


def condition_residuals(delta_e: float, u2: float, J: float, gamma: float) -> tuple[float, float]:
    """Both polynomial conditions for a vanishing two-photon amplitude; zero at the optimum."""
    r1 = gamma**2 * (3 * delta_e + u2) - 4 * delta_e**2 * (delta_e + u2) - 2 * J**2 * u2
    r2 = 12 * delta_e**2 + 8 * delta_e * u2 - gamma**2
    return r1, r2
