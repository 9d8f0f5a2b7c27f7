"""
Parameter sweeps and post-processing used by the command-line front end.

Observable names are 1-based: ``n_2`` is the occupation of site 2 and
``g2_1_2`` the equal-time cross-correlation of sites 1 and 2.
"""

from __future__ import annotations

import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from functools import partial
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.signal import find_peaks

from . import dynamics, weakdrive
from .errors import ConfigError, UndefinedCorrelationError
from .models import Hop, JCCoupling, SystemSpec

__all__ = [
    "PARAMS", "parse_range", "parse_observable", "default_observables", "apply_param",
    "evaluate", "run_sweep", "grid_argmin", "refine_argmin", "threshold_window",
    "dominant_period", "cutoff_convergence", "format_number",
]

PARAMS = ("U", "dE", "g", "J", "J2")

_OBS = re.compile(r"^(?:n_(\d+)|g2_(\d+)_(\d+)|g2_(\d)(\d))$")


def parse_range(text: str) -> np.ndarray:
    """``"lo:hi:n"`` -> ``n`` evenly spaced points on the closed interval."""
    try:
        lo, hi, n = text.split(":")
        lo, hi, n = float(lo), float(hi), int(n)
    except ValueError:
        raise ConfigError(f"range must look like lo:hi:n, got {text!r}") from None
    if n < 1 or not (math.isfinite(lo) and math.isfinite(hi)):
        raise ConfigError(f"bad range {text!r}")
    if n == 1:
        return np.array([lo])
    return np.linspace(lo, hi, n)


def parse_observable(name: str, spec: SystemSpec) -> tuple[str, tuple[int, ...]]:
    """``"g2_1_2"`` -> ``("g2", (0, 1))``; ``"n_3"`` -> ``("n", (2,))``."""
    m = _OBS.match(name.strip())
    if not m:
        raise ConfigError(f"unknown observable {name!r} (use n_<i> or g2_<i>_<j>)")
    if m.group(1):
        idx = (int(m.group(1)) - 1,)
        kind = "n"
    else:
        a, b = (m.group(2), m.group(3)) if m.group(2) else (m.group(4), m.group(5))
        idx = (int(a) - 1, int(b) - 1)
        kind = "g2"
    for k in idx:
        if not 0 <= k < spec.n_sites:
            raise ConfigError(f"observable {name!r} references missing site")
        if kind == "g2" and not spec.sites[k].is_boson:
            raise ConfigError(f"observable {name!r} needs boson sites")
    return kind, idx


def default_observables(spec: SystemSpec) -> list[str]:
    b = spec.boson_sites
    return [f"g2_{i + 1}_{j + 1}" for n, i in enumerate(b) for j in b[n:]]


def apply_param(spec: SystemSpec, param: str, value: float) -> SystemSpec:
    """Return ``spec`` with one sweepable parameter set to ``value``.

    ``U`` sets every boson Kerr term; ``dE`` moves the pump so the first
    driven site has detuning ``value`` (all detunings shift together); ``g``
    sets every emitter coupling; ``J`` and ``J2`` set the hops carrying that
    label.
    """
    if param == "U":
        kerr = tuple(value if s.is_boson else 0.0 for s in spec.sites)
        return replace(spec, kerr=kerr)
    if param == "dE":
        ref = spec.driven_sites[0] if spec.drives else 0
        shift = value - spec.detunings[ref]
        return replace(spec, detunings=tuple(d + shift for d in spec.detunings))
    if param == "g":
        if not spec.jc:
            raise ConfigError("parameter g needs a [jc] coupling")
        return replace(spec, jc=tuple(JCCoupling(c.boson, c.twolevel, value) for c in spec.jc))
    if param in ("J", "J2"):
        if not any(h.label == param for h in spec.hops):
            raise ConfigError(f"parameter {param} needs hops labelled {param!r}")
        return replace(spec, hops=tuple(Hop(h.i, h.j, value, h.label) if h.label == param else h
                                        for h in spec.hops))
    raise ConfigError(f"unknown sweep parameter {param!r}; choose from {', '.join(PARAMS)}")


def evaluate(spec: SystemSpec, observables: Sequence[str], solver: str = "dynamics",
             cutoff: int | None = None, method: str = "auto") -> list[float]:
    """Observable values at one parameter point; undefined correlations give NaN."""
    parsed = [parse_observable(o, spec) for o in observables]
    out = []
    if solver == "dynamics":
        L = dynamics.build_liouvillian(spec, cutoff)
        rho = dynamics.steady_state(L, method)
        pops = dynamics.populations(rho)
        for kind, idx in parsed:
            if kind == "n":
                out.append(float(pops[idx[0]]))
                continue
            try:
                out.append(dynamics.g2_equal_time(rho, *idx))
            except UndefinedCorrelationError:
                out.append(float("nan"))
    elif solver == "weakdrive":
        av = weakdrive.solve_manifold(spec, 2)
        for kind, idx in parsed:
            if kind == "n":
                unit = [0] * spec.n_sites
                unit[idx[0]] = 1
                out.append(abs(av.amplitude(unit)) ** 2)
                continue
            try:
                out.append(weakdrive.g2_from_amplitudes(av, *idx))
            except UndefinedCorrelationError:
                out.append(float("nan"))
    else:
        raise ConfigError(f"unknown solver {solver!r}")
    return out


def _point(value, spec, param, observables, solver, cutoff, method):
    return evaluate(apply_param(spec, param, value), observables, solver, cutoff, method)


def run_sweep(spec: SystemSpec, param: str, values: Sequence[float], observables: Sequence[str],
              solver: str = "dynamics", cutoff: int | None = None, method: str = "auto",
              workers: int = 1) -> np.ndarray:
    """Array of shape ``(len(values), len(observables))``, rows in grid order."""
    # validate once up front so errors surface before any worker starts
    apply_param(spec, param, float(values[0]))
    for o in observables:
        parse_observable(o, spec)
    fn = partial(_point, spec=spec, param=param, observables=list(observables),
                 solver=solver, cutoff=cutoff, method=method)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(fn, [float(v) for v in values]))
    else:
        rows = [fn(float(v)) for v in values]
    return np.array(rows, dtype=float).reshape(len(values), len(observables))


def grid_argmin(values: np.ndarray, y: np.ndarray) -> tuple[int, float]:
    if np.all(np.isnan(y)):
        raise ConfigError("observable undefined on the whole sweep")
    k = int(np.nanargmin(y))
    return k, float(values[k])


def refine_argmin(f: Callable[[float], float], values: np.ndarray, k: int) -> float:
    """One golden-section search bracketed by the grid neighbours of index ``k``."""
    if k == 0 or k == len(values) - 1:
        return float(values[k])
    bracket = (float(values[k - 1]), float(values[k]), float(values[k + 1]))
    res = minimize_scalar(f, bracket=bracket, method="golden", tol=1e-6)
    x = float(res.x)
    lo, hi = min(bracket[0], bracket[2]), max(bracket[0], bracket[2])
    return min(max(x, lo), hi)


def threshold_window(values: np.ndarray, y: np.ndarray, threshold: float = 0.5):
    """Interval around the minimum of ``y`` where ``y < threshold``.

    Edges are linearly interpolated between grid points. Returns
    ``(lo, hi, contiguous)`` where ``contiguous`` says whether that interval
    holds every sub-threshold grid point, or None if ``y`` never drops below
    ``threshold``.
    """
    values = np.asarray(values, dtype=float)
    y = np.asarray(y, dtype=float)
    below = y < threshold
    if not below.any():
        return None
    k = int(np.nanargmin(y))
    a = k
    while a > 0 and below[a - 1]:
        a -= 1
    b = k
    while b < len(y) - 1 and below[b + 1]:
        b += 1

    def cross(i, j):
        # threshold crossing between grid points i (above) and j (below)
        t = (threshold - y[i]) / (y[j] - y[i])
        return values[i] + t * (values[j] - values[i])

    lo = cross(a - 1, a) if a > 0 else values[a]
    hi = cross(b + 1, b) if b < len(y) - 1 else values[b]
    contiguous = int(below.sum()) == b - a + 1
    return float(lo), float(hi), contiguous


def dominant_period(taus: np.ndarray, y: np.ndarray) -> float:
    """Median spacing of successive local maxima of ``y``.

    Each maximum is refined by a parabola through its grid neighbours. The
    median discards isolated shoulder peaks of a beating signal.
    """
    taus = np.asarray(taus, dtype=float)
    y = np.asarray(y, dtype=float)
    peaks, _ = find_peaks(y)
    if len(peaks) < 2:
        raise ConfigError("fewer than two maxima on the tau grid")
    h = np.diff(taus)
    if not np.allclose(h, h[0], rtol=1e-9, atol=0):
        raise ConfigError("dominant_period needs an evenly spaced grid")
    y0, y1, y2 = y[peaks - 1], y[peaks], y[peaks + 1]
    denom = y0 - 2 * y1 + y2
    shift = np.where(denom != 0, 0.5 * (y0 - y2) / np.where(denom != 0, denom, 1), 0.0)
    t_peak = taus[peaks] + shift * h[0]
    return float(np.median(np.diff(t_peak)))


def cutoff_convergence(spec: SystemSpec, cutoff: int, observables: Sequence[str],
                       method: str = "auto") -> tuple[list[float], list[float], float]:
    """Observables at ``cutoff`` and ``cutoff + 1`` and the largest change."""
    a = evaluate(spec, observables, "dynamics", cutoff, method)
    b = evaluate(spec, observables, "dynamics", cutoff + 1, method)
    diffs = [abs(x - y) for x, y in zip(a, b) if not (math.isnan(x) or math.isnan(y))]
    return a, b, max(diffs, default=0.0)


def format_number(x: float) -> str:
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    return format(float(x), ".17g")
