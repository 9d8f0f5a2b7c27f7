"""
Adaptive Dormand-Prince 5(4) integrator for complex-valued linear ODEs.

Local error control uses the max norm of ``err / (atol + rtol * |y|)``, which
keeps very small density-matrix elements (two-photon populations sit many
orders below the vacuum weight) accurate in relative terms. An optional
``accept`` hook can veto a step that the error estimate would accept.
"""

from __future__ import annotations

from typing import Callable, Iterator

import numpy as np

from .errors import SolverError

__all__ = ["DormandPrince"]

# Butcher tableau, Dormand & Prince (1980)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B5 = _A[6] + (0.0,)
_B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40)
_E = tuple(b5 - b4 for b5, b4 in zip(_B5, _B4))


class DormandPrince:
    """Explicit embedded RK5(4) stepper with FSAL and step-size control.

    Parameters
    ----------
    fun : callable
        ``fun(y) -> dy/dt``; the system is autonomous.
    rtol, atol : float
        Relative and absolute local error tolerances.
    accept : callable, optional
        ``accept(y_old, y_new) -> bool``; a False return rejects the step and
        halves it.
    h_min : float
        Steps below this size raise :class:`SolverError`.
    """

    def __init__(self, fun: Callable[[np.ndarray], np.ndarray], rtol: float = 1e-9,
                 atol: float = 1e-20, accept=None, h0: float = 1e-3,
                 h_min: float = 1e-12, h_max: float = np.inf, max_steps: int = 10_000_000):
        self.fun = fun
        self.rtol = rtol
        self.atol = atol
        self.accept = accept
        self.h0 = h0
        self.h_min = h_min
        self.h_max = h_max
        self.max_steps = max_steps
        self.h = h0
        self.n_accepted = 0
        self.n_rejected = 0
        self.n_evals = 0

    def _f(self, y):
        self.n_evals += 1
        return self.fun(y)

    def _attempt(self, y, f0, h):
        k = [f0]
        for s in range(1, 7):
            dy = sum((a * kj for a, kj in zip(_A[s], k) if a != 0.0), start=np.zeros_like(y))
            k.append(self._f(y + h * dy))
        # row 6 of A equals the 5th-order weights, so stage 7 is f(y_new)
        y_new = y + h * sum((b * kj for b, kj in zip(_B5, k) if b != 0.0), start=np.zeros_like(y))
        err = h * sum((e * kj for e, kj in zip(_E, k) if e != 0.0), start=np.zeros_like(y))
        scale = self.atol + self.rtol * np.maximum(np.abs(y), np.abs(y_new))
        err_norm = float(np.max(np.abs(err) / scale)) if err.size else 0.0
        return y_new, k[6], err_norm

    def steps(self, y0: np.ndarray, t0: float = 0.0, t_end: float = np.inf,
              ) -> Iterator[tuple[float, np.ndarray, np.ndarray]]:
        """Yield ``(t, y, dy/dt)`` after every accepted step until ``t_end``."""
        y = np.array(y0, dtype=complex)
        f = self._f(y)
        t = t0
        h = min(self.h, self.h_max)
        steps = 0
        while t < t_end:
            if steps >= self.max_steps:
                raise SolverError(f"integrator exceeded {self.max_steps} steps")
            last = t + h >= t_end
            h_try = t_end - t if last else h
            y_new, f_new, err = self._attempt(y, f, h_try)
            ok = np.isfinite(err) and err <= 1.0
            if ok and self.accept is not None and not self.accept(y, y_new):
                self.n_rejected += 1
                h = 0.5 * h_try
            elif ok:
                t = t_end if last else t + h_try
                y, f = y_new, f_new
                steps += 1
                self.n_accepted += 1
                fac = 5.0 if err == 0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
                # a clipped final step says nothing about the natural step size
                if not last or fac < 1:
                    h = min(self.h_max, h_try * fac)
                self.h = h
                yield t, y, f
                continue
            else:
                self.n_rejected += 1
                fac = 0.2 if not np.isfinite(err) else max(0.2, 0.9 * err ** -0.2)
                h = h_try * fac
            if h < self.h_min:
                raise SolverError(f"step size underflow at t={t:.6g} (h={h:.3g})")

    def solve(self, y0: np.ndarray, t_eval) -> list[np.ndarray]:
        """States at each time in the nondecreasing grid ``t_eval`` starting from ``y0`` at ``t_eval[0]``."""
        t_eval = np.asarray(t_eval, dtype=float)
        if t_eval.ndim != 1 or t_eval.size == 0:
            raise ValueError("t_eval must be a nonempty 1-d grid")
        if np.any(np.diff(t_eval) < 0):
            raise ValueError("t_eval must be nondecreasing")
        y = np.array(y0, dtype=complex)
        out = [y.copy()]
        t = t_eval[0]
        for t_next in t_eval[1:]:
            if t_next > t:
                for _, y, _ in self.steps(y, t, t_next):
                    pass
                t = t_next
            out.append(y.copy())
        return out
