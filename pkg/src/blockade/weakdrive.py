"""
Weak-pump amplitude expansion of the driven-dissipative steady state.

The steady state is approximated by a pure state ``sum_n C_n`` ordered by
total excitation number ``n`` (photons plus emitter excitations), with the
vacuum amplitude fixed to 1. Block ``n`` solves

    H_eff[n] C_n = -D[n, n-1] C_{n-1}

where ``H_eff`` is the excitation-conserving part of the rotating-frame
Hamiltonian with each site energy shifted by ``-i gamma_k / 2`` and ``D`` is
the ``F a^dag`` drive. Lower blocks are never fed back from higher ones, so
the result is exact to leading order in the drive.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigError, SolverError, UndefinedCorrelationError
from .models import SystemSpec

__all__ = ["AmplitudeVector", "solve_manifold", "g2_from_amplitudes", "c20_residual",
           "enumerate_manifold", "MAX_MANIFOLD"]

MAX_MANIFOLD = 50_000
# blocks up to this size are solved densely, larger ones by sparse LU
_DENSE_BLOCK = 400


@lru_cache(maxsize=64)
def enumerate_manifold(caps: tuple[int, ...], n_exc: int) -> tuple[tuple[tuple[int, ...], ...], ...]:
    """Multi-indices grouped by total excitation number 0..n_exc.

    ``caps[k]`` bounds the occupation of site ``k``. Within a block states are
    in descending lexicographic order, e.g. ``(2,0), (1,1), (0,2)``.
    """
    blocks: list[list[tuple[int, ...]]] = [[] for _ in range(n_exc + 1)]

    def rec(prefix, k, left):
        if k == len(caps):
            blocks[n_exc - left].append(tuple(prefix))
            return
        for occ in range(min(caps[k], left), -1, -1):
            prefix.append(occ)
            rec(prefix, k + 1, left - occ)
            prefix.pop()

    rec([], 0, n_exc)
    return tuple(tuple(b) for b in blocks)


@dataclass
class AmplitudeVector:
    """Steady-state amplitudes on the ``<= n_exc`` excitation manifold."""

    manifold: list[tuple[int, ...]]
    amps: np.ndarray
    n_exc: int
    block_slices: list[slice]

    def __post_init__(self):
        self._index = {occ: k for k, occ in enumerate(self.manifold)}

    def amplitude(self, occupations) -> complex:
        k = self._index.get(tuple(occupations))
        return 0j if k is None else complex(self.amps[k])

    def block(self, n: int) -> np.ndarray:
        return self.amps[self.block_slices[n]]

    def block_norms(self) -> list[float]:
        return [float(np.linalg.norm(self.block(n))) for n in range(self.n_exc + 1)]

    def check_hierarchy(self, max_ratio: float = 0.1) -> bool:
        """True when each block is smaller than the one below by ``max_ratio``.

        The expansion is only meaningful while the total excitation is small,
        i.e. ``|C_n| << |C_{n-1}|``.
        """
        norms = self.block_norms()
        return all(hi <= max_ratio * lo for lo, hi in zip(norms, norms[1:]))


def _site_caps(spec: SystemSpec, n_exc: int) -> tuple[int, ...]:
    return tuple(n_exc if s.is_boson else 1 for s in spec.sites)


def solve_manifold(spec: SystemSpec, n_exc: int = 2) -> AmplitudeVector:
    """Weak-pump steady-state amplitudes up to ``n_exc`` total excitations.

    Bosons are not limited by the Fock cutoff of ``spec`` here; only the
    excitation number is truncated. Two-level sites are hard-core.

    Raises
    ------
    ConfigError
        No drive, or the manifold exceeds :data:`MAX_MANIFOLD` states.
    SolverError
        A block is singular (drive resonant with an undamped level).
    """
    if n_exc < 1:
        raise ConfigError("n_exc must be >= 1")
    if not spec.drives:
        raise ConfigError("weak-drive expansion needs at least one drive")
    caps = _site_caps(spec, n_exc)
    # states with total <= n_exc: C(S + n, n) when bosons are uncapped
    if comb(len(caps) + n_exc, n_exc) > MAX_MANIFOLD:
        raise ConfigError(f"excitation manifold too large for {len(caps)} sites at n_exc={n_exc}")
    blocks = enumerate_manifold(caps, n_exc)

    eps = np.array([d - 0.5j * g for d, g in zip(spec.detunings, spec.decays)])
    kerr = np.asarray(spec.kerr)
    pairs = [(h.i, h.j, h.value) for h in spec.hops]
    pairs += [(c.boson, c.twolevel, c.g) for c in spec.jc]
    drive = {}
    for d in spec.drives:
        drive[d.site] = drive.get(d.site, 0j) + complex(d.amplitude)

    amps = [np.ones(1, dtype=complex)]
    for n in range(1, n_exc + 1):
        states = blocks[n]
        index = {s: k for k, s in enumerate(states)}
        m = len(states)
        occ = np.array(states, dtype=float)
        rows = list(range(m))
        cols = list(range(m))
        vals = list(occ @ eps + (occ * (occ - 1)) @ kerr)
        for col, s in enumerate(states):
            for i, j, val in pairs:
                # a_i^dag a_j and its conjugate; two-level sites have unit matrix elements
                for src, dst in ((j, i), (i, j)):
                    if s[src] == 0 or s[dst] >= caps[dst]:
                        continue
                    t = list(s)
                    t[src] -= 1
                    t[dst] += 1
                    rows.append(index[tuple(t)])
                    cols.append(col)
                    vals.append(val * np.sqrt(s[src] * (s[dst] + 1.0)))
        vals = np.asarray(vals, dtype=complex)
        if m <= _DENSE_BLOCK:
            flat = np.asarray(rows) * m + np.asarray(cols)
            H = (np.bincount(flat, vals.real, m * m)
                 + 1j * np.bincount(flat, vals.imag, m * m)).reshape(m, m)
        else:
            H = sp.csc_matrix((vals, (rows, cols)), shape=(m, m))
        prev_states = blocks[n - 1]
        rhs = np.zeros(m, dtype=complex)
        for col, s in enumerate(prev_states):
            c = amps[-1][col]
            if c == 0:
                continue
            for k, f in drive.items():
                if s[k] >= caps[k]:
                    continue
                t = list(s)
                t[k] += 1
                rhs[index[tuple(t)]] -= f * np.sqrt(s[k] + 1.0) * c
        try:
            if m <= _DENSE_BLOCK:
                block = np.linalg.solve(H, rhs)
            else:
                block = spla.splu(H).solve(rhs)
        except (np.linalg.LinAlgError, RuntimeError):
            raise SolverError(f"singular {n}-excitation block") from None
        if not np.all(np.isfinite(block)):
            raise SolverError(f"non-finite amplitudes in {n}-excitation block")
        amps.append(block)

    manifold = [s for b in blocks for s in b]
    slices, start = [], 0
    for b in blocks:
        slices.append(slice(start, start + len(b)))
        start += len(b)
    return AmplitudeVector(manifold, np.concatenate(amps), n_exc, slices)


def _unit(n_sites, *sites):
    occ = [0] * n_sites
    for s in sites:
        occ[s] += 1
    return tuple(occ)


def g2_from_amplitudes(av: AmplitudeVector, i: int, j: int) -> float:
    """Leading-order equal-time ``g2_ij`` from the one- and two-excitation amplitudes."""
    n_sites = len(av.manifold[0])
    if not (0 <= i < n_sites and 0 <= j < n_sites):
        raise ConfigError(f"mode index out of range: {i}, {j}")
    if av.n_exc < 2:
        raise ConfigError("g2 needs the two-excitation block")
    ci = abs(av.amplitude(_unit(n_sites, i))) ** 2
    cj = abs(av.amplitude(_unit(n_sites, j))) ** 2
    if ci == 0 or cj == 0:
        raise UndefinedCorrelationError(f"mode {i if ci == 0 else j} has zero one-excitation amplitude")
    pair = abs(av.amplitude(_unit(n_sites, i, j))) ** 2
    if i == j:
        return 2.0 * pair / (ci * ci)
    return pair / (ci * cj)


def c20_residual(spec: SystemSpec) -> complex:
    """``C_20 / (F C_10)`` for a two-mode molecule driven on its first mode."""
    if spec.n_sites != 2 or not all(s.is_boson for s in spec.sites):
        raise ConfigError("c20_residual needs a two-mode boson system")
    if spec.driven_sites != [0]:
        raise ConfigError("c20_residual needs the drive on the first mode only")
    F = sum(complex(d.amplitude) for d in spec.drives)
    av = solve_manifold(spec, 2)
    c10 = av.amplitude((1, 0))
    if F == 0 or c10 == 0:
        raise UndefinedCorrelationError("no one-photon amplitude in the driven mode")
    return av.amplitude((2, 0)) / (F * c10)
