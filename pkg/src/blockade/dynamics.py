"""
Rotating-frame Lindblad dynamics, steady states and photon correlations.

Master equation (hbar = 1, energies in units of the reference linewidth)::

    d rho/dt = -i [H, rho] + sum_c gamma_c (c rho c^dag - 1/2 {c^dag c, rho})

With this convention an isolated driven mode has the linear response
``<a> = -F / (dE - i gamma / 2)``: the amplitude decays at half the rate
``gamma``, which is the half-width used by the weak-drive expansion.

Superoperators act on the row-major vectorization ``vec(rho)[i*d + j] =
rho[i, j]``, so ``vec(A rho B) = kron(A, B.T) vec(rho)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (ConfigError, ConvergenceError, NonUniqueSteadyStateError,
                     SolverError, UndefinedCorrelationError)
from .fock import FockBasis, SparseOperator, annihilation, build_basis, lowering, number
from .integrate import DormandPrince
from .models import SystemSpec
from .sectors import SectorSolver

__all__ = [
    "Liouvillian", "DensityState", "build_liouvillian", "steady_state", "propagate",
    "g2_equal_time", "g2_two_time", "populations", "write_g2_csv",
    "DIRECT_MAX_UNKNOWNS", "AUTO_DIRECT_UNKNOWNS", "SECTOR_MAX_UNKNOWNS", "TOL_SS", "MIN_OCCUPATION",
]

#: Largest vectorized system (dim**2) the direct steady-state solve accepts.
DIRECT_MAX_UNKNOWNS = 4_000_000
#: ``auto`` prefers sparse LU up to this many unknowns; its fill-in grows
#: roughly like a dense factorization beyond a few modes.
AUTO_DIRECT_UNKNOWNS = 2_500
#: Largest vectorized system the sector solver accepts (dense dim x dim work arrays).
SECTOR_MAX_UNKNOWNS = 20_000_000
#: Default steady-state criterion on the entrywise 1-norm of d rho/dt.
TOL_SS = 1e-10
#: Occupations at or below this are treated as zero in correlation denominators.
MIN_OCCUPATION = 1e-30

_RTOL = 1e-9
_ATOL = 1e-20
_TRACE_DRIFT = 1e-9
_JUMP_SUPER_NNZ = 20_000_000
# relative LU pivot below which the steady state is declared non-unique
_DEGENERATE_PIVOT = 1e-13
# memory budget in bytes for the GMRES Krylov basis
_SECTOR_MEMORY = 1_000_000_000


@dataclass(frozen=True, eq=False)
class Liouvillian:
    """Time-independent Lindblad generator on a Fock basis."""

    basis: FockBasis
    hamiltonian: SparseOperator
    collapse: tuple[tuple[SparseOperator, float], ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "collapse", tuple(self.collapse))
        if self.hamiltonian.basis != self.basis:
            raise ConfigError("Hamiltonian lives on a different basis")
        if not self.hamiltonian.is_hermitian(1e-12):
            raise ConfigError("rotating-frame Hamiltonian is not Hermitian")
        for op, rate in self.collapse:
            if op.basis != self.basis:
                raise ConfigError("collapse operator lives on a different basis")
            if not (rate >= 0 and np.isfinite(rate)):
                raise ConfigError(f"collapse rate must be finite and >= 0, got {rate!r}")

    @property
    def dim(self) -> int:
        return self.basis.dim

    @cached_property
    def _h_eff(self) -> sp.csr_matrix:
        h = self.hamiltonian.matrix.copy()
        for op, rate in self.collapse:
            h = h - 0.5j * rate * (op.matrix.conj().T @ op.matrix)
        return sp.csr_matrix(h)

    @cached_property
    def _jumps(self) -> list[tuple[sp.csr_matrix, float]]:
        return [(op.matrix, rate) for op, rate in self.collapse if rate > 0]

    @cached_property
    def _jump_super(self) -> sp.csr_matrix | None:
        # sum_c gamma_c kron(c, c*) has nnz(c)**2 entries per channel; beyond
        # _JUMP_SUPER_NNZ fall back to operator products in apply()
        if sum(c.nnz ** 2 for c, _ in self._jumps) > _JUMP_SUPER_NNZ:
            return None
        d = self.dim
        sup = sp.csr_matrix((d * d, d * d), dtype=complex)
        for c, rate in self._jumps:
            sup = sup + rate * sp.kron(c, c.conj(), format="csr")
        return sup

    def apply(self, rho: np.ndarray) -> np.ndarray:
        """``L(rho)`` for a Hermitian ``dim x dim`` matrix."""
        x = self._h_eff @ rho
        # rho H_eff^dag = (H_eff rho)^dag for Hermitian rho
        out = -1j * x
        out += out.conj().T
        jump = self._jump_super
        if jump is not None:
            out += (jump @ rho.ravel()).reshape(rho.shape)
        else:
            for c, rate in self._jumps:
                y = np.ascontiguousarray((c @ rho).conj().T)
                out += rate * (c @ y).conj().T
        return out

    def superoperator(self) -> sp.csr_matrix:
        d = self.dim
        eye = sp.identity(d, dtype=complex, format="csr")
        h = self._h_eff
        sup = -1j * (sp.kron(h, eye) - sp.kron(eye, h.conj()))
        for c, rate in self._jumps:
            sup = sup + rate * sp.kron(c, c.conj())
        return sp.csr_matrix(sup)


@dataclass(frozen=True, eq=False)
class DensityState:
    basis: FockBasis
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (self.basis.dim, self.basis.dim):
            raise ConfigError(f"density matrix shape {m.shape} does not match basis dim {self.basis.dim}")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def vacuum(cls, basis: FockBasis) -> "DensityState":
        m = np.zeros((basis.dim, basis.dim), dtype=complex)
        m[0, 0] = 1.0
        return cls(basis, m)

    @property
    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def expect(self, op: SparseOperator) -> complex:
        if op.basis != self.basis:
            raise ConfigError("operator and state live on different bases")
        # Tr[op rho] = sum_ij op_ij rho_ji
        return complex(np.sum(op.matrix.multiply(self.matrix.T)))

    def check(self, herm_tol: float = 1e-10, trace_tol: float = 1e-10, eig_tol: float = 1e-8) -> None:
        """Raise :class:`SolverError` if Hermiticity, trace or positivity fails."""
        m = self.matrix
        if np.max(np.abs(m - m.conj().T), initial=0.0) > herm_tol:
            raise SolverError("density matrix is not Hermitian")
        if abs(self.trace - 1) > trace_tol:
            raise SolverError(f"density matrix trace {self.trace} != 1")
        if np.linalg.eigvalsh(0.5 * (m + m.conj().T)).min() < -eig_tol:
            raise SolverError("density matrix has negative eigenvalues")

    def trace_distance(self, other: "DensityState") -> float:
        diff = self.matrix - other.matrix
        return 0.5 * float(np.abs(np.linalg.eigvalsh(0.5 * (diff + diff.conj().T))).sum())


def build_liouvillian(spec: SystemSpec, cutoff: int | None = None,
                      max_dim: int | None = None) -> Liouvillian:
    """Rotating-frame Lindblad generator for ``spec``.

    ``H = sum_k dE_k n_k + U_k a_k^dag a_k^dag a_k a_k + sum_hops J (a_i^dag a_j + h.c.)
    + sum_jc g (a_b^dag s_k + h.c.) + sum_drives (F a^dag + F^* a)``, one
    collapse channel per site with the site's decay rate. ``cutoff`` overrides
    every boson truncation.
    """
    if cutoff is not None:
        spec = spec.with_cutoff(cutoff)
    for d in spec.drives:
        if not spec.sites[d.site].is_boson:
            raise ConfigError(f"drive on two-level site {d.site} is unsupported")
    basis = build_basis(spec.sites) if max_dim is None else build_basis(spec.sites, max_dim)
    occ = basis.occupations().astype(float)
    diag = occ @ np.asarray(spec.detunings) + (occ * (occ - 1)) @ np.asarray(spec.kerr)
    H = sp.diags(diag.astype(complex), format="csr")
    lower = {}
    for k, s in enumerate(spec.sites):
        lower[k] = (annihilation if s.is_boson else lowering)(basis, k).matrix
    for h in spec.hops:
        t = h.value * (lower[h.i].conj().T @ lower[h.j])
        H = H + t + t.conj().T
    for c in spec.jc:
        t = c.g * (lower[c.boson].conj().T @ lower[c.twolevel])
        H = H + t + t.conj().T
    for d in spec.drives:
        t = complex(d.amplitude) * lower[d.site].conj().T
        H = H + t + t.conj().T
    collapse = tuple((SparseOperator(basis, lower[k]), rate)
                     for k, rate in enumerate(spec.decays))
    return Liouvillian(basis, SparseOperator(basis, H), collapse)


def _hermitize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.conj().T)


def _steady_direct(L: Liouvillian, refine: int = 4) -> np.ndarray:
    d = L.dim
    # trace constraint replaces the (redundant) equation for rho[0, 0]
    keep = np.ones(d * d)
    keep[0] = 0.0
    trace_row = sp.csr_matrix((np.ones(d), (np.zeros(d, dtype=int), np.arange(d) * (d + 1))),
                              shape=(d * d, d * d))
    A = (sp.diags(keep) @ L.superoperator() + trace_row).tocsc()
    b = np.zeros(d * d, dtype=complex)
    b[0] = 1.0
    try:
        lu = spla.splu(A)
    except RuntimeError as exc:
        raise NonUniqueSteadyStateError(
            f"Liouvillian has a degenerate steady manifold ({exc})") from None
    # A degenerate steady manifold leaves the bordered system singular, which
    # SuperLU usually reports only as a pivot at rounding level.
    piv = np.abs(lu.U.diagonal())
    if piv.min() <= _DEGENERATE_PIVOT * piv.max():
        raise NonUniqueSteadyStateError(
            f"Liouvillian has a degenerate steady manifold (pivot ratio {piv.min() / piv.max():.1e})")
    x = lu.solve(b)
    # Plain LU leaves absolute errors ~eps on elements as small as 1e-16
    # (two-photon populations); refinement makes the error componentwise.
    for _ in range(refine):
        if not np.all(np.isfinite(x)):
            break
        dx = lu.solve(b - A @ x)
        x = x + dx
        if np.all(np.abs(dx) <= 1e-15 * np.abs(x)):
            break
    if not np.all(np.isfinite(x)):
        raise NonUniqueSteadyStateError("Liouvillian has a degenerate steady manifold")
    return x.reshape(d, d)


def _integrator(L: Liouvillian, rtol=_RTOL, atol=_ATOL) -> DormandPrince:
    def fun(y):
        return L.apply(y)

    def accept(y_old, y_new):
        t_old = np.trace(y_old)
        return abs(np.trace(y_new) - t_old) <= _TRACE_DRIFT * max(abs(t_old), 1e-300)

    h_norm = max(abs(L._h_eff).sum(axis=1).max(), 1e-12)
    return DormandPrince(fun, rtol=rtol, atol=atol, accept=accept, h0=0.01 / h_norm)


def _steady_evolve(L: Liouvillian, tol: float, t_max: float) -> np.ndarray:
    rho = DensityState.vacuum(L.basis).matrix
    stepper = _integrator(L)
    for t, rho, drho in stepper.steps(rho, 0.0, t_max):
        if np.abs(drho).sum() < tol:
            return rho
    raise ConvergenceError(f"no steady state within t_max={t_max} (|drho/dt|_1 > {tol})")


def _steady_sector(L: Liouvillian, tol: float) -> np.ndarray:
    if L.dim ** 2 > SECTOR_MAX_UNKNOWNS:
        raise ConfigError(f"sector solve limited to {SECTOR_MAX_UNKNOWNS} unknowns, need {L.dim ** 2}")
    solver = SectorSolver(L)
    m = solver.steady_state(restart=max(5, min(50, _SECTOR_MEMORY // (16 * L.dim ** 2))))
    resid = np.abs(L.apply(_hermitize(m))).sum()
    if not resid < tol:
        raise ConvergenceError(f"sector solve residual {resid:.2e} exceeds {tol:.1e}")
    return m


def steady_state(L: Liouvillian, method: str = "auto", tol: float = TOL_SS,
                 t_max: float = 1e4) -> DensityState:
    """Unique steady state of ``L``.

    Parameters
    ----------
    method : {"auto", "direct", "sector", "evolve"}
        ``direct`` solves the vectorized null space by sparse LU with the
        trace constraint replacing one equation. ``sector`` solves the same
        linear system by GMRES preconditioned with the undriven generator
        (see :mod:`blockade.sectors`); it needs excitation-conserving couplings.
        ``evolve`` propagates the vacuum until the entrywise 1-norm of
        ``d rho/dt`` drops below ``tol``. ``auto`` uses ``direct`` for tiny
        systems, otherwise ``sector``, falling back to ``direct`` (only while
        ``dim**2 <= DIRECT_MAX_UNKNOWNS``) and then ``evolve``.

    Notes
    -----
    ``direct`` and ``sector`` detect a degenerate steady manifold (a
    rounding-level LU pivot, an undamped sector). ``evolve`` returns whichever
    stationary state the vacuum relaxes to.
    """
    if not any(rate > 0 for _, rate in L.collapse):
        raise NonUniqueSteadyStateError("no dissipation: steady state is not unique")
    n2 = L.dim ** 2
    if method == "auto":
        if n2 <= AUTO_DIRECT_UNKNOWNS:
            m = _steady_direct(L)
        else:
            try:
                m = _steady_sector(L, tol)
            except (ConfigError, ConvergenceError, NonUniqueSteadyStateError):
                m = _steady_direct(L) if n2 <= DIRECT_MAX_UNKNOWNS else _steady_evolve(L, tol, t_max)
    elif method == "direct":
        if n2 > DIRECT_MAX_UNKNOWNS:
            raise ConfigError(f"direct solve limited to {DIRECT_MAX_UNKNOWNS} unknowns, need {n2}")
        m = _steady_direct(L)
    elif method == "sector":
        m = _steady_sector(L, tol)
    elif method == "evolve":
        m = _steady_evolve(L, tol, t_max)
    else:
        raise ConfigError(f"unknown steady-state method {method!r}")
    m = _hermitize(m)
    tr = np.trace(m).real
    if not tr > 0:
        raise SolverError("steady state has nonpositive trace")
    return DensityState(L.basis, m / tr)


def propagate(L: Liouvillian, rho0: DensityState, times: Sequence[float]) -> list[DensityState]:
    """Evolve ``rho0`` (given at ``times[0]``) and return the state at every grid time."""
    mats = _integrator(L).solve(_hermitize(rho0.matrix), times)
    return [DensityState(L.basis, m) for m in mats]


def populations(rho: DensityState) -> np.ndarray:
    """Mean occupation of every site."""
    p = np.real(np.diag(rho.matrix))
    return rho.basis.occupations().T.astype(float) @ p


def _check_boson(basis: FockBasis, site: int):
    if not basis.check_site(site).is_boson:
        raise ConfigError(f"site {site} is not a boson mode")


def g2_equal_time(rho: DensityState, i: int, j: int) -> float:
    """``<a_i^dag a_j^dag a_j a_i> / (<n_i> <n_j>)`` from the Fock-diagonal of ``rho``."""
    basis = rho.basis
    _check_boson(basis, i)
    _check_boson(basis, j)
    diag = np.diag(rho.matrix)
    scale = max(np.abs(diag).max(), 1e-300)
    if np.abs(diag.imag).max() > 1e-10 * scale:
        raise SolverError("density matrix diagonal is not real")
    p = diag.real
    occ = basis.occupations().astype(float)
    ni, nj = occ[:, i], occ[:, j]
    mean_i, mean_j = p @ ni, p @ nj
    if mean_i <= MIN_OCCUPATION or mean_j <= MIN_OCCUPATION:
        raise UndefinedCorrelationError(f"zero occupation in mode {i if mean_i <= MIN_OCCUPATION else j}")
    pair = ni * (nj - (1.0 if i == j else 0.0))
    return float(p @ pair / (mean_i * mean_j))


def g2_two_time(L: Liouvillian, rho_ss: DensityState, i: int, tau_grid: Sequence[float],
                j: int | None = None) -> np.ndarray:
    """``g2_ij(tau)`` on ``tau_grid`` by the quantum regression theorem.

    The conditional state ``a_i rho a_i^dag`` is normalized before propagation
    and the normalization divided back out, which keeps the integrator's
    relative tolerance meaningful.
    """
    j = i if j is None else j
    _check_boson(L.basis, i)
    _check_boson(L.basis, j)
    taus = np.asarray(tau_grid, dtype=float)
    if taus.size == 0 or taus[0] < 0:
        raise ConfigError("tau grid must be nonempty and start at tau >= 0")
    a = annihilation(L.basis, i).matrix
    cond = a @ rho_ss.matrix @ a.conj().T
    n_i = np.trace(cond).real
    n_j = populations(rho_ss)[j]
    if n_i <= MIN_OCCUPATION or n_j <= MIN_OCCUPATION:
        raise UndefinedCorrelationError("zero occupation in correlated mode")
    cond = _hermitize(cond / n_i)
    # the regression evolution is stationary, so start the clock at taus[0] = 0
    grid = np.concatenate([[0.0], taus]) if taus[0] > 0 else taus
    mats = _integrator(L).solve(cond, grid)
    if taus[0] > 0:
        mats = mats[1:]
    nj_diag = L.basis.occupations()[:, j].astype(float)
    return np.array([float(np.real(np.diag(m)) @ nj_diag) / n_j for m in mats])


def write_g2_csv(fh, taus, values, header: Sequence[tuple[str, str]] = ()) -> None:
    """CSV with columns ``tau,g2`` and ``# key: value`` header comments."""
    for key, value in header:
        fh.write(f"# {key}: {value}\n")
    fh.write("tau,g2\n")
    for t, g in zip(taus, values):
        fh.write(f"{float(t):.17g},{float(g):.17g}\n")
