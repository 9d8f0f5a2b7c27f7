"""
Truncated product Fock bases and sparse operators on them.

A basis is an ordered list of sites. Each site is either a bosonic mode
truncated at a maximum photon number, or a two-level emitter with local
states ``|g> = 0`` and ``|ex> = 1``. Product states are ordered
lexicographically with the last site running fastest, so the flat index of
``(n_1, ..., n_S)`` is the mixed-radix number with digits ``n_k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import BasisError

__all__ = [
    "SiteKind", "Boson", "TwoLevel", "FockBasis", "SparseOperator",
    "build_basis", "annihilation", "creation", "lowering", "number",
    "identity", "commutator", "MAX_DIM",
]

#: Largest Hilbert-space dimension accepted by :func:`build_basis`.
MAX_DIM = 1 << 16


@dataclass(frozen=True)
class SiteKind:
    """Local Hilbert space of one site.

    ``kind`` is ``"boson"`` or ``"twolevel"``; ``cutoff`` is the maximum
    photon number of a boson and is fixed to 1 for a two-level site.
    """

    kind: str
    cutoff: int = 1

    def __post_init__(self):
        if self.kind == "boson":
            if int(self.cutoff) != self.cutoff or self.cutoff < 1:
                raise BasisError(f"boson cutoff must be an integer >= 1, got {self.cutoff!r}")
        elif self.kind == "twolevel":
            if self.cutoff != 1:
                raise BasisError("a two-level site has exactly 2 local states")
        else:
            raise BasisError(f"unknown site kind {self.kind!r}")

    @property
    def is_boson(self) -> bool:
        return self.kind == "boson"

    @property
    def local_dim(self) -> int:
        return self.cutoff + 1

    def with_cutoff(self, cutoff: int) -> "SiteKind":
        if not self.is_boson:
            return self
        return SiteKind("boson", cutoff)

    def __str__(self):
        return f"boson {self.cutoff}" if self.is_boson else "twolevel"


def Boson(cutoff: int) -> SiteKind:
    return SiteKind("boson", cutoff)


def TwoLevel() -> SiteKind:
    return SiteKind("twolevel", 1)


@dataclass(frozen=True)
class FockBasis:
    """Enumerated product basis. Use :func:`build_basis` to construct."""

    sites: tuple[SiteKind, ...]
    dims: tuple[int, ...] = field(init=False, repr=False)
    dim: int = field(init=False)
    _strides: tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        dims = tuple(s.local_dim for s in self.sites)
        strides = []
        acc = 1
        for d in reversed(dims):
            strides.append(acc)
            acc *= d
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "dim", math.prod(dims))
        object.__setattr__(self, "_strides", tuple(reversed(strides)))

    def __len__(self):
        return len(self.sites)

    def index(self, occupations: Sequence[int]) -> int:
        """Flat index of the product state with the given local occupations."""
        if len(occupations) != len(self.sites):
            raise BasisError(f"expected {len(self.sites)} occupations, got {len(occupations)}")
        flat = 0
        for n, d, s in zip(occupations, self.dims, self._strides):
            if not 0 <= n < d:
                raise BasisError(f"occupation {n} outside local range 0..{d - 1}")
            flat += int(n) * s
        return flat

    def state(self, flat: int) -> tuple[int, ...]:
        """Local occupations of the product state with flat index ``flat``."""
        if not 0 <= flat < self.dim:
            raise BasisError(f"flat index {flat} outside 0..{self.dim - 1}")
        return tuple(int(x) for x in np.unravel_index(flat, self.dims))

    def occupations(self) -> np.ndarray:
        """Array of shape (dim, n_sites) listing every basis state in order."""
        grids = np.indices(self.dims).reshape(len(self.dims), -1)
        return grids.T.copy()

    def signature(self) -> str:
        return ",".join(str(s).replace(" ", ":") for s in self.sites)

    def check_site(self, site: int) -> SiteKind:
        if not 0 <= site < len(self.sites):
            raise BasisError(f"site {site} out of range for {len(self.sites)} sites")
        return self.sites[site]


def build_basis(sites: Iterable[SiteKind], max_dim: int = MAX_DIM) -> FockBasis:
    """Construct the truncated product basis for ``sites``.

    Raises
    ------
    BasisError
        If ``sites`` is empty or the product dimension exceeds ``max_dim``.
    """
    sites = tuple(sites)
    if not sites:
        raise BasisError("basis needs at least one site")
    required = math.prod(s.local_dim for s in sites)
    if required > max_dim:
        raise BasisError(f"basis dimension {required} exceeds limit {max_dim}")
    return FockBasis(sites)


class SparseOperator:
    """Complex sparse matrix acting on a :class:`FockBasis`.

    Stored in canonical CSR form: entries sorted by (row, col), duplicates
    summed and literal zeros removed. Instances are treated as immutable.
    """

    __slots__ = ("basis", "matrix")

    def __init__(self, basis: FockBasis, matrix):
        m = sp.csr_matrix(matrix, dtype=complex, copy=True)
        if m.shape != (basis.dim, basis.dim):
            raise BasisError(f"operator shape {m.shape} does not match basis dim {basis.dim}")
        m.sum_duplicates()
        m.eliminate_zeros()
        m.sort_indices()
        self.basis = basis
        self.matrix = m

    @classmethod
    def from_entries(cls, basis: FockBasis, rows, cols, values) -> "SparseOperator":
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        if rows.size and (rows.max() >= basis.dim or cols.max() >= basis.dim
                          or rows.min() < 0 or cols.min() < 0):
            raise BasisError("operator entry index out of range")
        m = sp.coo_matrix((np.asarray(values, dtype=complex), (rows, cols)),
                          shape=(basis.dim, basis.dim))
        return cls(basis, m)

    # -- inspection ---------------------------------------------------------

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def entries(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Canonical coordinate listing ``(rows, cols, values)``."""
        coo = self.matrix.tocoo()
        return coo.row.astype(np.int64), coo.col.astype(np.int64), coo.data.copy()

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        diff = self.matrix - self.matrix.conj().T
        if diff.nnz == 0:
            return True
        scale = max(abs(self.matrix).max(), 1.0)
        return abs(diff).max() <= tol * scale

    # -- algebra ------------------------------------------------------------

    def _same_basis(self, other: "SparseOperator"):
        if not isinstance(other, SparseOperator):
            raise TypeError(f"expected SparseOperator, got {type(other).__name__}")
        if other.basis != self.basis:
            raise BasisError("operators live on different bases")

    def __add__(self, other):
        self._same_basis(other)
        return SparseOperator(self.basis, self.matrix + other.matrix)

    def __sub__(self, other):
        self._same_basis(other)
        return SparseOperator(self.basis, self.matrix - other.matrix)

    def __neg__(self):
        return SparseOperator(self.basis, -self.matrix)

    def __mul__(self, scalar):
        if isinstance(scalar, SparseOperator):
            return NotImplemented
        return SparseOperator(self.basis, self.matrix * complex(scalar))

    __rmul__ = __mul__

    def __matmul__(self, other):
        self._same_basis(other)
        return SparseOperator(self.basis, self.matrix @ other.matrix)

    def adjoint(self) -> "SparseOperator":
        return SparseOperator(self.basis, self.matrix.conj().T)

    dag = adjoint

    def __eq__(self, other):
        if not isinstance(other, SparseOperator) or other.basis != self.basis:
            return False
        return (self.matrix != other.matrix).nnz == 0

    __hash__ = None

    def __repr__(self):
        return f"SparseOperator(dim={self.basis.dim}, nnz={self.nnz})"

    # -- serialization ------------------------------------------------------

    def dump(self, fh) -> None:
        """Write ``row col re im`` lines preceded by a basis-signature comment."""
        fh.write(f"# basis {self.basis.signature()} dim {self.basis.dim} nnz {self.nnz}\n")
        rows, cols, vals = self.entries()
        for r, c, v in zip(rows, cols, vals):
            fh.write(f"{r} {c} {v.real:.17g} {v.imag:.17g}\n")

    @classmethod
    def load(cls, basis: FockBasis, fh) -> "SparseOperator":
        rows, cols, vals = [], [], []
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            r, c, re_, im_ = line.split()
            rows.append(int(r))
            cols.append(int(c))
            vals.append(complex(float(re_), float(im_)))
        return cls.from_entries(basis, rows, cols, vals)


def commutator(a: SparseOperator, b: SparseOperator) -> SparseOperator:
    return a @ b - b @ a


def identity(basis: FockBasis) -> SparseOperator:
    return SparseOperator(basis, sp.identity(basis.dim, dtype=complex, format="csr"))


def _local_lowering(basis: FockBasis, site: int) -> SparseOperator:
    # |..., n, ...> -> sqrt(n) |..., n-1, ...>, identity elsewhere
    occ = basis.occupations()
    n = occ[:, site]
    cols = np.nonzero(n > 0)[0]
    stride = basis._strides[site]
    rows = cols - stride
    vals = np.sqrt(n[cols].astype(float))
    return SparseOperator.from_entries(basis, rows, cols, vals)


def annihilation(basis: FockBasis, site: int) -> SparseOperator:
    """Photon annihilation operator of boson ``site``."""
    if not basis.check_site(site).is_boson:
        raise BasisError(f"site {site} is a two-level site; use lowering()")
    return _local_lowering(basis, site)


def creation(basis: FockBasis, site: int) -> SparseOperator:
    return annihilation(basis, site).adjoint()


def lowering(basis: FockBasis, site: int) -> SparseOperator:
    """``|g><ex|`` on two-level ``site``."""
    if basis.check_site(site).is_boson:
        raise BasisError(f"site {site} is a boson; use annihilation()")
    return _local_lowering(basis, site)


def number(basis: FockBasis, site: int) -> SparseOperator:
    """Local occupation operator (``a^dag a`` or ``|ex><ex|``)."""
    basis.check_site(site)
    n = basis.occupations()[:, site].astype(float)
    return SparseOperator(basis, sp.diags(n, format="csr"))
