"""
Declarative system descriptions and builders for the coupled-cavity models.

All energies and rates are in units of a reference linewidth with hbar = 1,
and every single-site energy is a detuning from the pump, ``E_i - hbar w_p``.

Config file grammar
-------------------
Plain text, ``#`` starts a comment, blank lines are ignored. Site indices
are 1-based. Sections may appear in any order but ``[sites]`` is required::

    [meta]
    name <free text>

    [sites]
    <k> boson <cutoff> <detuning> <kerr>
    <k> twolevel <detuning>

    [hops]
    <i> <j> <value> [label]

    [jc]
    <boson site> <twolevel site> <g>

    [drives]
    <site> <re F> <im F>

    [decays]
    <site> <rate>

Sites must be listed as 1, 2, ... in order. Omitted decays default to 0.
Numbers are written with 17 significant digits so a dump/parse cycle is
bit-exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError
from .fock import Boson, SiteKind, TwoLevel

__all__ = [
    "Hop", "JCCoupling", "Drive", "SystemSpec",
    "kerr_molecule", "cavity_jc_molecule", "jc_cavity", "ring_of_molecules",
    "detunings_from_energies", "loads", "dumps", "load", "dump",
]


@dataclass(frozen=True)
class Hop:
    i: int
    j: int
    value: float
    label: str = ""


@dataclass(frozen=True)
class JCCoupling:
    boson: int
    twolevel: int
    g: float


@dataclass(frozen=True)
class Drive:
    site: int
    amplitude: complex


def _finite(x) -> bool:
    return bool(np.isfinite(x))


@dataclass(frozen=True)
class SystemSpec:
    """Sites, couplings, drives and losses of a driven-dissipative system.

    Sequences indexed by site: ``sites``, ``detunings``, ``kerr``, ``decays``.
    ``kerr[k]`` is the coefficient of ``a^dag a^dag a a`` and must be 0 on a
    two-level site. Validation runs on construction.
    """

    sites: tuple[SiteKind, ...]
    detunings: tuple[float, ...]
    kerr: tuple[float, ...]
    decays: tuple[float, ...]
    hops: tuple[Hop, ...] = ()
    jc: tuple[JCCoupling, ...] = ()
    drives: tuple[Drive, ...] = ()
    name: str = ""

    def __post_init__(self):
        for attr in ("sites", "detunings", "kerr", "decays", "hops", "jc", "drives"):
            object.__setattr__(self, attr, tuple(getattr(self, attr)))
        object.__setattr__(self, "detunings", tuple(float(x) for x in self.detunings))
        object.__setattr__(self, "kerr", tuple(float(x) for x in self.kerr))
        object.__setattr__(self, "decays", tuple(float(x) for x in self.decays))
        self.validate()

    def validate(self) -> None:
        n = len(self.sites)
        if n == 0:
            raise ConfigError("system needs at least one site")
        for attr in ("detunings", "kerr", "decays"):
            if len(getattr(self, attr)) != n:
                raise ConfigError(f"{attr} has {len(getattr(self, attr))} entries for {n} sites")
        for k, s in enumerate(self.sites):
            if not isinstance(s, SiteKind):
                raise ConfigError(f"site {k} is not a SiteKind")
            if not s.is_boson and self.kerr[k] != 0.0:
                raise ConfigError(f"Kerr term on two-level site {k}")
        for attr in ("detunings", "kerr", "decays"):
            if not all(_finite(x) for x in getattr(self, attr)):
                raise ConfigError(f"non-finite value in {attr}")
        if any(r < 0 for r in self.decays):
            raise ConfigError("decay rates must be >= 0")
        if not any(r > 0 for r in self.decays):
            raise ConfigError("at least one decay channel is required")

        def check(k, what):
            if not (isinstance(k, (int, np.integer)) and 0 <= k < n):
                raise ConfigError(f"{what} references invalid site {k!r}")

        for h in self.hops:
            check(h.i, "hop")
            check(h.j, "hop")
            if h.i == h.j:
                raise ConfigError(f"hop connects site {h.i} to itself")
            if not (self.sites[h.i].is_boson and self.sites[h.j].is_boson):
                raise ConfigError("hops must connect two boson sites")
            if not _finite(h.value):
                raise ConfigError("non-finite hop amplitude")
        for c in self.jc:
            check(c.boson, "jc coupling")
            check(c.twolevel, "jc coupling")
            if not self.sites[c.boson].is_boson or self.sites[c.twolevel].is_boson:
                raise ConfigError("jc coupling must join a boson to a two-level site")
            if not _finite(c.g):
                raise ConfigError("non-finite jc coupling")
        for d in self.drives:
            check(d.site, "drive")
            if not self.sites[d.site].is_boson:
                raise ConfigError(f"drive on two-level site {d.site} is unsupported")
            if not _finite(complex(d.amplitude)):
                raise ConfigError("non-finite drive amplitude")

    # -- convenience --------------------------------------------------------

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    @property
    def boson_sites(self) -> list[int]:
        return [k for k, s in enumerate(self.sites) if s.is_boson]

    @property
    def driven_sites(self) -> list[int]:
        return sorted({d.site for d in self.drives})

    @property
    def is_linear(self) -> bool:
        return all(u == 0 for u in self.kerr) and all(c.g == 0 for c in self.jc)

    def with_cutoff(self, cutoff: int) -> "SystemSpec":
        return replace(self, sites=tuple(s.with_cutoff(cutoff) for s in self.sites))

    def with_drive_scale(self, factor: complex) -> "SystemSpec":
        return replace(self, drives=tuple(Drive(d.site, d.amplitude * factor) for d in self.drives))

    def permuted(self, perm: Sequence[int]) -> "SystemSpec":
        """Relabel sites so old site ``k`` becomes new site ``perm[k]``."""
        n = self.n_sites
        if sorted(perm) != list(range(n)):
            raise ConfigError("perm must be a permutation of the site indices")
        inv = [0] * n
        for old, new in enumerate(perm):
            inv[new] = old
        return replace(
            self,
            sites=tuple(self.sites[inv[k]] for k in range(n)),
            detunings=tuple(self.detunings[inv[k]] for k in range(n)),
            kerr=tuple(self.kerr[inv[k]] for k in range(n)),
            decays=tuple(self.decays[inv[k]] for k in range(n)),
            hops=tuple(Hop(perm[h.i], perm[h.j], h.value, h.label) for h in self.hops),
            jc=tuple(JCCoupling(perm[c.boson], perm[c.twolevel], c.g) for c in self.jc),
            drives=tuple(Drive(perm[d.site], d.amplitude) for d in self.drives),
        )

    def parameters(self) -> list[tuple[str, str]]:
        """Flat (key, value) listing of every parameter, for CSV provenance headers."""
        out = [("name", self.name or "-")]
        for k, s in enumerate(self.sites):
            out.append((f"site_{k + 1}", str(s)))
            out.append((f"detuning_{k + 1}", _fmt(self.detunings[k])))
            if s.is_boson:
                out.append((f"kerr_{k + 1}", _fmt(self.kerr[k])))
            out.append((f"decay_{k + 1}", _fmt(self.decays[k])))
        for h in self.hops:
            key = f"hop_{h.i + 1}_{h.j + 1}" + (f"_{h.label}" if h.label else "")
            out.append((key, _fmt(h.value)))
        for c in self.jc:
            out.append((f"jc_{c.boson + 1}_{c.twolevel + 1}", _fmt(c.g)))
        for d in self.drives:
            a = complex(d.amplitude)
            out.append((f"drive_{d.site + 1}", f"{_fmt(a.real)} {_fmt(a.imag)}"))
        return out


def detunings_from_energies(energies: Sequence[float], pump_energy: float) -> tuple[float, ...]:
    return tuple(float(e) - float(pump_energy) for e in energies)


# -- builders ---------------------------------------------------------------

def kerr_molecule(delta_e: float, u1: float, u2: float, J: float,
                  gamma1: float = 1.0, gamma2: float = 1.0, F: complex = 0.01,
                  cutoff: int = 3, delta_e2: float | None = None) -> SystemSpec:
    """Two tunnel-coupled Kerr modes, the first one driven.

    ``delta_e2`` defaults to ``delta_e`` (degenerate modes).
    """
    if gamma1 < 0 or gamma2 < 0:
        raise ConfigError("rates must be nonnegative")
    de2 = delta_e if delta_e2 is None else delta_e2
    return SystemSpec(
        sites=(Boson(cutoff), Boson(cutoff)),
        detunings=(delta_e, de2),
        kerr=(u1, u2),
        decays=(gamma1, gamma2),
        hops=(Hop(0, 1, J, "J"),),
        drives=(Drive(0, complex(F)),),
        name="kerr_molecule",
    )


def cavity_jc_molecule(delta_e1: float, e2_minus_e1: float, eex_minus_e2: float,
                       J: float, g: float, gamma: float = 1.0, gamma_ex: float = 1.0,
                       F: complex = 0.01, cutoff: int = 3) -> SystemSpec:
    """Driven linear cavity tunnel-coupled to a second cavity holding an emitter.

    Sites are ``[cavity 1, cavity 2, emitter]``.
    """
    if gamma < 0 or gamma_ex < 0:
        raise ConfigError("rates must be nonnegative")
    de2 = delta_e1 + e2_minus_e1
    return SystemSpec(
        sites=(Boson(cutoff), Boson(cutoff), TwoLevel()),
        detunings=(delta_e1, de2, de2 + eex_minus_e2),
        kerr=(0.0, 0.0, 0.0),
        decays=(gamma, gamma, gamma_ex),
        hops=(Hop(0, 1, J, "J"),),
        jc=(JCCoupling(1, 2, g),),
        drives=(Drive(0, complex(F)),),
        name="cavity_jc_molecule",
    )


def jc_cavity(g: float, eex_minus_e1: float, gamma: float = 1.0, gamma_ex: float = 1.0,
              F: complex = 0.01, delta_e: float | None = None, cutoff: int = 3) -> SystemSpec:
    """Single driven cavity with an emitter (Jaynes-Cummings reference).

    By default the pump sits on the lower one-excitation polariton, i.e. the
    smaller eigenvalue of ``[[E1, g], [g, E1 + eex_minus_e1]]``.
    """
    if gamma < 0 or gamma_ex < 0:
        raise ConfigError("rates must be nonnegative")
    if delta_e is None:
        half = 0.5 * eex_minus_e1
        delta_e = -(half - math.hypot(half, g))
    return SystemSpec(
        sites=(Boson(cutoff), TwoLevel()),
        detunings=(delta_e, delta_e + eex_minus_e1),
        kerr=(0.0, 0.0),
        decays=(gamma, gamma_ex),
        jc=(JCCoupling(0, 1, g),),
        drives=(Drive(0, complex(F)),),
        name="jc_cavity",
    )


def ring_of_molecules(n_molecules: int = 3, delta_e: float = 0.450, u: float = 0.0769,
                      J: float = 3.0, J2: float = 1.0, gamma: float = 1.0,
                      F: complex = 0.01, cutoff: int = 2) -> SystemSpec:
    """Molecules whose driven modes are tunnel-coupled in a cycle.

    Molecule ``m`` occupies sites ``2m`` (driven) and ``2m + 1`` (auxiliary).
    Driven site ``2m`` couples to ``2((m + 1) % n)`` with ``J2``; duplicate
    edges for ``n < 3`` are merged.
    """
    if n_molecules < 1:
        raise ConfigError("need at least one molecule")
    if gamma < 0:
        raise ConfigError("rates must be nonnegative")
    n = 2 * n_molecules
    hops = [Hop(2 * m, 2 * m + 1, J, "J") for m in range(n_molecules)]
    seen = set()
    for m in range(n_molecules):
        a, b = 2 * m, 2 * ((m + 1) % n_molecules)
        if a == b or frozenset((a, b)) in seen:
            continue
        seen.add(frozenset((a, b)))
        hops.append(Hop(a, b, J2, "J2"))
    return SystemSpec(
        sites=tuple(Boson(cutoff) for _ in range(n)),
        detunings=(delta_e,) * n,
        kerr=(u,) * n,
        decays=(gamma,) * n,
        hops=tuple(hops),
        drives=tuple(Drive(2 * m, complex(F)) for m in range(n_molecules)),
        name="ring_of_molecules",
    )


# -- config text format -----------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def dumps(spec: SystemSpec) -> str:
    lines = []
    if spec.name:
        lines += ["[meta]", f"name {spec.name}", ""]
    lines.append("[sites]")
    for k, s in enumerate(spec.sites):
        if s.is_boson:
            lines.append(f"{k + 1} boson {s.cutoff} {_fmt(spec.detunings[k])} {_fmt(spec.kerr[k])}")
        else:
            lines.append(f"{k + 1} twolevel {_fmt(spec.detunings[k])}")
    if spec.hops:
        lines += ["", "[hops]"]
        for h in spec.hops:
            tail = f" {h.label}" if h.label else ""
            lines.append(f"{h.i + 1} {h.j + 1} {_fmt(h.value)}{tail}")
    if spec.jc:
        lines += ["", "[jc]"]
        for c in spec.jc:
            lines.append(f"{c.boson + 1} {c.twolevel + 1} {_fmt(c.g)}")
    if spec.drives:
        lines += ["", "[drives]"]
        for d in spec.drives:
            a = complex(d.amplitude)
            lines.append(f"{d.site + 1} {_fmt(a.real)} {_fmt(a.imag)}")
    lines += ["", "[decays]"]
    for k, r in enumerate(spec.decays):
        lines.append(f"{k + 1} {_fmt(r)}")
    return "\n".join(lines) + "\n"


_SECTIONS = {"meta", "sites", "hops", "jc", "drives", "decays"}


def loads(text: str) -> SystemSpec:
    """Parse a config string; raises :class:`ConfigError` with a line number on failure."""
    section = None
    seen = set()
    name = ""
    sites, detunings, kerr = [], [], []
    hops, jc, drives = [], [], []
    decays: dict[int, float] = {}

    def site_index(tok, lineno):
        k = int(tok) - 1
        if k < 0:
            raise ConfigError(f"line {lineno}: site indices are 1-based")
        return k

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]") or line[1:-1].strip() not in _SECTIONS:
                raise ConfigError(f"line {lineno}: unknown section {line!r}")
            section = line[1:-1].strip()
            if section in seen:
                raise ConfigError(f"line {lineno}: duplicate section [{section}]")
            seen.add(section)
            continue
        tok = line.split()
        try:
            if section is None:
                raise ConfigError(f"line {lineno}: entry outside any section")
            if section == "meta":
                if tok[0] != "name":
                    raise ConfigError(f"line {lineno}: unknown meta key {tok[0]!r}")
                name = line[len("name"):].strip()
            elif section == "sites":
                k = site_index(tok[0], lineno)
                if k != len(sites):
                    raise ConfigError(f"line {lineno}: sites must be numbered 1, 2, ... in order")
                if tok[1] == "boson":
                    if len(tok) != 5:
                        raise ConfigError(f"line {lineno}: expected '<k> boson <cutoff> <detuning> <kerr>'")
                    sites.append(Boson(int(tok[2])))
                    detunings.append(float(tok[3]))
                    kerr.append(float(tok[4]))
                elif tok[1] == "twolevel":
                    if len(tok) != 3:
                        raise ConfigError(f"line {lineno}: expected '<k> twolevel <detuning>'")
                    sites.append(TwoLevel())
                    detunings.append(float(tok[2]))
                    kerr.append(0.0)
                else:
                    raise ConfigError(f"line {lineno}: unknown site kind {tok[1]!r}")
            elif section == "hops":
                if len(tok) not in (3, 4):
                    raise ConfigError(f"line {lineno}: expected '<i> <j> <value> [label]'")
                hops.append(Hop(site_index(tok[0], lineno), site_index(tok[1], lineno),
                                float(tok[2]), tok[3] if len(tok) == 4 else ""))
            elif section == "jc":
                if len(tok) != 3:
                    raise ConfigError(f"line {lineno}: expected '<boson> <twolevel> <g>'")
                jc.append(JCCoupling(site_index(tok[0], lineno), site_index(tok[1], lineno),
                                     float(tok[2])))
            elif section == "drives":
                if len(tok) != 3:
                    raise ConfigError(f"line {lineno}: expected '<site> <re> <im>'")
                drives.append(Drive(site_index(tok[0], lineno), complex(float(tok[1]), float(tok[2]))))
            elif section == "decays":
                if len(tok) != 2:
                    raise ConfigError(f"line {lineno}: expected '<site> <rate>'")
                k = site_index(tok[0], lineno)
                if k in decays:
                    raise ConfigError(f"line {lineno}: duplicate decay for site {k + 1}")
                decays[k] = float(tok[1])
        except (ValueError, IndexError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"line {lineno}: cannot parse {raw.strip()!r} ({exc})") from None

    if not sites:
        raise ConfigError("config has no [sites] entries")
    for k in decays:
        if k >= len(sites):
            raise ConfigError(f"decay references invalid site {k + 1}")
    return SystemSpec(
        sites=tuple(sites), detunings=tuple(detunings), kerr=tuple(kerr),
        decays=tuple(decays.get(k, 0.0) for k in range(len(sites))),
        hops=tuple(hops), jc=tuple(jc), drives=tuple(drives), name=name,
    )


def load(path) -> SystemSpec:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return loads(text)


def dump(spec: SystemSpec, path) -> None:
    Path(path).write_text(dumps(spec))
