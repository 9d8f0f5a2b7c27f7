from functools import reduce

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from blockade import dynamics, models, weakdrive
from blockade.dynamics import (DensityState, Liouvillian, build_liouvillian, g2_equal_time,
                               g2_two_time, populations, propagate, steady_state)
from blockade.errors import (ConfigError, ConvergenceError, NonUniqueSteadyStateError,
                             SolverError, UndefinedCorrelationError)
from blockade.fock import Boson, annihilation, build_basis
from blockade.models import Drive, SystemSpec

MOLECULE = models.kerr_molecule(0.275, 0.0428, 0.0428, 3.0)
JC_MOLECULE = models.cavity_jc_molecule(0.275, 1.0, 2.0, J=3.0, g=1.4)


def single_mode(de=0.3, F=0.05, gamma=1.0, cutoff=6, u=0.0):
    return SystemSpec(sites=(Boson(cutoff),), detunings=(de,), kerr=(u,), decays=(gamma,),
                      drives=(Drive(0, F),))


def dense_ops(sites):
    """Lowering operators built with plain numpy kron products."""
    ops = []
    for k, s in enumerate(sites):
        loc = np.diag(np.sqrt(np.arange(1, s.local_dim)), 1).astype(complex)
        mats = [loc if m == k else np.eye(x.local_dim) for m, x in enumerate(sites)]
        ops.append(reduce(np.kron, mats))
    return ops


def dense_hamiltonian(spec):
    a = dense_ops(spec.sites)
    H = sum(spec.detunings[k] * a[k].conj().T @ a[k]
            + spec.kerr[k] * a[k].conj().T @ a[k].conj().T @ a[k] @ a[k] for k in range(spec.n_sites))
    for h in spec.hops:
        H = H + h.value * (a[h.i].conj().T @ a[h.j] + a[h.j].conj().T @ a[h.i])
    for c in spec.jc:
        H = H + c.g * (a[c.boson].conj().T @ a[c.twolevel] + a[c.twolevel].conj().T @ a[c.boson])
    for d in spec.drives:
        H = H + d.amplitude * a[d.site].conj().T + np.conj(d.amplitude) * a[d.site]
    return H, a


def dense_lindblad(spec, rho):
    H, a = dense_hamiltonian(spec)
    out = -1j * (H @ rho - rho @ H)
    for k, g in enumerate(spec.decays):
        c = a[k]
        cd = c.conj().T
        out += g * (c @ rho @ cd - 0.5 * (cd @ c @ rho + rho @ cd @ c))
    return out


def random_density(dim, rng):
    x = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = x @ x.conj().T
    return rho / np.trace(rho)


# -- Liouvillian assembly ------------------------------------------------------

@pytest.mark.parametrize("spec", [MOLECULE, JC_MOLECULE, models.jc_cavity(1.4, 2.0),
                                  models.kerr_molecule(0.1, 0.2, -0.3, 1.5, 0.5, 2.0, F=0.02 - 0.01j)])
def test_hamiltonian_matches_dense(spec):
    L = build_liouvillian(spec)
    H, _ = dense_hamiltonian(spec)
    np.testing.assert_allclose(L.hamiltonian.toarray(), H, atol=1e-14)


def test_molecule_hamiltonian_pattern():
    H = build_liouvillian(MOLECULE).hamiltonian.toarray()
    d = build_basis(MOLECULE.sites).dim
    # hopping moves one photon between sites (offset +-3), the drive adds one to site 1 (offset +-4)
    offsets = {c - r for r in range(d) for c in range(d) if H[r, c] != 0}
    assert offsets == {0, 3, -3, 4, -4}


def test_linear_one_excitation_spectrum():
    spec = models.kerr_molecule(0.4, 0.0, 0.0, 2.0, F=0.0)
    L = build_liouvillian(spec)
    b = L.basis
    idx = [b.index((1, 0)), b.index((0, 1))]
    block = L.hamiltonian.toarray()[np.ix_(idx, idx)]
    np.testing.assert_allclose(np.linalg.eigvalsh(block), [0.4 - 2.0, 0.4 + 2.0], atol=1e-14)


def test_jc_terms():
    L = build_liouvillian(JC_MOLECULE)
    b = L.basis
    H = L.hamiltonian.toarray()
    assert H[b.index((0, 0, 1)), b.index((0, 0, 1))] == pytest.approx(3.275)
    assert H[b.index((0, 1, 0)), b.index((0, 0, 1))] == pytest.approx(1.4)
    assert H[b.index((0, 2, 0)), b.index((0, 1, 1))] == pytest.approx(1.4 * np.sqrt(2))


def test_liouvillian_validation():
    b = build_basis([Boson(2)])
    a = annihilation(b, 0)
    with pytest.raises(ConfigError, match="Hermitian"):
        Liouvillian(b, a, ((a, 1.0),))
    with pytest.raises(ConfigError, match="rate"):
        Liouvillian(b, a.dag() @ a, ((a, -1.0),))
    other = build_basis([Boson(3)])
    with pytest.raises(ConfigError):
        Liouvillian(b, a.dag() @ a, ((annihilation(other, 0), 1.0),))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([MOLECULE, JC_MOLECULE, models.jc_cavity(1.0, 2.0)]))
def test_apply_and_superoperator_match_dense(seed, spec):
    rng = np.random.default_rng(seed)
    L = build_liouvillian(spec.with_cutoff(2))
    rho = random_density(L.dim, rng)
    ref = dense_lindblad(spec.with_cutoff(2), rho)
    np.testing.assert_allclose(L.apply(rho), ref, atol=1e-12)
    np.testing.assert_allclose((L.superoperator() @ rho.ravel()).reshape(rho.shape), ref, atol=1e-12)


def test_apply_product_fallback(monkeypatch):
    rng = np.random.default_rng(3)
    spec = JC_MOLECULE.with_cutoff(2)
    rho = random_density(build_basis(spec.sites).dim, rng)
    fast = build_liouvillian(spec).apply(rho)
    monkeypatch.setattr(dynamics, "_JUMP_SUPER_NNZ", 0)
    L = build_liouvillian(spec)
    assert L._jump_super is None
    np.testing.assert_allclose(L.apply(rho), fast, atol=1e-13)


# -- steady state -----------------------------------------------------------

def test_coherent_state_closed_form():
    de, F, gamma = 0.3, 0.05, 1.0
    L = build_liouvillian(single_mode(de, F, gamma))
    rho = steady_state(L, "direct")
    alpha = -F / (de - 0.5j * gamma)
    assert abs(rho.expect(annihilation(L.basis, 0)) - alpha) < 1e-8
    assert abs(populations(rho)[0] - abs(alpha) ** 2) < 1e-8
    assert abs(g2_equal_time(rho, 0, 0) - 1) < 1e-6


def test_zero_drive_gives_vacuum():
    L = build_liouvillian(MOLECULE.with_drive_scale(0.0))
    rho = steady_state(L)
    vac = DensityState.vacuum(L.basis)
    assert np.max(np.abs(rho.matrix - vac.matrix)) < 1e-14
    with pytest.raises(UndefinedCorrelationError):
        g2_equal_time(rho, 0, 0)


def test_molecule_population_ratio():
    rho = steady_state(build_liouvillian(MOLECULE))
    n1, n2 = populations(rho)
    ref = abs(3.0 / (0.275 - 0.5j)) ** 2
    assert abs(n2 / n1 / ref - 1) < 0.01


@pytest.mark.parametrize("spec", [MOLECULE, JC_MOLECULE, models.jc_cavity(1.4, 2.0)])
def test_direct_and_evolve_agree(spec):
    L = build_liouvillian(spec)
    a, b = steady_state(L, "direct"), steady_state(L, "evolve")
    assert a.trace_distance(b) < 1e-8
    for rho in (a, b):
        rho.check()


@pytest.mark.parametrize("method", ["direct", "sector", "evolve"])
def test_steady_state_residual(method):
    L = build_liouvillian(MOLECULE)
    rho = steady_state(L, method)
    assert np.abs(L.apply(rho.matrix)).sum() < 10 * dynamics.TOL_SS


def test_auto_method_threshold(monkeypatch):
    L = build_liouvillian(MOLECULE)
    calls = []
    for name in ("_steady_direct", "_steady_sector", "_steady_evolve"):
        orig = getattr(dynamics, name)
        monkeypatch.setattr(dynamics, name, lambda *a, _o=orig, _n=name: calls.append(_n) or _o(*a))
    steady_state(L, "auto")
    assert calls == ["_steady_direct"]
    calls.clear()
    monkeypatch.setattr(dynamics, "AUTO_DIRECT_UNKNOWNS", 10)
    steady_state(L, "auto")
    assert calls == ["_steady_sector"]
    with pytest.raises(ConfigError):
        steady_state(L, "lu")


def test_auto_falls_back_when_sector_inapplicable(monkeypatch):
    L = squeezed_mode(cutoff=3)
    calls = []
    for name in ("_steady_direct", "_steady_evolve"):
        orig = getattr(dynamics, name)
        monkeypatch.setattr(dynamics, name, lambda *a, _o=orig, _n=name: calls.append(_n) or _o(*a))
    monkeypatch.setattr(dynamics, "AUTO_DIRECT_UNKNOWNS", 1)
    steady_state(L, "auto")
    assert calls == ["_steady_direct"]
    calls.clear()
    monkeypatch.setattr(dynamics, "DIRECT_MAX_UNKNOWNS", 10)
    steady_state(L, "auto")
    assert calls == ["_steady_evolve"]
    with pytest.raises(ConfigError):
        steady_state(L, "direct")


def squeezed_mode(cutoff=8):
    # a two-photon drive changes the excitation number by two
    b = build_basis([Boson(cutoff)])
    a = annihilation(b, 0)
    H = 0.3 * (a.dag() @ a) + 0.2 * (a.dag() @ a.dag() + a @ a)
    return Liouvillian(b, H, ((a, 1.0),))


def test_sector_rejects_nonconserving_structure():
    with pytest.raises(ConfigError):
        steady_state(squeezed_mode(), "sector")
    b = build_basis([Boson(3)])
    a = annihilation(b, 0)
    n = a.dag() @ a
    dephased = Liouvillian(b, 0.3 * n + 0.1 * (a + a.dag()), ((a, 1.0), (n, 0.5)))
    with pytest.raises(ConfigError):
        steady_state(dephased, "sector")


STRONG = models.kerr_molecule(0.275, 0.5, 0.3, 2.0, F=0.4 + 0.2j, cutoff=6)


@pytest.mark.parametrize("spec", [MOLECULE, JC_MOLECULE, models.jc_cavity(1.4, 2.0), STRONG,
                                  models.ring_of_molecules(J2=1.0, cutoff=1)],
                         ids=["molecule", "jc_molecule", "jc", "strong", "ring1"])
def test_sector_matches_direct(spec):
    L = build_liouvillian(spec)
    a, b = steady_state(L, "direct"), steady_state(L, "sector")
    assert a.trace_distance(b) < 1e-10
    assert np.abs(L.apply(b.matrix)).sum() < dynamics.TOL_SS
    b.check()


def test_sector_schur_fallback(monkeypatch):
    from blockade import sectors
    monkeypatch.setattr(sectors, "_EIG_COND", 0.0)
    for spec in (JC_MOLECULE, STRONG):
        L = build_liouvillian(spec)
        assert sectors.SectorSolver(L).eig is None
        assert steady_state(L, "direct").trace_distance(steady_state(L, "sector")) < 1e-10


def test_sector_nonuniform_decay():
    # unequal rates make the effective Hamiltonian non-normal
    spec = models.cavity_jc_molecule(0.275, 1.0, 2.0, J=3.0, g=1.4, gamma=0.7, gamma_ex=0.15, F=0.05)
    L = build_liouvillian(spec)
    assert steady_state(L, "direct").trace_distance(steady_state(L, "sector")) < 1e-10


def test_sector_zero_drive_and_degenerate():
    L = build_liouvillian(MOLECULE.with_drive_scale(0.0))
    vac = DensityState.vacuum(L.basis)
    assert np.max(np.abs(steady_state(L, "sector").matrix - vac.matrix)) < 1e-14
    spec = SystemSpec(sites=(Boson(2), Boson(2)), detunings=(0.3, 0.1), kerr=(0, 0),
                      decays=(1.0, 0.0), drives=(Drive(0, 0.01),))
    with pytest.raises(NonUniqueSteadyStateError):
        steady_state(build_liouvillian(spec), "sector")


def test_no_dissipation_is_not_unique():
    b = build_basis([Boson(2)])
    a = annihilation(b, 0)
    L = Liouvillian(b, a.dag() @ a, ((a, 0.0),))
    with pytest.raises(NonUniqueSteadyStateError):
        steady_state(L)


def test_degenerate_manifold_detected():
    # an undamped, uncoupled mode conserves its photon number
    spec = SystemSpec(sites=(Boson(2), Boson(2)), detunings=(0.3, 0.1), kerr=(0, 0),
                      decays=(1.0, 0.0), drives=(Drive(0, 0.01),))
    with pytest.raises(NonUniqueSteadyStateError):
        steady_state(build_liouvillian(spec), "direct")


def test_evolve_nonconvergence():
    with pytest.raises(ConvergenceError):
        steady_state(build_liouvillian(MOLECULE), "evolve", t_max=0.5)


def test_density_state_checks():
    b = build_basis([Boson(1)])
    with pytest.raises(SolverError, match="trace"):
        DensityState(b, np.diag([0.5, 0.4])).check()
    with pytest.raises(SolverError, match="Hermitian"):
        DensityState(b, np.array([[1, 0.1], [0, 0]])).check()
    with pytest.raises(SolverError, match="negative"):
        DensityState(b, np.diag([1.1, -0.1])).check()
    with pytest.raises(ConfigError):
        DensityState(b, np.eye(3))


# -- invariances ---------------------------------------------------------------

def observables(spec):
    rho = steady_state(build_liouvillian(spec))
    b = spec.boson_sites
    return np.concatenate([populations(rho), [g2_equal_time(rho, i, j) for i in b for j in b]])


@pytest.mark.parametrize("shift", [-3.7, 0.5, 12.0])
def test_gauge_invariance(shift):
    e, pump = [1.275, 1.275], 1.0
    base = models.kerr_molecule(*models.detunings_from_energies(e, pump)[:1], 0.0428, 0.0428, 3.0)
    moved = models.kerr_molecule(*models.detunings_from_energies([x + shift for x in e], pump + shift)[:1],
                                 0.0428, 0.0428, 3.0)
    np.testing.assert_allclose(observables(moved), observables(base), rtol=0, atol=1e-10)


@pytest.mark.parametrize("phase", [0.3, np.pi / 2, 2.0])
def test_drive_phase_invariance(phase):
    for spec in (MOLECULE, JC_MOLECULE):
        np.testing.assert_allclose(observables(spec.with_drive_scale(np.exp(1j * phase))),
                                   observables(spec), rtol=0, atol=1e-10)


def test_cutoff_convergence():
    g3 = g2_equal_time(steady_state(build_liouvillian(MOLECULE, cutoff=3)), 0, 0)
    g4 = g2_equal_time(steady_state(build_liouvillian(MOLECULE, cutoff=4)), 0, 0)
    assert abs(g3 - g4) < 1e-4


def test_matches_weakdrive_molecule():
    rho = steady_state(build_liouvillian(MOLECULE))
    av = weakdrive.solve_manifold(MOLECULE)
    assert g2_equal_time(rho, 0, 0) < 0.01
    assert g2_equal_time(rho, 0, 1) > 1
    for i, j in ((0, 0), (0, 1), (1, 1)):
        wd = weakdrive.g2_from_amplitudes(av, i, j)
        assert abs(g2_equal_time(rho, i, j) - wd) <= max(1e-3, 5 * 0.01**2)
    assert abs(g2_equal_time(rho, 0, 1) / weakdrive.g2_from_amplitudes(av, 0, 1) - 1) < 0.01


# -- propagation --------------------------------------------------------------

def test_propagation_invariants():
    rng = np.random.default_rng(11)
    L = build_liouvillian(JC_MOLECULE.with_cutoff(2))
    rho0 = DensityState(L.basis, random_density(L.dim, rng))
    times = np.linspace(0, 5, 11)
    states = propagate(L, rho0, times)
    for t, rho in zip(times, states):
        assert abs(rho.trace - 1) < 1e-10 * max(t, 1)
        rho.check(herm_tol=1e-10, trace_tol=1e-9, eig_tol=1e-8)


def test_propagation_matches_expm():
    from scipy.linalg import expm
    rng = np.random.default_rng(5)
    spec = models.kerr_molecule(0.3, 0.2, 0.1, 1.0, F=0.3).with_cutoff(2)
    L = build_liouvillian(spec)
    rho0 = random_density(L.dim, rng)
    out = propagate(L, DensityState(L.basis, rho0), [0.0, 0.7, 2.0])
    S = L.superoperator().toarray()
    for t, rho in zip([0.0, 0.7, 2.0], out):
        ref = (expm(S * t) @ rho0.ravel()).reshape(rho0.shape)
        np.testing.assert_allclose(rho.matrix, ref, atol=1e-9)


# -- two-time correlations -----------------------------------------------------

def test_g2_tau_molecule():
    L = build_liouvillian(MOLECULE)
    rho = steady_state(L)
    taus = np.linspace(0, 20, 201)
    g = g2_two_time(L, rho, 0, taus)
    assert abs(g[0] - g2_equal_time(rho, 0, 0)) < 1e-8
    assert abs(g[-1] - 1) < 1e-3


def test_g2_tau_cross_and_offset_grid():
    L = build_liouvillian(MOLECULE)
    rho = steady_state(L)
    full = g2_two_time(L, rho, 0, [0.0, 1.0, 2.0], j=1)
    assert abs(full[0] - g2_equal_time(rho, 0, 1)) < 1e-8
    np.testing.assert_allclose(g2_two_time(L, rho, 0, [1.0, 2.0], j=1), full[1:], rtol=1e-8)


def test_g2_tau_linear_flat():
    L = build_liouvillian(single_mode())
    rho = steady_state(L)
    g = g2_two_time(L, rho, 0, np.linspace(0, 10, 51))
    assert np.max(np.abs(g - 1)) < 1e-6


def test_g2_tau_errors():
    L = build_liouvillian(MOLECULE)
    rho = steady_state(L)
    with pytest.raises(ConfigError):
        g2_two_time(L, rho, 0, [-1.0, 0.0])
    with pytest.raises(ConfigError):
        g2_two_time(L, rho, 0, [])
    L0 = build_liouvillian(MOLECULE.with_drive_scale(0))
    with pytest.raises(UndefinedCorrelationError):
        g2_two_time(L0, steady_state(L0), 0, [0.0, 1.0])
    Lj = build_liouvillian(JC_MOLECULE)
    with pytest.raises(ConfigError):
        g2_two_time(Lj, steady_state(Lj), 2, [0.0])


def test_g2_csv_format():
    import io
    buf = io.StringIO()
    dynamics.write_g2_csv(buf, [0.0, 0.5], [0.25, 1 / 3], [("J", "3")])
    assert buf.getvalue() == "# J: 3\ntau,g2\n0,0.25\n0.5,0.33333333333333331\n"
