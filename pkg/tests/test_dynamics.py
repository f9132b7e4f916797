import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import linalg

from orbitalcluster.dynamics import (_tridiag_expm_e1, KrylovError, ManyBodyState, Schedule, Segment, computational_mask,
                                     evolve, expm_krylov, iter_evolve, prepare_plus_product,
                                     shift_unit_cells, single_round, write_snapshot)
from orbitalcluster.fock import assemble_hamiltonian
from orbitalcluster.lattice_params import build_params
from orbitalcluster.units import PhysicalConfig, recoil_energy


def dense_reference(state, p, t_internal):
    """Exact propagation by eigendecomposition of each sector block."""
    out = []
    blocks = {}
    for key, v in state.vectors.items():
        H = assemble_hamiltonian(p, state.sectors[key]).toarray()
        E, V = linalg.eigh(H)
        blocks[key] = (E, V, V.conj().T @ v)
    for t in t_internal:
        out.append({k: V @ (np.exp(-1j * E * t) * c) for k, (E, V, c) in blocks.items()})
    return out


def test_krylov_matches_dense_propagation(cfg_bell, params_bell):
    state = prepare_plus_product(2)
    times = np.linspace(0.0, 3.0, 100)
    snaps = evolve(state, single_round(3.0), cfg_bell, times)
    unit = recoil_energy(cfg_bell).time_unit_ms
    ref = dense_reference(state, params_bell, times / unit)
    err = max(math.sqrt(sum(np.linalg.norm(s.vectors[k] - r[k]) ** 2 for k in r))
              for s, r in zip(snaps, ref))
    assert err < 1e-10


def test_norm_and_energy_conserved(cfg_bell, params_bell):
    state = prepare_plus_product(2)
    snaps = evolve(state, single_round(2.0), cfg_bell, np.linspace(0, 2.0, 21))
    H = {k: assemble_hamiltonian(params_bell, state.sectors[k]) for k in state.keys()}
    energy = lambda s: sum(np.vdot(v, H[k].matvec(v)).real for k, v in s.vectors.items())
    e0 = energy(state)
    for s in snaps:
        assert abs(s.norm() - 1.0) < 1e-10
        assert abs(energy(s) - e0) < 1e-9
        for k, w in s.sector_weights().items():
            assert abs(w - state.sector_weights()[k]) < 1e-12


def test_time_reversal():
    rng = np.random.default_rng(3)
    A = rng.normal(size=(120, 120))
    A = A + A.T
    v = rng.normal(size=120) + 1j * rng.normal(size=120)
    fwd = expm_krylov(lambda x: A @ x, v, 0.7)
    back = expm_krylov(lambda x: A @ x, fwd, -0.7)
    assert np.linalg.norm(back - v) < 1e-9 * np.linalg.norm(v)


@given(st.integers(0, 2**31 - 1), st.integers(2, 90), st.floats(-3.0, 3.0))
@settings(max_examples=25)
def test_krylov_matches_expm(seed, n, t):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    A = 0.5 * (A + A.conj().T)
    v = rng.normal(size=n) + 1j * rng.normal(size=n)
    ref = linalg.expm(-1j * A * t) @ v
    out = expm_krylov(lambda x: A @ x, v, t)
    assert np.linalg.norm(out - ref) < 1e-9 * np.linalg.norm(v)
    assert abs(np.linalg.norm(out) - np.linalg.norm(v)) < 1e-9 * np.linalg.norm(v)


def test_krylov_zero_vector_and_zero_time():
    A = np.diag([1.0, 2.0, 3.0])
    np.testing.assert_array_equal(expm_krylov(lambda x: A @ x, np.zeros(3, complex), 1.0), 0)
    v = np.array([1.0, 2.0, 3.0], dtype=complex)
    np.testing.assert_array_equal(expm_krylov(lambda x: A @ x, v, 0.0), v)


def test_krylov_step_underflow():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(80, 80))
    A = A + A.T
    with pytest.raises(KrylovError, match="underflow"):
        expm_krylov(lambda x: A @ x, rng.normal(size=80).astype(complex), 1.0, tol=0.0)


def test_diagonal_hamiltonian_phases(cfg_bell, params_bell):
    # without hopping each computational state only acquires a phase
    p = params_bell.with_(hop=np.zeros((2, 2)), hop_prime=np.zeros((1, 2, 2)))
    state = prepare_plus_product(2)
    t_ms = 1.3
    out = evolve(state, single_round(t_ms), cfg_bell, [t_ms], params_provider=lambda c: p)[0]
    t = t_ms / recoil_energy(cfg_bell).time_unit_ms
    for bits in [(0, 0), (0, 1), (1, 0), (1, 1)]:
        e = 2 * p.eps[0] + p.eps_prime[0, 0] + p.eps_prime[1, 0] + p.tilt[1]
        amp = out.amplitude(computational_mask(bits))
        assert amp == pytest.approx(0.5 * np.exp(-1j * e * t), abs=1e-12)


def test_zero_duration_schedule(cfg_bell):
    state = prepare_plus_product(2)
    out = evolve(state, single_round(0.0), cfg_bell, [0.0])[0]
    assert out.distance(state) == 0.0
    out = evolve(state, Schedule(), cfg_bell, [0.0])[0]
    assert out.distance(state) == 0.0


def test_plus_product_state():
    s = prepare_plus_product(4)
    assert s.norm() == pytest.approx(1.0, abs=1e-15)
    assert s.amplitude(computational_mask([1, 0, 1, 1])) == pytest.approx(0.25)
    assert s.amplitude(computational_mask([1, 0, 1, 1]) | 2) == 0.0
    assert sorted(s.sector_weights()) == [(0, 4), (1, 3), (2, 2), (3, 1), (4, 0)]
    with pytest.raises(ValueError):
        prepare_plus_product(1)


def test_snapshot_roundtrip(tmp_path):
    s = prepare_plus_product(2)
    write_snapshot(s, tmp_path / "psi.txt")
    data = np.loadtxt(tmp_path / "psi.txt", skiprows=1)
    assert data.shape == (4, 5)
    for row in data:
        assert s.amplitude(int(row[2])) == pytest.approx(row[3] + 1j * row[4])


def test_schedule_structure(cfg_bell):
    sch = shift_unit_cells(cfg_bell.with_(tilt_g=-2.0), 3.7, 4.0, method="flip_tilt")
    np.testing.assert_allclose(sch.boundaries_ms, [0.0, 3.7, 7.7])
    assert sch.total_ms == pytest.approx(7.7)
    cfgs = sch.resolved_configs(cfg_bell.with_(tilt_g=-2.0))
    assert cfgs[0].tilt_g == -2.0 and cfgs[1].tilt_g == 2.0
    with pytest.raises(ValueError):
        Segment(-1.0)
    with pytest.raises(ValueError):
        shift_unit_cells(cfg_bell, 3.7, method="rotate")


def test_shift_is_an_involution(cfg_bell):
    cfg = cfg_bell.with_(n_sites=4, tilt_g=-1.5)
    for method in ("theta", "flip_tilt"):
        once = shift_unit_cells(cfg, 1.0, method=method).resolved_configs(cfg)[1]
        twice = shift_unit_cells(once, 1.0, method=method).resolved_configs(once)[1]
        a, b = build_params(cfg), build_params(twice)
        np.testing.assert_allclose(a.onsite(), b.onsite(), atol=1e-12)
        np.testing.assert_allclose(a.hop_prime, b.hop_prime, atol=1e-12)


def test_theta_shift_translates_superlattice(cfg_bell):
    cfg = cfg_bell.with_(n_sites=4, V0=18.0, V0p=4.0, tilt_g=-3.0)
    shifted = shift_unit_cells(cfg, 1.0).resolved_configs(cfg)[1]
    a, b = build_params(cfg), build_params(shifted)
    np.testing.assert_allclose(b.eps_prime[:-1], a.eps_prime[1:], atol=1e-12)
    np.testing.assert_allclose(b.eps_prime, -a.eps_prime, atol=1e-12)
    # with the tilt, theta + pi maps the onsite energies one site over up to a constant
    d = b.onsite()[:-1] - a.onsite()[1:]
    np.testing.assert_allclose(d, d[0, 0], atol=1e-12)


def test_boundary_sample_belongs_to_earlier_segment(cfg_bell):
    sch = single_round(0.5).then(Segment(0.5, {"V0p": 0.0}))
    seen = [(t, seg) for t, seg, _ in iter_evolve(prepare_plus_product(2), sch, cfg_bell, [0.25, 0.5, 0.75, 1.0])]
    assert seen == [(0.25, 0), (0.5, 0), (0.75, 1), (1.0, 1)]


def test_segments_rebuild_hamiltonian(cfg_bell):
    # two halves with the same parameters equal one round
    state = prepare_plus_product(2)
    one = evolve(state, single_round(1.0), cfg_bell, [1.0])[0]
    two = evolve(state, single_round(0.4).then(Segment(0.6)), cfg_bell, [1.0])[0]
    assert one.distance(two) < 1e-10


def test_sample_time_validation(cfg_bell):
    with pytest.raises(ValueError):
        evolve(prepare_plus_product(2), single_round(1.0), cfg_bell, [0.5, 0.2])
    with pytest.raises(ValueError):
        evolve(prepare_plus_product(2), single_round(1.0), cfg_bell, [1.5])


def test_threaded_sectors_match_serial(cfg_bell):
    cfg = cfg_bell.with_(n_sites=4, V0=18.0, V0p=4.0, tilt_g=-3.7)
    state = prepare_plus_product(4)
    stats = {}
    a = evolve(state, single_round(0.3), cfg, [0.3], workers=1, stats=stats)[0]
    b = evolve(state, single_round(0.3), cfg, [0.3], workers=3)[0]
    assert a.distance(b) < 1e-13
    assert stats[0].steps > 0 and stats[0].max_error <= 1e-13


@given(st.integers(2, 40), st.floats(0.01, 50.0), st.integers(0, 2**31 - 1))
def test_tridiagonal_propagator_unit_norm(m, dt, seed):
    # nearly degenerate Ritz values are where MRRR eigenvectors lose orthogonality
    rng = np.random.default_rng(seed)
    alpha = np.round(rng.normal(size=m), 1) * 10.0
    beta = rng.uniform(1e-6, 1e-2, size=m - 1)
    c = _tridiag_expm_e1(alpha, beta, dt)
    assert abs(np.linalg.norm(c) - 1.0) < 1e-14
