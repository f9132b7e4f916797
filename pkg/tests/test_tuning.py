import numpy as np
import pytest

from orbitalcluster.dynamics import evolve, prepare_plus_product, single_round
from orbitalcluster.lattice_params import _channels, build_params, perturbative_ising
from orbitalcluster.observables import build_target, fidelity
from orbitalcluster.tuning import cell_dynamics, step_tilt, tilt_resonance, tune_pairwise
from orbitalcluster.units import PhysicalConfig

CFG = PhysicalConfig(V0=18.0, V0p=4.0, n_sites=4)


@pytest.fixture(scope="module")
def working_point():
    return tune_pairwise(CFG)


def test_step_tilt_levels_cells():
    g = step_tilt(CFG)
    on = build_params(CFG.with_(tilt_g=g, n_sites=6)).onsite()
    assert on[0, 0] == pytest.approx(on[1, 0], abs=1e-12)
    assert on[2, 0] == pytest.approx(on[3, 0], abs=1e-12)
    # neighbouring cells sit on different steps
    assert abs(on[2, 0] - on[1, 0]) > 1.0


def test_working_point(working_point):
    wp = working_point
    cfg = wp.config(CFG)
    assert wp.knob == "aS"
    assert wp.tilt_g == pytest.approx(step_tilt(CFG))
    assert wp.scattering_len_aS == pytest.approx(wp.resonance * (1.0 - wp.detuning / (-build_params(
        CFG.with_(n_sites=2, tilt_g=wp.tilt_g, scattering_len_aS=wp.resonance)).U[0, 1])), rel=1e-12)
    d = perturbative_ising(build_params(cfg))
    assert d.resonance_residual[0] == pytest.approx(wp.detuning, abs=1e-9)
    # inter-cell bond far from resonance
    p = build_params(cfg)
    assert abs(d.resonance_residual[1]) > 10 * abs(p.hop_prime[0, 0, 1])
    assert wp.inter_cell_residual > 10 * abs(p.hop_prime[0, 0, 1])
    assert wp.F > 0.999 and wp.F <= wp.F_PS <= 1.0
    assert 3.0 < wp.round_ms < 8.0


def test_cell_dynamics_matches_krylov(working_point):
    cfg = working_point.config(CFG).with_(n_sites=2)
    t = working_point.round_ms
    tr = cell_dynamics(cfg, [0.0, t])
    s = evolve(prepare_plus_product(2), single_round(t), cfg, [t])[0]
    assert tr.F[1] == pytest.approx(fidelity(s, build_target("bell_pairs", 2)), abs=1e-9)
    assert tr.F[0] == pytest.approx(0.5, abs=1e-12)


def test_tilt_knob():
    wp = tune_pairwise(CFG, knob="g")
    assert wp.scattering_len_aS == CFG.scattering_len_aS
    assert wp.tilt_g == pytest.approx(tilt_resonance(CFG) - wp.detuning)
    assert wp.F > 0.999


def test_unknown_knob():
    with pytest.raises(ValueError):
        tune_pairwise(CFG, knob="V0")
