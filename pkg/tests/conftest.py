import itertools

import numpy as np
import pytest
from hypothesis import settings

from orbitalcluster.lattice_params import build_params
from orbitalcluster.units import PhysicalConfig

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")

# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def cfg_bell():
    return PhysicalConfig(V0=10.0, V0p=6.2, n_sites=2)


@pytest.fixture(scope="session")
def params_bell(cfg_bell):
    return build_params(cfg_bell)


@pytest.fixture(scope="session")
def cfg_shallow_sl():
    return PhysicalConfig(V0=15.0, V0p=4.0, n_sites=4)


@pytest.fixture(scope="session")
def params_shallow_sl(cfg_shallow_sl):
    return build_params(cfg_shallow_sl)


def jw_annihilators(n_modes):
    """Dense c_m on the full Fock space; basis index bit m is the occupation of mode m.

    Built from Kronecker products, independently of the bitmask code.
    """
    a = np.array([[0.0, 1.0], [0.0, 0.0]])
    z = np.diag([1.0, -1.0])
    eye = np.eye(2)
    ops = []
    for m in range(n_modes):
        # kron order runs from the highest mode down to mode 0
        factors = [eye] * (n_modes - 1 - m) + [a] + [z] * m
        op = factors[0]
        for f in factors[1:]:
            op = np.kron(op, f)
        ops.append(op)
    return ops


def dense_hubbard(p, include_exchange=False):
    """Full-Fock-space H for HubbardParams ``p`` from explicit operator algebra."""
    n_orb = p.n_orbitals
    n_modes = 2 * n_orb * p.n_sites
    c = jw_annihilators(n_modes)
    cd = [op.T for op in c]
    mode = lambda i, s, a: i * 2 * n_orb + s * n_orb + a
    H = np.zeros((2**n_modes, 2**n_modes))
    onsite = p.onsite()
    for i in range(p.n_sites):
        for s in (0, 1):
            for a in range(n_orb):
                H += onsite[i, a] * cd[mode(i, s, a)] @ c[mode(i, s, a)]
        for a, b in itertools.product(range(n_orb), repeat=2):
            H += p.U[a, b] * (cd[mode(i, 0, a)] @ c[mode(i, 0, a)]) @ (cd[mode(i, 1, b)] @ c[mode(i, 1, b)])
            if include_exchange and a != b:
                H += p.U[a, b] * cd[mode(i, 0, a)] @ c[mode(i, 0, b)] @ cd[mode(i, 1, b)] @ c[mode(i, 1, a)]
    for bnd in range(p.n_sites - 1):
        for s in (0, 1):
            for a, b in itertools.product(range(n_orb), repeat=2):
                t = p.hop_prime[bnd, a, b] + (p.hop[a, a] if a == b else 0.0)
                hop = t * cd[mode(bnd, s, a)] @ c[mode(bnd + 1, s, b)]
                H += hop + hop.T
    return H
