"""Compare the compiled and pure-Python kernels on the largest sectors.

    python benchmarks/bench_kernels.py [--sites 6] [--repeat 5]

Prints one row per (kernel, backend) with the best wall time and the
speed-up of the compiled kernel.
"""
import argparse
import time

import numpy as np

from orbitalcluster.fock import assemble_hamiltonian, build_sector, one_body_terms
from orbitalcluster.kernels import get_kernels
from orbitalcluster.lattice_params import build_params
from orbitalcluster.units import PhysicalConfig


def best_of(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--sites", type=int, default=6)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    n = args.sites
    p = build_params(PhysicalConfig(V0=18.0, V0p=4.0, n_sites=n, tilt_g=-3.7))
    sec = build_sector(n, n // 2, n // 2)
    create, annihilate, amps = one_body_terms(p)
    H = assemble_hamiltonian(p, sec).matrix
    rng = np.random.default_rng(0)
    x = rng.normal(size=sec.size) + 1j * rng.normal(size=sec.size)
    keys = rng.choice(sec.states, sec.size)
    print(f"sector ({n // 2},{n // 2}) on {n} sites: dim {sec.size}, nnz {H.nnz}")

    try:
        cy = get_kernels("cython")
    except ImportError:
        print("compiled kernels not built; only the Python backend is timed")
        cy = None
    py = get_kernels("python")
    cases = {
        "hopping_coo": lambda k: k.hopping_coo(sec.states, create, annihilate, amps),
        "lookup": lambda k: k.lookup(sec.states, keys),
        "csr_matvec": lambda k: k.csr_matvec(H.indptr, H.indices, H.data, x,
                                             np.empty(sec.size, dtype=np.complex128)),
    }
    print(f"{'kernel':<12} {'python_s':>10} {'cython_s':>10} {'speedup':>8}")
    for name, fn in cases.items():
        tp = best_of(lambda: fn(py), args.repeat)
        if cy is None:
            print(f"{name:<12} {tp:10.4f} {'-':>10} {'-':>8}")
            continue
        tc = best_of(lambda: fn(cy), args.repeat)
        print(f"{name:<12} {tp:10.4f} {tc:10.4f} {tp / tc:8.1f}")
    # scipy's CSR product as an external reference point
    print(f"{'scipy @':<12} {best_of(lambda: H @ x, args.repeat):10.4f}")


if __name__ == "__main__":
    main()
