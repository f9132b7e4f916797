"""Fermionic occupation basis blocked by (N_up, N_down) and sparse operators on it.

Mode ordering is site-major: ``mode = site * 2 * n_orb + spin * n_orb + orbital``
with spin 0 = up, 1 = down and 0-based orbital.  A basis state is a bitmask
over modes; c^dag_m picks up ``(-1)^(number of occupied modes below m)``.
With this ordering ``c^dag_{0,s0} c^dag_{1,s1} ... |vac>`` has sign +1, so the
computational basis states carry no extra sign.
"""
from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .kernels import get_kernels
from .lattice_params import HubbardParams

UP, DOWN = 0, 1


@dataclass(frozen=True)
class ModeIndex:
    site: int
    spin: int       # UP or DOWN
    orbital: int    # 1-based

    def linear(self, n_orbitals: int = 2) -> int:
        return mode_index(self.site, self.spin, self.orbital, n_orbitals)

    @classmethod
    def from_linear(cls, m: int, n_orbitals: int = 2) -> "ModeIndex":
        site, rest = divmod(m, 2 * n_orbitals)
        spin, orb = divmod(rest, n_orbitals)
        return cls(site, spin, orb + 1)


def mode_index(site: int, spin: int, orbital: int, n_orbitals: int = 2) -> int:
    """Linear mode index; ``orbital`` is 1-based."""
    if not 1 <= orbital <= n_orbitals:
        raise ValueError(f"orbital must be in 1..{n_orbitals}, got {orbital}")
    if spin not in (UP, DOWN):
        raise ValueError(f"spin must be 0 (up) or 1 (down), got {spin}")
    return site * 2 * n_orbitals + spin * n_orbitals + orbital - 1


def _m(site, spin, orb0, n_orb):
    return site * 2 * n_orb + spin * n_orb + orb0


@dataclass(frozen=True, eq=False)
class SectorBasis:
    n_sites: int
    n_orbitals: int
    n_up: int
    n_down: int
    states: np.ndarray      # sorted int64 bitmasks

    @property
    def key(self) -> tuple[int, int]:
        return (self.n_up, self.n_down)

    @property
    def size(self) -> int:
        return self.states.size

    @property
    def n_modes(self) -> int:
        return 2 * self.n_orbitals * self.n_sites

    def index(self, masks) -> np.ndarray:
        """Positions of ``masks`` in the basis, -1 where absent (binary search)."""
        return get_kernels().lookup(self.states, np.atleast_1d(np.asarray(masks, dtype=np.int64)))

    def occupation(self, mode: int) -> np.ndarray:
        return ((self.states >> mode) & 1).astype(np.int8)


def _spin_masks(n_sites: int, n_orbitals: int, spin: int, count: int) -> np.ndarray:
    modes = [_m(i, spin, a, n_orbitals) for i in range(n_sites) for a in range(n_orbitals)]
    return np.array([sum(1 << m for m in c) for c in itertools.combinations(modes, count)],
                    dtype=np.int64)


@functools.lru_cache(maxsize=64)
def build_sector(n_sites: int, n_up: int, n_down: int, n_orbitals: int = 2) -> SectorBasis:
    n_spin_modes = n_orbitals * n_sites
    if not (0 <= n_up <= n_spin_modes and 0 <= n_down <= n_spin_modes):
        raise ValueError(f"particle numbers ({n_up}, {n_down}) outside 0..{n_spin_modes}")
    up = _spin_masks(n_sites, n_orbitals, UP, n_up)
    down = _spin_masks(n_sites, n_orbitals, DOWN, n_down)
    states = np.sort((up[:, None] | down[None, :]).ravel())
    states.setflags(write=False)
    return SectorBasis(n_sites, n_orbitals, n_up, n_down, states)


@dataclass(frozen=True, eq=False)
class SparseOperator:
    """Operator restricted to one sector, stored as real CSR."""

    matrix: sparse.csr_matrix
    sector: SectorBasis
    hermitian: bool = False

    @property
    def shape(self):
        return self.matrix.shape

    def matvec(self, x: np.ndarray, out: np.ndarray | None = None, backend: str | None = None):
        x = np.ascontiguousarray(x, dtype=np.complex128)
        if out is None:
            out = np.empty(self.shape[0], dtype=np.complex128)
        m = self.matrix
        return get_kernels(backend).csr_matvec(m.indptr, m.indices, m.data, x, out)

    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def hermiticity_error(self) -> float:
        d = self.matrix - self.matrix.T.conj()
        return float(abs(d).max()) if d.nnz else 0.0


def _to_csr(rows, cols, vals, n) -> sparse.csr_matrix:
    m = sparse.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    m.sum_duplicates()
    m.eliminate_zeros()
    m.sort_indices()
    m.indptr = m.indptr.astype(np.int32)
    m.indices = m.indices.astype(np.int32)
    return m


def _apply_hop(masks: np.ndarray, p: int, q: int):
    """c^dag_p c_q on each mask: (valid, new masks, signs)."""
    lo, hi = min(p, q), max(p, q)
    between = np.int64((1 << hi) - (1 << (lo + 1)))
    valid = (((masks >> q) & 1) == 1) & (((masks >> p) & 1) == 0)
    new = masks ^ np.int64((1 << q) | (1 << p))
    sign = 1.0 - 2.0 * (np.bitwise_count(masks & between) & 1)
    return valid, new, sign


def one_body_terms(p: HubbardParams, drop_tol: float = 1e-13):
    """(create, annihilate, amplitude) lists of all hopping terms, both directions."""
    n_orb = p.n_orbitals
    create, annihilate, amps = [], [], []

    def add(m1, m2, t):
        if abs(t) > drop_tol:
            create.extend((m1, m2))
            annihilate.extend((m2, m1))
            amps.extend((t, t))

    for b in range(p.n_sites - 1):
        for s in (UP, DOWN):
            for a in range(n_orb):
                add(_m(b, s, a, n_orb), _m(b + 1, s, a, n_orb), p.hop[a, a])
            for a in range(n_orb):
                for c in range(n_orb):
                    add(_m(b, s, a, n_orb), _m(b + 1, s, c, n_orb), p.hop_prime[b, a, c])
    return (np.array(create, dtype=np.int64), np.array(annihilate, dtype=np.int64),
            np.array(amps, dtype=np.float64))


def hamiltonian_diagonal(p: HubbardParams, sector: SectorBasis) -> np.ndarray:
    n_orb = p.n_orbitals
    onsite = p.onsite()
    diag = np.zeros(sector.size)
    for i in range(p.n_sites):
        for a in range(n_orb):
            n_up = sector.occupation(_m(i, UP, a, n_orb))
            n_dn = sector.occupation(_m(i, DOWN, a, n_orb))
            diag += onsite[i, a] * (n_up + n_dn)
        for a in range(n_orb):
            n_up = sector.occupation(_m(i, UP, a, n_orb))
            for b in range(n_orb):
                diag += p.U[a, b] * n_up * sector.occupation(_m(i, DOWN, b, n_orb))
    return diag


def _exchange_coo(p: HubbardParams, sector: SectorBasis):
    """U_ab c^dag_{up a} c_{up b} c^dag_{dn b} c_{dn a} over ordered a != b (already Hermitian)."""
    n_orb = p.n_orbitals
    rows, cols, vals = [], [], []
    cols0 = np.arange(sector.size)
    for i in range(p.n_sites):
        for a in range(n_orb):
            for b in range(n_orb):
                if a == b or p.U[a, b] == 0.0:
                    continue
                ok1, s1, sg1 = _apply_hop(sector.states, _m(i, DOWN, b, n_orb), _m(i, DOWN, a, n_orb))
                ok2, s2, sg2 = _apply_hop(s1, _m(i, UP, a, n_orb), _m(i, UP, b, n_orb))
                ok = ok1 & ok2
                r = sector.index(s2[ok])
                keep = r >= 0
                rows.append(r[keep])
                cols.append(cols0[ok][keep])
                vals.append(p.U[a, b] * (sg1 * sg2)[ok][keep])
    return rows, cols, vals


def assemble_hamiltonian(p: HubbardParams, sector: SectorBasis, include_exchange: bool = False,
                         backend: str | None = None, drop_tol: float = 1e-13) -> SparseOperator:
    """H + H' + tilt restricted to ``sector``.

    The interaction is ``sum_ab U_ab n_{up a} n_{dn b}`` per site.  The
    spin-exchange term is optional: with it the interaction is SU(2) invariant
    and the all-|+> product state cannot become entangled.
    """
    if p.n_sites != sector.n_sites or p.n_orbitals != sector.n_orbitals:
        raise ValueError(f"parameters for {p.n_sites} sites x {p.n_orbitals} orbitals do not match "
                         f"sector with {sector.n_sites} sites x {sector.n_orbitals} orbitals")
    n = sector.size
    create, annihilate, amps = one_body_terms(p, drop_tol)
    r, c, v = get_kernels(backend).hopping_coo(sector.states, create, annihilate, amps)
    idx = np.arange(n)
    rows, cols, vals = [r, idx], [c, idx], [v, hamiltonian_diagonal(p, sector)]
    if include_exchange:
        er, ec, ev = _exchange_coo(p, sector)
        rows += er
        cols += ec
        vals += ev
    m = _to_csr(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), n)
    return SparseOperator(m, sector, hermitian=True)


OBSERVABLES = ("double_occupancy_sites", "second_orbital_count", "postselection_projector")


def observable_diagonal(kind: str, sector: SectorBasis) -> np.ndarray:
    n_orb = sector.n_orbitals
    if kind == "double_occupancy_sites":
        out = np.zeros(sector.size)
        for i in range(sector.n_sites):
            occ = sum(sector.occupation(_m(i, s, a, n_orb)).astype(int)
                      for s in (UP, DOWN) for a in range(n_orb))
            out += occ >= 2
        return out
    if kind == "second_orbital_count":
        return sum(sector.occupation(_m(i, s, a, n_orb)).astype(float)
                   for i in range(sector.n_sites) for s in (UP, DOWN) for a in range(1, n_orb))
    if kind == "postselection_projector":
        d = observable_diagonal("double_occupancy_sites", sector)
        n2 = observable_diagonal("second_orbital_count", sector)
        return ((d == 0) & (n2 == 0)).astype(float)
    raise ValueError(f"unknown observable {kind!r}; expected one of {OBSERVABLES}")


def assemble_diagonal_observable(kind: str, sector: SectorBasis) -> SparseOperator:
    d = observable_diagonal(kind, sector)
    m = _to_csr(np.arange(sector.size), np.arange(sector.size), d, sector.size)
    return SparseOperator(m, sector, hermitian=True)


def creation_operator(sector_from: SectorBasis, sector_to: SectorBasis, mode: int) -> sparse.csr_matrix:
    """c^dag_mode mapping ``sector_from`` into ``sector_to`` (for algebra checks)."""
    s = sector_from.states
    valid = ((s >> mode) & 1) == 0
    sign = 1.0 - 2.0 * (np.bitwise_count(s & np.int64((1 << mode) - 1)) & 1)
    rows = sector_to.index(s[valid] | np.int64(1 << mode))
    keep = rows >= 0
    cols = np.flatnonzero(valid)[keep]
    return sparse.csr_matrix((sign[valid][keep], (rows[keep], cols)),
                             shape=(sector_to.size, sector_from.size))
