"""Qubit embedding, graph-state targets, fidelities and trace bookkeeping.

Qubit i is the single atom on site i in the lowest orbital: spin up is |0>,
spin down is |1>.  Computational basis index ``x`` lists qubit 0 as the most
significant bit.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np

from .dynamics import ManyBodyState, computational_mask
from .fock import SparseOperator, build_sector, observable_diagonal


class PostSelectionError(RuntimeError):
    pass


def _bits(n: int) -> np.ndarray:
    """(2^n, n) table of qubit values, qubit 0 most significant."""
    x = np.arange(2**n)[:, None]
    return (x >> (n - 1 - np.arange(n))[None, :]) & 1


@dataclass(frozen=True, eq=False)
class QubitEmbedding:
    n_sites: int
    n_orbitals: int
    masks: np.ndarray        # (2^n,) occupation bitmask per computational state
    sector_of: np.ndarray    # (2^n,) number of down spins, i.e. the sector (n - k, k)
    position: np.ndarray     # (2^n,) index inside that sector's basis

    @property
    def dim(self) -> int:
        return self.masks.size

    def amplitudes(self, state: ManyBodyState) -> np.ndarray:
        """Projection of ``state`` onto the computational subspace, length 2^n."""
        out = np.zeros(self.dim, dtype=np.complex128)
        n = self.n_sites
        for k in range(n + 1):
            sel = self.sector_of == k
            v = state.vectors.get((n - k, k))
            if v is not None:
                out[sel] = v[self.position[sel]]
        return out

    def embed(self, amps: np.ndarray) -> ManyBodyState:
        """Many-body state whose computational amplitudes are ``amps``."""
        n = self.n_sites
        sectors, vectors = {}, {}
        for k in range(n + 1):
            sec = build_sector(n, n - k, k, self.n_orbitals)
            sectors[(n - k, k)] = sec
            v = np.zeros(sec.size, dtype=np.complex128)
            sel = self.sector_of == k
            v[self.position[sel]] = amps[sel]
            vectors[(n - k, k)] = v
        return ManyBodyState(n, self.n_orbitals, sectors, vectors)


@functools.lru_cache(maxsize=16)
def qubit_embedding(n_sites: int, n_orbitals: int = 2) -> QubitEmbedding:
    bits = _bits(n_sites)
    masks = np.array([computational_mask(b, n_orbitals) for b in bits], dtype=np.int64)
    downs = bits.sum(axis=1)
    pos = np.empty(masks.size, dtype=np.int64)
    for k in range(n_sites + 1):
        sel = downs == k
        pos[sel] = build_sector(n_sites, n_sites - k, k, n_orbitals).index(masks[sel])
    if np.any(pos < 0) or np.unique(masks).size != masks.size:
        raise RuntimeError("computational states missing from their sectors")
    return QubitEmbedding(n_sites, n_orbitals, masks, downs, pos)


# --------------------------------------------------------------------------
# targets


@dataclass(frozen=True, eq=False)
class TargetState:
    n_qubits: int
    kind: str
    edges: tuple             # graph edges (i, j), i < j
    amplitudes: np.ndarray   # (2^n,)

    def stabilizer_expectations(self) -> np.ndarray:
        """<K_i> for K_i = X_i prod_{j ~ i} Z_j; all +1 for a graph state."""
        n = self.n_qubits
        bits = _bits(n)
        idx = np.arange(2**n)
        out = np.empty(n)
        for i in range(n):
            nbrs = [j for e in self.edges for j in e if i in e and j != i]
            flipped = idx ^ (1 << (n - 1 - i))
            z = (-1.0) ** bits[:, nbrs].sum(axis=1) if nbrs else np.ones(idx.size)
            psi = self.amplitudes
            out[i] = float(np.vdot(psi, z * psi[flipped]).real)
        return out


def graph_state(n: int, edges) -> np.ndarray:
    bits = _bits(n)
    phase = np.zeros(2**n, dtype=int)
    for i, j in edges:
        phase += bits[:, i] * bits[:, j]
    return (1.0 - 2.0 * (phase % 2)) * 2.0 ** (-n / 2)


def build_target(kind: str, n: int, pairs=None) -> TargetState:
    """``bell_pairs`` (CZ on disjoint pairs, default (0,1),(2,3),...) or ``chain_cluster``."""
    if kind == "bell_pairs":
        if pairs is None:
            if n % 2:
                raise ValueError("default pairing needs an even number of qubits")
            pairs = [(i, i + 1) for i in range(0, n, 2)]
        edges = tuple(tuple(sorted(map(int, e))) for e in pairs)
        used = [q for e in edges for q in e]
        if len(set(used)) != len(used):
            raise ValueError(f"pairs overlap: {list(edges)}")
        if any(q < 0 or q >= n for q in used) or any(i == j for i, j in edges):
            raise ValueError(f"invalid pairs for {n} qubits: {list(edges)}")
    elif kind == "chain_cluster":
        edges = tuple((i, i + 1) for i in range(n - 1))
    else:
        raise ValueError(f"unknown target {kind!r}; expected bell_pairs or chain_cluster")
    return TargetState(n, kind, edges, graph_state(n, edges))


# --------------------------------------------------------------------------
# fidelities


def optimize_z_phases_batch(target: np.ndarray, amps: np.ndarray, n: int, tol: float = 1e-10,
                            max_sweeps: int = 500, n_starts: int = 4):
    """Row-wise max over phases phi of |sum_x conj(t_x) a_x exp(i phi . bits(x))|^2.

    Coordinate ascent: with the other phases fixed the objective is
    |A + B exp(i phi_k)|^2, maximized at phi_k = arg A - arg B.
    Starts at zero phases plus a few fixed pseudo-random starts; ``amps`` is
    (n_rows, 2^n).  Returns the objective and the phases per row.
    """
    bits = _bits(n).astype(float)
    on = bits.astype(bool)
    x = np.conj(target)[None, :] * np.atleast_2d(amps)
    rows = x.shape[0]
    rng = np.random.default_rng(12345)
    starts = [np.zeros(n)] + [rng.uniform(0, 2 * np.pi, n) for _ in range(n_starts - 1)]
    best_val = np.full(rows, -1.0)
    best_phi = np.zeros((rows, n))
    for start in starts:
        phi = np.tile(start, (rows, 1))
        prev = np.full(rows, -1.0)
        for _ in range(max_sweeps):
            for k in range(n):
                w = x * np.exp(1j * (phi @ bits.T))
                A = w[:, ~on[:, k]].sum(axis=1)
                B = w[:, on[:, k]].sum(axis=1) * np.exp(-1j * phi[:, k])
                ok = (np.abs(A) > 0) & (np.abs(B) > 0)
                phi[ok, k] = np.angle(A[ok]) - np.angle(B[ok])
            val = np.abs((x * np.exp(1j * (phi @ bits.T))).sum(axis=1)) ** 2
            if np.all(val - prev <= tol):
                break
            prev = val
        better = val > best_val
        best_val[better] = val[better]
        best_phi[better] = phi[better]
    return best_val, np.mod(best_phi, 2 * np.pi)


def optimize_z_phases(target: np.ndarray, amps: np.ndarray, n: int, **kwargs):
    """Single-state version of :func:`optimize_z_phases_batch`."""
    val, phi = optimize_z_phases_batch(target, np.asarray(amps)[None, :], n, **kwargs)
    return float(val[0]), phi[0]


def overlap_fidelity(target: TargetState, amps: np.ndarray, phase_frame: str = "optimized") -> float:
    if phase_frame == "raw":
        return float(abs(np.vdot(target.amplitudes, amps)) ** 2)
    if phase_frame == "optimized":
        raw = float(abs(np.vdot(target.amplitudes, amps)) ** 2)
        return max(raw, optimize_z_phases(target.amplitudes, amps, target.n_qubits)[0])
    raise ValueError(f"unknown phase frame {phase_frame!r}; expected raw or optimized")


def fidelity(state: ManyBodyState, target: TargetState, phase_frame: str = "optimized") -> float:
    if target.n_qubits != state.n_sites:
        raise ValueError("target and state sizes differ")
    amps = qubit_embedding(state.n_sites, state.n_orbitals).amplitudes(state)
    return min(1.0, overlap_fidelity(target, amps, phase_frame))


def post_selected_fidelity(state: ManyBodyState, target: TargetState,
                           phase_frame: str = "optimized"):
    """(F_PS, P_suc) for the projector onto no doublons and an empty second orbital.

    With one atom per site on average that subspace is exactly the computational one.
    """
    emb = qubit_embedding(state.n_sites, state.n_orbitals)
    amps = emb.amplitudes(state)
    p_suc = float(np.vdot(amps, amps).real)
    if p_suc < 1e-14:
        raise PostSelectionError(f"post-selection annihilated the state (P_suc = {p_suc:.3e})")
    f = overlap_fidelity(target, amps, phase_frame)
    return min(1.0, f / p_suc), p_suc


def expectation(state: ManyBodyState, observable) -> float:
    """<psi|O|psi>; ``observable`` maps sector keys to SparseOperator or to diagonals."""
    total = 0.0
    for key, v in state.vectors.items():
        op = observable[key]
        if isinstance(op, SparseOperator):
            total += float(np.vdot(v, op.matvec(v)).real)
        else:
            total += float(np.dot(np.abs(v) ** 2, op))
    return total


def diagonal_observables(state: ManyBodyState, kind: str) -> dict:
    return {k: observable_diagonal(kind, s) for k, s in state.sectors.items()}


# --------------------------------------------------------------------------
# traces

TRACE_COLUMNS = ("tau_ms", "F", "F_raw", "F_PS", "P_suc", "D", "N_2nd")


@dataclass
class ObservableTrace:
    times: np.ndarray
    F: np.ndarray
    F_raw: np.ndarray
    F_PS: np.ndarray
    P_suc: np.ndarray
    D: np.ndarray
    N_2nd: np.ndarray
    sector_weights: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))
    sector_keys: tuple = ()
    norm: np.ndarray = field(default_factory=lambda: np.empty(0))
    target_kind: list = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return self.times if name == "tau_ms" else getattr(self, name)

    def table(self) -> np.ndarray:
        return np.column_stack([self.column(c) for c in TRACE_COLUMNS])

    def write(self, path) -> None:
        np.savetxt(path, self.table(), header=" ".join(TRACE_COLUMNS), comments="", fmt="%.12e")

    def peak(self, column: str = "F", window=None) -> int:
        """Index of the maximum of ``column`` within the time window [lo, hi]."""
        vals = self.column(column)
        mask = np.ones(vals.size, dtype=bool)
        if window is not None:
            mask = (self.times >= window[0] - 1e-12) & (self.times <= window[1] + 1e-12)
        if not mask.any():
            raise ValueError(f"no samples inside window {window}")
        return int(np.flatnonzero(mask)[np.argmax(vals[mask])])


def rescale_per_cell(trace: ObservableTrace, n: int) -> ObservableTrace:
    """Pointwise power 2/n of F, F_raw, F_PS and P_suc."""
    if n < 2 or n % 2:
        raise ValueError(f"n must be even and >= 2, got {n}")
    e = 2.0 / n
    return ObservableTrace(trace.times.copy(), trace.F**e, trace.F_raw**e, trace.F_PS**e,
                           trace.P_suc**e, trace.D.copy(), trace.N_2nd.copy(),
                           trace.sector_weights.copy(), trace.sector_keys, trace.norm.copy(),
                           list(trace.target_kind))


class TraceRecorder:
    """Accumulates observables from a stream of snapshots.

    ``target`` is either one TargetState or a callable ``segment_index -> TargetState``.
    """

    def __init__(self, template: ManyBodyState, target, phase_frame: str = "optimized"):
        self.keys = tuple(template.keys())
        self.target = target
        self.phase_frame = phase_frame
        self.emb = qubit_embedding(template.n_sites, template.n_orbitals)
        self.d_diag = diagonal_observables(template, "double_occupancy_sites")
        self.n2_diag = diagonal_observables(template, "second_orbital_count")
        self.rows = []
        self.weights = []
        self.kinds = []

    def target_for(self, segment: int) -> TargetState:
        return self.target(segment) if callable(self.target) else self.target

    def record(self, t_ms: float, state: ManyBodyState, segment: int = 0) -> None:
        target = self.target_for(segment)
        amps = self.emb.amplitudes(state)
        p_suc = float(np.vdot(amps, amps).real)
        f_raw = float(abs(np.vdot(target.amplitudes, amps)) ** 2)
        f_opt = max(f_raw, optimize_z_phases(target.amplitudes, amps, target.n_qubits)[0]) \
            if self.phase_frame == "optimized" else f_raw
        f_ps = f_opt / p_suc if p_suc >= 1e-14 else np.nan
        w = [float(np.vdot(state.vectors[k], state.vectors[k]).real) for k in self.keys]
        d = expectation(state, self.d_diag)
        n2 = expectation(state, self.n2_diag)
        self.rows.append((t_ms, min(f_opt, 1.0), min(f_raw, 1.0), min(f_ps, 1.0), p_suc, d, n2,
                          float(np.sqrt(sum(w)))))
        self.weights.append(w)
        self.kinds.append(target.kind)

    def trace(self) -> ObservableTrace:
        a = np.array(self.rows, dtype=float).reshape(-1, 8)
        return ObservableTrace(a[:, 0], a[:, 1], a[:, 2], a[:, 3], a[:, 4], a[:, 5], a[:, 6],
                               np.array(self.weights).reshape(len(self.rows), len(self.keys)),
                               self.keys, a[:, 7], list(self.kinds))
