"""Initial state, schedules and Krylov time evolution.

Times are in milliseconds at the interface and in units of hbar / E_r inside
the propagator.  Each (N_up, N_down) sector evolves independently.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np
from scipy import linalg

from .fock import UP, DOWN, SectorBasis, SparseOperator, assemble_hamiltonian, build_sector
from .lattice_params import HubbardParams, Numerics, build_params
from .units import PhysicalConfig, recoil_energy


class KrylovError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# states


@dataclass
class ManyBodyState:
    n_sites: int
    n_orbitals: int
    sectors: dict            # (n_up, n_down) -> SectorBasis
    vectors: dict            # (n_up, n_down) -> complex ndarray

    def keys(self):
        return sorted(self.vectors)

    def norm(self) -> float:
        return math.sqrt(sum(float(np.vdot(v, v).real) for v in self.vectors.values()))

    def sector_weights(self) -> dict:
        return {k: float(np.vdot(v, v).real) for k, v in sorted(self.vectors.items())}

    def copy(self) -> "ManyBodyState":
        return ManyBodyState(self.n_sites, self.n_orbitals, dict(self.sectors),
                             {k: v.copy() for k, v in self.vectors.items()})

    def amplitude(self, mask: int) -> complex:
        """Amplitude of one occupation bitmask (0 if absent)."""
        n_up = n_down = 0
        for m in range(2 * self.n_orbitals * self.n_sites):
            if (mask >> m) & 1:
                if (m // self.n_orbitals) % 2 == UP:
                    n_up += 1
                else:
                    n_down += 1
        v = self.vectors.get((n_up, n_down))
        if v is None:
            return 0.0
        j = self.sectors[(n_up, n_down)].index(mask)[0]
        return complex(v[j]) if j >= 0 else 0.0

    def distance(self, other: "ManyBodyState") -> float:
        return math.sqrt(sum(float(np.vdot(v - other.vectors[k], v - other.vectors[k]).real)
                             for k, v in self.vectors.items()))


def computational_mask(bits, n_orbitals: int = 2) -> int:
    """Bitmask of the qubit basis state ``bits`` (0 = up, 1 = down, lowest orbital)."""
    return sum(1 << (i * 2 * n_orbitals + b * n_orbitals) for i, b in enumerate(bits))


def prepare_plus_product(n_sites: int, n_orbitals: int = 2) -> ManyBodyState:
    """prod_i (c^dag_{i up 1} + c^dag_{i dn 1}) / sqrt(2) |vac>, one atom per site."""
    if n_sites < 2:
        raise ValueError(f"n_sites must be >= 2, got {n_sites}")
    amp = 2.0 ** (-n_sites / 2)
    sectors, vectors = {}, {}
    for n_down in range(n_sites + 1):
        key = (n_sites - n_down, n_down)
        sec = build_sector(n_sites, *key, n_orbitals)
        sectors[key] = sec
        vectors[key] = np.zeros(sec.size, dtype=np.complex128)
    for idx in range(2**n_sites):
        bits = [(idx >> (n_sites - 1 - i)) & 1 for i in range(n_sites)]
        key = (n_sites - sum(bits), sum(bits))
        j = sectors[key].index(computational_mask(bits, n_orbitals))[0]
        vectors[key][j] = amp
    return ManyBodyState(n_sites, n_orbitals, sectors, vectors)


def write_snapshot(state: ManyBodyState, path, cutoff: float = 0.0) -> None:
    """One row per stored amplitude: n_up n_down bitmask re im."""
    rows = []
    for key in state.keys():
        v = state.vectors[key]
        keep = np.abs(v) > cutoff
        states = state.sectors[key].states[keep]
        rows.append(np.column_stack([np.full(states.size, key[0]), np.full(states.size, key[1]),
                                     states, v[keep].real, v[keep].imag]))
    data = np.vstack(rows) if rows else np.empty((0, 5))
    np.savetxt(path, data, header="n_up n_down bitmask re im", comments="",
               fmt=["%d", "%d", "%d", "%.17e", "%.17e"])


# --------------------------------------------------------------------------
# schedules


@dataclass(frozen=True)
class Segment:
    duration_ms: float
    changes: dict = field(default_factory=dict)   # PhysicalConfig field overrides
    label: str = ""

    def __post_init__(self):
        if not (self.duration_ms >= 0 and math.isfinite(self.duration_ms)):
            raise ValueError(f"segment duration must be finite and >= 0, got {self.duration_ms}")


@dataclass(frozen=True)
class Schedule:
    segments: tuple = ()

    @property
    def total_ms(self) -> float:
        return float(sum(s.duration_ms for s in self.segments))

    @property
    def boundaries_ms(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum([s.duration_ms for s in self.segments])])

    def resolved_configs(self, cfg: PhysicalConfig) -> list:
        return [cfg.with_(**s.changes) for s in self.segments]

    def then(self, segment: Segment) -> "Schedule":
        return Schedule(self.segments + (segment,))


def single_round(duration_ms: float) -> Schedule:
    return Schedule((Segment(duration_ms, {}, "round 1"),))


SHIFT_METHODS = ("theta", "flip_tilt")


def shift_unit_cells(cfg: PhysicalConfig, shift_time_ms: float = 3.7,
                     second_round_ms: float | None = None, method: str = "theta",
                     first: Schedule | None = None) -> Schedule:
    """Two-round schedule: pair cells (0,1),(2,3)... then (1,2),(3,4)...

    ``method='theta'`` adds pi to the superlattice phase, which together with
    the tilt is an exact translation by one site (up to a constant energy).
    ``method='flip_tilt'`` negates g instead, a mirror image of the first
    round; the cells then rely on the mirrored channel.
    """
    if first is None:
        first = single_round(shift_time_ms)
    elif not math.isclose(first.total_ms, shift_time_ms):
        raise ValueError("first-round duration differs from the shift time")
    cur = first.resolved_configs(cfg)[-1] if first.segments else cfg
    if method == "flip_tilt":
        changes = {"tilt_g": -cur.tilt_g}
    elif method == "theta":
        changes = {"theta": cur.theta + math.pi}
    else:
        raise ValueError(f"unknown shift method {method!r}; expected one of {SHIFT_METHODS}")
    dur = shift_time_ms if second_round_ms is None else second_round_ms
    return first.then(Segment(dur, changes, "round 2"))


# --------------------------------------------------------------------------
# Krylov propagation


@dataclass
class KrylovStats:
    steps: int = 0
    rejected: int = 0
    matvecs: int = 0
    max_dim: int = 0
    max_error: float = 0.0


def _tridiag_expm_e1(alpha, beta, dt) -> np.ndarray:
    if len(alpha) == 1:
        return np.array([np.exp(-1j * alpha[0] * dt)])
    # QR driver: MRRR eigenvectors lose orthogonality (~1e-12) on clustered Ritz values
    lam, Q = linalg.eigh_tridiagonal(np.asarray(alpha), np.asarray(beta), lapack_driver="stev")
    return Q @ (np.exp(-1j * lam * dt) * Q[0])


def _krylov_attempt(apply, v, dt, m_min, m_max, tol, stats):
    """One Lanczos step of length dt; returns the propagated vector or None."""
    beta0 = np.linalg.norm(v)
    if beta0 == 0.0:
        return v.copy(), 0.0
    n = v.size
    m_max = min(m_max, n)
    V = np.empty((m_max + 1, n), dtype=np.complex128)
    V[0] = v / beta0
    alpha, beta = [], []
    err = math.inf
    for j in range(m_max):
        w = apply(V[j])
        stats.matvecs += 1
        a = float(np.vdot(V[j], w).real)
        w -= a * V[j]
        if j > 0:
            w -= beta[-1] * V[j - 1]
        # full reorthogonalization, twice is enough
        for _ in range(2):
            w -= V[: j + 1].T @ (V[: j + 1].conj() @ w)
        b = float(np.linalg.norm(w))
        alpha.append(a)
        stats.max_dim = max(stats.max_dim, j + 1)
        scale = max(abs(a), 1.0)
        if b <= 1e-13 * scale or j + 1 == n:
            # invariant subspace reached: the projection is exact
            c = _tridiag_expm_e1(alpha, beta, dt)
            return beta0 * (c @ V[: j + 1]), 0.0
        if j + 1 >= m_min:
            c = _tridiag_expm_e1(alpha, beta, dt)
            err = b * abs(c[-1])
            if err <= tol:
                return beta0 * (c @ V[: j + 1]), err
        beta.append(b)
        V[j + 1] = w / b
    return None, err


def expm_krylov(apply: Callable, v: np.ndarray, t: float, tol: float = 1e-13,
                m_min: int = 8, m_max: int = 40, stats: KrylovStats | None = None) -> np.ndarray:
    """exp(-i A t) v for Hermitian A given by ``apply``, with adaptive sub-steps.

    The per-step error estimate ``beta_m |[exp(-i T t)]_{m,1}|`` is kept below
    ``tol`` per unit norm; failed steps are halved.
    """
    stats = stats if stats is not None else KrylovStats()
    v = np.asarray(v, dtype=np.complex128)
    if t == 0.0:
        return v.copy()
    done, dt = 0.0, t
    min_dt = abs(t) * 2.0**-40
    while abs(t - done) > 1e-15 * abs(t):
        dt = math.copysign(min(abs(dt), abs(t - done)), t)
        out, err = _krylov_attempt(apply, v, dt, m_min, m_max, tol, stats)
        if out is None:
            stats.rejected += 1
            dt /= 2.0
            if abs(dt) < min_dt:
                raise KrylovError(f"step-size underflow: dt={dt:.3e} after {stats.steps} steps, "
                                  f"last error estimate {err:.3e} > tol {tol:.1e}")
            continue
        v = out
        done += dt
        stats.steps += 1
        stats.max_error = max(stats.max_error, err)
        dt *= 2.0
    return v


class SectorPropagator:
    """exp(-i (H - shift) t) on one sector; the removed phase is restored on output."""

    def __init__(self, H: SparseOperator, tol: float = 1e-13, m_min: int = 8, m_max: int = 40):
        self.H = H
        d = H.diagonal()
        self.shift = 0.5 * (d.max() + d.min()) if d.size else 0.0
        self.tol, self.m_min, self.m_max = tol, m_min, m_max
        self.stats = KrylovStats()
        self._buf = np.empty(H.shape[0], dtype=np.complex128)

    def _apply(self, x):
        y = self.H.matvec(x, out=np.empty_like(self._buf))
        y -= self.shift * x
        return y

    def __call__(self, v: np.ndarray, t: float) -> np.ndarray:
        if v.size == 0 or t == 0.0:
            return v.copy()
        out = expm_krylov(self._apply, v, t, self.tol, self.m_min, self.m_max, self.stats)
        return out * np.exp(-1j * self.shift * t)


def default_workers() -> int:
    env = os.environ.get("ORBITALCLUSTER_WORKERS")
    return max(1, int(env)) if env else 1


ParamsProvider = Callable[[PhysicalConfig], HubbardParams]


def default_params_provider(numerics: Numerics = Numerics()) -> ParamsProvider:
    return lambda cfg: build_params(cfg, numerics)


def iter_evolve(state: ManyBodyState, schedule: Schedule, cfg: PhysicalConfig,
                sample_times_ms, params_provider: ParamsProvider | None = None,
                include_exchange: bool = False, tol: float = 1e-13,
                workers: int | None = None, stats: dict | None = None) -> Iterator:
    """Yield ``(t_ms, segment_index, state)`` at each sample time.

    H is rebuilt from the segment's parameters at each boundary and the state
    vector carries over unchanged.  Sectors are propagated in parallel.
    """
    times = np.asarray(sample_times_ms, dtype=float)
    if times.size and (np.any(np.diff(times) < 0) or times[0] < 0
                       or times[-1] > schedule.total_ms * (1 + 1e-12) + 1e-12):
        raise ValueError("sample times must be sorted and lie within the schedule duration")
    provider = params_provider or default_params_provider()
    unit = recoil_energy(cfg).time_unit_ms
    bounds = schedule.boundaries_ms
    configs = schedule.resolved_configs(cfg)
    workers = workers or default_workers()
    keys = state.keys()
    cur = state.copy()
    t_now = 0.0
    seg = 0
    props = None
    stats = stats if stats is not None else {}

    def load(k):
        p = provider(configs[k].with_(n_sites=state.n_sites, n_orbitals=state.n_orbitals))
        return {key: SectorPropagator(assemble_hamiltonian(p, cur.sectors[key], include_exchange),
                                      tol=tol) for key in keys}

    def advance(to_ms):
        nonlocal t_now
        dt = (to_ms - t_now) / unit
        if dt == 0.0:
            return
        run = lambda key: props[key](cur.vectors[key], dt)
        if pool is not None:
            new = dict(zip(keys, pool.map(run, keys)))
        else:
            new = {key: run(key) for key in keys}
        cur.vectors.update(new)
        t_now = to_ms

    pool = ThreadPoolExecutor(workers) if workers > 1 else None
    try:
        for t in times:
            while seg < len(schedule.segments) and t > bounds[seg + 1] + 1e-12:
                if props is None:
                    props = load(seg)
                advance(bounds[seg + 1])
                _collect(stats, seg, props)
                seg += 1
                props = None
            if seg < len(schedule.segments):
                if props is None:
                    props = load(seg)
                advance(t)
            yield float(t), min(seg, len(schedule.segments) - 1), cur.copy()
        if props is not None:
            _collect(stats, seg, props)
    finally:
        if pool is not None:
            pool.shutdown()


def _collect(stats, seg, props):
    s = KrylovStats()
    for p in props.values():
        s.steps += p.stats.steps
        s.rejected += p.stats.rejected
        s.matvecs += p.stats.matvecs
        s.max_dim = max(s.max_dim, p.stats.max_dim)
        s.max_error = max(s.max_error, p.stats.max_error)
    stats[seg] = s


def evolve(state: ManyBodyState, schedule: Schedule, cfg: PhysicalConfig, sample_times_ms,
           params_provider: ParamsProvider | None = None, **kwargs) -> list:
    """Snapshots of ``state`` at ``sample_times_ms`` (list of ManyBodyState)."""
    return [s for _, _, s in iter_evolve(state, schedule, cfg, sample_times_ms,
                                         params_provider, **kwargs)]
