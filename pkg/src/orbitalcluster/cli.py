"""Scenario runner.

    orbitalcluster run <config|builtin-name> [--output-dir DIR]
    orbitalcluster sweep <config> --param {theta,V0p,aS,g} --from A --to B --points K [--fidelity]
    orbitalcluster bands <config>

Configurations are INI files with sections [scenario], [physical],
[schedule] and [numerics]; keys carry their unit in the name.  Exit codes:
0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import configparser
import hashlib
import io
import json
import logging
import math
import os
import re
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from scipy import constants as const

from . import __version__
from .bloch import BandSolveError, WannierGaugeError, write_band_table, write_wannier_table
from .dynamics import (KrylovError, SHIFT_METHODS, iter_evolve, prepare_plus_product,
                       shift_unit_cells, single_round)
from .kernels import BACKEND
from .lattice_params import (GridConvergenceError, Numerics, ResonanceBracketError,
                             build_params, lattice_solution, parameter_report, perturbative_ising)
from .mathieu import lattice_band_edges
from .observables import PostSelectionError, TraceRecorder, build_target, rescale_per_cell
from .tuning import TuningError, tune_pairwise
from .units import PhysicalConfig, recoil_energy

log = logging.getLogger("orbitalcluster")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
NUMERIC_ERRORS = (BandSolveError, WannierGaugeError, GridConvergenceError, KrylovError,
                  ResonanceBracketError, TuningError, PostSelectionError, np.linalg.LinAlgError)
BUILTIN = ("fig1-params", "fig3-bell", "fig5-pairwise", "fig5c-shift")


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# schema: key -> (kind, default, bounds/choices)

def _between(lo, hi, lo_open=False):
    def check(v):
        ok = (lo < v if lo_open else lo <= v) and v <= hi
        return ok, f"in {'(' if lo_open else '['}{lo}, {hi}]"
    return check


def _choice(*opts):
    return lambda v: (v in opts, f"one of {', '.join(opts)}")


_even_sites = lambda v: (all(2 <= n <= 8 and n % 2 == 0 for n in v), "even integers in [2, 8]")
_odd = lambda v: (11 <= v <= 63 and v % 2 == 1, "odd in [11, 63]")
_even_nq = lambda v: (32 <= v <= 1024 and v % 2 == 0, "even in [32, 1024]")

SCHEMA = {
    "scenario": {
        "name": ("str", "custom", None),
        "kind": ("str", "evolve", _choice("params", "evolve")),
        "output_dir": ("str", "out", None),
    },
    "physical": {
        "mass_amu": ("float", 39.96399848, _between(0, 1e3, True)),
        "lattice_const_nm": ("float", 413.0, _between(0, 1e5, True)),
        "scattering_len_nm": ("float_or_auto", -50.0, _between(-1e4, 1e4)),
        "v0_recoil": ("float", 10.0, _between(0, 60)),
        "v0p_recoil": ("float", 0.0, _between(0, 30)),
        "theta_rad": ("float", None, _between(-100, 100)),
        "theta_pi": ("float", 0.5, _between(-30, 30)),
        "tilt_recoil": ("float_or_auto", 0.0, _between(-20, 20)),
        "n_sites": ("int_list", (2,), _even_sites),
        "n_orbitals": ("int", 2, _between(2, 3)),
    },
    "schedule": {
        "duration_ms": ("float_or_auto", 3.0, _between(0, 100)),
        "shift": ("str", "none", _choice("none", *SHIFT_METHODS)),
        "shift_time_ms": ("float_or_auto", 3.7, _between(0, 100)),
        "second_round_ms": ("float_or_auto", None, _between(0, 100)),
        "target": ("str", "bell_pairs", _choice("bell_pairs", "chain_cluster")),
        "phase_frame": ("str", "optimized", _choice("optimized", "raw")),
        "window_from_ms": ("float", None, _between(0, 100)),
        "window_to_ms": ("float", None, _between(0, 100)),
    },
    "numerics": {
        "cutoff": ("int", 16, _between(8, 64)),
        "n_q": ("int", 64, _even_nq),
        "n_periods": ("int", 15, _odd),
        "points_per_period": ("int", 64, _between(16, 512)),
        "krylov_tol": ("float", 1e-13, _between(0, 1e-6, True)),
        "sample_interval_ms": ("float", 0.01, _between(0, 10, True)),
        "include_exchange": ("bool", False, None),
        "tune_t_max_ms": ("float", 8.0, _between(0.5, 100)),
    },
}


def _line_of(text: str, section: str, key: str | None = None) -> int:
    cur = None
    for no, line in enumerate(text.splitlines(), 1):
        m = re.match(r"\s*\[([^\]]+)\]", line)
        if m:
            cur = m.group(1).strip()
            if key is None and cur == section:
                return no
            continue
        if cur == section and key is not None and re.match(rf"\s*{re.escape(key)}\s*[=:]", line):
            return no
    return 0


def _convert(kind: str, raw: str):
    raw = raw.strip()
    if kind == "str":
        return raw
    if kind == "int":
        return int(raw)
    if kind == "float":
        v = float(raw)
        if not math.isfinite(v):
            raise ValueError("not finite")
        return v
    if kind == "float_or_auto":
        return "auto" if raw.lower() == "auto" else _convert("float", raw)
    if kind == "int_list":
        return tuple(int(x) for x in raw.replace(",", " ").split())
    if kind == "bool":
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError("expected true/false")
    raise AssertionError(kind)


@dataclass
class ScenarioConfig:
    values: dict                      # section -> key -> value (defaults filled)
    source: str = "<string>"
    text: str = ""

    def __getitem__(self, section):
        return self.values[section]

    def physical(self, n_sites: int | None = None) -> PhysicalConfig:
        ph = self["physical"]
        theta = ph["theta_rad"] if ph["theta_rad"] is not None else math.pi * ph["theta_pi"]
        tilt = ph["tilt_recoil"]
        return PhysicalConfig(
            atom_mass=ph["mass_amu"] * const.atomic_mass,
            lattice_const_a=ph["lattice_const_nm"] * 1e-9,
            scattering_len_aS=(-50.0 if ph["scattering_len_nm"] == "auto" else ph["scattering_len_nm"]) * 1e-9,
            V0=ph["v0_recoil"], V0p=ph["v0p_recoil"], theta=theta,
            tilt_g=0.0 if tilt == "auto" else tilt,
            n_sites=n_sites or ph["n_sites"][0], n_orbitals=ph["n_orbitals"])

    def numerics(self) -> Numerics:
        nu = self["numerics"]
        return Numerics(nu["cutoff"], nu["n_q"], nu["n_periods"], nu["points_per_period"])

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        for sec, kv in self.values.items():
            cp[sec] = {k: _format(v) for k, v in kv.items() if v is not None}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def as_dict(self) -> dict:
        return {s: {k: (list(v) if isinstance(v, tuple) else v) for k, v in kv.items()}
                for s, kv in self.values.items()}


def _format(v) -> str:
    if isinstance(v, tuple):
        return ", ".join(str(x) for x in v)
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_config(text: str, source: str = "<string>") -> ScenarioConfig:
    cp = configparser.ConfigParser(interpolation=None, strict=True)
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        lineno = getattr(exc, "lineno", None)
        where = f"{source}:{lineno}" if lineno else source
        raise ConfigError(f"{where}: {exc.message if hasattr(exc, 'message') else exc}") from exc
    values = {s: {k: spec[1] for k, spec in keys.items()} for s, keys in SCHEMA.items()}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{source}:{_line_of(text, section)}: unknown section [{section}]; "
                              f"expected one of {', '.join(SCHEMA)}")
        for key, raw in cp.items(section):
            line = _line_of(text, section, key)
            if key not in SCHEMA[section]:
                raise ConfigError(f"{source}:{line}: unknown key '{key}' in [{section}]; "
                                  f"allowed: {', '.join(SCHEMA[section])}")
            kind, _, check = SCHEMA[section][key]
            try:
                val = _convert(kind, raw)
            except ValueError as exc:
                raise ConfigError(f"{source}:{line}: cannot parse {key} = {raw!r} as {kind}: {exc}") from exc
            if check is not None and val != "auto":
                ok, expect = check(val)
                if not ok:
                    raise ConfigError(f"{source}:{line}: {key} = {raw.strip()} out of bounds; expected {expect}")
            values[section][key] = val
    if cp.has_option("physical", "theta_rad") and cp.has_option("physical", "theta_pi"):
        raise ConfigError(f"{source}:{_line_of(text, 'physical', 'theta_rad')}: "
                          "give either theta_rad or theta_pi, not both")
    if values["physical"]["theta_rad"] is not None:
        values["physical"]["theta_pi"] = None
    sch = values["schedule"]
    if "auto" not in (values["physical"]["tilt_recoil"], values["physical"]["scattering_len_nm"]):
        for key in ("duration_ms", "shift_time_ms", "second_round_ms"):
            if sch[key] == "auto":
                raise ConfigError(f"{source}:{_line_of(text, 'schedule', key)}: "
                                  f"{key} = auto requires tilt_recoil or scattering_len_nm = auto")
    w0, w1 = sch["window_from_ms"], sch["window_to_ms"]
    if w0 is not None and w1 is not None and w1 < w0:
        raise ConfigError(f"{source}: window_to_ms must not be below window_from_ms")
    return ScenarioConfig(values, source, text)


def load_config(path_or_name: str) -> ScenarioConfig:
    p = Path(path_or_name)
    if p.is_file():
        return parse_config(p.read_text(), str(p))
    if path_or_name in BUILTIN:
        text = resources.files("orbitalcluster").joinpath("scenarios", f"{path_or_name}.ini").read_text()
        return parse_config(text, f"<builtin {path_or_name}>")
    raise ConfigError(f"{path_or_name}: no such file or built-in scenario ({', '.join(BUILTIN)})")


# --------------------------------------------------------------------------
# manifest


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    config: ScenarioConfig
    started: float = field(default_factory=time.time)
    outputs: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    results: dict = field(default_factory=dict)
    status: str = "ok"
    error: str | None = None

    def add(self, path: Path) -> None:
        self.outputs.append(path)

    def write(self, out_dir: Path) -> Path:
        path = out_dir / "manifest.json"
        doc = {
            "command": self.command,
            "code_version": __version__,
            "kernel_backend": BACKEND,
            "status": self.status,
            "error": self.error,
            "started_unix": self.started,
            "wall_clock_s": time.time() - self.started,
            "resolved_config": self.config.as_dict(),
            "resolved_config_ini": self.config.to_ini(),
            "diagnostics": _jsonable(self.diagnostics),
            "results": _jsonable(self.results),
            "outputs": [{"path": p.name, "bytes": p.stat().st_size, "sha256": sha256_file(p)}
                        for p in self.outputs],
        }
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        return path


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        return float(x) if math.isfinite(x) else str(float(x))
    if isinstance(x, (np.integer,)):
        return int(x)
    if hasattr(x, "__dataclass_fields__"):
        return _jsonable({k: getattr(x, k) for k in x.__dataclass_fields__})
    return x


def _write_text(path: Path, text: str, manifest: RunManifest) -> Path:
    path.write_text(text)
    manifest.add(path)
    return path


# --------------------------------------------------------------------------
# scenarios


def resolve_auto(cfg: ScenarioConfig, manifest: RunManifest | None = None) -> ScenarioConfig:
    """Replace ``auto`` tilt, scattering length and times by the tuned working point.

    ``scattering_len_nm = auto`` retunes the cell resonance with a_S at the
    given tilt (the staircase tilt if the tilt is also ``auto``); otherwise an
    ``auto`` tilt is itself put on resonance.
    """
    ph, sch = cfg["physical"], cfg["schedule"]
    autos = [ph["tilt_recoil"], ph["scattering_len_nm"], sch["duration_ms"], sch["shift_time_ms"],
             sch["second_round_ms"]]
    if "auto" not in autos:
        return cfg
    base = cfg.physical()
    if ph["scattering_len_nm"] == "auto":
        tilt = None if ph["tilt_recoil"] == "auto" else ph["tilt_recoil"]
        wp = tune_pairwise(base, knob="aS", tilt=tilt, t_max_ms=cfg["numerics"]["tune_t_max_ms"],
                           numerics=cfg.numerics())
    else:
        wp = tune_pairwise(base, knob="g", t_max_ms=cfg["numerics"]["tune_t_max_ms"],
                           numerics=cfg.numerics())
    values = {s: dict(kv) for s, kv in cfg.values.items()}
    values["physical"]["tilt_recoil"] = wp.tilt_g
    values["physical"]["scattering_len_nm"] = wp.scattering_len_aS * 1e9
    for key in ("duration_ms", "shift_time_ms", "second_round_ms"):
        if values["schedule"][key] == "auto":
            values["schedule"][key] = wp.round_ms
    if manifest is not None:
        manifest.results["working_point"] = wp
    return ScenarioConfig(values, cfg.source, cfg.text)


def build_schedule(cfg: ScenarioConfig, pc: PhysicalConfig):
    sch = cfg["schedule"]
    if sch["shift"] == "none":
        return single_round(sch["duration_ms"])
    return shift_unit_cells(pc, sch["shift_time_ms"], sch["second_round_ms"], sch["shift"])


def sample_times(total_ms: float, interval_ms: float, extra=()) -> np.ndarray:
    k = int(math.floor(total_ms / interval_ms + 1e-9))
    t = np.round(np.arange(k + 1) * interval_ms, 12)
    return np.unique(np.concatenate([t, [total_ms], np.asarray(extra, dtype=float)]))


def run_evolution(cfg: ScenarioConfig, n_sites: int, diagnostics: dict | None = None):
    """Evolve the |+...+> state under the scenario schedule; returns (trace, schedule)."""
    pc = cfg.physical(n_sites)
    sched = build_schedule(cfg, pc)
    nu, sch = cfg["numerics"], cfg["schedule"]
    times = sample_times(sched.total_ms, nu["sample_interval_ms"], sched.boundaries_ms)
    state = prepare_plus_product(n_sites, pc.n_orbitals)
    first = build_target(sch["target"], n_sites)
    chain = build_target("chain_cluster", n_sites)
    recorder = TraceRecorder(state, lambda seg: first if seg == 0 else chain, sch["phase_frame"])
    stats = {}
    numerics = cfg.numerics()
    for t, seg, snap in iter_evolve(state, sched, pc, times,
                                    lambda c: build_params(c, numerics),
                                    include_exchange=nu["include_exchange"],
                                    tol=nu["krylov_tol"], stats=stats):
        recorder.record(t, snap, seg)
    if diagnostics is not None:
        diagnostics[f"krylov_n{n_sites}"] = {str(k): v for k, v in stats.items()}
    return recorder.trace(), sched


def _window(cfg: ScenarioConfig, total: float):
    sch = cfg["schedule"]
    lo = sch["window_from_ms"] if sch["window_from_ms"] is not None else 0.0
    hi = sch["window_to_ms"] if sch["window_to_ms"] is not None else total
    return lo, hi


def _peak_summary(trace, window):
    i = trace.peak("F", window)
    return {c: float(trace.column(c)[i]) for c in ("tau_ms", "F", "F_raw", "F_PS", "P_suc", "D", "N_2nd")}


def scenario_params(cfg: ScenarioConfig, out: Path, manifest: RunManifest) -> None:
    pc = cfg.physical()
    numerics = cfg.numerics()
    p = build_params(pc, numerics)
    diag = perturbative_ising(p)
    _write_text(out / "params.txt", parameter_report(p), manifest)
    rows = ["bond Delta Delta_reverse residual J_ising_est J_ising_hz"]
    hz = diag.J_ising_hz(pc)
    for b in range(p.n_sites - 1):
        rows.append(f"{b} {diag.Delta[b]:.12e} {diag.Delta_reverse[b]:.12e} "
                    f"{diag.resonance_residual[b]:.12e} {diag.J_ising_est[b]:.12e} {hz[b]:.12e}")
    _write_text(out / "perturbative.txt", "\n".join(rows) + "\n", manifest)
    bands, w = lattice_solution(pc, numerics)
    write_band_table(bands, out / "bands.txt")
    manifest.add(out / "bands.txt")
    write_wannier_table(w, out / "wannier.txt")
    manifest.add(out / "wannier.txt")
    manifest.diagnostics.update({k: v for k, v in p.diagnostics.items()})
    manifest.diagnostics["flags"] = list(diag.flags)
    offdiag = np.abs(p.hop_prime.copy())
    big = offdiag[:, 0, 1].max()
    offdiag[:, 0, 1] = offdiag[:, 1, 0] = 0.0
    manifest.results.update({
        "J_heisenberg_est": diag.J_heisenberg_est,
        "eps_prime_staggered": bool(np.allclose(p.eps_prime[::2], -p.eps_prime[1::2], atol=1e-12)),
        "hop_prime_12_over_rest": float(big / max(offdiag.max(), 1e-300)),
        "max_interorbital_J": float(abs(p.hop[0, 1])),
    })


def scenario_evolve(cfg: ScenarioConfig, out: Path, manifest: RunManifest) -> None:
    n_list = cfg["physical"]["n_sites"]
    multi = len(n_list) > 1
    for n in n_list:
        trace, sched = run_evolution(cfg, n, manifest.diagnostics)
        tag = f"_n{n}" if multi else ""
        path = out / f"trace{tag}.txt"
        trace.write(path)
        manifest.add(path)
        if n > 2 and cfg["schedule"]["shift"] == "none":
            rpath = out / f"trace{tag}_rescaled.txt"
            rescale_per_cell(trace, n).write(rpath)
            manifest.add(rpath)
        window = _window(cfg, sched.boundaries_ms[1])
        res = {"peak": _peak_summary(trace, window), "final": _peak_summary(trace, (trace.times[-1],) * 2),
               "max_norm_error": float(np.abs(trace.norm - 1).max()),
               "max_sector_weight_drift": float(np.abs(trace.sector_weights - trace.sector_weights[0]).max())}
        manifest.results[f"n{n}"] = res


def run_command(path_or_name: str, output_dir: str | None = None) -> int:
    cfg = load_config(path_or_name)
    out = Path(output_dir or cfg["scenario"]["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(f"run {path_or_name}", cfg)
    try:
        cfg = resolve_auto(cfg, manifest)
        manifest.config = cfg
        if cfg["scenario"]["kind"] == "params":
            scenario_params(cfg, out, manifest)
        else:
            scenario_evolve(cfg, out, manifest)
    except NUMERIC_ERRORS as exc:
        manifest.status, manifest.error = "numeric_failure", f"{type(exc).__name__}: {exc}"
        manifest.write(out)
        raise
    manifest.write(out)
    return EXIT_OK


# --------------------------------------------------------------------------
# sweep

SWEEP_PARAMS = {"theta": "theta_rad", "V0p": "v0p_recoil", "aS": "scattering_len_nm", "g": "tilt_recoil"}


def _with_value(cfg: ScenarioConfig, param: str, value: float) -> ScenarioConfig:
    values = {s: dict(kv) for s, kv in cfg.values.items()}
    key = SWEEP_PARAMS[param]
    values["physical"][key] = float(value)
    if key == "theta_rad":
        values["physical"]["theta_pi"] = None
    check = SCHEMA["physical"][key][2]
    ok, expect = check(float(value))
    if not ok:
        raise ConfigError(f"sweep value {param} = {value} out of bounds; expected {expect}")
    return ScenarioConfig(values, cfg.source, cfg.text)


def sweep_point(cfg: ScenarioConfig, param: str, value: float, with_fidelity: bool) -> dict:
    c = _with_value(cfg, param, value)
    n = c["physical"]["n_sites"][0]
    pc = c.physical(n)
    p = build_params(pc, c.numerics())
    d = perturbative_ising(p)
    row = {"value": float(value),
           "J_ising_est": float(d.J_ising_est[0]),
           "residual": float(d.resonance_residual[0]),
           "Delta": float(d.Delta[0]),
           "abs_Jp11": float(np.abs(p.hop_prime[:, 0, 0]).max()),
           "abs_Jp12": float(np.abs(p.hop_prime[:, 0, 1]).max()),
           "abs_Jp22": float(np.abs(p.hop_prime[:, 1, 1]).max())}
    if with_fidelity:
        trace, sched = run_evolution(c, n)
        pk = _peak_summary(trace, _window(c, sched.boundaries_ms[1]))
        row.update(peak_tau_ms=pk["tau_ms"], peak_F=pk["F"], peak_F_PS=pk["F_PS"], peak_P_suc=pk["P_suc"])
    return row


def workers_from_env() -> int:
    env = os.environ.get("ORBITALCLUSTER_WORKERS")
    if env is None:
        return 1
    try:
        return max(1, int(env))
    except ValueError:
        raise ConfigError(f"ORBITALCLUSTER_WORKERS must be an integer, got {env!r}") from None


def sweep_command(path_or_name: str, param: str, lo: float, hi: float, points: int,
                  with_fidelity: bool = False, output_dir: str | None = None) -> int:
    if param not in SWEEP_PARAMS:
        raise ConfigError(f"unknown sweep parameter {param!r}; expected one of {', '.join(SWEEP_PARAMS)}")
    if points < 1 or (points == 1 and lo != hi):
        raise ConfigError("--points must be >= 2 (or 1 with --from equal to --to)")
    cfg = load_config(path_or_name)
    cfg = resolve_auto(cfg)
    out = Path(output_dir or cfg["scenario"]["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    grid = np.linspace(lo, hi, points)
    for v in grid:
        _with_value(cfg, param, v)        # bounds check before any work
    manifest = RunManifest(f"sweep {path_or_name} --param {param} --from {lo} --to {hi} --points {points}", cfg)
    workers = workers_from_env()
    rows, failure = [], None
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            futures = [ex.submit(sweep_point, cfg, param, v, with_fidelity) for v in grid]
            for v, fut in zip(grid, futures):
                if failure is not None:
                    fut.cancel()
                    rows.append({"value": float(v), "status": "skipped"})
                    continue
                try:
                    rows.append({**fut.result(), "status": "ok"})
                except NUMERIC_ERRORS as exc:
                    failure = exc
                    rows.append({"value": float(v), "status": "failed"})
    else:
        for v in grid:
            if failure is not None:
                rows.append({"value": float(v), "status": "skipped"})
                continue
            try:
                rows.append({**sweep_point(cfg, param, v, with_fidelity), "status": "ok"})
            except NUMERIC_ERRORS as exc:
                failure = exc
                rows.append({"value": float(v), "status": "failed"})
    cols = ["value", "J_ising_est", "residual", "Delta", "abs_Jp11", "abs_Jp12", "abs_Jp22"]
    if with_fidelity:
        cols += ["peak_tau_ms", "peak_F", "peak_F_PS", "peak_P_suc"]
    lines = [" ".join([f"{param}"] + cols[1:] + ["status"])]
    for r in rows:
        lines.append(" ".join([f"{r['value']:.12e}"] +
                              [f"{r[c]:.12e}" if c in r else "nan" for c in cols[1:]] + [r["status"]]))
    path = out / f"sweep_{param}.txt"
    _write_text(path, "\n".join(lines) + "\n", manifest)
    if failure is not None:
        manifest.status, manifest.error = "numeric_failure", f"{type(failure).__name__}: {failure}"
        manifest.write(out)
        raise failure
    manifest.write(out)
    return EXIT_OK


# --------------------------------------------------------------------------
# bands


def bands_command(path_or_name: str, output_dir: str | None = None) -> int:
    cfg = load_config(path_or_name)
    out = Path(output_dir or cfg["scenario"]["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(f"bands {path_or_name}", cfg)
    pc = cfg.physical()
    bands, w = lattice_solution(pc, cfg.numerics())
    write_band_table(bands, out / "bands.txt")
    manifest.add(out / "bands.txt")
    write_wannier_table(w, out / "wannier.txt")
    manifest.add(out / "wannier.txt")
    edges = lattice_band_edges(pc.V0)
    q = bands.q_grid
    i0, i1 = np.argmin(np.abs(q)), np.argmin(np.abs(np.abs(q) - 1.0))
    computed = {"E1_bottom": bands.energies[i0, 0], "E1_top": bands.energies[i1, 0],
                "E2_bottom": bands.energies[i1, 1], "E2_top": bands.energies[i0, 1]}
    manifest.results["band_edges"] = computed
    manifest.results["mathieu_edges"] = edges
    manifest.results["max_edge_deviation"] = max(abs(computed[k] - edges[k]) for k in edges)
    manifest.results["recoil_hz"] = recoil_energy(pc).hz
    manifest.write(out)
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="orbitalcluster", description=__doc__.split("\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a scenario")
    r.add_argument("config")
    r.add_argument("--output-dir")
    s = sub.add_parser("sweep", help="sweep one parameter of a scenario")
    s.add_argument("config")
    s.add_argument("--param", required=True, choices=sorted(SWEEP_PARAMS))
    s.add_argument("--from", dest="lo", type=float, required=True)
    s.add_argument("--to", dest="hi", type=float, required=True)
    s.add_argument("--points", type=int, required=True)
    s.add_argument("--fidelity", action="store_true", help="also evolve and report peak fidelity")
    s.add_argument("--output-dir")
    b = sub.add_parser("bands", help="band structure and Wannier orbitals")
    b.add_argument("config")
    b.add_argument("--output-dir")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            return run_command(args.config, args.output_dir)
        if args.command == "sweep":
            return sweep_command(args.config, args.param, args.lo, args.hi, args.points,
                                 args.fidelity, args.output_dir)
        return bands_command(args.config, args.output_dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure in {type(exc).__module__}: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
