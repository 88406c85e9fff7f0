"""Experiment configuration, orchestration and artifact persistence.

A run is described by an :class:`ExperimentConfig` (strict JSON), executed by
:func:`run`, and leaves CSV tables, a JSON summary and a manifest with SHA-256
checksums in the output directory.  All randomness derives from the config
seed; scan points are independent tasks whose results are merged in index
order, so artifacts do not depend on the number of worker processes.
"""
from __future__ import annotations

import argparse
import copy
import hashlib
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .errors import ConfigInvalid, QImpactError, UnknownPreset

EXPERIMENTS = ("eigen", "evolve", "unforced", "forced", "otoc", "qle", "classical", "diagnose")
GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0
DEFAULT_OUT = "qimpact-out"

_POTENTIAL_KEYS = ("variant", "k", "m", "hbar", "x_w", "A_f", "omega_f", "A", "c", "phase")
_GRID_KEYS = ("x_min", "x_max", "n")

# run parameters accepted by each experiment, with defaults
RUN_DEFAULTS: dict[str, dict] = {
    "eigen": {"n_states": 50, "order": 8, "numerov_levels": 0},
    "evolve": {"t_end": 10.0, "dt": 0.01, "sample_stride": 10, "packet_mean": 0.0,
               "packet_variance": None, "packet_momentum": 0.0, "order": 8},
    "unforced": {"x_ws": [0.0, 5.0, 6.0, None], "n_states": 200, "packet_mean": -5.0,
                 "packet_variance": None, "dt_sample": 0.1, "n_samples": 4000, "n_c": 100,
                 "zero_one_mode": "standard"},
    "forced": {"n_states": 400, "n_periods": 600, "transient_periods": 20,
               "samples_per_period": 64, "steps_per_period": 256, "packet_mean": 0.0,
               "packet_variance": None, "n_c": 100, "embed_dim": 5, "ftle_window": None,
               "strobe_skip": 20},
    "otoc": {"x_ws": [0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, None],
             "betas": [0.5, 1.0, 10.0], "n_states": 300, "t_max": 12.0, "n_times": 1201,
             "t_start": None, "check_truncation": True},
    "qle": {"x_w_start": 0.15, "x_w_stop": 0.80, "x_w_step": 0.01, "kT": 0.01, "Gamma": 1.0,
            "tau_c": 3.0, "n_components": 1, "n_realizations": 100, "T_long": 20000.0,
            "T_lyap": 500.0, "dt": 1e-3, "delta0": 1e-8, "renorm_time": 1.0},
    "classical": {"x_w_start": 0.10, "x_w_stop": 0.30, "x_w_step": 0.005, "r": 0.95,
                  "n_periods": 400, "n_skip": 200, "lyap_periods": 400, "continuation": False},
    "diagnose": {"input": None, "dt_sample": None, "n_c": 100, "zero_one_mode": "modified",
                 "embed_dim": 5, "ftle_window": None, "skip": 0},
}


@dataclass
class ExperimentConfig:
    experiment: str
    potential: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    run: dict = field(default_factory=dict)
    seed: int = 0
    output_dir: str | None = None
    threads: int | None = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigInvalid(f"unknown experiment {self.experiment!r}")
        bad = set(self.potential) - set(_POTENTIAL_KEYS)
        if bad:
            raise ConfigInvalid(f"unknown potential keys {sorted(bad)}")
        bad = set(self.grid) - set(_GRID_KEYS)
        if bad:
            raise ConfigInvalid(f"unknown grid keys {sorted(bad)}")
        bad = set(self.run) - set(RUN_DEFAULTS[self.experiment])
        if bad:
            raise ConfigInvalid(f"unknown run keys for {self.experiment}: {sorted(bad)}")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise ConfigInvalid("seed must be an integer")
        if self.threads is not None and (not isinstance(self.threads, int) or self.threads < 1):
            raise ConfigInvalid("threads must be a positive integer")
        try:
            self.potential_spec()
        except (TypeError, ValueError) as exc:
            raise ConfigInvalid(f"invalid potential: {exc}") from exc

    def params(self) -> dict:
        p = dict(RUN_DEFAULTS[self.experiment])
        p.update(self.run)
        return p

    def potential_spec(self):
        from .lattice import PotentialSpec
        d = {k: (math.inf if k == "x_w" and v is None else v) for k, v in self.potential.items()}
        return PotentialSpec.from_dict(d)

    def to_dict(self) -> dict:
        return {"experiment": self.experiment, "potential": self.potential, "grid": self.grid,
                "run": self.run, "seed": self.seed, "output_dir": self.output_dir,
                "threads": self.threads}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigInvalid("config must be a JSON object")
        bad = set(d) - {"experiment", "potential", "grid", "run", "seed", "output_dir", "threads"}
        if bad:
            raise ConfigInvalid(f"unknown config keys {sorted(bad)}")
        if "experiment" not in d:
            raise ConfigInvalid("config needs an 'experiment'")
        return cls(**copy.deepcopy(d))

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigInvalid(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(d)

    def digest(self) -> str:
        """Hash of everything that determines the artifacts."""
        d = self.to_dict()
        d.pop("output_dir")
        d.pop("threads")
        d["run"] = self.params()
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


_PRESETS = {
    "unforced-grazing": {
        "experiment": "unforced",
        "potential": {"variant": "hard", "k": 1.0, "m": 1.0, "hbar": 1.0},
        "grid": {"x_min": -16.0, "x_max": 16.0, "n": 801},
    },
    "forced-grazing": {
        "experiment": "forced",
        "potential": {"variant": "forced_hard", "k": 1.0, "m": 1.0, "hbar": 1.0, "x_w": 5.0,
                      "A_f": 3.0905, "omega_f": GOLDEN},
        "grid": {"x_min": -36.0, "n": 1681},
    },
    "otoc-scan": {
        "experiment": "otoc",
        "potential": {"variant": "hard", "k": 1.0, "m": 1.0, "hbar": 1.0,
                      "A_f": 3.0905, "omega_f": GOLDEN},
    },
    "qle-scan": {
        "experiment": "qle",
        "potential": {"variant": "soft", "k": 1.0, "A": 10.0, "m": 1.0, "hbar": 0.01,
                      "c": 10.0, "x_w": 0.25, "A_f": 10.0, "omega_f": 0.8046},
        "run": {"kT": 0.01, "Gamma": 1.0, "tau_c": 3.0},
    },
    "classical-scan": {
        "experiment": "classical",
        "potential": {"variant": "forced_hard", "k": 1.0, "m": 1.0, "A_f": 1.0, "omega_f": 2.5},
    },
}


def preset(name: str) -> ExperimentConfig:
    if name not in _PRESETS:
        raise UnknownPreset(f"unknown preset {name!r}; choose from {sorted(_PRESETS)}")
    d = copy.deepcopy(_PRESETS[name])
    d["run"] = {**copy.deepcopy(RUN_DEFAULTS[d["experiment"]]), **d.get("run", {})}
    return ExperimentConfig.from_dict(d)


def preset_names() -> list[str]:
    return sorted(_PRESETS)


# --- artifacts ---------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def write_csv(path: Path, header: list[str], rows) -> None:
    """One header line naming columns (with units), then 17-digit values."""
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    return v


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n")


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunManifest:
    config_hash: str
    version: str
    duration: float
    artifacts: dict[str, str]

    def to_dict(self) -> dict:
        return {"config_hash": self.config_hash, "version": self.version,
                "duration_seconds": self.duration, "artifacts": self.artifacts}

    def verify(self, out_dir) -> bool:
        return all(sha256_file(Path(out_dir) / n) == h for n, h in self.artifacts.items())

    @classmethod
    def load(cls, path) -> "RunManifest":
        d = json.loads(Path(path).read_text())
        return cls(d["config_hash"], d["version"], d["duration_seconds"], d["artifacts"])


class _Sink:
    """Collects artifacts of one run."""

    def __init__(self, out_dir: Path):
        self.dir = out_dir
        self.names: list[str] = []

    def csv(self, name: str, header, rows) -> None:
        write_csv(self.dir / name, header, rows)
        self.names.append(name)

    def json(self, name: str, obj) -> None:
        write_json(self.dir / name, obj)
        self.names.append(name)


def _pmap(fn, tasks, threads: int):
    """Order-preserving map, in worker processes when threads > 1."""
    tasks = list(tasks)
    if threads <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, tasks))


def _workers(cfg: ExperimentConfig) -> int:
    return cfg.threads or os.cpu_count() or 1


def _xw_label(x_w) -> str:
    return "far" if x_w is None or not math.isfinite(x_w) else format(float(x_w), "g")


def _packet_variance(spec, v):
    return spec.hbar / (2.0 * math.sqrt(spec.k * spec.m)) if v is None else float(v)


# --- experiments -------------------------------------------------------------

def _grid_for(spec, grid: dict, default_n: int = 801):
    from .lattice import build_grid
    x_min = float(grid.get("x_min", -16.0))
    n = int(grid.get("n", default_n))
    if spec.is_hard and math.isfinite(spec.x_w):
        return build_grid(x_min, spec.x_w, n)
    return build_grid(x_min, float(grid.get("x_max", -x_min)), n)


def _exp_eigen(cfg: ExperimentConfig, p: dict, sink: _Sink) -> dict:
    from .spectral import eigensolve, numerov_verify
    spec = cfg.potential_spec().static()
    grid = _grid_for(spec, cfg.grid)
    basis = eigensolve(spec, grid, int(p["n_states"]), int(p["order"]))
    rows = []
    for n, e in enumerate(basis.energies):
        rows.append((n, e, numerov_verify(spec, grid, e) if n < p["numerov_levels"] else math.nan))
    sink.csv("energies.csv", ["n", "E[energy]", "E_numerov[energy]"], rows)
    return {"n_states": basis.n_states, "E0": basis.energies[0], "grid": grid.to_dict()}


def _exp_evolve(cfg: ExperimentConfig, p: dict, sink: _Sink) -> dict:
    from .lattice import gaussian_packet
    from .observables import entropy, expectations
    from .propagator import evolve
    spec = cfg.potential_spec()
    grid = _grid_for(spec, cfg.grid)
    psi0 = gaussian_packet(grid, p["packet_mean"], _packet_variance(spec, p["packet_variance"]),
                           p["packet_momentum"], spec.hbar)
    states = evolve(spec, psi0, p["t_end"], p["dt"], int(p["sample_stride"]), int(p["order"]))
    rows = []
    for s in states:
        ex, ep, ex2, ep2 = expectations(s, spec.hbar)
        rows.append((s.t, ex, ep, ex2, ep2, entropy(s), s.norm2()))
    sink.csv("evolution.csv", ["t[time]", "x[length]", "p[momentum]", "x2[length^2]",
                               "p2[momentum^2]", "S[nats]", "norm[1]"], rows)
    return {"n_samples": len(states), "final_norm": states[-1].norm2()}


def _unforced_point(task):
    from .diagnostics import count_peaks, power_spectrum, zero_one_test
    from .lattice import gaussian_packet
    from .observables import entropy_series
    from .spectral import eigensolve
    spec, grid_d, p, seed = task
    grid = _grid_for(spec, grid_d)
    basis = eigensolve(spec, grid, int(p["n_states"]))
    psi0 = gaussian_packet(grid, p["packet_mean"], _packet_variance(spec, p["packet_variance"]),
                           0.0, spec.hbar)
    c = basis.coefficients(psi0.psi)
    captured = float(np.sum(np.abs(c) ** 2))
    if captured < 1 - 1e-6:
        from .errors import BasisTruncation
        raise BasisTruncation(f"basis captures only {captured:.8f} of the packet")
    dt = float(p["dt_sample"])
    n = int(p["n_samples"])
    vals = np.empty(n)
    for i in range(0, n, 2000):
        ts = dt * np.arange(i, min(n, i + 2000))
        amp = (c[None, :] * np.exp(-1j * np.outer(ts, basis.energies) / spec.hbar)) @ basis.states
        vals[i:i + len(ts)] = entropy_series(np.abs(amp) ** 2, grid.dx, dt).values
    from .observables import TimeSeries
    series = TimeSeries(vals, dt)
    spec_ = power_spectrum(series)
    z = zero_one_test(series, p["zero_one_mode"], int(p["n_c"]), seed)
    floor = 1e-8 * max(1.0, abs(vals.mean()))
    return {"series": vals, "freqs": spec_.freqs, "amps": spec_.amps, "K_median": z.K_median,
            "K_values": z.K_values, "captured": captured,
            "dominant_peaks": count_peaks(spec_, 0.1, floor),
            "peaks_above_1pct": count_peaks(spec_, 0.01, floor)}


def _exp_unforced(cfg: ExperimentConfig, p: dict, sink: _Sink) -> dict:
    base = cfg.potential_spec()
    tasks = []
    for x_w in p["x_ws"]:
        xw = math.inf if x_w is None else float(x_w)
        tasks.append((replace(base, variant="hard", x_w=xw, A_f=0.0), cfg.grid, p, cfg.seed))
    res = _pmap(_unforced_point, tasks, _workers(cfg))
    summary = {}
    dt = float(p["dt_sample"])
    for x_w, r in zip(p["x_ws"], res):
        lab = _xw_label(x_w)
        sink.csv(f"entropy_xw{lab}.csv", ["t[time]", "S[nats]"],
                 zip(dt * np.arange(len(r["series"])), r["series"]))
        sink.csv(f"spectrum_xw{lab}.csv", ["f[1/time]", "amplitude[nats]"], zip(r["freqs"], r["amps"]))
        summary[lab] = {k: r[k] for k in ("K_median", "dominant_peaks", "peaks_above_1pct", "captured")}
    return {"by_x_w": summary}


def forced_entropy(spec, grid, n_states: int, n_periods: int, samples_per_period: int = 64,
                   steps_per_period: int = 256, packet_mean: float = 0.0,
                   packet_variance: float | None = None):
    """Entropy series (sampled every T_f/samples_per_period) and stroboscopic
    densities of a forced run started from a Gaussian packet."""
    from .lattice import gaussian_packet
    from .observables import TimeSeries, entropy_series
    from .propagator import PeriodicPropagator
    from .spectral import eigensolve
    basis = eigensolve(spec.static(), grid, n_states)
    prop = PeriodicPropagator(spec, basis, steps_per_period, samples_per_period)
    psi0 = gaussian_packet(grid, packet_mean, _packet_variance(spec, packet_variance), 0.0, spec.hbar)
    coeffs = prop.run(basis.coefficients(psi0.psi), n_periods)
    vals = np.empty(len(coeffs))
    strobes = []
    for i in range(0, len(coeffs), 2048):
        rho = np.abs(coeffs[i:i + 2048] @ basis.states) ** 2
        vals[i:i + len(rho)] = entropy_series(rho, grid.dx, 1.0).values
        for j in range(len(rho)):
            if (i + j) % samples_per_period == 0:
                strobes.append(rho[j])
    top = float(np.max(np.sum(np.abs(coeffs[:, -max(1, n_states // 10):]) ** 2, axis=1)))
    return TimeSeries(vals, prop.period / samples_per_period), np.array(strobes), top


def _exp_forced(cfg: ExperimentConfig, p: dict, sink: _Sink) -> dict:
    from .diagnostics import (finite_time_lyapunov, largest_lyapunov, power_spectrum,
                              spectral_distribution, zero_one_test)
    from .observables import stroboscopic_density
    spec = cfg.potential_spec()
    grid = _grid_for(spec, cfg.grid, 1681)
    spp = int(p["samples_per_period"])
    series, strobes, top = forced_entropy(spec, grid, int(p["n_states"]), int(p["n_periods"]), spp,
                                          int(p["steps_per_period"]), p["packet_mean"],
                                          p["packet_variance"])
    sink.csv("entropy.csv", ["t[time]", "S[nats]"], zip(series.times, series.values))
    tail = series.tail(int(p["transient_periods"]) * spp)
    spectrum = power_spectrum(tail)
    sink.csv("spectrum.csv", ["f[1/time]", "amplitude[nats]"], zip(spectrum.freqs, spectrum.amps))
    sd = spectral_distribution(spectrum)
    sink.csv("spectral_distribution.csv", ["sigma[nats]", "N[count]"], zip(sd.sigma, sd.counts))
    z_std = zero_one_test(tail, "standard", int(p["n_c"]), cfg.seed)
    z_mod = zero_one_test(tail, "modified", int(p["n_c"]), cfg.seed)
    sink.csv("zero_one.csv", ["c[rad]", "K_standard[1]", "c_modified[rad]", "K_modified[1]"],
             zip(z_std.c_values, z_std.K_values, z_mod.c_values, z_mod.K_values))
    window = p["ftle_window"] or spp
    ftle = finite_time_lyapunov(tail, int(p["embed_dim"]), window=int(window))
    sink.csv("ftle.csv", ["lambda[1/time]"], ((v,) for v in ftle.exponents))
    lam = largest_lyapunov(tail, int(p["embed_dim"]), horizon=int(window))
    rho = stroboscopic_density(strobes, int(p["strobe_skip"]), grid.dx)
    sink.csv("strobe_density.csv", ["x[length]", "rho[1/length]"], zip(grid.x, rho))
    return {"K_standard": z_std.K_median, "K_modified": z_mod.K_median,
            "spectral_exponent": sd.exponent, "spectral_stderr": sd.stderr, "n_peaks": sd.n_peaks,
            "ftle_positive_fraction": ftle.positive_fraction, "ftle_mean": float(ftle.exponents.mean()),
            "largest_lyapunov": lam, "top_decile_weight": top, "n_samples": len(series)}


def _otoc_point(task):
    from .otoc import otoc_point
    spec, p, times, t_start = task
    curves, fits = otoc_point(spec, p["betas"], times, t_start, int(p["n_states"]),
                              bool(p["check_truncation"]))
    return [(c.values, f) for c, f in zip(curves, fits)]


def _exp_otoc(cfg: ExperimentConfig, p: dict, sink: _Sink) -> dict:
    base = replace(cfg.potential_spec(), variant="hard", A_f=0.0)
    times = np.linspace(0.0, float(p["t_max"]), int(p["n_times"]))
    w_f = cfg.potential.get("omega_f") or GOLDEN
    t_start = p["t_start"] if p["t_start"] is not None else 0.1 * 2 * math.pi / w_f
    specs = [replace(base, x_w=math.inf if x is None else float(x)) for x in p["x_ws"]]
    res = _pmap(_otoc_point, [(s, p, times, t_start) for s in specs], _workers(cfg))
    table = []
    for x_w, per_beta in zip(p["x_ws"], res):
        for beta, (vals, fit) in zip(p["betas"], per_beta):
            sink.csv(f"otoc_xw{_xw_label(x_w)}_beta{format(float(beta), 'g')}.csv",
                     ["t[time]", "C_T[hbar^2]"], zip(times, vals))
            table.append((fit.x_w, fit.beta, fit.exponent, fit.stderr, fit.t_start, fit.t_end,
                          fit.loglog_residual, fit.semilog_residual, fit.periodic, fit.converged,
                          fit.truncation_change))
    sink.csv("otoc_scan.csv", ["x_w[length]", "beta[1/energy]", "exponent[1]", "stderr[1]",
                               "t_start[time]", "t_end[time]", "loglog_residual[1]",
                               "semilog_residual[1]", "periodic[bool]", "converged[bool]",
                               "truncation_change[1]"], table)
    return {"t_start": t_start, "rows": len(table)}


def _qle_point(task):
    from .qle import NoiseModel, bifurcation_point
    spec, p, x_w, index, seed = task
    noise = NoiseModel(p["kT"], p["Gamma"], p["tau_c"], int(p["n_components"]), seed)
    return bifurcation_point(spec, noise, x_w, index, float(p["T_long"]), float(p["T_lyap"]),
                             int(p["n_realizations"]), float(p["dt"]), seed,
                             delta0=float(p["delta0"]), renorm_time=float(p["renorm_time"]))


def _exp_qle(cfg: ExperimentConfig, p: dict, sink: _Sink) -> dict:
    from .qle import scan_values
    spec = cfg.potential_spec()
    xs = scan_values(p["x_w_start"], p["x_w_stop"], p["x_w_step"])
    pts = _pmap(_qle_point, [(spec, p, x, i, cfg.seed) for i, x in enumerate(xs)], _workers(cfg))
    sink.csv("qle_scan.csv", ["x_w[length]", "mean_lambda[1/time]", "std_lambda[1/time]",
                              "K_median[1]", "n_section[count]"],
             [(b.x_w, b.mean_lambda, b.std_lambda, b.K_median, len(b.section)) for b in pts])
    sink.csv("qle_sections.csv", ["x_w[length]", "index[count]", "X[length]"],
             [(b.x_w, j, x) for b in pts for j, x in enumerate(b.section)])
    return {"n_points": len(pts),
            "positive_fraction": float(np.mean([b.mean_lambda > 0 for b in pts]))}


def _exp_classical(cfg: ExperimentConfig, p: dict, sink: _Sink) -> dict:
    from .classical import ImpactParams, bifurcation_classical
    from .qle import scan_values
    pot = cfg.potential
    params = ImpactParams(k=float(pot.get("k", 1.0)), m=float(pot.get("m", 1.0)),
                          x_w=float(p["x_w_start"]), A_f=float(pot.get("A_f", 0.0)),
                          omega_f=float(pot.get("omega_f", 1.0)), r=float(p["r"]))
    xs = scan_values(p["x_w_start"], p["x_w_stop"], p["x_w_step"])
    bif = bifurcation_classical(xs, params, int(p["n_periods"]), int(p["n_skip"]),
                                int(p["lyap_periods"]), bool(p["continuation"]))
    rows = [(x, j, s, lam) for x, smp, lam in zip(bif.x_w, bif.samples, bif.lyapunov)
            for j, s in enumerate(smp)]
    sink.csv("classical_scan.csv", ["x_w[length]", "sample[count]", "x_strobe[length]",
                                    "lambda_max[1/time]"], rows)
    return {"free_amplitude": abs(params.B), "n_points": len(xs)}


def _exp_diagnose(cfg: ExperimentConfig, p: dict, sink: _Sink) -> dict:
    from .diagnostics import finite_time_lyapunov, power_spectrum, spectral_distribution, zero_one_test
    from .errors import TooFewPeaks
    from .observables import TimeSeries
    if not p["input"]:
        raise ConfigInvalid("diagnose needs run.input (CSV with t,value columns)")
    data = np.loadtxt(p["input"], delimiter=",", skiprows=1, ndmin=2)
    dt = p["dt_sample"] or float(data[1, 0] - data[0, 0])
    series = TimeSeries(data[int(p["skip"]):, 1], dt)
    spectrum = power_spectrum(series)
    sink.csv("spectrum.csv", ["f[1/time]", "amplitude[1]"], zip(spectrum.freqs, spectrum.amps))
    z = zero_one_test(series, p["zero_one_mode"], int(p["n_c"]), cfg.seed)
    out = {"K_median": z.K_median, "mode": z.mode}
    try:
        sd = spectral_distribution(spectrum)
        out.update(spectral_exponent=sd.exponent, spectral_stderr=sd.stderr)
    except TooFewPeaks:
        out.update(spectral_exponent=None, spectral_stderr=None)
    ftle = finite_time_lyapunov(series, int(p["embed_dim"]), window=p["ftle_window"])
    sink.csv("ftle.csv", ["lambda[1/time]"], ((v,) for v in ftle.exponents))
    out["ftle_positive_fraction"] = ftle.positive_fraction
    return out


_RUNNERS = {"eigen": _exp_eigen, "evolve": _exp_evolve, "unforced": _exp_unforced,
            "forced": _exp_forced, "otoc": _exp_otoc, "qle": _exp_qle,
            "classical": _exp_classical, "diagnose": _exp_diagnose}


def resolve_output_dir(cfg: ExperimentConfig, out: str | None = None) -> Path:
    """--out, then the config's output_dir, then $QIMPACT_OUT, then ./qimpact-out."""
    return Path(out or cfg.output_dir or os.environ.get("QIMPACT_OUT") or DEFAULT_OUT)


def run(cfg: ExperimentConfig, out: str | None = None) -> RunManifest:
    """Execute the experiment, write artifacts, summary and manifest."""
    cfg.validate()
    out_dir = resolve_output_dir(cfg, out)
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    sink = _Sink(out_dir)
    params = cfg.params()
    sink.json("config.json", {**cfg.to_dict(), "output_dir": None, "threads": None, "run": params})
    # single-threaded BLAS keeps reductions bitwise reproducible
    with threadpool_limits(1):
        summary = _RUNNERS[cfg.experiment](cfg, params, sink)
    sink.json("summary.json", {"experiment": cfg.experiment, "seed": cfg.seed, **summary})
    artifacts = {n: sha256_file(out_dir / n) for n in sorted(sink.names)}
    manifest = RunManifest(cfg.digest(), __version__, time.perf_counter() - t0, artifacts)
    write_json(out_dir / "manifest.json", manifest.to_dict())
    return manifest


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(d: dict, assignment: str) -> None:
    """Set a dotted key, e.g. ``potential.x_w=6`` or ``run.betas=[0.5,1]``."""
    if "=" not in assignment:
        raise ConfigInvalid(f"override {assignment!r} is not key=value")
    key, value = assignment.split("=", 1)
    parts = key.strip().split(".")
    node = d
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigInvalid(f"cannot override inside non-object {part!r}")
    node[parts[-1]] = _parse_value(value)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qimpact", description="Quantum impact oscillator experiments.")
    ap.add_argument("experiment", nargs="?", choices=EXPERIMENTS,
                    help="experiment to run (optional with --preset or --config)")
    ap.add_argument("--config", help="JSON experiment config")
    ap.add_argument("--preset", help=f"named preset: {', '.join(preset_names())}")
    ap.add_argument("--out", help="output directory (default: $QIMPACT_OUT or ./qimpact-out)")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--threads", type=int)
    ap.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                    help="dotted config override, repeatable")
    return ap


def config_from_args(args) -> ExperimentConfig:
    if args.config and args.preset:
        raise ConfigInvalid("use either --config or --preset")
    if args.config:
        d = json.loads(Path(args.config).read_text())
    elif args.preset:
        d = preset(args.preset).to_dict()
    elif args.experiment:
        d = {"experiment": args.experiment}
    else:
        raise ConfigInvalid("give an experiment, --config or --preset")
    if args.experiment and d.get("experiment") != args.experiment:
        raise ConfigInvalid(f"experiment {args.experiment!r} does not match config {d.get('experiment')!r}")
    for ov in args.override:
        apply_override(d, ov)
    if args.seed is not None:
        d["seed"] = args.seed
    if args.threads is not None:
        d["threads"] = args.threads
    return ExperimentConfig.from_dict(d)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        manifest = run(cfg, args.out)
    except (QImpactError, OSError, json.JSONDecodeError) as exc:
        print(f"qimpact: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    out = resolve_output_dir(cfg, args.out)
    print(f"{cfg.experiment}: {len(manifest.artifacts)} artifacts in {out} "
          f"({manifest.duration:.1f} s)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
