"""Experiment configuration, runners and run comparison.

A run wires one controller (``rl``, ``smc`` or ``mfac``) to one benchmark
(``case1``, ``case2`` or a ``custom`` plant/reference pair), streams a
per-step CSV trace and returns a :class:`RunMetrics` summary.
"""

from __future__ import annotations

import copy
import csv
import dataclasses
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
import yaml

from . import plants
from .baselines import HighOrderMFAC, SlidingModeController
from .kernel import CostWeights, Dimensions
from .learner import (
    LearnerConfig,
    PlantDivergenceError,
    initial_state,
    post_convergence_residuals,
    run_online_episode,
    seed_kernel,
    trace_columns,
)
from .plants import ProbingNoise

CASES = ("case1", "case2", "custom")
CONTROLLERS = ("rl", "smc", "mfac")
PLANT_KINDS = ("delayed_linear", "switching_nonlinear")
REFERENCE_KINDS = ("linear_model", "piecewise", "free_response")

# Seed strategies for the learner; a custom run starts from the identity critic.
DEFAULT_OMEGA0 = {"case1": [10.0, 0.0, 0.0], "case2": [1.0, 0.0, 0.0], "custom": None}

METRIC_COLUMNS = [
    "case", "controller", "seed", "config_hash", "steps_run", "rms_error", "rms_error_last10",
    "steady_state_offset", "converged", "convergence_step", "converged_gains",
    "max_bellman_residual_post_convergence", "mean_stage_cost_post_convergence",
]


class ConfigError(ValueError):
    """Configuration text could not be parsed or failed validation."""


@dataclass
class PlantSettings:
    """Benchmark process. Unset matrices fall back to the Case 1 values."""

    kind: str = "delayed_linear"
    A: list | None = None
    A_d: list | None = None
    B: list | None = None
    B_h: list | None = None
    C: list | None = None
    d: int = plants.CASE1_D
    h: int = plants.CASE1_H
    x0: list | None = None
    T_s: float = plants.CASE1_TS

    def build(self, N_T: int):
        if self.kind == "switching_nonlinear":
            return plants.NonlinearSwitchingPlant(N_T)

        def pick(v, default):
            return default if v is None else np.asarray(v, dtype=float)

        return plants.DelayedLinearPlant(
            pick(self.A, plants.CASE1_A), pick(self.A_d, plants.CASE1_A_D), pick(self.B, plants.CASE1_B),
            pick(self.B_h, plants.CASE1_B_H), pick(self.C, plants.CASE1_C), self.d, self.h,
            pick(self.x0, plants.CASE1_X0), self.T_s,
        )


@dataclass
class ReferenceSettings:
    kind: str = "linear_model"
    A_m: list | None = None
    C_m: list | None = None
    x_m0: list | None = None

    def build(self, plant, N_T: int):
        if self.kind == "piecewise":
            return plants.PiecewiseReference(N_T)
        if self.kind == "free_response":
            return plants.FreeResponseReference(plant)
        A_m = plants.CASE1_A_M if self.A_m is None else np.asarray(self.A_m, float)
        C_m = plants.CASE1_C_M if self.C_m is None else np.asarray(self.C_m, float)
        x_m0 = plants.CASE1_XM0 if self.x_m0 is None else np.asarray(self.x_m0, float)
        return plants.LinearReferenceModel(A_m, C_m, x_m0)


@dataclass
class InitSettings:
    """Learner seed: ``omega0`` builds a positive definite critic with that greedy gain."""

    omega0: list | None = None
    theta_scale: float = 1.0


@dataclass
class NoiseSettings:
    kind: str = "uniform"
    amplitude: float = 0.1
    active_steps: int | None = None  # defaults to learner.exploration_steps


@dataclass
class ExperimentConfig:
    case: str = "case1"
    controller: str = "rl"
    seed: int = 0
    steps: int | None = None  # defaults to learner.N_T
    out_path: str = "runs/trace.csv"
    blowup: float = 1e6
    dims: Dimensions = field(default_factory=Dimensions)
    Q: Any = 0.05  # scalar means a scaled identity
    R: Any = 0.01
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    init: InitSettings = field(default_factory=InitSettings)
    noise: NoiseSettings = field(default_factory=NoiseSettings)
    plant: PlantSettings = field(default_factory=PlantSettings)
    reference: ReferenceSettings = field(default_factory=ReferenceSettings)
    smc_sigma_mode: str = "sigma"

    @property
    def n_steps(self) -> int:
        return self.learner.N_T if self.steps is None else self.steps

    @property
    def cost(self) -> CostWeights:
        n_E, t = self.dims.n_E, self.dims.t
        Q = self.Q * np.eye(n_E) if np.isscalar(self.Q) else np.asarray(self.Q, float)
        R = self.R * np.eye(t) if np.isscalar(self.R) else np.asarray(self.R, float)
        return CostWeights(Q, R)

    def probing_noise(self) -> ProbingNoise:
        active = self.learner.exploration_steps if self.noise.active_steps is None else self.noise.active_steps
        return ProbingNoise(self.noise.kind, self.noise.amplitude, active, self.seed, self.dims.t)

    def validate(self) -> ExperimentConfig:
        if self.case not in CASES:
            raise ConfigError(f"case must be one of {CASES}, got {self.case!r}")
        if self.controller not in CONTROLLERS:
            raise ConfigError(f"controller must be one of {CONTROLLERS}, got {self.controller!r}")
        if self.plant.kind not in PLANT_KINDS:
            raise ConfigError(f"plant.kind must be one of {PLANT_KINDS}")
        if self.reference.kind not in REFERENCE_KINDS:
            raise ConfigError(f"reference.kind must be one of {REFERENCE_KINDS}")
        if self.n_steps < 1:
            raise ConfigError("steps must be >= 1")
        if not self.blowup > 0:
            raise ConfigError("blowup must be positive")
        if self.smc_sigma_mode not in ("sigma", "zero"):
            raise ConfigError("smc_sigma_mode must be 'sigma' or 'zero'")
        if self.controller == "smc" and self.plant.kind != "delayed_linear":
            raise ConfigError("the sliding-mode baseline needs the delayed linear plant")
        if self.controller == "smc" and self.reference.kind != "linear_model":
            raise ConfigError("the sliding-mode baseline needs a linear reference model state")
        try:
            self.cost
            self.probing_noise()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.init.omega0 is not None:
            om = np.atleast_2d(np.asarray(self.init.omega0, float))
            if om.shape != (self.dims.t, self.dims.n_E):
                raise ConfigError(f"init.omega0 must have shape ({self.dims.t}, {self.dims.n_E})")
        if not self.init.theta_scale > 0:
            raise ConfigError("init.theta_scale must be positive")
        return self


# --- config file I/O --------------------------------------------------------

_SECTIONS = {
    "dims": Dimensions, "learner": LearnerConfig, "init": InitSettings, "noise": NoiseSettings,
    "plant": PlantSettings, "reference": ReferenceSettings,
}


def _case_defaults(case: str) -> dict:
    if case == "case2":
        return {"plant": {"kind": "switching_nonlinear"}, "reference": {"kind": "piecewise"},
                "init": {"omega0": DEFAULT_OMEGA0["case2"]}}
    if case == "custom":
        return {"reference": {"kind": "free_response"}}
    return {"init": {"omega0": DEFAULT_OMEGA0["case1"]}}


def _build(cls, data: dict, where: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def config_from_dict(raw: dict | None, case: str | None = None) -> ExperimentConfig:
    """Validated config from a nested mapping; missing keys take the case defaults."""
    raw = copy.deepcopy(raw or {})
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    if case is not None:
        raw["case"] = case
    defaults = _case_defaults(raw.get("case", "case1"))
    for key, sub in defaults.items():
        given = raw.get(key) or {}
        if not isinstance(given, dict):
            raise ConfigError(f"section {key!r} must be a mapping")
        raw[key] = {**sub, **given}
    for key, cls in _SECTIONS.items():
        sub = raw.get(key) or {}
        if not isinstance(sub, dict):
            raise ConfigError(f"section {key!r} must be a mapping")
        raw[key] = _build(cls, sub, key)
    return _build(ExperimentConfig, raw, "config").validate()


def load_config(path: str | Path, **overrides) -> ExperimentConfig:
    """Read a YAML config. ``overrides`` (case, controller, seed, steps, out_path) win over the file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    raw = raw or {}
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    case = overrides.pop("case", None)
    if case is not None and case != raw.get("case", "case1"):
        # switching benchmark from the command line: drop the file's benchmark-specific sections
        raw = {k: v for k, v in raw.items() if k not in ("plant", "reference", "init")}
    raw.update({k: v for k, v in overrides.items() if v is not None})
    return config_from_dict(raw, case)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    def plain(v):
        if isinstance(v, np.ndarray):
            return v.tolist()
        if isinstance(v, (list, tuple)):
            return [plain(x) for x in v]
        return v

    return {k: plain(v) for k, v in dataclasses.asdict(cfg).items()}


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)


def config_hash(cfg: ExperimentConfig) -> str:
    """Short digest of everything that affects the trajectory (the output path is excluded)."""
    d = config_to_dict(cfg)
    d.pop("out_path")
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:12]


# --- running ----------------------------------------------------------------


@dataclass
class RunMetrics:
    case: str
    controller: str
    seed: int
    config_hash: str
    steps_run: int
    rms_error: float
    rms_error_last10: float
    steady_state_offset: float
    converged: bool = False
    convergence_step: int | None = None
    converged_gains: list | None = None
    max_bellman_residual_post_convergence: float = math.nan
    mean_stage_cost_post_convergence: float = math.nan

    def row(self) -> dict:
        out = dataclasses.asdict(self)
        out["converged_gains"] = "" if self.converged_gains is None else " ".join(
            repr(float(g)) for g in self.converged_gains)
        out["convergence_step"] = "" if self.convergence_step is None else self.convergence_step
        for k, v in out.items():
            if isinstance(v, float):
                out[k] = repr(v)
        return out

    @classmethod
    def from_row(cls, row: dict) -> RunMetrics:
        gains = row["converged_gains"].split()
        return cls(
            case=row["case"], controller=row["controller"], seed=int(row["seed"]),
            config_hash=row["config_hash"], steps_run=int(row["steps_run"]),
            rms_error=float(row["rms_error"]), rms_error_last10=float(row["rms_error_last10"]),
            steady_state_offset=float(row["steady_state_offset"]),
            converged=row["converged"] == "True",
            convergence_step=int(row["convergence_step"]) if row["convergence_step"] else None,
            converged_gains=[float(g) for g in gains] if gains else None,
            max_bellman_residual_post_convergence=float(row["max_bellman_residual_post_convergence"]),
            mean_stage_cost_post_convergence=float(row["mean_stage_cost_post_convergence"]),
        )


def _cell(v) -> str:
    if isinstance(v, (list, tuple, np.ndarray)):
        return " ".join(_cell(x) for x in np.asarray(v).reshape(-1))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


class TraceWriter:
    """Streams trace records to CSV with a fixed header; missing columns become ``nan``."""

    def __init__(self, path: str | Path | None, columns: Sequence[str]):
        self.columns = list(columns)
        self.rows: list[dict] = []
        self._fh = None
        if path is not None:
            path = Path(path)
            path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(path, "w", newline="")
            self._writer = csv.writer(self._fh, lineterminator="\n")
            self._writer.writerow(self.columns)

    def __call__(self, record: dict) -> None:
        self.rows.append(record)
        if self._fh is not None:
            self._writer.writerow([_cell(record.get(c, math.nan)) for c in self.columns])
            self._fh.flush()

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _summarise(cfg: ExperimentConfig, rows: list[dict], **extra) -> RunMetrics:
    eps = np.array([np.linalg.norm(np.atleast_1d(r["eps"])) for r in rows])
    n_last = max(1, len(eps) // 10)
    tail = eps[-n_last:]
    return RunMetrics(
        case=cfg.case, controller=cfg.controller, seed=cfg.seed, config_hash=config_hash(cfg),
        steps_run=len(rows),
        rms_error=float(np.sqrt(np.mean(eps**2))),
        rms_error_last10=float(np.sqrt(np.mean(tail**2))),
        steady_state_offset=float(np.mean(tail)),
        **extra,
    )


def _baseline_record(k: int, t: float, y, y_m, u) -> dict:
    y = np.atleast_1d(y)
    y_m = np.atleast_1d(y_m)
    return {"k": k, "t": t, "y": y, "y_m": y_m, "eps": y_m - y, "u": u}


def _check_output(y, blowup: float, k: int) -> None:
    if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > blowup:
        raise PlantDivergenceError(f"plant output {y} exceeded blow-up bound {blowup:g} at step {k}")


def _run_smc(cfg, plant, reference, sink) -> None:
    ctrl = SlidingModeController(plant.A, plant.A_d, plant.B, plant.B_h, plant.d, plant.h,
                                 sigma_mode=cfg.smc_sigma_mode)
    for k in range(cfg.n_steps):
        y, y_m, t = plant.y, reference.y, plant.time
        u = ctrl.control(plant.x, reference.x_m)
        sink(_baseline_record(k, t, y, y_m, u))
        plant.step([u])
        reference.step()
        _check_output(plant.y, cfg.blowup, k)


def _run_mfac(cfg, plant, reference, sink) -> None:
    ctrl = HighOrderMFAC()
    for k in range(cfg.n_steps):
        y, y_m, t = plant.y, reference.y, plant.time
        u = ctrl.control(y, y_m)
        sink(_baseline_record(k, t, y, y_m, u))
        plant.step([u])
        reference.step()
        _check_output(plant.y, cfg.blowup, k)


def build_learner_init(cfg: ExperimentConfig):
    omega0 = cfg.init.omega0
    theta0 = seed_kernel(np.zeros((cfg.dims.t, cfg.dims.n_E)) if omega0 is None else omega0, cfg.init.theta_scale)
    if omega0 is not None:
        omega0 = np.atleast_2d(np.asarray(omega0, float))
    return initial_state(cfg.dims, theta0, omega0, cfg.learner.N, cfg.learner.cond_limit)


def run_experiment(cfg: ExperimentConfig, out_path: str | Path | None = None, write: bool = True) -> RunMetrics:
    """Run one configured experiment; the trace goes to ``out_path`` (default ``cfg.out_path``).

    Raises :class:`PlantDivergenceError` or the learner's
    :class:`PolicyExtractionError`; the trace written so far is kept.
    """
    cfg.validate()
    path = (out_path or cfg.out_path) if write else None
    plant = cfg.plant.build(cfg.learner.N_T)
    reference = cfg.reference.build(plant, cfg.learner.N_T)
    columns = trace_columns(cfg.dims.n_E, cfg.dims.t)
    with TraceWriter(path, columns) as writer:
        if cfg.controller == "smc":
            _run_smc(cfg, plant, reference, writer)
            return _summarise(cfg, writer.rows)
        if cfg.controller == "mfac":
            _run_mfac(cfg, plant, reference, writer)
            return _summarise(cfg, writer.rows)
        result = run_online_episode(
            plant, reference, cfg.cost, cfg.learner, build_learner_init(cfg), cfg.probing_noise(),
            sink=writer, steps=cfg.n_steps, blowup=cfg.blowup,
        )
    residuals, costs = post_convergence_residuals(result)
    return _summarise(
        cfg, writer.rows, converged=result.converged, convergence_step=result.convergence_step,
        converged_gains=[float(g) for g in result.state.omega.reshape(-1)],
        max_bellman_residual_post_convergence=float(np.max(np.abs(residuals))) if residuals.size else math.nan,
        mean_stage_cost_post_convergence=float(np.mean(costs)) if costs.size else math.nan,
    )


def metrics_path_for(trace_path: str | Path) -> Path:
    p = Path(trace_path)
    return p.with_name(p.stem + "_metrics.csv")


def write_metrics(metrics: Iterable[RunMetrics], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, METRIC_COLUMNS, lineterminator="\n")
        w.writeheader()
        for m in metrics:
            w.writerow(m.row())


def read_metrics(path: str | Path) -> list[RunMetrics]:
    with open(path, newline="") as fh:
        return [RunMetrics.from_row(r) for r in csv.DictReader(fh)]


# --- comparison -------------------------------------------------------------

COMPARE_COLUMNS = ["controller", "seed", "config_hash", "rms_error", "rms_error_last10",
                   "steady_state_offset", "converged", "convergence_step"]


@dataclass
class Comparison:
    case: str
    rows: list[dict]

    def to_text(self) -> str:
        cells = [[_fmt(r[c]) for c in COMPARE_COLUMNS] for r in self.rows]
        widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(COMPARE_COLUMNS)]
        lines = [f"case: {self.case}", "  ".join(c.ljust(w) for c, w in zip(COMPARE_COLUMNS, widths))]
        lines += ["  ".join(v.ljust(w) for v, w in zip(row, widths)) for row in cells]
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["case", *COMPARE_COLUMNS])
        for r in self.rows:
            w.writerow([self.case, *(_cell(r[c]) if r[c] is not None else "" for c in COMPARE_COLUMNS)])
        return buf.getvalue()

    def column(self, name: str) -> list:
        return [r[name] for r in self.rows]


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def compare_runs(metrics: Sequence[RunMetrics]) -> Comparison:
    """Side-by-side table of at least two runs on the same case, ordered by controller then seed."""
    metrics = list(metrics)
    if len(metrics) < 2:
        raise ValueError("compare_runs needs at least two runs")
    cases = sorted({m.case for m in metrics})
    if len(cases) != 1:
        raise ValueError(f"cannot compare runs from different cases: {', '.join(cases)}")
    ordered = sorted(metrics, key=lambda m: (CONTROLLERS.index(m.controller), m.seed, m.config_hash))
    rows = [{c: getattr(m, c) for c in COMPARE_COLUMNS} for m in ordered]
    return Comparison(cases[0], rows)
