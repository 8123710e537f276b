"""Experiment grids: configs, cell execution and report assembly.

Config (YAML, ``version: 1``)::

    version: 1
    model:                       # travel-model builder ...
      variants: [model1, model2, model3]
      roads: {grid: {nx: 3, ny: 3, spacing: 200}}   # or {file: roads.txt}
      goals: [0, 2, 8]           # goal vertices
      params: {D: 2}
    # model: {file: net.hdmn, observed: [o0]}       # ... or a model file
    scenarios: {count: 5, T: 40, seed: 100}         # or {files: [a.traj, b.traj]}
    algorithms:
      - {name: ijgp_rbpf, i: 2, w: 1, N: [100, 200]}
      - {name: ijgp_s, i: [1, 2]}
    seeds: [0]
    metrics: [goal_accuracy, route_fp, route_fn, rejection_rate, ess]

List-valued algorithm parameters expand to a grid.  Relative paths are
resolved against the config file.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .errors import HDMNError, ModelError
from .exact import exact_filter
from .ijgp import ijgp_s_filter
from .modelfile import load as load_model
from .network import DynamicMixedNetwork
from .random_models import sample_dbn
from .rbpf import bootstrap_filter, ijgp_rbpf_filter

CONFIG_VERSION = 1
ALGORITHMS = ("exact", "ijgp_s", "ijgp_rbpf", "bootstrap")
ALGO_PARAMS = {"exact": (), "ijgp_s": ("i",), "ijgp_rbpf": ("i", "w", "N"), "bootstrap": ("N",)}
METRICS = ("goal_accuracy", "route_fp", "route_fn", "rejection_rate", "ess")
KEY_COLUMNS = ("variant", "algorithm", "i", "w", "N", "seed", "scenario")
DEFAULTS = {"i": 2, "w": 1, "N": 100}


class ConfigError(HDMNError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class Cell:
    variant: str
    algorithm: str
    params: tuple
    seed: int
    scenario: int

    def key(self) -> dict:
        p = dict(self.params)
        return {"variant": self.variant, "algorithm": self.algorithm, "i": p.get("i"), "w": p.get("w"),
                "N": p.get("N"), "seed": self.seed, "scenario": self.scenario}


@dataclass
class ExperimentConfig:
    model: dict
    scenarios: dict
    algorithms: list[dict]
    seeds: list[int] = field(default_factory=lambda: [0])
    metrics: list[str] = field(default_factory=lambda: list(METRICS))
    base_dir: Path = Path(".")

    @classmethod
    def from_dict(cls, d: dict, base_dir: str | Path = ".") -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a mapping")
        if d.get("version") != CONFIG_VERSION:
            raise ConfigError(f"config needs 'version: {CONFIG_VERSION}'")
        unknown = set(d) - {"version", "model", "scenarios", "algorithms", "seeds", "metrics"}
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        cfg = cls(model=dict(d.get("model") or {}), scenarios=dict(d.get("scenarios") or {}),
                  algorithms=list(d.get("algorithms") or []), seeds=[int(s) for s in d.get("seeds", [0])],
                  metrics=list(d.get("metrics", METRICS)), base_dir=Path(base_dir))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        return cls.from_dict(yaml.safe_load(path.read_text()), path.parent)

    def path(self, p: str) -> Path:
        q = Path(p)
        return q if q.is_absolute() else self.base_dir / q

    @property
    def is_transport(self) -> bool:
        return "file" not in self.model

    @property
    def variants(self) -> list[str]:
        return list(self.model.get("variants", ["model1"])) if self.is_transport else ["file"]

    def validate(self) -> None:
        from .transport.model import VARIANTS
        if self.is_transport:
            bad = [v for v in self.variants if v not in VARIANTS]
            if bad:
                raise ConfigError(f"unknown variants {bad}")
            roads = self.model.get("roads", {"grid": {}})
            if "file" in roads and not self.path(roads["file"]).exists():
                raise ConfigError(f"roads file {roads['file']} does not exist")
            if len(self.model.get("goals", [0, 2, 8])) < 2:
                raise ConfigError("need at least two goals")
        elif not self.path(self.model["file"]).exists():
            raise ConfigError(f"model file {self.model['file']} does not exist")
        if "files" in self.scenarios:
            for f in self.scenarios["files"]:
                if not self.path(f).exists():
                    raise ConfigError(f"scenario file {f} does not exist")
            if not self.is_transport:
                raise ConfigError("scenario files are trajectory files of the travel model")
        else:
            if int(self.scenarios.get("count", 1)) < 1 or int(self.scenarios.get("T", 20)) < 1:
                raise ConfigError("scenario count and T must be >= 1")
        if not self.algorithms:
            raise ConfigError("at least one algorithm is required")
        for a in self.algorithms:
            name = a.get("name")
            if name not in ALGORITHMS:
                raise ConfigError(f"unknown algorithm {name!r}; expected one of {ALGORITHMS}")
            extra = set(a) - {"name", *ALGO_PARAMS[name]}
            if extra:
                raise ConfigError(f"{name}: unknown parameters {sorted(extra)}")
            for k in ALGO_PARAMS[name]:
                vals = a.get(k, DEFAULTS[k])
                for v in vals if isinstance(vals, list) else [vals]:
                    low = 0 if k == "w" else 1
                    if not isinstance(v, int) or v < low:
                        raise ConfigError(f"{name}: {k} must be an integer >= {low}")
        if not self.seeds:
            raise ConfigError("seed list is empty")
        bad = [m for m in self.metrics if m not in METRICS]
        if bad:
            raise ConfigError(f"unknown metrics {bad}")

    def n_scenarios(self) -> int:
        return len(self.scenarios["files"]) if "files" in self.scenarios else int(self.scenarios.get("count", 1))

    def cells(self) -> list[Cell]:
        out = []
        for variant in self.variants:
            for a in self.algorithms:
                names = ALGO_PARAMS[a["name"]]
                grids = [a.get(k, DEFAULTS[k]) for k in names]
                grids = [g if isinstance(g, list) else [g] for g in grids]
                for combo in itertools.product(*grids):
                    params = tuple(zip(names, combo))
                    for seed in self.seeds:
                        for sc in range(self.n_scenarios()):
                            out.append(Cell(variant, a["name"], params, seed, sc))
        return out

    def to_dict(self) -> dict:
        return {"version": CONFIG_VERSION, "model": self.model, "scenarios": self.scenarios,
                "algorithms": self.algorithms, "seeds": self.seeds, "metrics": self.metrics}


# -- model and scenario materialisation -----------------------------------------------------------

def build_roads(cfg: ExperimentConfig):
    from .transport.roads import grid_graph, read_roads
    roads = cfg.model.get("roads", {"grid": {}})
    if "file" in roads:
        return read_roads(cfg.path(roads["file"]))
    g = roads.get("grid", {})
    return grid_graph(int(g.get("nx", 3)), int(g.get("ny", 3)), float(g.get("spacing", 200.0)))


def build_models(cfg: ExperimentConfig) -> dict:
    """Variant name -> travel model (or the loaded network for model files)."""
    if not cfg.is_transport:
        m = load_model(cfg.path(cfg.model["file"]))
        if not isinstance(m, DynamicMixedNetwork):
            raise ConfigError("experiment model files must be dynamic")
        return {"file": m}
    from .transport.model import TransportParams, build_transport_model, default_goals
    graph = build_roads(cfg)
    goals = default_goals(graph, cfg.model.get("goals", [0, 2, 8]))
    try:
        params = TransportParams(**cfg.model.get("params", {}))
    except TypeError as exc:
        raise ConfigError(f"bad model params: {exc}") from None
    return {v: build_transport_model(graph, goals, params, v) for v in sorted(set(cfg.variants) | {"model1"})}


def build_scenarios(cfg: ExperimentConfig, models: dict) -> list:
    """Trajectories (travel model) or (states, observations) pairs (model files)."""
    if "files" in cfg.scenarios:
        from .transport.io import read_trajectory
        return [read_trajectory(cfg.path(f)) for f in cfg.scenarios["files"]]
    T, base = int(cfg.scenarios.get("T", 20)), int(cfg.scenarios.get("seed", 0))
    if cfg.is_transport:
        from .transport.simulate import simulate
        return [simulate(models["model1"], T, base + k, scenario=f"s{k}") for k in range(cfg.n_scenarios())]
    dmn = models["file"]
    names = set(cfg.model.get("observed", []))
    obs_ids = [v for v in dmn.state_ids if dmn.variable(v).name in names]
    out = []
    for k in range(cfg.n_scenarios()):
        states = sample_dbn(dmn, T, base + k)
        out.append((states, [{v: s[v] for v in obs_ids} for s in states]))
    return out


# -- cell execution -----------------------------------------------------------------------------

def run_filter(dmn: DynamicMixedNetwork, observations, algorithm: str, params: dict, seed: int):
    if algorithm == "exact":
        return exact_filter(dmn, observations)
    if algorithm == "ijgp_s":
        return ijgp_s_filter(dmn, observations, i=params["i"])
    if algorithm == "ijgp_rbpf":
        return ijgp_rbpf_filter(dmn, observations, i=params["i"], w=params["w"], N=params["N"], seed=seed)
    if algorithm == "bootstrap":
        return bootstrap_filter(dmn, observations, N=params["N"], seed=seed)
    raise ConfigError(f"unknown algorithm {algorithm!r}")


def _nan() -> float:
    return float("nan")


def cell_metrics(output) -> dict:
    out = {"rejection_rate": _nan(), "ess": _nan()}
    metrics = getattr(output, "metrics", None)
    if metrics:
        draws = sum(m.get("draws", 0) for m in metrics)
        rej = sum(m.get("rejections", 0) for m in metrics)
        out["rejection_rate"] = rej / draws if draws else 0.0
        out["ess"] = float(np.mean([m["ess"] for m in metrics]))
    return out


_STATE: dict[str, Any] = {}


def _init_worker(cfg_dict, base_dir):
    cfg = ExperimentConfig.from_dict(cfg_dict, base_dir)
    models = build_models(cfg)
    _STATE.update(cfg=cfg, models=models, scenarios=build_scenarios(cfg, models))


def _run_cell(cell: Cell) -> tuple[dict, float]:
    cfg, models, scenarios = _STATE["cfg"], _STATE["models"], _STATE["scenarios"]
    row = dict(cell.key())
    row.update({m: _nan() for m in METRICS})
    row["status"] = "ok"
    t0 = time.perf_counter()
    try:
        model = models[cell.variant]
        sc = scenarios[cell.scenario]
        if cfg.is_transport:
            from .transport.scoring import predict_and_score
            output = run_filter(model.dmn, sc.observations(model), cell.algorithm, dict(cell.params), cell.seed)
            row.update(predict_and_score(model, output, sc).as_dict())
            row.pop("trips", None)
        else:
            output = run_filter(model, sc[1], cell.algorithm, dict(cell.params), cell.seed)
        row.update(cell_metrics(output))
    except Exception as exc:  # a failing cell is reported, the run continues
        row["status"] = f"FAILED: {type(exc).__name__}: {exc}"
    return row, time.perf_counter() - t0


# -- reports -------------------------------------------------------------------------------------

@dataclass
class Report:
    columns: list[str]
    rows: list[dict]
    timings: list[float]

    @property
    def failed(self) -> int:
        return sum(1 for r in self.rows if r["status"] != "ok")

    def average_row(self) -> dict:
        avg = {c: "" for c in self.columns}
        avg["variant"] = "Average"
        ok = [r for r in self.rows if r["status"] == "ok"]
        for m in self.columns:
            if m in METRICS:
                vals = [r[m] for r in ok if r[m] is not None and not math.isnan(r[m])]
                avg[m] = float(np.mean(vals)) if vals else _nan()
        avg["status"] = f"{len(ok)}/{len(self.rows)} ok"
        return avg

    def to_json(self) -> str:
        def clean(r):
            return {c: (None if isinstance(r[c], float) and math.isnan(r[c]) else r[c]) for c in self.columns}
        doc = {"schema": "hdmn-report/1", "columns": self.columns,
               "rows": [clean(r) for r in self.rows], "average": clean(self.average_row())}
        return json.dumps(doc, indent=2, sort_keys=False) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows + [self.average_row()]:
            w.writerow(["" if v is None or (isinstance(v, float) and math.isnan(v)) else
                        (f"{v:.6g}" if isinstance(v, float) else v) for v in (r[c] for c in self.columns)])
        return buf.getvalue()

    def to_table(self, with_time: bool = True) -> str:
        cols = list(self.columns) + (["time_s"] if with_time else [])
        rows = [dict(r, time_s=t) for r, t in zip(self.rows, self.timings)]
        avg = self.average_row()
        avg["time_s"] = float(np.mean(self.timings)) if self.timings else _nan()
        rows.append(avg)

        def fmt(v):
            if v is None or v == "":
                return "-" if v is None else ""
            if isinstance(v, float):
                return "-" if math.isnan(v) else f"{v:.3f}"
            return str(v)
        cells = [[fmt(r[c]) for c in cols] for r in rows]
        widths = [max(len(c), *(len(x[k]) for x in cells)) for k, c in enumerate(cols)]
        lines = ["  ".join(c.ljust(w) for c, w in zip(cols, widths)).rstrip()]
        lines.append("  ".join("-" * w for w in widths))
        for k, x in enumerate(cells):
            if k == len(cells) - 1:
                lines.append("  ".join("-" * w for w in widths))
            lines.append("  ".join(v.ljust(w) for v, w in zip(x, widths)).rstrip())
        return "\n".join(lines) + "\n"

    def render(self, fmt: str) -> str:
        return {"json": self.to_json, "csv": self.to_csv, "table": self.to_table}[fmt]()


def run_experiment(cfg: ExperimentConfig, workers: int = 1, out: str | Path | None = None) -> Report:
    """Run every cell (ordered merge, optionally in parallel) and write report files to ``out``."""
    cells = cfg.cells()
    if workers <= 1:
        _init_worker(cfg.to_dict(), str(cfg.base_dir))
        results = [_run_cell(c) for c in cells]
    else:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                                 initargs=(cfg.to_dict(), str(cfg.base_dir))) as ex:
            results = list(ex.map(_run_cell, cells))
    columns = list(KEY_COLUMNS) + [m for m in METRICS if m in cfg.metrics] + ["status"]
    report = Report(columns, [r for r, _ in results], [t for _, t in results])
    if out is not None:
        write_report(report, out)
    return report


def write_report(report: Report, out: str | Path) -> None:
    """report.json / report.csv are deterministic; wall times go to timings.csv and report.txt."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json())
    (out / "report.csv").write_text(report.to_csv())
    (out / "report.txt").write_text(report.to_table())
    lines = ["row,time_s"] + [f"{k},{t:.6f}" for k, t in enumerate(report.timings)]
    (out / "timings.csv").write_text("\n".join(lines) + "\n")


def validate_report(doc: dict) -> None:
    """Schema check for a parsed ``report.json``."""
    if doc.get("schema") != "hdmn-report/1":
        raise ModelError("not an hdmn-report/1 document")
    cols = doc.get("columns")
    if not isinstance(cols, list) or not set(KEY_COLUMNS) <= set(cols) or "status" not in cols:
        raise ModelError("report columns incomplete")
    for r in doc.get("rows", []) + [doc.get("average", {})]:
        if list(r) != cols:
            raise ModelError("row keys do not match the columns")
        for m in METRICS:
            if m in r and r[m] is not None and not isinstance(r[m], (int, float)):
                raise ModelError(f"metric {m} must be numeric or null")
