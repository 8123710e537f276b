"""Command line: ``hdmn {simulate,filter,score,experiment}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from .errors import HDMNError
from .experiment import (
    ALGORITHMS,
    DEFAULTS,
    ExperimentConfig,
    Report,
    build_models,
    build_roads,
    run_experiment,
    run_filter,
)

log = logging.getLogger("hdmn")

BELIEFS_SCHEMA = "hdmn-beliefs/1"
DISCRETE_OUT = ("g", "r", "a", "f")


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.seeds = [args.seed]
    return cfg


def _emit(text: str) -> None:
    sys.stdout.write(text)


def _rows_text(rows: list[dict], fmt: str) -> str:
    """Render a list of flat dicts as an aligned table, CSV or JSON."""
    if fmt == "json":
        return json.dumps(rows, indent=2) + "\n"
    cols = list(rows[0]) if rows else []

    def cell(v):
        return f"{v:.6g}" if isinstance(v, float) else str(v)
    if fmt == "csv":
        return "\n".join([",".join(cols)] + [",".join(cell(r[c]) for c in cols) for r in rows]) + "\n"
    body = [[cell(r[c]) for c in cols] for r in rows]
    widths = [max(len(c), *(len(b[k]) for b in body)) if body else len(c) for k, c in enumerate(cols)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(cols, widths)).rstrip()]
    lines += ["  ".join(v.ljust(w) for v, w in zip(b, widths)).rstrip() for b in body]
    return "\n".join(lines) + "\n"


# -- simulate -----------------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    from .transport.io import write_trajectory
    from .transport.roads import write_roads
    from .transport.simulate import simulate
    cfg = ExperimentConfig.load(args.config)
    if not cfg.is_transport:
        raise HDMNError("simulate needs a travel-model config")
    models = build_models(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_roads(build_roads(cfg), out / "roads.txt")
    T = int(cfg.scenarios.get("T", 20))
    base = args.seed if args.seed is not None else int(cfg.scenarios.get("seed", 0))
    rows = []
    for k in range(cfg.n_scenarios()):
        tr = simulate(models["model1"], T, base + k, scenario=f"s{k}")
        path = out / f"s{k}.traj"
        write_trajectory(tr, path)
        rows.append({"scenario": f"s{k}", "seed": base + k, "ticks": len(tr), "trips": len(tr.trips()),
                     "file": path.name})
    _emit(_rows_text(rows, args.format))
    return 0


# -- filter ------------------------------------------------------------------------------------

def beliefs_to_json(model, output, algorithm: str, params: dict) -> dict:
    names = {v: k for k, v in model.ids.items()}
    metrics = getattr(output, "metrics", None) or []
    ticks = []
    for k, b in enumerate(getattr(output, "beliefs", output)):
        marg = {names[v]: [float(x) for x in np.asarray(p)] for v, p in sorted(b.marginals.items())
                if names.get(v) in DISCRETE_OUT}
        ticks.append({"t": k, "marginals": marg, "metrics": metrics[k] if k < len(metrics) else {}})
    return {"schema": BELIEFS_SCHEMA, "variant": model.variant, "algorithm": algorithm,
            "params": params, "ticks": ticks}


def beliefs_from_json(model, doc: dict) -> list:
    if doc.get("schema") != BELIEFS_SCHEMA:
        raise HDMNError(f"not an {BELIEFS_SCHEMA} document")
    if doc.get("variant") != model.variant:
        raise HDMNError(f"beliefs are for {doc.get('variant')}, model is {model.variant}")
    return [SimpleNamespace(t=tk["t"], marginals={model.ids[n]: np.array(p) for n, p in tk["marginals"].items()})
            for tk in doc["ticks"]]


def _filter_params(args) -> dict:
    return {"i": args.i, "w": args.w, "N": args.N}


def cmd_filter(args) -> int:
    from .transport.io import read_trajectory
    cfg = _load_config(args)
    model = build_models(cfg)[args.variant]
    traj = read_trajectory(args.traj)
    params = _filter_params(args)
    seed = args.seed if args.seed is not None else cfg.seeds[0]
    output = run_filter(model.dmn, traj.observations(model), args.algorithm, params, seed)
    doc = beliefs_to_json(model, output, args.algorithm, params)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "beliefs.json").write_text(json.dumps(doc) + "\n")
    rows = []
    for tk in doc["ticks"]:
        m = tk["marginals"]
        row = {"t": tk["t"], "map_edge": int(np.argmax(m["a"])), "true_edge": int(traj.edge[tk["t"]])}
        if "g" in m:
            row.update(map_goal=int(np.argmax(m["g"])), p_goal=float(np.max(m["g"])),
                       true_goal=int(traj.goal[tk["t"]]))
        if "ess" in tk["metrics"]:
            row["ess"] = float(tk["metrics"]["ess"])
        rows.append(row)
    _emit(_rows_text(rows, args.format))
    return 0


# -- score -------------------------------------------------------------------------------------

def cmd_score(args) -> int:
    from .transport.io import read_trajectory
    from .transport.scoring import predict_and_score
    cfg = _load_config(args)
    model = build_models(cfg)[args.variant]
    traj = read_trajectory(args.traj)
    beliefs = beliefs_from_json(model, json.loads(Path(args.beliefs).read_text()))
    rep = predict_and_score(model, beliefs, traj)
    rows = [{"start": s.start, "stop": s.stop, "true_goal": s.true_goal, "predicted_goal": s.predicted_goal,
             "route_fp": s.route_fp, "route_fn": s.route_fn} for s in rep.trips]
    summary = rep.as_dict()
    if args.format == "json":
        _emit(json.dumps({"summary": summary, "trips": rows}, indent=2) + "\n")
    else:
        _emit(_rows_text(rows + [{"start": "all", "stop": "", "true_goal": "",
                                  "predicted_goal": f"{summary['goal_accuracy']:.1f}%",
                                  "route_fp": summary["route_fp"], "route_fn": summary["route_fn"]}],
                         args.format))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "score.json").write_text(json.dumps({"summary": summary, "trips": rows}, indent=2) + "\n")
    return 0


# -- experiment --------------------------------------------------------------------------------

def cmd_experiment(args) -> int:
    cfg = _load_config(args)
    report: Report = run_experiment(cfg, workers=args.workers, out=args.out)
    _emit(report.render(args.format))
    if report.failed:
        for r in report.rows:
            if r["status"] != "ok":
                log.error("cell %s/%s seed=%s scenario=%s: %s", r["variant"], r["algorithm"], r["seed"],
                          r["scenario"], r["status"])
        return 3
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hdmn", description="Filtering in hybrid dynamic mixed networks.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_required=False):
        sp.add_argument("--config", required=True, help="experiment/model config (YAML)")
        sp.add_argument("--seed", type=int, default=None, help="override the seed")
        sp.add_argument("--out", required=out_required, default=None, help="output directory")
        sp.add_argument("--format", choices=("table", "csv", "json"), default="table")
        sp.add_argument("-v", "--verbose", action="store_true")

    s = sub.add_parser("simulate", help="sample scenario trajectories")
    common(s, out_required=True)
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("filter", help="filter one trajectory file")
    common(f, out_required=True)
    f.add_argument("--traj", required=True)
    f.add_argument("--variant", default="model1", choices=("model1", "model2", "model3"))
    f.add_argument("--algorithm", default="ijgp_rbpf", choices=ALGORITHMS)
    f.add_argument("--i", type=int, default=DEFAULTS["i"])
    f.add_argument("--w", type=int, default=DEFAULTS["w"])
    f.add_argument("--N", type=int, default=DEFAULTS["N"])
    f.set_defaults(func=cmd_filter)

    c = sub.add_parser("score", help="score saved beliefs against a trajectory")
    common(c)
    c.add_argument("--traj", required=True)
    c.add_argument("--beliefs", required=True)
    c.add_argument("--variant", default="model1", choices=("model1", "model2", "model3"))
    c.set_defaults(func=cmd_score)

    e = sub.add_parser("experiment", help="run a parameter grid")
    common(e)
    e.add_argument("--workers", type=int, default=1)
    e.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="hdmn: %(message)s")
    if getattr(args, "N", 1) < 1 or getattr(args, "i", 1) < 1 or getattr(args, "w", 0) < 0:
        log.error("need N >= 1, i >= 1 and w >= 0")
        return 2
    try:
        return args.func(args)
    except (HDMNError, OSError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
