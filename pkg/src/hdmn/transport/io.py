"""Trajectory files.

Format ``hdmn-traj/1``: a header line, ``#`` comment lines carrying
``key=value`` metadata, a column line, then one whitespace-separated record
per tick::

    hdmn-traj/1
    # seed=3 scenario=s0 dt=5.0 gps_sd=10.0 speed_obs_sd=1.0
    tick x y speed true_edge true_goal true_route true_offset true_speed d w f sw eq
    0 200.0 13.5 0.4 3 0 2 100.1 0.2 1 0 0 0 1
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..errors import ModelError
from .simulate import Trajectory

TRAJ_HEADER = "hdmn-traj/1"
COLUMNS = ("tick", "x", "y", "speed", "true_edge", "true_goal", "true_route",
           "true_offset", "true_speed", "d", "w", "f", "sw", "eq")
_FIELD = {"x": "obs_x", "y": "obs_y", "speed": "obs_speed", "true_edge": "edge", "true_goal": "goal",
          "true_route": "route", "true_offset": "offset", "true_speed": "speed"}
_INT = {"tick", "true_edge", "true_goal", "true_route", "d", "w", "f", "sw", "eq"}


def format_trajectory(traj: Trajectory) -> str:
    meta = f"# seed={int(traj.seed)} scenario={traj.scenario or '-'} dt={float(traj.dt)!r} " \
           f"gps_sd={float(traj.gps_sd)!r} speed_obs_sd={float(traj.speed_obs_sd)!r}"
    lines = [TRAJ_HEADER, meta, " ".join(COLUMNS)]
    for t in range(len(traj)):
        row = []
        for c in COLUMNS:
            if c == "tick":
                row.append(str(t))
                continue
            v = getattr(traj, _FIELD.get(c, c))[t]
            row.append(str(int(v)) if c in _INT else repr(float(v)))
        lines.append(" ".join(row))
    return "\n".join(lines) + "\n"


def write_trajectory(traj: Trajectory, path: str | Path) -> None:
    Path(path).write_text(format_trajectory(traj))


def read_trajectory(path: str | Path) -> Trajectory:
    lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines or lines[0] != TRAJ_HEADER:
        raise ModelError(f"{path}: missing '{TRAJ_HEADER}' header")
    meta = {}
    body = []
    for ln in lines[1:]:
        if ln.startswith("#"):
            for item in ln[1:].split():
                k, _, v = item.partition("=")
                meta[k] = v
        else:
            body.append(ln.split())
    if not body or tuple(body[0]) != COLUMNS:
        raise ModelError(f"{path}: expected column line {' '.join(COLUMNS)!r}")
    rows = body[1:]
    if any(len(r) != len(COLUMNS) for r in rows):
        raise ModelError(f"{path}: ragged record")
    try:
        cols = {c: np.array([(int if c in _INT else float)(r[k]) for r in rows]) for k, c in enumerate(COLUMNS)}
    except ValueError as exc:
        raise ModelError(f"{path}: {exc}") from None
    if not np.array_equal(cols["tick"], np.arange(len(rows))):
        raise ModelError(f"{path}: ticks must run 0..T")
    kw = {_FIELD.get(c, c): cols[c] for c in COLUMNS if c != "tick"}
    scen = meta.get("scenario", "")
    return Trajectory(**kw, seed=int(meta.get("seed", 0)), scenario="" if scen == "-" else scen,
                      dt=float(meta.get("dt", 5.0)), gps_sd=float(meta.get("gps_sd", 0.0)),
                      speed_obs_sd=float(meta.get("speed_obs_sd", 0.0)))
