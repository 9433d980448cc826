"""Delimited tables and matplotlib figures written next to each other."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ..losses import TERMS  # noqa: E402

plt.rcParams["svg.hashsalt"] = "neuroplan"
plt.rcParams["svg.fonttype"] = "none"

STEP_COLUMNS = ("t", "x", "y", "v", "h", "a", "yaw_rate") + TERMS + ("weighted",)


def _header(f, config: dict | None, extra: dict | None = None):
    if config is not None:
        f.write("# run_config: " + json.dumps(config, sort_keys=True) + "\n")
    for k, v in (extra or {}).items():
        f.write(f"# {k}: {json.dumps(v)}\n")


def write_step_table(path, traj, controls, per_step, weights, config=None, total=None):
    """One row per state (T+1 rows). Row 0 has no control and no cost."""
    wv = weights.vector
    T = len(traj) - 1
    with open(path, "w", newline="") as f:
        _header(f, config, {"total_loss": total} if total is not None else None)
        w = csv.writer(f)
        w.writerow(STEP_COLUMNS)
        for t in range(T + 1):
            row = [t] + [repr(float(c)) for c in traj.states[t]]
            if t == 0:
                row += [""] * (2 + len(TERMS) + 1)
            else:
                terms = [float(per_step[k][t - 1]) for k in TERMS]
                row += [repr(float(c)) for c in controls[t - 1]]
                row += [repr(c) for c in terms]
                row.append(repr(float(t * np.dot(wv, terms))))
            w.writerow(row)


def read_table(path) -> tuple[list[str], list[list[str]], dict]:
    meta = {}
    with open(path) as f:
        lines = f.readlines()
    body = []
    for line in lines:
        if line.startswith("# "):
            k, _, v = line[2:].partition(": ")
            meta[k] = json.loads(v)
        else:
            body.append(line)
    rows = list(csv.reader(body))
    return rows[0], rows[1:], meta


def write_loss_table(path, history, config=None, label="epoch"):
    with open(path, "w", newline="") as f:
        _header(f, config)
        w = csv.writer(f)
        w.writerow((label, "loss"))
        for i, v in enumerate(history, start=1):
            w.writerow((i, repr(float(v))))


def _save(fig, path, config):
    meta = {"Date": None}
    if config is not None:
        meta["Description"] = json.dumps(config, sort_keys=True)
    fig.savefig(path, format="svg", metadata=meta)
    plt.close(fig)


def plot_scene(path, scenario, traj=None, title=None, config=None):
    """Boundaries, commanded centerline, objects, trajectory and start marker.
    Each polyline is a single SVG path inside a group named after it."""
    fig, ax = plt.subplots(figsize=(7, 5))
    for name, poly, style in (("left_boundary", scenario.left_boundary, dict(color="0.15", lw=1.5)),
                              ("right_boundary", scenario.right_boundary, dict(color="0.15", lw=1.5)),
                              ("centerline", scenario.centerline, dict(color="tab:orange", lw=1.0, ls="--"))):
        (ln,) = ax.plot(poly.points[:, 0], poly.points[:, 1], **style)
        ln.set_gid(name)
    real = scenario.objects.real
    if len(real):
        sc = ax.scatter(real[:, 0], real[:, 1], s=60, marker="s", color="tab:red", zorder=3)
        sc.set_gid("objects")
    if traj is not None:
        (ln,) = ax.plot(traj.x, traj.y, color="tab:blue", lw=2.0)
        ln.set_gid("trajectory")
        (st,) = ax.plot([traj.x[0]], [traj.y[0]], "o", color="tab:green", ms=7, zorder=4)
        st.set_gid("start")
        pts = np.column_stack([traj.x, traj.y])
    else:
        pts = np.zeros((1, 2))
    lo = np.minimum(pts.min(0), real.min(0) if len(real) else pts.min(0)) - 12.0
    hi = np.maximum(pts.max(0), real.max(0) if len(real) else pts.max(0)) + 12.0
    ax.set_xlim(lo[0], hi[0])
    ax.set_ylim(lo[1], hi[1])
    ax.set_aspect("equal", adjustable="box")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title(title or scenario.id, fontsize=10)
    ax.spines[["top", "right"]].set_visible(False)
    fig.tight_layout()
    _save(fig, path, config)


def plot_loss(path, history, label="epoch", config=None):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    (ln,) = ax.plot(np.arange(1, len(history) + 1), history, color="tab:blue", lw=1.2)
    ln.set_gid("loss_curve")
    if len(history) and min(history) > 0:
        ax.set_yscale("log")
    ax.set_xlabel(label)
    ax.set_ylabel("planner loss")
    ax.spines[["top", "right"]].set_visible(False)
    fig.tight_layout()
    _save(fig, path, config)


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))
