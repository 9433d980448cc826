"""Pass/fail checks for the case-study fixtures.

Each fixture names its predicate and parameters; a predicate receives the
scenario, the planned trajectory and the per-step loss terms and returns
``(passed, metrics)``.
"""
from __future__ import annotations

import math

import numpy as np

from ..geometry import signed_side

PREDICATES = {}


def predicate(name):
    def deco(fn):
        PREDICATES[name] = fn
        return fn
    return deco


def evaluate(scenario, traj, per_step) -> tuple[bool, dict]:
    spec = scenario.predicate or {}
    name = spec.get("name")
    if name not in PREDICATES:
        raise KeyError(f"scenario {scenario.id} names unknown predicate {name!r}")
    return PREDICATES[name](scenario, traj, per_step, **spec.get("params", {}))


def clearance(scenario, traj) -> float:
    real = scenario.objects.real
    if len(real) == 0:
        return math.inf
    pts = traj.states[:, :2]
    d = np.hypot(pts[:, None, 0] - real[None, :, 0], pts[:, None, 1] - real[None, :, 1])
    return float(d.min())


def sidedness_ok(scenario, traj) -> bool:
    """Every trajectory point lies right of the left boundary and left of the right one."""
    for p in traj.states[:, :2]:
        if signed_side(scenario.left_boundary, p) >= 0 or signed_side(scenario.right_boundary, p) <= 0:
            return False
    return True


def _speed_error(traj, v_d, last):
    return float(np.abs(traj.v[-last:] - v_d).mean())


@predicate("follow_centerline")
def follow_centerline(s, traj, per_step, cte_from_step=5, cte_max=1.0, last_steps=10, speed_tol=1.0):
    cte = float(per_step["cte"][cte_from_step - 1:].mean())
    ve = _speed_error(traj, s.v_d, last_steps)
    return cte < cte_max and ve < speed_tol, {"mean_cte": cte, "mean_speed_error": ve}


@predicate("lane_change")
def lane_change(s, traj, per_step, final_cte_max=1.0):
    final = float(per_step["cte"][-1])
    sides = sidedness_ok(s, traj)
    return final < final_cte_max and sides, {"final_cte": final, "sidedness": sides}


@predicate("go_around")
def go_around(s, traj, per_step, clearance_min=2.0, last_steps=10, speed_tol=2.0):
    c = clearance(s, traj)
    ve = _speed_error(traj, s.v_d, last_steps)
    return c > clearance_min and ve < speed_tol, {"clearance": c, "mean_speed_error": ve}


@predicate("lane_change_clear")
def lane_change_clear(s, traj, per_step, final_cte_max=1.0, clearance_min=2.0):
    final = float(per_step["cte"][-1])
    c = clearance(s, traj)
    return final < final_cte_max and c > clearance_min, {"final_cte": final, "clearance": c}


@predicate("red_light")
def red_light(s, traj, per_step, final_speed_max=0.5, row_point=(0.0, 0.0), row_normal=(1.0, 0.0)):
    along = (traj.states[:, :2] - np.asarray(row_point)) @ np.asarray(row_normal)
    crossed = bool((along >= 0).any())
    v_final = abs(float(traj.v[-1]))
    return v_final < final_speed_max and not crossed, {
        "final_speed": v_final, "max_progress_past_row": float(along.max()), "crossed": crossed}


@predicate("reverse_then_forward")
def reverse_then_forward(s, traj, per_step, early_steps=10, reverse_speed=-0.1, heading_error_max_deg=30.0):
    v_early = float(traj.v[1:early_steps + 1].min())
    he = math.degrees(float(per_step["he"][-1]))
    return v_early < reverse_speed and he < heading_error_max_deg, {
        "min_early_speed": v_early, "final_heading_error_deg": he}
