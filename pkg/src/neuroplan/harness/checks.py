"""Finite-difference checks of the analytic gradients, grouped by pipeline stage."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import autodiff as ad
from .. import losses as L
from ..dynamics import VehicleState, rollout, rollout_traced, scale_controls
from ..model import ModelDims, init_params, trace_with, unflatten
from ..scenarios import GenConfig, make_batch, synthesize

TOLERANCE = 1e-4
TINY_DIMS = ModelDims(polyline_points=4, object_slots=2, polyline_embed=3, object_embed=3, hidden=4, mlp_hidden=4)
TERM_NAMES = L.TERMS


@dataclass
class GroupResult:
    name: str
    max_rel_error: float = 0.0
    checked: int = 0
    skipped: int = 0
    worst_seed: int | None = None
    per_term: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < TOLERANCE

    def add(self, chk: ad.GradCheck, seed: int, term: str | None = None):
        if chk.max_rel_error > self.max_rel_error or self.worst_seed is None:
            self.max_rel_error = max(self.max_rel_error, chk.max_rel_error)
            self.worst_seed = seed
        self.checked += chk.checked
        self.skipped += chk.skipped
        if term is not None:
            self.per_term[term] = max(self.per_term.get(term, 0.0), chk.max_rel_error)


def _scene(seed, k=2, horizon=6):
    return synthesize(seed, GenConfig(k=k, horizon=horizon))


def _random_states(rng, scen):
    """A plausible (T, 4) state sequence: a rollout under random controls."""
    raw = rng.uniform(-0.9, 0.9, size=(scen.horizon, 2))
    u = scale_controls(raw, scen.a_max, scen.yaw_rate_max)
    return rollout(VehicleState(0.0, 0.0, scen.v0, scen.h0), u, scen.dt).states[1:]


def term_function(name, batch, w):
    """Scalar t-ramped sum of one term, as a function of (T, 4) states."""
    ramp = np.arange(1, batch.horizon + 1, dtype=float)

    def f(tape, z):
        x, y, v, h = (z[:, i].reshape(1, -1) for i in range(4))
        if name == "cte":
            val, _ = L.e_cte(x, y, batch.center_mid[:, None])
        elif name == "he":
            _, idx = L.e_cte(x, y, batch.center_mid[:, None])
            val = L.e_he(h, batch.center_heading[:, None, :].repeat(batch.horizon, axis=1), idx)
        elif name == "ve":
            val = L.e_ve(v, batch.v_d[:, None])
        elif name == "collision":
            val = L.e_collision(x, y, batch.objects[:, None], batch.object_mask[:, None], w.collision_shift)
        else:
            val = L.e_boundary(x, y, batch.left_mid[:, None], batch.right_mid[:, None], w.boundary_shift)
        return (val * ramp).sum()
    return f


def check_terms(seeds, w=None) -> GroupResult:
    w = w or L.LossWeights()
    res = GroupResult("loss terms")
    for seed in seeds:
        rng = np.random.default_rng(seed)
        scen = _scene(seed)
        batch = make_batch([scen])
        states = _random_states(rng, scen)
        for name in TERM_NAMES:
            z = states.copy()
            if name == "collision" and scen.objects.mask.any():
                # park the points a few metres from real objects so the term is active
                real = scen.objects.real
                z[:, :2] = real[rng.integers(len(real), size=len(z))] + rng.normal(0, 3.0, (len(z), 2))
            res.add(ad.grad_check_detail(term_function(name, batch, w), z, skip_kinks=True), seed, name)
    return res


def rollout_function(scen, w):
    s0 = VehicleState(0.0, 0.0, scen.v0, scen.h0)

    def f(tape, raw):
        u = scale_controls(raw, scen.a_max, scen.yaw_rate_max)
        return L.planner_loss(rollout_traced(s0, u, scen.dt), scen, w).total
    return f


def check_rollout(seeds, w=None) -> GroupResult:
    w = w or L.LossWeights()
    res = GroupResult("rollout + loss")
    for seed in seeds:
        rng = np.random.default_rng(seed)
        scen = _scene(seed)
        raw = rng.uniform(-0.9, 0.9, size=(scen.horizon, 2))
        res.add(ad.grad_check_detail(rollout_function(scen, w), raw, skip_kinks=True), seed)
    return res


def model_function(batch, dims, w):
    def f(tape, flat):
        tp = trace_with(unflatten(flat, dims), dims, batch, tape)
        return L.batch_loss(*tp.stacked(), batch, w).total.sum()
    return f


def check_model(seeds, w=None, dims=TINY_DIMS) -> GroupResult:
    w = w or L.LossWeights()
    res = GroupResult("model parameters")
    for seed in seeds:
        batch = make_batch([_scene(seed, k=dims.object_slots)])
        x = init_params(dims, seed).flat()
        res.add(ad.grad_check_detail(model_function(batch, dims, w), x, skip_kinks=True), seed)
    return res


def run_all(seeds=range(20), w=None) -> list[GroupResult]:
    seeds = list(seeds)
    return [check_terms(seeds, w), check_rollout(seeds, w), check_model(seeds, w)]
