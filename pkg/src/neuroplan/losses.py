"""Composite planner objective, evaluated on the tape.

Per step t (1-based) the cost is

    alpha*cte + beta*he + gamma*ve + mu*collision + rho*boundary

and the planner loss is the sum over the horizon of t times that cost.
All term functions are vectorized: positions are tape values of any shape
``S`` and the geometry arrays broadcast against ``S + (M, 2)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .dynamics import Trajectory
from .scenarios import Scenario, SceneBatch, make_batch

TERMS = ("cte", "he", "ve", "collision", "boundary")


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 15.0
    beta: float = 9.0
    gamma: float = 11.0
    mu: float = 100.0
    rho: float = 30.0
    collision_shift: float = 5.0
    boundary_shift: float = 1.0
    cte_mode: str = "midpoint"      # "segment" measures true point-to-segment distance

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "mu", "rho", "collision_shift", "boundary_shift"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"loss weight {name} must be finite and nonnegative, got {v}")
        if self.cte_mode not in ("midpoint", "segment"):
            raise ValueError(f"unknown cte_mode {self.cte_mode!r}")

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.alpha, self.beta, self.gamma, self.mu, self.rho])

    @classmethod
    def parse(cls, text: str, **kw) -> "LossWeights":
        vals = [float(v) for v in text.split(",")]
        if len(vals) != 5:
            raise ValueError("weights need five comma-separated values: alpha,beta,gamma,mu,rho")
        return cls(*vals, **kw)


def _expand(v):
    return v.reshape(v.shape + (1,)) if isinstance(v, ad.Value) else np.asarray(v)[..., None]


def midpoint_distance(x, y, mids):
    """min over midpoints of the distance from (x, y); returns (dist, argmin)."""
    mids = np.asarray(mids, dtype=float)
    dx = _expand(x) - mids[..., 0]
    dy = _expand(y) - mids[..., 1]
    d2, idx = ad.amin(ad.square(dx) + ad.square(dy), axis=-1)
    return ad.sqrt(d2), idx


def segment_distance(x, y, segs):
    """Exact point-to-segment distance; ``segs`` has shape (..., M, 2, 2)."""
    segs = np.asarray(segs, dtype=float)
    a = segs[..., 0, :]
    ab = segs[..., 1, :] - a
    l2 = (ab * ab).sum(-1)
    ax = _expand(x) - a[..., 0]
    ay = _expand(y) - a[..., 1]
    t = (ax * ab[..., 0] + ay * ab[..., 1]) / l2
    t = ad.minimum(ad.maximum(t, 0.0), 1.0)
    ex = ax - t * ab[..., 0]
    ey = ay - t * ab[..., 1]
    d2, idx = ad.amin(ad.square(ex) + ad.square(ey), axis=-1)
    return ad.sqrt(d2), idx


def e_cte(x, y, mids):
    return midpoint_distance(x, y, mids)


def e_he(h, headings, idx):
    """|wrap(h - road heading of the segment picked by the cross-track rule)|."""
    road = np.take_along_axis(np.asarray(headings, dtype=float),
                              np.asarray(idx)[..., None], axis=-1)[..., 0] \
        if np.ndim(headings) > 1 else np.asarray(headings, dtype=float)[idx]
    diff = h - road
    return ad.abs(ad.atan2(ad.sin(diff), ad.cos(diff)))


def e_ve(v, v_d):
    return ad.abs(v - v_d)


def e_collision(x, y, objects, mask=None, shift: float = 5.0):
    """Sum over real objects of exp(shift - distance).

    Slots equal to (0, 0) are placeholders and contribute exactly zero.
    Slots are summed one by one so extra placeholders never perturb the
    rounding of the total.
    """
    objects = np.asarray(objects, dtype=float)
    if mask is None:
        mask = ~((objects[..., 0] == 0.0) & (objects[..., 1] == 0.0))
    mask = np.asarray(mask, dtype=bool)
    dx = _expand(x) - objects[..., 0]
    dy = _expand(y) - objects[..., 1]
    d = ad.sqrt(ad.square(dx) + ad.square(dy))
    arg = shift - d
    if (arg.data > 700.0).any():
        raise ad.NumericalError("e_collision", "exponent above 700")
    contrib = ad.where(np.broadcast_to(mask, d.shape), ad.exp(arg), 0.0)
    total = contrib[..., 0]
    for j in range(1, objects.shape[-2]):
        total = total + contrib[..., j]
    return total


def e_boundary(x, y, left_mids, right_mids, shift: float = 1.0, mode="midpoint"):
    dist = midpoint_distance if mode == "midpoint" else segment_distance
    d_left, _ = dist(x, y, left_mids)
    d_right, _ = dist(x, y, right_mids)
    return ad.exp(shift - d_left) + ad.exp(shift - d_right)


@dataclass
class LossBreakdown:
    """``total`` is the per-scenario loss on the tape; ``per_step`` holds the
    raw term values with shape (..., T)."""

    total: ad.Value
    per_step: dict = field(default_factory=dict)
    weights: LossWeights = field(default_factory=LossWeights)

    @property
    def value(self):
        d = self.total.data
        return float(d) if d.ndim == 0 else d.copy()

    @property
    def sums(self) -> dict:
        return {k: v.sum(axis=-1) for k, v in self.per_step.items()}

    def recompose(self) -> np.ndarray:
        """Dot product of the per-step terms with the weights and the t ramp."""
        terms = np.stack([self.per_step[k] for k in TERMS], axis=-1)
        ramp = np.arange(1, terms.shape[-2] + 1, dtype=float)
        return ((terms @ self.weights.vector) * ramp).sum(axis=-1)


def batch_loss(x, y, v, h, batch: SceneBatch, w: LossWeights | None = None) -> LossBreakdown:
    """Loss for stacked trajectories; ``x, y, v, h`` are (B, T) tape values
    holding states 1..T (the initial state carries no cost)."""
    w = w or LossWeights()
    T = x.shape[-1]
    if w.cte_mode == "midpoint":
        cte, idx = midpoint_distance(x, y, batch.center_mid[:, None])
    else:
        cte, idx = segment_distance(x, y, batch.center_seg[:, None])
    he = e_he(h, batch.center_heading[:, None, :].repeat(T, axis=1), idx)
    ve = e_ve(v, batch.v_d[:, None])
    col = e_collision(x, y, batch.objects[:, None], batch.object_mask[:, None], w.collision_shift)
    if w.cte_mode == "midpoint":
        bnd = e_boundary(x, y, batch.left_mid[:, None], batch.right_mid[:, None], w.boundary_shift)
    else:
        bnd = e_boundary(x, y, batch.left_seg[:, None], batch.right_seg[:, None], w.boundary_shift, "segment")
    step_cost = w.alpha * cte + w.beta * he + w.gamma * ve + w.mu * col + w.rho * bnd
    ramp = np.arange(1, T + 1, dtype=float)
    total = (step_cost * ramp).sum(axis=-1)
    per_step = {"cte": cte.data, "he": he.data, "ve": ve.data, "collision": col.data, "boundary": bnd.data}
    return LossBreakdown(total, per_step, w)


def planner_loss(traj, scenario: Scenario, w: LossWeights | None = None, tape: ad.Tape | None = None) -> LossBreakdown:
    """Loss of a single trajectory.

    ``traj`` is either a numeric :class:`Trajectory` (lifted onto a fresh
    tape as constants) or a list of traced states from
    :func:`neuroplan.dynamics.rollout_traced`.
    """
    batch = make_batch([scenario])
    if isinstance(traj, Trajectory):
        tape = tape or ad.Tape()
        st = traj.states[1:]
        x, y, v, h = (tape.lift(st[None, :, i]) for i in range(4))
    else:
        states = traj[1:]
        x, y, v, h = (ad.stack([_as_value(s[i], states) for s in states], axis=-1).reshape(1, -1)
                      for i in range(4))
    br = batch_loss(x, y, v, h, batch, w)
    br.total = br.total[0]
    br.per_step = {k: val[0] for k, val in br.per_step.items()}
    return br


def _as_value(c, states):
    if isinstance(c, ad.Value):
        return c
    for s in states:
        for f in s:
            if isinstance(f, ad.Value):
                return f.tape.lift(c)
    raise ad.TapeError("trajectory carries no tape values")
