"""Kinematic unicycle: acceleration + heading-rate controls.

The update is semi-implicit: the new heading and new speed drive the
displacement of the step. ``step`` accepts plain floats or tape values
(any broadcastable shape), so the same code runs the differentiable
batched rollout inside the planner and the plain numeric checks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import autodiff as ad
from .geometry import wrap_angle

DEFAULT_DT = 0.1
DEFAULT_HORIZON = 30
DEFAULT_A_MAX = 3.0
DEFAULT_YAW_RATE_MAX = math.radians(40.0)

RAW_TOL = 1e-9


class VehicleState(NamedTuple):
    x: float
    y: float
    v: float
    h: float


class Control(NamedTuple):
    a: float
    yaw_rate: float


@dataclass
class Trajectory:
    """States over the horizon; row 0 is the initial state. Columns x, y, v, h."""

    states: np.ndarray

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float).reshape(-1, 4)

    def __len__(self):
        return self.states.shape[0]

    def __getitem__(self, t) -> VehicleState:
        return VehicleState(*map(float, self.states[t]))

    @property
    def horizon(self) -> int:
        return self.states.shape[0] - 1

    x = property(lambda self: self.states[:, 0])
    y = property(lambda self: self.states[:, 1])
    v = property(lambda self: self.states[:, 2])
    h = property(lambda self: self.states[:, 3])


def _is_traced(*xs) -> bool:
    return any(isinstance(x, ad.Value) for x in xs)


def step(s: VehicleState, u: Control, dt: float) -> VehicleState:
    x, y, v, h = s
    a, w = u
    if _is_traced(x, y, v, h, a, w):
        turned = h + w * dt
        h2 = ad.atan2(ad.sin(turned), ad.cos(turned))
        v2 = v + a * dt
        return VehicleState(x + v2 * ad.cos(h2) * dt, y + v2 * ad.sin(h2) * dt, v2, h2)
    h2 = wrap_angle(h + w * dt)
    v2 = v + a * dt
    out = VehicleState(x + v2 * np.cos(h2) * dt, y + v2 * np.sin(h2) * dt, v2, h2)
    if not all(np.isfinite(c).all() for c in out):
        raise ad.NumericalError("step", "non-finite state")
    return out


def scale_controls(raw, a_max: float, yaw_rate_max: float):
    """Map raw network outputs in [-1, 1] onto physical control limits.

    ``raw`` has trailing dimension 2 (acceleration, heading rate). Tape
    values are scaled on the tape.
    """
    data = raw.data if isinstance(raw, ad.Value) else np.asarray(raw, dtype=float)
    if data.shape[-1] != 2:
        raise ValueError(f"raw controls need a trailing dimension of 2, got {data.shape}")
    if (np.abs(data) > 1.0 + RAW_TOL).any():
        raise ValueError("raw controls outside [-1, 1]")
    if isinstance(raw, ad.Value):
        scale = np.stack(np.broadcast_arrays(np.asarray(a_max, float), np.asarray(yaw_rate_max, float)), axis=-1)
        return raw * scale
    return data * np.array([a_max, yaw_rate_max])


def unscale_controls(controls, a_max: float, yaw_rate_max: float) -> np.ndarray:
    return np.asarray(controls, dtype=float) / np.array([a_max, yaw_rate_max])


def rollout(s0: VehicleState, controls, dt: float = DEFAULT_DT) -> Trajectory:
    """Integrate a (T, 2) control sequence from ``s0`` with plain floats."""
    controls = np.asarray(controls, dtype=float).reshape(-1, 2)
    states = np.empty((controls.shape[0] + 1, 4))
    s = VehicleState(*map(float, s0))
    states[0] = s
    for t, (a, w) in enumerate(controls, start=1):
        s = step(s, Control(a, w), dt)
        states[t] = s
    return Trajectory(states)


def rollout_traced(s0: VehicleState, controls, dt: float = DEFAULT_DT) -> list[VehicleState]:
    """Same integration on the tape; ``controls`` is a (T, 2) tape value or a
    list of per-step ``Control`` pairs of tape values."""
    if isinstance(controls, ad.Value):
        controls = [Control(controls[t, 0], controls[t, 1]) for t in range(controls.shape[0])]
    states = [s0]
    for u in controls:
        states.append(step(states[-1], u, dt))
    return states
