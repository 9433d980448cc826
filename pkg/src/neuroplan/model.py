"""Two MLP scene encoders feeding a gated recurrent control generator.

The polyline encoder is shared by the centerline and both boundaries; the
object encoder is applied per slot and max-pooled, so slot order does not
matter. The recurrent cell runs closed loop: at every step it reads the
rolled-out vehicle state, emits tanh-bounded raw controls which are scaled
to the scenario limits, and the kinematic model advances the state.
"""
from __future__ import annotations

import json
import logging
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .dynamics import Control, Trajectory, VehicleState, scale_controls, step
from .losses import LossBreakdown, LossWeights, batch_loss
from .scenarios import Scenario, SceneBatch, make_batch, resample_polyline

log = logging.getLogger(__name__)

# fixed input normalisation
POS_SCALE = 1.0 / 50.0
VEL_SCALE = 1.0 / 10.0


class TrainingError(RuntimeError):
    def __init__(self, msg, scenario_id=None):
        super().__init__(msg)
        self.scenario_id = scenario_id


@dataclass(frozen=True)
class ModelDims:
    polyline_points: int = 20
    object_slots: int = 8
    polyline_embed: int = 32
    object_embed: int = 32
    hidden: int = 64
    mlp_hidden: int = 64

    def __post_init__(self):
        for k, v in asdict(self).items():
            if int(v) != v or v < 1:
                raise ValueError(f"{k} must be a positive integer")
        if self.polyline_points < 2:
            raise ValueError("polyline_points must be at least 2")

    @classmethod
    def parse(cls, text: str) -> "ModelDims":
        vals = [int(v) for v in text.split(",")]
        return cls(*vals)

    @property
    def state_inputs(self) -> int:
        return 3 + 3 * self.polyline_embed + self.object_embed

    def shapes(self) -> dict[str, tuple[int, ...]]:
        n2, mh, H = 2 * self.polyline_points, self.mlp_hidden, self.hidden
        return {
            "poly_w1": (n2, mh), "poly_b1": (mh,),
            "poly_w2": (mh, self.polyline_embed), "poly_b2": (self.polyline_embed,),
            "obj_w1": (2, mh), "obj_b1": (mh,),
            "obj_w2": (mh, self.object_embed), "obj_b2": (self.object_embed,),
            "in_w": (self.state_inputs, H), "in_b": (H,),
            "gru_wx": (4, 3 * H), "gru_wh": (H, 3 * H), "gru_b": (3 * H,),
            "out_w": (H, 2), "out_b": (2,),
        }

    @property
    def param_count(self) -> int:
        return sum(math.prod(s) for s in self.shapes().values())


class ModelParams:
    """Named weight arrays with a stable flat-vector view."""

    def __init__(self, dims: ModelDims, arrays: dict[str, np.ndarray]):
        shapes = dims.shapes()
        if list(arrays) != list(shapes):
            arrays = {k: arrays[k] for k in shapes}
        for k, shp in shapes.items():
            if arrays[k].shape != shp:
                raise ValueError(f"{k} has shape {arrays[k].shape}, expected {shp}")
        self.dims = dims
        self.arrays = arrays

    def flat(self) -> np.ndarray:
        return np.concatenate([a.reshape(-1) for a in self.arrays.values()])

    @classmethod
    def from_flat(cls, dims: ModelDims, vec) -> "ModelParams":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (dims.param_count,):
            raise ValueError(f"flat vector has {vec.size} entries, expected {dims.param_count}")
        arrays, i = {}, 0
        for k, shp in dims.shapes().items():
            n = math.prod(shp)
            arrays[k] = vec[i:i + n].reshape(shp).copy()
            i += n
        return cls(dims, arrays)

    def copy(self) -> "ModelParams":
        return ModelParams(self.dims, {k: v.copy() for k, v in self.arrays.items()})

    def __eq__(self, other):
        return (isinstance(other, ModelParams) and self.dims == other.dims
                and np.array_equal(self.flat(), other.flat()))


def init_params(dims: ModelDims | None = None, seed: int = 0) -> ModelParams:
    """Glorot-uniform weights, zero biases."""
    dims = dims or ModelDims()
    rng = np.random.default_rng(seed)
    arrays = {}
    for k, shp in dims.shapes().items():
        if len(shp) == 1:
            arrays[k] = np.zeros(shp)
            continue
        fan_in, fan_out = shp
        if k.startswith("gru_"):
            fan_out = dims.hidden  # three gates stacked side by side
        lim = math.sqrt(6.0 / (fan_in + fan_out))
        arrays[k] = rng.uniform(-lim, lim, size=shp)
    return ModelParams(dims, arrays)


def zero_params(dims: ModelDims | None = None) -> ModelParams:
    dims = dims or ModelDims()
    return ModelParams(dims, {k: np.zeros(s) for k, s in dims.shapes().items()})


# --- forward pass ---------------------------------------------------------

def _mlp(x, w1, b1, w2, b2):
    return ad.tanh(x @ w1 + b1) @ w2 + b2


def embed_polyline(points, p) -> ad.Value:
    """Encode flattened (..., 2n) polyline coordinates. ``p`` maps names to
    tape values (or arrays)."""
    return _mlp(points, p["poly_w1"], p["poly_b1"], p["poly_w2"], p["poly_b2"])


def embed_objects(slots, p) -> ad.Value:
    """Per-slot MLP on (..., k, 2) coordinates, max-pooled over the slots."""
    per_slot = _mlp(slots, p["obj_w1"], p["obj_b1"], p["obj_w2"], p["obj_b2"])
    pooled, _ = ad.amax(per_slot, axis=-2)
    return pooled


def encoder_inputs(scenarios, dims: ModelDims):
    """Resampled, scaled polylines (B, 3, 2n) and object slots (B, k, 2)."""
    polys, objs = [], []
    for s in scenarios:
        if s.objects.k != dims.object_slots:
            raise ValueError(f"scenario {s.id} has {s.objects.k} object slots, model expects {dims.object_slots}")
        polys.append(np.stack([
            resample_polyline(pl, dims.polyline_points).points.reshape(-1)
            for pl in (s.centerline, s.left_boundary, s.right_boundary)
        ]))
        objs.append(s.objects.slots)
    return np.stack(polys) * POS_SCALE, np.stack(objs) * POS_SCALE


@dataclass
class TracedPlan:
    tape: ad.Tape
    params: dict
    controls: list          # per step: Control of (B,) values
    states: list            # per step 0..T: VehicleState of (B,) values / arrays
    batch: SceneBatch

    def stacked(self):
        """(B, T) tape values of x, y, v, h for states 1..T."""
        return tuple(ad.stack([s[i] for s in self.states[1:]], axis=1) for i in range(4))

    def control_array(self) -> np.ndarray:
        return np.stack([np.stack([u.a.data, u.yaw_rate.data], axis=-1) for u in self.controls], axis=1)

    def state_array(self) -> np.ndarray:
        B = len(self.batch)
        rows = [np.stack([np.broadcast_to(np.asarray(getattr(c, "data", c), float), (B,)) for c in s], -1)
                for s in self.states]
        return np.stack(rows, axis=1)


def unflatten(flat: ad.Value, dims: ModelDims) -> dict:
    """Slice a flat parameter vector on the tape into named, shaped values."""
    out, i = {}, 0
    for name, shape in dims.shapes().items():
        n = math.prod(shape)
        out[name] = flat[i:i + n].reshape(*shape)
        i += n
    return out


def trace_plan(params: ModelParams, batch: SceneBatch, tape: ad.Tape | None = None) -> TracedPlan:
    tape = tape or ad.Tape()
    return trace_with({k: tape.var(v) for k, v in params.arrays.items()}, params.dims, batch, tape)


def trace_with(p: dict, dims: ModelDims, batch: SceneBatch, tape: ad.Tape) -> TracedPlan:
    H = dims.hidden
    poly_in, obj_in = encoder_inputs(batch.scenarios, dims)
    B = len(batch)

    poly_emb = embed_polyline(poly_in, p).reshape(B, 3 * dims.polyline_embed)
    obj_emb = embed_objects(obj_in, p)
    xin = np.stack([batch.v0 * VEL_SCALE, batch.h0, batch.v_d * VEL_SCALE], axis=-1)
    hid = ad.tanh(ad.concat([tape.lift(xin), poly_emb, obj_emb], axis=-1) @ p["in_w"] + p["in_b"])

    limits = np.stack([batch.a_max, batch.yaw_rate_max], axis=-1)
    s = VehicleState(np.zeros(B), np.zeros(B), batch.v0.copy(), batch.h0.copy())
    states, controls = [s], []
    for _ in range(batch.horizon):
        feat = _state_features(tape, s)
        gx = feat @ p["gru_wx"] + p["gru_b"]
        gh = hid @ p["gru_wh"]
        z = ad.sigmoid(gx[:, :H] + gh[:, :H])
        r = ad.sigmoid(gx[:, H:2 * H] + gh[:, H:2 * H])
        cand = ad.tanh(gx[:, 2 * H:] + r * gh[:, 2 * H:])
        hid = cand + z * (hid - cand)
        raw = ad.tanh(hid @ p["out_w"] + p["out_b"])
        u = scale_controls(raw, limits[:, 0], limits[:, 1])
        ctl = Control(u[:, 0], u[:, 1])
        s = step(s, ctl, batch.dt)
        states.append(s)
        controls.append(ctl)
    return TracedPlan(tape, p, controls, states, batch)


def _state_features(tape, s):
    cols = [s.x * POS_SCALE, s.y * POS_SCALE, s.v * VEL_SCALE, s.h]
    cols = [c if isinstance(c, ad.Value) else tape.lift(c) for c in cols]
    return ad.stack(cols, axis=-1)


def plan(scenario: Scenario, params: ModelParams):
    """Run the planner on one recentered scenario; returns (controls (T, 2), Trajectory)."""
    if not scenario.is_centered:
        raise ValueError("plan() needs a recentered scenario (ego at the origin)")
    tp = trace_plan(params, make_batch([scenario]))
    return tp.control_array()[0], Trajectory(tp.state_array()[0])


def evaluate(params: ModelParams, batch: SceneBatch, weights: LossWeights | None = None):
    """Traced plan plus its loss breakdown; the tape is left ready for backward."""
    tp = trace_plan(params, batch)
    br = batch_loss(*tp.stacked(), batch, weights)
    return tp, br


def loss_and_grad(params: ModelParams, batch: SceneBatch, weights: LossWeights | None = None):
    """Batch-mean loss, flat gradient, and the breakdown."""
    tp, br = evaluate(params, batch, weights)
    mean = br.total.sum() / float(len(batch))
    grads = tp.tape.backward(mean)
    flat = np.concatenate([np.asarray(grads[v]).reshape(-1) for v in tp.params.values()])
    return float(mean.data), flat, br


# --- optimisation ---------------------------------------------------------

@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState, lr: float = 1e-5,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam update on flat vectors. Returns (params, state)."""
    params = np.asarray(params, dtype=float)
    grads = np.asarray(grads, dtype=float)
    if params.shape != grads.shape or state.m.shape != params.shape:
        raise ValueError("parameter, gradient and moment shapes differ")
    t = state.step + 1
    m = beta1 * state.m + (1.0 - beta1) * grads
    v = beta2 * state.v + (1.0 - beta2) * grads * grads
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    new = params - lr * m_hat / (np.sqrt(v_hat) + eps)
    return new, AdamState(m, v, t)


@dataclass
class TrainConfig:
    epochs: int = 500
    batch_size: int = 16
    lr: float = 1e-5
    seed: int = 0
    shuffle: bool = True
    weights: LossWeights = field(default_factory=LossWeights)
    clip_norm: float | None = None

    def to_dict(self):
        d = asdict(self)
        d["weights"] = asdict(self.weights)
        return d


def train(dataset, dims: ModelDims | None = None, config: TrainConfig | None = None,
          params: ModelParams | None = None, callback=None):
    """Minibatch Adam on the planner loss. Returns (params, per-epoch mean loss).

    ``callback(epoch, params, loss)`` runs after every epoch; returning True stops
    training early.
    """
    dataset = list(dataset)
    if not dataset:
        raise ValueError("dataset is empty")
    dims = dims or ModelDims()
    cfg = config or TrainConfig()
    params = params.copy() if params is not None else init_params(dims, cfg.seed)
    flat = params.flat()
    state = AdamState.zeros(flat.size)
    rng = np.random.default_rng(cfg.seed)
    bs = max(1, min(cfg.batch_size, len(dataset)))
    order = np.arange(len(dataset))
    batches_cache = {}
    history = []
    for epoch in range(cfg.epochs):
        if cfg.shuffle and len(dataset) > bs:
            order = rng.permutation(len(dataset))
        total, count = 0.0, 0
        for start in range(0, len(dataset), bs):
            idx = tuple(int(i) for i in order[start:start + bs])
            batch = batches_cache.get(idx)
            if batch is None:
                batch = make_batch([dataset[i] for i in idx])
                if len(batches_cache) < 4096:
                    batches_cache[idx] = batch
            cur = ModelParams.from_flat(dims, flat)
            try:
                loss, g, _ = loss_and_grad(cur, batch, cfg.weights)
            except ad.NumericalError as e:
                bad = _find_bad(cur, [dataset[i] for i in idx], cfg.weights)
                raise TrainingError(f"non-finite loss in epoch {epoch} ({e})", bad) from e
            if cfg.clip_norm:
                norm = float(np.linalg.norm(g))
                if norm > cfg.clip_norm:
                    g = g * (cfg.clip_norm / norm)
            flat, state = adam_step(flat, g, state, cfg.lr)
            total += loss * len(idx)
            count += len(idx)
        history.append(total / count)
        if callback is not None and callback(epoch, ModelParams.from_flat(dims, flat), history[-1]):
            break
    return ModelParams.from_flat(dims, flat), history


def _find_bad(params, scenarios, weights):
    for s in scenarios:
        try:
            loss_and_grad(params, make_batch([s]), weights)
        except ad.NumericalError:
            return s.id
    return None


@dataclass
class OptimizeResult:
    controls: np.ndarray
    trajectory: Trajectory
    history: list
    params: ModelParams
    snapshots: dict = field(default_factory=dict)


# larger steps (3e-3) oscillate late in a single-scenario fit
OPTIMIZE_LR = 2e-3


def optimize_single(scenario: Scenario, dims: ModelDims | None = None, config: TrainConfig | None = None,
                    iters: int = 400, snapshot_at=()) -> OptimizeResult:
    """Fit the planner to a single scenario, using it as a trajectory optimizer.

    ``history[i]`` is the loss evaluated at iteration i+1, before its update.
    ``snapshot_at`` lists iteration counts after which to record the plan.
    """
    dims = dims or ModelDims(object_slots=scenario.objects.k)
    cfg = config or TrainConfig(lr=OPTIMIZE_LR)
    cfg = TrainConfig(epochs=iters, batch_size=1, lr=cfg.lr, seed=cfg.seed, shuffle=False,
                      weights=cfg.weights, clip_norm=cfg.clip_norm)
    snaps = {}
    wanted = set(snapshot_at)

    def cb(epoch, params, loss):
        if epoch + 1 in wanted:
            u, tr = plan(scenario, params)
            snaps[epoch + 1] = (u, tr)

    params, history = train([scenario], dims, cfg, callback=cb if wanted else None)
    u, tr = plan(scenario, params)
    return OptimizeResult(u, tr, history, params, snaps)


def scenario_loss(scenario: Scenario, params: ModelParams, weights: LossWeights | None = None) -> LossBreakdown:
    tp, br = evaluate(params, make_batch([scenario]), weights)
    return br


# --- checkpoints ----------------------------------------------------------

MAGIC = b"NPLANCKP"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, params: ModelParams, seed: int = 0, config: dict | None = None) -> None:
    """Layout: 8-byte magic, uint32 LE version, uint32 LE header length, UTF-8
    JSON header (dims, seed, config, param_count), then param_count float64 LE."""
    header = json.dumps({
        "dims": asdict(params.dims), "seed": seed, "config": config or {},
        "param_count": params.dims.param_count,
    }, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", CHECKPOINT_VERSION, len(header)))
        f.write(header)
        f.write(params.flat().astype("<f8").tobytes())


def load_checkpoint(path):
    """Returns (params, header dict)."""
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise ValueError(f"{path}: not a planner checkpoint")
    version, hlen = struct.unpack("<II", raw[8:16])
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(raw[16:16 + hlen])
    dims = ModelDims(**header["dims"])
    vec = np.frombuffer(raw[16 + hlen:], dtype="<f8").astype(float)
    return ModelParams.from_flat(dims, vec), header
