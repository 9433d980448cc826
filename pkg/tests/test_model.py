import math
from dataclasses import replace

import numpy as np
import pytest

from neuroplan import autodiff as ad
from neuroplan import model as M
from neuroplan import scenarios as S
from neuroplan.dynamics import VehicleState, rollout

TINY = M.ModelDims(polyline_points=4, object_slots=3, polyline_embed=3, object_embed=3, hidden=5, mlp_hidden=4)


def fixture(name):
    return next(s for s in S.load_dir(S.FIXTURE_DIR) if s.id.startswith(name))


def lifted(params):
    t = ad.Tape()
    return {k: t.lift(v) for k, v in params.arrays.items()}


def test_param_count_by_hand():
    poly = 40 * 64 + 64 + 64 * 32 + 32
    obj = 2 * 64 + 64 + 64 * 32 + 32
    encoder = (3 + 3 * 32 + 32) * 64 + 64
    gru = 4 * 192 + 64 * 192 + 192
    head = 64 * 2 + 2
    assert M.ModelDims().param_count == poly + obj + encoder + gru + head == 28802
    assert M.init_params().flat().size == 28802


def test_init_determinism():
    assert M.init_params(TINY, 3) == M.init_params(TINY, 3)
    assert M.init_params(TINY, 3) != M.init_params(TINY, 4)


def test_flat_roundtrip():
    p = M.init_params(TINY, 1)
    assert M.ModelParams.from_flat(TINY, p.flat()) == p
    with pytest.raises(ValueError):
        M.ModelParams.from_flat(TINY, p.flat()[:-1])


def test_zero_weights_give_zero_embeddings():
    p = lifted(M.zero_params(TINY))
    rng = np.random.default_rng(0)
    assert (M.embed_polyline(rng.normal(size=(3, 8)), p).data == 0).all()
    assert (M.embed_objects(rng.normal(size=(3, 2)), p).data == 0).all()


def test_object_embedding_symmetry():
    p = lifted(M.init_params(TINY, 2))
    objs = np.random.default_rng(1).normal(size=(3, 2))
    base = M.embed_objects(objs, p).data
    np.testing.assert_array_equal(M.embed_objects(objs[[2, 0, 1]], p).data, base)
    one = M.embed_objects(objs[:1], p).data
    # one-row and three-row matmuls may round differently in BLAS
    np.testing.assert_allclose(M.embed_objects(np.repeat(objs[:1], 3, axis=0), p).data, one, rtol=0, atol=1e-15)


def test_object_embedding_gradient():
    params = M.init_params(TINY, 2)
    objs = np.random.default_rng(1).normal(size=(3, 2))

    def f(tape, v):
        p = {k: tape.lift(a) for k, a in params.arrays.items()}
        return M.embed_objects(v, p).sum()
    err = ad.grad_check(f, objs, skip_kinks=True)
    assert err < 1e-5


def test_zero_params_coast():
    s = fixture("a")
    dims = M.ModelDims(object_slots=s.objects.k)
    u, traj = M.plan(s, M.zero_params(dims))
    assert (u == 0).all()
    ref = rollout(VehicleState(0.0, 0.0, s.v0, s.h0), np.zeros((s.horizon, 2)), s.dt)
    np.testing.assert_allclose(traj.states, ref.states, atol=1e-12)


def test_controls_bounded_for_any_params():
    rng = np.random.default_rng(0)
    s = S.synthesize(5)
    dims = M.ModelDims(object_slots=s.objects.k)
    for scale in (1.0, 10.0, 1000.0):
        p = M.ModelParams.from_flat(dims, rng.normal(scale=scale, size=dims.param_count))
        u, _ = M.plan(s, p)
        assert (np.abs(u[:, 0]) <= s.a_max + 1e-12).all()
        assert (np.abs(u[:, 1]) <= s.yaw_rate_max + 1e-12).all()


def test_object_permutation_invariance():
    s = fixture("f")
    p = M.init_params(M.ModelDims(object_slots=s.objects.k), 7)
    perm = S.ObjectSet(s.objects.slots[::-1].copy())
    u1, t1 = M.plan(s, p)
    u2, t2 = M.plan(replace(s, objects=perm), p)
    assert np.array_equal(u1, u2) and np.array_equal(t1.states, t2.states)


def test_translation_then_recenter_is_bit_identical():
    # straight-road fixture: every coordinate is a dyadic rational, so shifts are exact
    s = fixture("c")
    p = M.init_params(M.ModelDims(object_slots=s.objects.k), 1)
    moved = S.recenter(S.translate(s, 10.0, -4.0))
    u1, t1 = M.plan(s, p)
    u2, t2 = M.plan(moved, p)
    assert np.array_equal(u1, u2) and np.array_equal(t1.states, t2.states)


def test_plan_requires_centered():
    s = S.translate(fixture("a"), 1.0, 0.0)
    with pytest.raises(ValueError):
        M.plan(s, M.init_params(M.ModelDims(object_slots=s.objects.k)))


def test_adam_zero_gradient_and_zero_lr():
    x = np.array([1.0, -2.0, 3.0])
    st = M.AdamState.zeros(3)
    y, _ = M.adam_step(x, np.zeros(3), st, lr=1e-3)
    assert np.array_equal(y, x)
    y, _ = M.adam_step(x, np.array([5.0, -1.0, 0.2]), M.AdamState.zeros(3), lr=0.0)
    assert np.array_equal(y, x)


def test_adam_first_step_is_sign():
    g = np.array([3.0, -0.01, 250.0])
    y, _ = M.adam_step(np.zeros(3), g, M.AdamState.zeros(3), lr=1e-2)
    np.testing.assert_allclose(y, -1e-2 * np.sign(g), rtol=1e-6)


def test_adam_three_steps_by_hand():
    # minimise f(x) = (x - 2)^2 from x = 0
    lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
    x, m, v = 0.0, 0.0, 0.0
    for t in range(1, 4):
        g = 2 * (x - 2)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        x = x - lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)
    xs, st = np.array([0.0]), M.AdamState.zeros(1)
    for _ in range(3):
        xs, st = M.adam_step(xs, 2 * (xs - 2), st, lr=lr)
    assert abs(xs[0] - x) < 1e-12


def test_loss_and_grad_matches_finite_difference():
    s = S.synthesize(2, S.GenConfig(k=TINY.object_slots, horizon=5))
    batch = S.make_batch([s])
    p = M.init_params(TINY, 0)
    _, g, _ = M.loss_and_grad(p, batch)
    i = np.argsort(-np.abs(g))[:5]
    for j in i:
        e = np.zeros_like(g)
        e[j] = 1e-6
        fp = M.evaluate(M.ModelParams.from_flat(TINY, p.flat() + e), batch)[1].value[0]
        fm = M.evaluate(M.ModelParams.from_flat(TINY, p.flat() - e), batch)[1].value[0]
        assert g[j] == pytest.approx((fp - fm) / 2e-6, rel=1e-4)


def test_training_is_deterministic():
    data = S.synthesize_dataset(6, seed=3, cfg=S.GenConfig(k=TINY.object_slots, horizon=8))
    cfg = M.TrainConfig(epochs=3, batch_size=6, lr=1e-3, seed=5)
    p1, h1 = M.train(data, TINY, cfg)
    p2, h2 = M.train(data, TINY, cfg)
    assert h1 == h2 and p1 == p2
    cfg = replace(cfg, batch_size=2)
    assert M.train(data, TINY, cfg)[1] == M.train(data, TINY, cfg)[1]


def test_train_zero_epochs_returns_init():
    data = S.synthesize_dataset(2, cfg=S.GenConfig(k=TINY.object_slots, horizon=4))
    p, h = M.train(data, TINY, M.TrainConfig(epochs=0, seed=9))
    assert h == [] and p == M.init_params(TINY, 9)


def test_train_rejects_empty_dataset():
    with pytest.raises(ValueError):
        M.train([], TINY)


def test_training_error_names_scenario():
    s = S.synthesize(1, S.GenConfig(k=TINY.object_slots, horizon=4))
    w = M.TrainConfig(epochs=1, weights=M.LossWeights(collision_shift=750.0, mu=1.0))
    close = S.ObjectSet(np.vstack([[0.5, 0.0], np.zeros((TINY.object_slots - 1, 2))]))
    bad = replace(s, id="boom", objects=close)
    with pytest.raises(M.TrainingError) as e:
        M.train([bad], TINY, w)
    assert e.value.scenario_id == "boom"


def test_checkpoint_roundtrip(tmp_path):
    p = M.init_params(TINY, 4)
    path = tmp_path / "c.npck"
    M.save_checkpoint(path, p, seed=4, config={"note": "x"})
    q, header = M.load_checkpoint(path)
    assert q == p and header["seed"] == 4 and header["param_count"] == TINY.param_count
    raw = path.read_bytes()
    assert raw[:8] == M.MAGIC
    (tmp_path / "bad").write_bytes(b"garbage!" + raw[8:])
    with pytest.raises(ValueError):
        M.load_checkpoint(tmp_path / "bad")


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="the boundary term alone keeps this loss above half its initial value; "
                                       "see test_trivial_scenario_near_analytic_bound")
def test_single_scenario_loss_drops_tenfold(fixture_runs):
    """One scenario, 400 iterations: loss falls below 10% of its initial value."""
    ratios = {k: r.history[399] / r.history[0] for k, r in fixture_runs.items()}
    assert ratios["a_follow_centerline"] < 0.1, ratios


@pytest.mark.slow
def test_trivial_scenario_near_analytic_bound(fixture_runs):
    run = fixture_runs["a_follow_centerline"]
    s = run.scenario
    # on the centerline of the right lane of a 7 m road: 1.75 m and 5.25 m to the edges
    bound = 30 * (math.exp(1 - 1.75) + math.exp(1 - 5.25)) * sum(range(1, s.horizon + 1))
    assert bound <= min(run.history) < 2 * bound


@pytest.mark.slow
def test_loss_histories_soft_monotone(fixture_runs):
    for sid, run in fixture_runs.items():
        h = np.asarray(run.history)
        assert np.isfinite(h).all()
        trail = np.convolve(h, np.ones(50) / 50, mode="valid")
        best = np.minimum.accumulate(trail[100:])
        assert (trail[100:] <= 1.05 * best).all(), sid


@pytest.mark.slow
def test_reverse_fixture_reverses_first(fixture_runs):
    tr = fixture_runs["g_reverse_to_correct_heading"].trajectory
    first_neg = int(np.argmax(tr.v < 0))
    assert tr.v[first_neg] < 0 and (tr.v[first_neg:] > 0).any()
