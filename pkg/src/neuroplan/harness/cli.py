"""Command-line entry point: ``neuroplan {train,plan,optimize,gradcheck,eval,synth}``.

Every command resolves a RunConfig from defaults, an optional JSON config
file and explicit flags (flags win), and stamps it into each artifact.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from .. import autodiff as ad
from .. import model as M
from .. import scenarios as S
from ..losses import TERMS, LossWeights
from . import checks, predicates, report

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_ACCEPT = 0, 1, 2, 3


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str = ""
    seed: int = 0
    epochs: int = 500
    iters: int = 400
    batch: int = 16
    count: int = 256
    lr: float | None = None
    dt: float | None = None
    horizon: int | None = None
    weights: str = "15,9,11,100,30"
    cte_mode: str = "midpoint"
    dims: str = "20,8,32,32,64,64"
    out: str = "out"
    scenario: str | None = None
    checkpoint: str | None = None
    data: str | None = None
    fixtures: str | None = None
    optimize: bool = False
    preset: str = "default"
    seeds: int = 20
    allowed_failures: int = 1
    write_fixtures: bool = False
    inject_fault: list = field(default_factory=list)

    def loss_weights(self) -> LossWeights:
        return LossWeights.parse(self.weights, cte_mode=self.cte_mode)

    def model_dims(self) -> M.ModelDims:
        return M.ModelDims.parse(self.dims)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        if not d["inject_fault"]:
            d.pop("inject_fault")
        return d


FIELDS = {f.name for f in dataclasses.fields(RunConfig)}


def resolve(args: argparse.Namespace) -> RunConfig:
    cfg = {}
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise UsageError(f"cannot read config {args.config}: {e}") from e
        if not isinstance(cfg, dict):
            raise UsageError("config file must hold a JSON object")
        unknown = set(cfg) - FIELDS
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    for k, v in vars(args).items():
        if k in FIELDS and v is not None:
            cfg[k] = v
    cfg["command"] = args.command
    rc = RunConfig(**cfg)
    try:
        rc.loss_weights()
        rc.model_dims()
    except (ValueError, TypeError) as e:
        raise UsageError(str(e)) from e
    for name in ("epochs", "iters", "batch", "count", "seeds", "allowed_failures"):
        if getattr(rc, name) < 0:
            raise UsageError(f"--{name} must be nonnegative")
    if rc.lr is not None and rc.lr < 0:
        raise UsageError("--lr must be nonnegative")
    return rc


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of settings; explicit flags take precedence")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--weights", help="alpha,beta,gamma,mu,rho")
    common.add_argument("--cte-mode", choices=("midpoint", "segment"))
    common.add_argument("--dims", help="points,slots,poly_embed,obj_embed,hidden,mlp_hidden")
    common.add_argument("--dt", type=float)
    common.add_argument("--horizon", type=int)
    common.add_argument("--lr", type=float)
    common.add_argument("--inject-fault", action="append", metavar="PRIMITIVE[=FACTOR]", help=argparse.SUPPRESS)

    p = _Parser(prog="neuroplan", description="Neural motion planner trained through differentiable kinematics.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", parents=[common], help="train on synthesized or stored scenarios")
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch", type=int)
    t.add_argument("--count", type=int, help="number of synthesized scenarios")
    t.add_argument("--data", help="directory of scenario files instead of synthesis")
    t.add_argument("--preset", choices=("default", "red_light"))

    pl = sub.add_parser("plan", parents=[common], help="run a checkpoint on one scenario")
    pl.add_argument("--checkpoint", required=True)
    pl.add_argument("--scenario", required=True)

    o = sub.add_parser("optimize", parents=[common], help="fit the planner to a single scenario")
    o.add_argument("--scenario", required=True)
    o.add_argument("--iters", type=int)

    g = sub.add_parser("gradcheck", parents=[common], help="compare analytic and finite-difference gradients")
    g.add_argument("--seeds", type=int, help="number of seeds, starting at --seed")

    e = sub.add_parser("eval", parents=[common], help="run the case-study fixtures and their predicates")
    mode = e.add_mutually_exclusive_group(required=True)
    mode.add_argument("--checkpoint")
    mode.add_argument("--optimize", action="store_true", default=None)
    e.add_argument("--fixtures", help="fixture directory (default: packaged fixtures)")
    e.add_argument("--iters", type=int)
    e.add_argument("--allowed-failures", type=int)

    s = sub.add_parser("synth", parents=[common], help="write synthesized scenario files")
    s.add_argument("--count", type=int)
    s.add_argument("--preset", choices=("default", "red_light"))
    s.add_argument("--fixtures", dest="write_fixtures", action="store_true", default=None,
                   help="write the case-study fixtures instead")
    return p


# --- helpers ----------------------------------------------------------------

def _out(rc) -> Path:
    d = Path(rc.out)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _load_scenario(rc, path) -> S.Scenario:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"scenario file not found: {p}")
    return _override(rc, S.recenter(S.load(p)))


def _override(rc, s: S.Scenario) -> S.Scenario:
    kw = {}
    if rc.dt is not None:
        kw["dt"] = rc.dt
    if rc.horizon is not None:
        kw["horizon"] = rc.horizon
    return dataclasses.replace(s, **kw) if kw else s


def _inject(rc):
    ad.FAULTS.clear()
    for spec in rc.inject_fault or ():
        name, _, factor = spec.partition("=")
        ad.FAULTS[name] = float(factor) if factor else 1.5


def _emit(rows, header):
    print("\t".join(header))
    for r in rows:
        print("\t".join(_fmt(c) for c in r))


def _fmt(c):
    return f"{c:.6g}" if isinstance(c, float) else str(c)


def _plan_outputs(rc, scen, params, stem, title=None):
    u, traj = M.plan(scen, params)
    br = M.scenario_loss(scen, params, rc.loss_weights())
    per_step = {k: v[0] for k, v in br.per_step.items()}
    total = float(br.value[0])
    out = _out(rc)
    cfg = rc.to_dict()
    report.write_step_table(out / f"{stem}.csv", traj, u, per_step, rc.loss_weights(), cfg, total)
    report.plot_scene(out / f"{stem}.svg", scen, traj, title, cfg)
    return u, traj, per_step, total


# --- commands ---------------------------------------------------------------

def cmd_train(rc: RunConfig) -> int:
    dims = rc.model_dims()
    if rc.data:
        data = [_override(rc, S.recenter(s)) for s in S.load_dir(rc.data)]
        if not data:
            raise UsageError(f"no scenario files in {rc.data}")
    else:
        gen = S.GenConfig(k=dims.object_slots, preset=rc.preset,
                          dt=rc.dt if rc.dt is not None else S.DEFAULT_DT,
                          horizon=rc.horizon if rc.horizon is not None else S.DEFAULT_HORIZON)
        data = S.synthesize_dataset(rc.count, rc.seed, gen)
    tc = M.TrainConfig(epochs=rc.epochs, batch_size=rc.batch, lr=rc.lr if rc.lr is not None else 1e-5,
                       seed=rc.seed, weights=rc.loss_weights())
    t0 = time.perf_counter()

    def progress(epoch, params, loss):
        print(f"epoch\t{epoch + 1}\t{loss:.6g}\t{time.perf_counter() - t0:.1f}s", file=sys.stderr, flush=True)

    params, history = M.train(data, dims, tc, callback=progress)
    out = _out(rc)
    cfg = rc.to_dict()
    M.save_checkpoint(out / "checkpoint.npck", params, rc.seed, cfg)
    report.write_loss_table(out / "loss.csv", history, cfg)
    report.plot_loss(out / "loss.svg", history, "epoch", cfg)
    _emit([(i, v) for i, v in enumerate(history, start=1)], ("epoch", "loss"))
    return EXIT_OK


def cmd_plan(rc: RunConfig) -> int:
    ck = Path(rc.checkpoint)
    if not ck.is_file():
        raise UsageError(f"checkpoint not found: {ck}")
    params, _ = M.load_checkpoint(ck)
    scen = _load_scenario(rc, rc.scenario)
    if scen.objects.k != params.dims.object_slots:
        raise UsageError(f"scenario has {scen.objects.k} object slots, checkpoint expects {params.dims.object_slots}")
    u, traj, per_step, total = _plan_outputs(rc, scen, params, f"{scen.id}_plan")
    _step_summary(traj, u, per_step, total)
    return EXIT_OK


def _step_summary(traj, u, per_step, total):
    rows = []
    for t in range(len(traj)):
        row = [t] + [float(c) for c in traj.states[t]]
        row += [float(c) for c in u[t - 1]] + [float(per_step[k][t - 1]) for k in TERMS] if t else [""] * 7
        rows.append(row)
    _emit(rows, ("t", "x", "y", "v", "h", "a", "yaw_rate") + TERMS)
    print(f"# total_loss\t{total!r}")


def _optimize(rc, scen):
    dims = dataclasses.replace(rc.model_dims(), object_slots=scen.objects.k)
    tc = M.TrainConfig(lr=rc.lr if rc.lr is not None else M.OPTIMIZE_LR, seed=rc.seed, weights=rc.loss_weights())
    return M.optimize_single(scen, dims, tc, iters=rc.iters)


def cmd_optimize(rc: RunConfig) -> int:
    scen = _load_scenario(rc, rc.scenario)
    res = _optimize(rc, scen)
    out = _out(rc)
    cfg = rc.to_dict()
    u, traj, per_step, total = _plan_outputs(rc, scen, res.params, f"{scen.id}_optimized")
    report.write_loss_table(out / f"{scen.id}_loss.csv", res.history, cfg, "iteration")
    report.plot_loss(out / f"{scen.id}_loss.svg", res.history, "iteration", cfg)
    M.save_checkpoint(out / f"{scen.id}.npck", res.params, rc.seed, cfg)
    _step_summary(traj, u, per_step, total)
    if scen.predicate:
        ok, metrics = predicates.evaluate(scen, traj, per_step)
        print(f"# predicate\t{scen.predicate['name']}\t{'PASS' if ok else 'FAIL'}\t{json.dumps(metrics)}")
    return EXIT_OK


def cmd_gradcheck(rc: RunConfig) -> int:
    seeds = range(rc.seed, rc.seed + rc.seeds)
    t0 = time.perf_counter()
    groups = checks.run_all(seeds, rc.loss_weights())
    rows = [(g.name, g.max_rel_error, g.checked, g.skipped, "PASS" if g.passed else "FAIL") for g in groups]
    _emit(rows, ("group", "max_rel_error", "checked", "skipped_kinks", "status"))
    print(f"# seeds\t{rc.seeds}\ttolerance\t{checks.TOLERANCE}\telapsed\t{time.perf_counter() - t0:.1f}s")
    return EXIT_OK if all(g.passed for g in groups) else EXIT_ACCEPT


def cmd_eval(rc: RunConfig) -> int:
    d = Path(rc.fixtures) if rc.fixtures else S.FIXTURE_DIR
    if not d.is_dir():
        raise UsageError(f"fixture directory not found: {d}")
    fixtures = [_override(rc, S.recenter(s)) for s in S.load_dir(d)]
    if not fixtures:
        raise UsageError(f"no fixtures in {d}")
    params = None
    if rc.checkpoint:
        params, _ = M.load_checkpoint(rc.checkpoint)
    out = _out(rc)
    rows = []
    for scen in fixtures:
        p = params if params is not None else _optimize(rc, scen).params
        _, traj, per_step, total = _plan_outputs(rc, scen, p, f"{scen.id}_eval", scen.description or scen.id)
        ok, metrics = predicates.evaluate(scen, traj, per_step)
        rows.append((scen.id, scen.predicate["name"], "PASS" if ok else "FAIL", total, json.dumps(metrics, sort_keys=True)))
    header = ("fixture", "predicate", "status", "total_loss", "metrics")
    with open(out / "eval.csv", "w", newline="") as f:
        f.write("# run_config: " + json.dumps(rc.to_dict(), sort_keys=True) + "\n")
        w = csv.writer(f)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(c) if isinstance(c, float) else c for c in r])
    _emit(rows, header)
    passed = sum(r[2] == "PASS" for r in rows)
    print(f"# passed\t{passed}/{len(rows)}")
    return EXIT_OK if len(rows) - passed <= rc.allowed_failures else EXIT_ACCEPT


def cmd_synth(rc: RunConfig) -> int:
    out = _out(rc)
    if rc.write_fixtures:
        paths = S.write_fixtures(out)
    else:
        k = rc.model_dims().object_slots
        gen = S.GenConfig(k=k, preset=rc.preset,
                          dt=rc.dt if rc.dt is not None else S.DEFAULT_DT,
                          horizon=rc.horizon if rc.horizon is not None else S.DEFAULT_HORIZON)
        paths = []
        for s in S.synthesize_dataset(rc.count, rc.seed, gen):
            p = out / f"{s.id}.json"
            S.save(s, p)
            paths.append(p)
    _emit([(str(p),) for p in paths], ("path",))
    return EXIT_OK


COMMANDS = {"train": cmd_train, "plan": cmd_plan, "optimize": cmd_optimize,
            "gradcheck": cmd_gradcheck, "eval": cmd_eval, "synth": cmd_synth}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    try:
        rc = resolve(args)
        _inject(rc)
        return COMMANDS[rc.command](rc)
    except (ad.NumericalError, M.TrainingError) as e:
        where = f" (scenario {e.scenario_id})" if getattr(e, "scenario_id", None) else ""
        print(f"neuroplan: numerical failure{where}: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, S.ScenarioError, ValueError, OSError) as e:
        print(f"neuroplan: {e}", file=sys.stderr)
        return EXIT_USAGE
    finally:
        ad.FAULTS.clear()


if __name__ == "__main__":
    sys.exit(main())
