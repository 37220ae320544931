"""Command-line front end.

Verbs: train, collect, fit, explain, temporal, sweep, oracle. Every verb
takes ``--seed`` and an optional ``--config`` JSON file whose keys mirror the
long flags (dashes or underscores); flags given on the command line win.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import envs
from .data import TrajectoryDataset
from .errors import CausalXRLError, InvalidConfig, IoError
from .explain import (
    COLUMNS,
    ImportanceReport,
    PerturbationSpec,
    explain_step,
    normalize,
    temporal_importance,
)
from .graph import CausalSkeleton
from .oracles import run_all
from .policies import QTable, mc_control_train, wrap_analytic_policy
from .scm import AnalyticRegressor, StructuralModel, TrainingConfig, fit


# --------------------------------------------------------------------------
# configuration


@dataclass
class RunConfig:
    env: str | None = None
    seed: int | None = None
    qtable: str | None = None
    skeleton: str | None = None
    regressor: str | None = None
    vertex: list[str] = field(default_factory=list)
    episodes: int | None = None
    horizon: int | None = None
    train_episodes: int = 50_000
    delta_fraction: float = 0.01
    delta: float | None = None
    collision: dict = field(default_factory=dict)

    def check(self) -> None:
        if self.seed is None:
            raise InvalidConfig("--seed is required")
        for path in (self.qtable, self.skeleton):
            if path is not None and not Path(path).exists():
                raise IoError(f"no such file: {path}")

    def perturbation(self) -> PerturbationSpec:
        return PerturbationSpec(fraction=self.delta_fraction, absolute=self.delta)

    def collision_config(self):
        return envs.collision.CollisionConfig(**self.collision)


def _config_from(ns: argparse.Namespace) -> RunConfig:
    known = {f for f in RunConfig.__dataclass_fields__}
    cfg = RunConfig(**{k: v for k, v in vars(ns).items() if k in known and v is not None})
    cfg.check()
    return cfg


def _load_config(path: str) -> dict:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoError(str(exc)) from exc
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise InvalidConfig("config file must hold one JSON object")
    return {k.replace("-", "_"): v for k, v in raw.items()}


# --------------------------------------------------------------------------
# shared helpers


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise IoError(str(exc)) from exc


def _qtable(cfg: RunConfig, model: StructuralModel | None = None) -> QTable:
    if cfg.qtable is not None:
        return QTable.load(cfg.qtable)
    if model is not None:
        fn = model.functions.get("action")
        if fn is not None and isinstance(fn.regressor, AnalyticRegressor) and "qtable" in fn.regressor.params:
            return QTable.from_dict(fn.regressor.params["qtable"])
    return mc_control_train(cfg.train_episodes, seed=cfg.seed)


def _policy(env_id: str, cfg: RunConfig, model: StructuralModel | None = None):
    if env_id == "blackjack":
        return wrap_analytic_policy("blackjack", qtable=_qtable(cfg, model))
    if env_id == "collision":
        return wrap_analytic_policy("collision", config=cfg.collision_config())
    return wrap_analytic_policy(env_id)


def _skeleton(env_id: str, cfg: RunConfig) -> CausalSkeleton:
    if cfg.skeleton is not None:
        try:
            return CausalSkeleton.loads(Path(cfg.skeleton).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise InvalidConfig(f"skeleton {cfg.skeleton}: {exc}") from exc
    if env_id == "collision":
        return envs.collision.skeleton(cfg.collision_config())
    return envs.get_environment(env_id).skeleton()


def _regressor_spec(env_id: str, cfg: RunConfig, skeleton: CausalSkeleton) -> dict:
    kinds = dict(envs.DEFAULT_REGRESSORS[env_id])
    if cfg.regressor is not None:
        kinds = {"*": cfg.regressor}
    for item in cfg.vertex:
        name, _, kind = item.partition("=")
        if not kind:
            raise InvalidConfig(f"--vertex expects NAME=KIND, got {item!r}")
        kinds[name] = kind
    analytic = None
    spec: dict = {}
    for name in skeleton.names:
        kind = kinds.get(name, kinds.get("*", "linear"))
        if kind == "analytic":
            if analytic is None:
                qt = _qtable(cfg) if env_id == "blackjack" else None
                analytic = envs.analytic_mechanisms(env_id, qtable=qt, collision_config=cfg.collision_config())
            if name in analytic:
                spec[name] = analytic[name]
            elif skeleton.parents_of(name):
                raise InvalidConfig(f"no closed-form mechanism for {name!r} in {env_id!r}")
        elif kind in ("linear", "mlp"):
            spec[name] = kind
        else:
            raise InvalidConfig(f"unknown regressor kind {kind!r}")
    return spec


def _episode(dataset: TrajectoryDataset, index: int):
    try:
        return dataset.episode(index)
    except IndexError:
        raise InvalidConfig(f"dataset has no episode {index}") from None


def _model_env(model: StructuralModel, cfg: RunConfig) -> str:
    env_id = cfg.env or model.metadata.get("env")
    if env_id is None:
        raise InvalidConfig("cannot tell the environment; pass --env")
    if env_id == "collision" and not cfg.collision:
        cfg.collision = dict(model.metadata.get("collision", {}))
    return env_id


def _metrics(metric: str, has_q: bool) -> list[str]:
    if metric == "all":
        return ["action"] + (["q-value"] if has_q else []) + ["saliency"]
    return [{"q": "q-value"}.get(metric, metric)]


def _csv(reports: list[ImportanceReport]) -> str:
    lines = [",".join(COLUMNS)]
    for r in reports:
        lines.extend(r.to_csv().splitlines()[1:])
    return "\n".join(lines) + "\n"


def _compare_csv(causal: ImportanceReport, sal: ImportanceReport) -> str:
    lines = ["feature,tau,delta,causal,saliency,difference"]
    for e in causal.entries:
        s = sal.as_dict().get((e.feature, e.tau))
        diff = "N/A" if s is None else repr(e.importance - s)
        lines.append(f"{e.feature},{e.tau},{e.delta!r},{e.importance!r},{'N/A' if s is None else repr(s)},{diff}")
    return "\n".join(lines) + "\n"


def _matrix_csv(report: ImportanceReport) -> str:
    taus = sorted({e.tau for e in report.entries})
    feats: list[str] = []
    for e in report.entries:
        if e.feature not in feats:
            feats.append(e.feature)
    table = report.as_dict()
    lines = ["feature," + ",".join(f"tau={t}" for t in taus)]
    for f in feats:
        cells = []
        for t in taus:
            v = table.get((f, t), "")
            cells.append("" if v == "" else ("N/A" if v is None else repr(v)))
        lines.append(f + "," + ",".join(cells))
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# verbs


def cmd_train(args, cfg: RunConfig) -> int:
    table = mc_control_train(args.episodes or cfg.train_episodes, seed=cfg.seed)
    _write(args.out, table.dumps() + "\n")
    print(f"trained Q-table: {len(table.values)} entries", file=sys.stderr)
    return 0


def cmd_collect(args, cfg: RunConfig) -> int:
    env_id = cfg.env
    if env_id is None:
        raise InvalidConfig("--env is required")
    envs.get_environment(env_id)
    if cfg.episodes is None:
        raise InvalidConfig("--episodes is required")
    policy = _policy(env_id, cfg)
    options = {"cfg": cfg.collision_config()} if env_id == "collision" else None
    ds = envs.collect(env_id, policy, cfg.episodes, cfg.horizon, cfg.seed, policy.id, options)
    if env_id == "collision":
        ds.provenance["collision"] = envs.collision.config_dict(cfg.collision_config())
    ds.save(args.out)
    print(f"{len(ds)} records; provenance {json.dumps(ds.provenance, sort_keys=True)}")
    return 0


def cmd_fit(args, cfg: RunConfig) -> int:
    ds = TrajectoryDataset.load(args.data)
    env_id = cfg.env or ds.provenance.get("env")
    if env_id is None:
        raise InvalidConfig("cannot tell the environment; pass --env")
    if env_id == "collision" and not cfg.collision:
        cfg.collision = dict(ds.provenance.get("collision", {}))
    sk = _skeleton(env_id, cfg)
    spec = _regressor_spec(env_id, cfg, sk)
    tc = TrainingConfig(
        epochs=args.epochs, lr=args.lr, batch_size=args.batch_size, holdout_fraction=args.holdout_fraction
    )
    model = fit(sk, ds, spec, tc, seed=cfg.seed)
    model.metadata.update(
        {
            "env": env_id,
            "seed": cfg.seed,
            "data": ds.provenance,
            "regressors": {k: (v if isinstance(v, str) else "analytic") for k, v in sorted(spec.items())},
        }
    )
    if env_id == "collision":
        model.metadata["collision"] = envs.collision.config_dict(cfg.collision_config())
    model.save(args.out)
    for name, f in sorted(model.functions.items()):
        print(f"{name}: loss={f.diagnostics['loss']!r} n={f.diagnostics['n_samples']}")
    return 0


def _load_run(args, cfg: RunConfig):
    model = StructuralModel.load(args.model)
    env_id = _model_env(model, cfg)
    ds = TrajectoryDataset.load(args.data)
    episode = _episode(ds, args.episode)
    policy = _policy(env_id, cfg, model)
    return model, episode, policy


def cmd_explain(args, cfg: RunConfig) -> int:
    model, episode, policy = _load_run(args, cfg)
    spec = cfg.perturbation()
    if args.compare:
        causal_metric = _metrics(args.metric if args.metric != "all" else "action", policy.q is not None)[0]
        causal = explain_step(model, episode, args.step, causal_metric, policy.q, spec, policy)
        sal = explain_step(model, episode, args.step, "saliency", policy.q, spec, policy)
        _write(args.out, _compare_csv(causal, sal))
        return 0
    reports = [
        explain_step(model, episode, args.step, m, policy.q, spec, policy)
        for m in _metrics(args.metric, policy.q is not None)
    ]
    _write(args.out, _render(reports, args.format))
    return 0


def _render(reports: list[ImportanceReport], fmt: str) -> str:
    if fmt == "json":
        return "[\n" + ",\n".join(r.to_json() for r in reports) + "\n]\n"
    return _csv(reports)


def cmd_temporal(args, cfg: RunConfig) -> int:
    model, episode, policy = _load_run(args, cfg)
    metric = _metrics(args.metric, policy.q is not None)[0]
    if metric == "saliency":
        raise InvalidConfig("temporal importance is causal only (action or q)")
    rep = temporal_importance(model, episode, args.target, args.horizon, metric, policy.q, cfg.perturbation(), policy)
    if args.matrix:
        _write(args.out, _matrix_csv(rep))
    else:
        _write(args.out, _render([rep], args.format))
    return 0


def cmd_sweep(args, cfg: RunConfig) -> int:
    model, episode, policy = _load_run(args, cfg)
    metric = _metrics(args.metric, policy.q is not None)[0]
    deltas = [float(d) for d in args.deltas.split(",") if d.strip()]
    if not deltas or any(d <= 0 for d in deltas):
        raise InvalidConfig("--deltas must be positive numbers")
    steps = range(len(episode)) if args.all_steps else [args.step]
    out_dir = Path(args.out_dir)
    merged = []
    for d in deltas:
        spec = PerturbationSpec(absolute=d) if args.absolute else PerturbationSpec(fraction=d)
        series = [explain_step(model, episode, t, metric, policy.q, spec, policy) for t in steps]
        _write(str(out_dir / f"sweep_{d!r}.csv"), _series_csv(series, args.all_steps))
        if args.normalize:
            merged.append((d, normalize(series)))
    if args.normalize:
        _write(str(out_dir / "sweep_normalized.csv"), _merged_csv(merged, args.all_steps))
    print(f"wrote {len(deltas)} tables to {out_dir}")
    return 0


def _series_csv(reports: list[ImportanceReport], with_step: bool) -> str:
    if not with_step:
        return _csv(reports)
    lines = [",".join(COLUMNS) + ",step"]
    for r in reports:
        lines.extend(f"{row},{r.target_step}" for row in r.to_csv().splitlines()[1:])
    return "\n".join(lines) + "\n"


def _merged_csv(merged: list[tuple[float, list[ImportanceReport]]], with_step: bool) -> str:
    """Normalized series of every sweep value in one table, tagged by a trailing sweep column."""
    lines = [",".join(COLUMNS) + (",step" if with_step else "") + ",sweep"]
    for d, series in merged:
        body = _series_csv(series, with_step).splitlines()[1:]
        lines.extend(f"{row},{d!r}" for row in body)
    return "\n".join(lines) + "\n"


def cmd_oracle(args, cfg: RunConfig) -> int:
    results = run_all(seed=cfg.seed)
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


# --------------------------------------------------------------------------
# parser


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file of flag values; command-line flags win")
    p.add_argument("--seed", type=int, help="master seed (required)")
    p.add_argument("--env", choices=sorted(envs.ENVIRONMENTS))
    p.add_argument("--qtable", help="trained blackjack Q-table (default: train from --seed)")
    p.add_argument("--train-episodes", type=int, help="MC control episodes when training on the fly")
    p.add_argument("--collision", type=json.loads, help='collision constants as JSON, e.g. {"v_max": 10}')


def _explain_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--episode", type=int, default=0)
    p.add_argument("--delta-fraction", type=float, help="continuous delta as a fraction of the range (default 0.01)")
    p.add_argument("--delta", type=float, help="absolute continuous delta (overrides --delta-fraction)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out", default="-")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="causal-xrl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("train", help="train the blackjack MC-control agent")
    _common(p)
    p.add_argument("--episodes", type=int)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("collect", help="roll out a policy and write a trajectory file")
    _common(p)
    p.add_argument("--episodes", type=int)
    p.add_argument("--horizon", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_collect)

    p = sub.add_parser("fit", help="fit structural functions to a trajectory file")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--skeleton", help="skeleton JSON (default: the environment's)")
    p.add_argument("--regressor", choices=("linear", "mlp", "analytic"), help="kind for every vertex")
    p.add_argument("--vertex", action="append", default=[], help="per-vertex kind, NAME=KIND (repeatable)")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--lr", type=float, default=3e-5)
    p.add_argument("--batch-size", type=int, default=1)
    p.add_argument("--holdout-fraction", type=float, default=0.1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("explain", help="importance at one step")
    _common(p)
    _explain_args(p)
    p.add_argument("--step", type=int, required=True)
    p.add_argument("--metric", choices=("action", "q", "saliency", "all"), default="all")
    p.add_argument("--compare", action="store_true", help="causal and saliency side by side")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("temporal", help="importance of past steps on a target action")
    _common(p)
    _explain_args(p)
    p.add_argument("--target", type=int, required=True)
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--metric", choices=("action", "q"), default="q")
    p.add_argument("--matrix", action="store_true", help="feature x tau table instead of rows")
    p.set_defaults(func=cmd_temporal)

    p = sub.add_parser("sweep", help="importance across perturbation sizes")
    _common(p)
    _explain_args(p)
    p.add_argument("--step", type=int, default=0)
    p.add_argument("--all-steps", action="store_true", help="every step of the episode (adds a step column)")
    p.add_argument("--deltas", required=True, help="comma-separated sizes (fractions of range unless --absolute)")
    p.add_argument("--absolute", action="store_true")
    p.add_argument("--metric", choices=("action", "q"), default="action")
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("oracle", help="closed-form checks on the analytic systems")
    _common(p)
    p.set_defaults(func=cmd_oracle)
    return parser


def parse(argv: list[str] | None = None) -> tuple[argparse.Namespace, RunConfig]:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        conf = _load_config(args.config)
        sub = parser._subparsers._group_actions[0].choices[args.verb]  # noqa: SLF001
        known = {a.dest for a in sub._actions}
        unknown = sorted(set(conf) - known)
        if unknown:
            raise InvalidConfig(f"unknown config keys: {unknown}")
        sub.set_defaults(**conf)
        args = parser.parse_args(argv)
    return args, _config_from(args)


def main(argv: list[str] | None = None) -> int:
    try:
        args, cfg = parse(argv)
        return args.func(args, cfg)
    except CausalXRLError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
