"""Counterfactual importance of state features and past actions.

Three metrics are supported:

* ``action``: |A_cf - a| / delta after intervening on one feature and
  propagating through the structural model,
* ``q-value``: |Q(s_cf, a_cf) - Q(s, a)| / delta on the same counterfactual,
* ``saliency``: |pi(s + delta e_i) - pi(s)| / delta on the raw policy input,
  with no abduction and no propagation.

Reports index entries by (feature, tau) with tau the absolute trajectory step.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping, Sequence

from .data import StepRecord
from .errors import AllZero, InvalidConfig, SegmentTooShort, UnknownVariable
from .graph import CausalSkeleton, Kind, Role, Variable, Vertex
from .scm import StructuralModel

METRICS = ("action", "q-value", "saliency")
COLUMNS = ("metric", "feature", "tau", "delta", "importance", "normalized")
NA = "N/A"

QFunction = Callable[[Mapping[str, float], float], float]


# --------------------------------------------------------------------------
# perturbations


@dataclass(frozen=True)
class PerturbationSpec:
    """How each feature is perturbed.

    Continuous features move by ``overrides[name]`` if given, else by
    ``absolute`` if given, else by ``fraction`` of the declared range.
    Integer features move by +1 and booleans are flipped (denominator 1).
    """

    fraction: float = 0.01
    absolute: float | None = None
    overrides: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for d in (self.fraction, self.absolute, *self.overrides.values()):
            if d is not None and not d > 0:
                raise InvalidConfig(f"perturbation sizes must be positive, got {d}")

    def delta(self, var: Variable) -> float:
        if var.kind is Kind.BOOLEAN:
            return 1.0
        if var.kind is Kind.INTEGER:
            return 1.0
        if var.name in self.overrides:
            return float(self.overrides[var.name])
        if self.absolute is not None:
            return float(self.absolute)
        if var.width is None or var.width == 0:
            raise InvalidConfig(f"feature {var.name!r} has no declared range; give an absolute delta")
        return self.fraction * var.width

    def perturb(self, var: Variable, value: float) -> tuple[float, float]:
        """(perturbed value, denominator)."""
        if var.kind is Kind.BOOLEAN:
            return (0.0 if value >= 0.5 else 1.0), 1.0
        d = self.delta(var)
        return value + d, d

    def describe(self) -> dict:
        return {"fraction": self.fraction, "absolute": self.absolute, "overrides": dict(self.overrides)}


# --------------------------------------------------------------------------
# reports


@dataclass(frozen=True)
class ImportanceEntry:
    metric: str
    feature: str
    tau: int
    delta: float
    importance: float | None  # None: not applicable
    normalized: float | None = None


@dataclass(frozen=True)
class ImportanceReport:
    metric: str
    entries: tuple[ImportanceEntry, ...]
    target_step: int = 0
    trajectory: int = 0
    normalized: bool = False
    metadata: Mapping = field(default_factory=dict)

    def get(self, feature: str, tau: int | None = None) -> ImportanceEntry:
        for e in self.entries:
            if e.feature == feature and (tau is None or e.tau == tau):
                return e
        raise UnknownVariable(f"no entry for {feature!r} at tau={tau}")

    def value(self, feature: str, tau: int | None = None) -> float | None:
        return self.get(feature, tau).importance

    def as_dict(self) -> dict[tuple[str, int], float | None]:
        return {(e.feature, e.tau): e.importance for e in self.entries}

    # tabular text

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for e in self.entries:
            w.writerow([e.metric, e.feature, e.tau, _fmt(e.delta), _fmt(e.importance), _fmt_norm(e, self.normalized)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, target_step: int = 0, trajectory: int = 0) -> "ImportanceReport":
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows:
            raise InvalidConfig("empty importance table")
        entries = tuple(
            ImportanceEntry(
                r["metric"],
                r["feature"],
                int(r["tau"]),
                float(r["delta"]),
                _parse(r["importance"]),
                _parse(r["normalized"]) if r["normalized"] else None,
            )
            for r in rows
        )
        normalized = any(r["normalized"] for r in rows)
        return cls(entries[0].metric, entries, target_step, trajectory, normalized)

    # structured document

    def to_json(self) -> str:
        doc = {
            "metric": self.metric,
            "target_step": self.target_step,
            "trajectory": self.trajectory,
            "normalized": self.normalized,
            "metadata": dict(self.metadata),
            "entries": [
                {
                    "feature": e.feature,
                    "tau": e.tau,
                    "delta": e.delta,
                    "importance": e.importance,
                    "normalized": e.normalized,
                }
                for e in self.entries
            ],
        }
        return json.dumps(doc, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ImportanceReport":
        d = json.loads(text)
        entries = tuple(
            ImportanceEntry(d["metric"], e["feature"], int(e["tau"]), float(e["delta"]), e["importance"], e["normalized"])
            for e in d["entries"]
        )
        return cls(d["metric"], entries, int(d["target_step"]), int(d["trajectory"]), bool(d["normalized"]), d["metadata"])


def parse_reports(text: str) -> list[ImportanceReport]:
    """Split a table holding several metrics back into one report per metric."""
    header, *rows = text.splitlines()
    groups: dict[str, list[str]] = {}
    for row in rows:
        groups.setdefault(row.split(",", 1)[0], []).append(row)
    return [ImportanceReport.from_csv("\n".join([header, *g]) + "\n") for g in groups.values()]


def _fmt(v: float | None) -> str:
    return NA if v is None else repr(float(v))


def _fmt_norm(e: ImportanceEntry, normalized: bool) -> str:
    if not normalized:
        return ""
    return _fmt(e.normalized)


def _parse(s: str) -> float | None:
    return None if s == NA else float(s)


# --------------------------------------------------------------------------
# counterfactual context


class CounterfactualContext:
    """An observed window of consecutive steps with its exogenous values abduced once.

    ``window[k]`` holds every skeleton variable at absolute step ``start + k``.
    ``boundary`` holds the step before the window, when there is one.
    """

    def __init__(
        self,
        model: StructuralModel,
        window: Sequence[Mapping[str, float]],
        boundary: Mapping[str, float] | None = None,
        start: int = 0,
        trajectory: int = 0,
    ):
        if not window:
            raise SegmentTooShort("empty window")
        self.model = model
        self.skeleton: CausalSkeleton = model.skeleton
        self.scm = model.cascade(len(window))
        self.start = start
        self.trajectory = trajectory
        self.boundary = None if boundary is None else {n: float(boundary[n]) for n in self.scm.cascade.boundary}
        self.observation: dict[Vertex, float] = {}
        for tau, rec in enumerate(window):
            for name in self.skeleton.names:
                if name not in rec:
                    raise UnknownVariable(f"observation at step {start + tau} lacks {name!r}")
                self.observation[(name, tau)] = float(rec[name])
        self.exogenous = self.scm.abduce(self.observation, self.boundary)

    @classmethod
    def from_episode(
        cls, model: StructuralModel, episode: Sequence[StepRecord], target: int, horizon: int = 1
    ) -> "CounterfactualContext":
        if horizon < 1:
            raise SegmentTooShort(f"horizon must be >= 1, got {horizon}")
        if not 0 <= target < len(episode):
            raise SegmentTooShort(f"step {target} outside a trajectory of length {len(episode)}")
        first = target - horizon + 1
        if first < 0:
            raise SegmentTooShort(f"horizon {horizon} reaches before the start of the trajectory at step {target}")
        boundary = episode[first - 1].values if first >= 1 and model.skeleton.has_transitions else None
        traj = episode[0].episode if episode else 0
        return cls(model, [r.values for r in episode[first : target + 1]], boundary, first, traj)

    @property
    def horizon(self) -> int:
        return self.scm.horizon

    @property
    def target(self) -> int:
        """Absolute step of the last slice."""
        return self.start + self.horizon - 1

    def observed(self, name: str, tau: int) -> float:
        return self.observation[(name, tau - self.start)]

    def slice_values(self, values: Mapping[Vertex, float], tau: int) -> dict[str, float]:
        k = tau - self.start
        return {n: values[(n, k)] for n in self.skeleton.names}

    def candidates(self) -> list[tuple[str, int]]:
        """(feature, absolute step) pairs: states and auxiliaries at every slice, actions before the last."""
        out = []
        for v in self.skeleton.variables:
            for k in range(self.horizon):
                if v.role is Role.ACTION and k == self.horizon - 1:
                    continue
                out.append((v.name, self.start + k))
        return out

    def counterfactual(self, interventions: Mapping[tuple[str, int], float]) -> dict[Vertex, float]:
        local = {(n, tau - self.start): v for (n, tau), v in interventions.items()}
        return self.scm.counterfactual(self.observation, local, self.boundary, self.exogenous)


# --------------------------------------------------------------------------
# importance


def _action_change(ctx: CounterfactualContext, cf: Mapping[Vertex, float], policy) -> float:
    last = ctx.horizon - 1
    total = 0.0
    for a in ctx.skeleton.actions:
        new = cf[(a, last)]
        if policy is not None and getattr(policy, "actions", None) is not None:
            new = policy.snap(new)
        total += abs(new - ctx.observation[(a, last)])
    return total


def _q_change(ctx: CounterfactualContext, cf: Mapping[Vertex, float], q: QFunction) -> float:
    (a,) = _single_action(ctx.skeleton)
    last = ctx.horizon - 1
    s_obs = ctx.slice_values(ctx.observation, ctx.target)
    s_cf = ctx.slice_values(cf, ctx.target)
    return abs(q(s_cf, cf[(a, last)]) - q(s_obs, ctx.observation[(a, last)]))


def _single_action(sk: CausalSkeleton) -> tuple[str]:
    if len(sk.actions) != 1:
        raise InvalidConfig(f"Q-value importance needs exactly one action vertex, found {sk.actions}")
    return (sk.actions[0],)


def context_importance(
    ctx: CounterfactualContext,
    metric: str = "action",
    spec: PerturbationSpec | None = None,
    q_function: QFunction | None = None,
    policy=None,
    features: Iterable[str] | None = None,
) -> ImportanceReport:
    """Causal importance of every candidate (feature, step) on the last slice's action."""
    spec = spec or PerturbationSpec()
    if metric not in ("action", "q-value"):
        raise InvalidConfig(f"causal metric must be 'action' or 'q-value', got {metric!r}")
    if metric == "q-value" and q_function is None:
        q_function = getattr(policy, "q", None)
        if q_function is None:
            raise InvalidConfig("Q-value importance needs a Q function")
    wanted = None if features is None else set(features)
    if wanted is not None:
        for f in wanted:
            ctx.skeleton.variable(f)
    entries = []
    for name, tau in ctx.candidates():
        if wanted is not None and name not in wanted:
            continue
        var = ctx.skeleton.variable(name)
        new, denom = spec.perturb(var, ctx.observed(name, tau))
        cf = ctx.counterfactual({(name, tau): new})
        change = _action_change(ctx, cf, policy) if metric == "action" else _q_change(ctx, cf, q_function)
        entries.append(ImportanceEntry(metric, name, tau, denom, change / denom))
    entries.sort(key=_order_key(ctx.skeleton))
    return ImportanceReport(
        metric, tuple(entries), ctx.target, ctx.trajectory, metadata={"horizon": ctx.horizon, "perturbation": spec.describe()}
    )


def _order_key(sk: CausalSkeleton):
    rank = {n: i for i, n in enumerate(sk.names)}
    return lambda e: (rank.get(e.feature, len(rank)), e.feature, e.tau)


def action_importance(
    model: StructuralModel,
    state: Mapping[str, float],
    action: float | Mapping[str, float],
    policy=None,
    spec: PerturbationSpec | None = None,
    boundary: Mapping[str, float] | None = None,
    step: int = 0,
) -> ImportanceReport:
    """Single-step action-based importance for one observed (state, action)."""
    return context_importance(_single(model, state, action, boundary, step), "action", spec, policy=policy)


def q_importance(
    model: StructuralModel,
    state: Mapping[str, float],
    action: float | Mapping[str, float],
    q_function: QFunction,
    spec: PerturbationSpec | None = None,
    boundary: Mapping[str, float] | None = None,
    step: int = 0,
) -> ImportanceReport:
    """Single-step Q-value-based importance for one observed (state, action)."""
    return context_importance(_single(model, state, action, boundary, step), "q-value", spec, q_function)


def _single(model, state, action, boundary, step) -> CounterfactualContext:
    obs = dict(state)
    if isinstance(action, Mapping):
        obs.update(action)
    else:
        (a,) = model.skeleton.actions or (None,)
        if a is None:
            raise InvalidConfig("model has no action vertex")
        obs[a] = float(action)
    return CounterfactualContext(model, [obs], boundary, start=step)


def saliency_importance(
    policy,
    state: Mapping[str, float],
    spec: PerturbationSpec | None = None,
    skeleton: CausalSkeleton | None = None,
    step: int = 0,
    include: Iterable[tuple[str, int]] | None = None,
) -> ImportanceReport:
    """Perturb the raw policy input one feature at a time.

    Features outside the policy's input (auxiliary variables, earlier steps)
    are listed with importance N/A when ``skeleton`` or ``include`` names them.
    """
    spec = spec or PerturbationSpec()
    inputs = tuple(policy.state_features)
    base = {k: float(v) for k, v in state.items()}
    a0 = float(policy(base))
    rows: list[tuple[str, int]] = []
    if include is not None:
        rows = list(include)
    elif skeleton is not None:
        rows = [(v.name, step) for v in skeleton.variables if v.role is not Role.ACTION]
    else:
        rows = [(n, step) for n in inputs]
    entries = []
    for name, tau in rows:
        var = skeleton.variable(name) if skeleton is not None else Variable(name)
        if tau != step or name not in inputs:
            delta = spec.delta(var) if var.kind is Kind.CONTINUOUS else 1.0
            entries.append(ImportanceEntry("saliency", name, tau, delta, None))
            continue
        new, denom = spec.perturb(var, base[name])
        moved = policy({**base, name: new})
        entries.append(ImportanceEntry("saliency", name, tau, denom, abs(moved - a0) / denom))
    if skeleton is not None:
        entries.sort(key=_order_key(skeleton))
    return ImportanceReport("saliency", tuple(entries), step, metadata={"perturbation": spec.describe()})


def temporal_importance(
    model: StructuralModel,
    episode: Sequence[StepRecord],
    target_step: int,
    horizon: int,
    metric: str = "action",
    q_function: QFunction | None = None,
    spec: PerturbationSpec | None = None,
    policy=None,
) -> ImportanceReport:
    """Importance of features and actions at steps target-horizon+1 .. target on the target action."""
    ctx = CounterfactualContext.from_episode(model, episode, target_step, horizon)
    return context_importance(ctx, metric, spec, q_function, policy)


def explain_step(
    model: StructuralModel,
    episode: Sequence[StepRecord],
    step: int,
    metric: str = "action",
    q_function: QFunction | None = None,
    spec: PerturbationSpec | None = None,
    policy=None,
) -> ImportanceReport:
    """Importance at ``step`` of the current features and, when the model has
    transitions and a previous step exists, of the previous step's features and action."""
    if not 0 <= step < len(episode):
        raise SegmentTooShort(f"step {step} outside a trajectory of length {len(episode)}")
    horizon = 2 if model.skeleton.has_transitions and step >= 1 else 1
    if metric == "saliency":
        if policy is None:
            raise InvalidConfig("saliency importance needs the policy")
        rows = CounterfactualContext.from_episode(model, episode, step, horizon).candidates()
        rep = saliency_importance(policy, episode[step].values, spec, model.skeleton, step, rows)
        return replace(rep, trajectory=episode[0].episode)
    return temporal_importance(model, episode, step, horizon, metric, q_function, spec, policy)


# --------------------------------------------------------------------------
# series helpers


def normalize(reports: ImportanceReport | Sequence[ImportanceReport]):
    """Divide every numeric entry by the largest one across the whole series."""
    single = isinstance(reports, ImportanceReport)
    series = [reports] if single else list(reports)
    values = [e.importance for r in series for e in r.entries if e.importance is not None]
    peak = max(values, default=0.0)
    if not peak > 0 or not math.isfinite(peak):
        raise AllZero("cannot normalize: no strictly positive importance")
    out = [
        replace(
            r,
            normalized=True,
            entries=tuple(replace(e, normalized=None if e.importance is None else e.importance / peak) for e in r.entries),
        )
        for r in series
    ]
    return out[0] if single else out


def delta_sweep(
    compute: Callable[[PerturbationSpec], ImportanceReport],
    specs: Sequence[PerturbationSpec],
) -> list[ImportanceReport]:
    """One report per perturbation spec; ``compute`` should close over an abduced context."""
    out = []
    for s in specs:
        r = compute(s)
        out.append(replace(r, metadata={**dict(r.metadata), "perturbation": s.describe()}))
    return out


def series_for_episode(
    model: StructuralModel,
    episode: Sequence[StepRecord],
    metric: str = "action",
    spec: PerturbationSpec | None = None,
    q_function: QFunction | None = None,
    policy=None,
) -> list[ImportanceReport]:
    """``explain_step`` at every step of an episode."""
    return [explain_step(model, episode, t, metric, q_function, spec, policy) for t in range(len(episode))]
