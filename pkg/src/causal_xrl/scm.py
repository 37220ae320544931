"""Additive-noise structural causal models.

Every non-root vertex is ``v = f(parents) + u``. Abduction recovers ``u`` as a
residual, interventions overwrite a vertex and ignore its parents, and a
counterfactual is forward evaluation under the abduced residuals.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Union

import numpy as np

from .data import TrajectoryDataset
from .errors import (
    EmptyDataset,
    IncompleteObservation,
    IoError,
    SingularDesignMatrix,
    UnknownVariable,
)
from .graph import CascadeModel, CausalSkeleton, ParentRef, Vertex, unroll
from .mlp import MLPRegressor, train_mlp

# --------------------------------------------------------------------------
# regressors

_ANALYTIC: dict[str, Callable[[dict], Callable[[Mapping[str, float]], float]]] = {}


def register_analytic(key: str):
    """Register ``factory(params) -> fn(inputs)`` under ``key``.

    ``inputs`` maps parent names to values; previous-slice parents are keyed
    ``"<name>_prev"``.
    """

    def deco(factory):
        _ANALYTIC[key] = factory
        return factory

    return deco


def input_key(ref: ParentRef) -> str:
    name, lag = ref
    return name if lag == 0 else f"{name}_prev"


@dataclass
class LinearRegressor:
    weights: np.ndarray
    bias: float

    kind = "linear"

    def predict(self, x) -> float:
        return float(np.dot(self.weights, np.asarray(x, dtype=float)) + self.bias)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "weights": self.weights.tolist(), "bias": self.bias}

    @classmethod
    def from_dict(cls, d: dict) -> "LinearRegressor":
        return cls(np.asarray(d["weights"], dtype=float), float(d["bias"]))


@dataclass
class AnalyticRegressor:
    """A closed-form mechanism registered by an environment; evaluates exactly."""

    key: str
    params: dict = field(default_factory=dict)

    kind = "analytic"

    def __post_init__(self) -> None:
        if self.key not in _ANALYTIC:
            from . import envs  # noqa: F401  (environments register their mechanisms)
        if self.key not in _ANALYTIC:
            raise KeyError(f"no analytic mechanism registered as {self.key!r}")
        self._fn = _ANALYTIC[self.key](self.params)

    def __call__(self, inputs: Mapping[str, float]) -> float:
        return float(self._fn(inputs))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "key": self.key, "params": self.params}

    @classmethod
    def from_dict(cls, d: dict) -> "AnalyticRegressor":
        return cls(d["key"], d.get("params", {}))


Regressor = Union[LinearRegressor, MLPRegressor, AnalyticRegressor]


def regressor_from_dict(d: dict) -> Regressor:
    kind = d["kind"]
    if kind == "linear":
        return LinearRegressor.from_dict(d)
    if kind == "mlp":
        return MLPRegressor.from_dict(d)
    if kind == "analytic":
        return AnalyticRegressor.from_dict(d)
    raise ValueError(f"unknown regressor kind {kind!r}")


@dataclass
class StructuralFunction:
    child: str
    parents: tuple[ParentRef, ...]
    regressor: Regressor
    diagnostics: dict = field(default_factory=dict)

    def __call__(self, x) -> float:
        if isinstance(self.regressor, AnalyticRegressor):
            return self.regressor({input_key(p): float(v) for p, v in zip(self.parents, x)})
        return self.regressor.predict(x)

    def predict_many(self, X: np.ndarray) -> np.ndarray:
        if isinstance(self.regressor, MLPRegressor):
            return self.regressor.predict_many(X)
        if isinstance(self.regressor, LinearRegressor):
            return X @ self.regressor.weights + self.regressor.bias
        return np.array([self(row) for row in X])

    def to_dict(self) -> dict:
        return {
            "child": self.child,
            "parents": [list(p) for p in self.parents],
            "regressor": self.regressor.to_dict(),
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StructuralFunction":
        return cls(
            d["child"],
            tuple((p[0], int(p[1])) for p in d["parents"]),
            regressor_from_dict(d["regressor"]),
            dict(d.get("diagnostics", {})),
        )


@dataclass
class StructuralModel:
    skeleton: CausalSkeleton
    functions: dict[str, StructuralFunction]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name in self.skeleton.names:
            parents = self.skeleton.parents_of(name)
            if not parents:
                if name in self.functions:
                    raise ValueError(f"root vertex {name!r} must not carry a structural function")
                continue
            fn = self.functions.get(name)
            if fn is None:
                raise ValueError(f"missing structural function for {name!r}")
            if tuple(fn.parents) != parents:
                raise ValueError(f"function for {name!r} has parents {fn.parents}, skeleton says {parents}")
        extra = set(self.functions) - set(self.skeleton.names)
        if extra:
            raise UnknownVariable(f"functions for unknown variables {sorted(extra)}")

    @property
    def roots(self) -> tuple[str, ...]:
        return tuple(n for n in self.skeleton.names if not self.skeleton.parents_of(n))

    def cascade(self, horizon: int) -> "UnrolledSCM":
        return UnrolledSCM(self, unroll(self.skeleton, horizon))

    # serialization

    def to_dict(self) -> dict:
        return {
            "format": "causal-xrl/scm@1",
            "skeleton": self.skeleton.to_dict(),
            "functions": {k: self.functions[k].to_dict() for k in sorted(self.functions)},
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StructuralModel":
        return cls(
            CausalSkeleton.from_dict(d["skeleton"]),
            {k: StructuralFunction.from_dict(v) for k, v in d["functions"].items()},
            dict(d.get("metadata", {})),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "StructuralModel":
        return cls.from_dict(json.loads(text))

    def save(self, path: str | Path) -> None:
        try:
            Path(path).write_text(self.dumps() + "\n", encoding="utf-8")
        except OSError as exc:
            raise IoError(str(exc)) from exc

    @classmethod
    def load(cls, path: str | Path) -> "StructuralModel":
        try:
            return cls.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise IoError(str(exc)) from exc


# --------------------------------------------------------------------------
# evaluation over an unrolled cascade


class UnrolledSCM:
    """A structural model evaluated over ``cascade.horizon`` slices.

    Every slice reuses the same ``StructuralFunction`` objects. Slice-0
    vertices with previous-slice parents are evaluated against ``boundary``
    values when those are supplied, and act as roots otherwise.
    """

    def __init__(self, model: StructuralModel, cascade: CascadeModel):
        self.model = model
        self.cascade = cascade
        self.order = cascade.topological_order()

    @property
    def horizon(self) -> int:
        return self.cascade.horizon

    def mechanism(self, vertex: Vertex) -> StructuralFunction | None:
        name, tau = vertex
        fn = self.model.functions.get(name)
        if fn is None:
            return None
        return fn

    def _is_root(self, vertex: Vertex, boundary: Mapping[str, float] | None) -> bool:
        fn = self.mechanism(vertex)
        if fn is None:
            return True
        if vertex[1] == 0 and boundary is None and any(lag for _, lag in fn.parents):
            return True
        return False

    def _check_boundary(self, boundary: Mapping[str, float] | None) -> None:
        if boundary is None:
            return
        missing = [n for n in self.cascade.boundary if n not in boundary]
        if missing:
            raise IncompleteObservation(f"boundary values missing for {missing}")

    def _inputs(self, vertex: Vertex, values: Mapping[Vertex, float], boundary) -> list[float]:
        out = []
        for p in self.cascade.parents_of(vertex):
            out.append(boundary[p[0]] if p[1] < 0 else values[p])
        return out

    def _check_vertices(self, keys) -> None:
        for v in keys:
            name, tau = v
            if name not in self.model.skeleton or not 0 <= tau < self.horizon:
                raise UnknownVariable(f"unknown vertex {v!r}")

    def forward(
        self,
        exogenous: Mapping[Vertex, float],
        interventions: Mapping[Vertex, float] | None = None,
        boundary: Mapping[str, float] | None = None,
    ) -> dict[Vertex, float]:
        interventions = dict(interventions or {})
        self._check_vertices(interventions)
        self._check_boundary(boundary)
        values: dict[Vertex, float] = {}
        for v in self.order:
            if v in interventions:
                values[v] = float(interventions[v])
                continue
            if v not in exogenous:
                raise IncompleteObservation(f"no exogenous value for {v!r}")
            if self._is_root(v, boundary):
                values[v] = float(exogenous[v])
            else:
                values[v] = self.mechanism(v)(self._inputs(v, values, boundary)) + exogenous[v]
        return values

    def abduce(
        self, observation: Mapping[Vertex, float], boundary: Mapping[str, float] | None = None
    ) -> dict[Vertex, float]:
        self._check_boundary(boundary)
        missing = [v for v in self.order if v not in observation]
        if missing:
            raise IncompleteObservation(f"observation missing {missing[:5]}{'...' if len(missing) > 5 else ''}")
        u: dict[Vertex, float] = {}
        for v in self.order:
            obs = float(observation[v])
            if self._is_root(v, boundary):
                u[v] = obs
            else:
                u[v] = obs - self.mechanism(v)(self._inputs(v, observation, boundary))
        return u

    def counterfactual(
        self,
        observation: Mapping[Vertex, float],
        interventions: Mapping[Vertex, float] | None = None,
        boundary: Mapping[str, float] | None = None,
        exogenous: Mapping[Vertex, float] | None = None,
    ) -> dict[Vertex, float]:
        """Abduce (unless ``exogenous`` is given) then re-evaluate under ``interventions``.

        A vertex whose inputs all equal their observed values keeps its
        observed value, so factual consistency holds bit-exactly.
        """
        interventions = dict(interventions or {})
        self._check_vertices(interventions)
        u = self.abduce(observation, boundary) if exogenous is None else exogenous
        values: dict[Vertex, float] = {}
        for v in self.order:
            if v in interventions:
                values[v] = float(interventions[v])
                continue
            obs = float(observation[v])
            if self._is_root(v, boundary):
                values[v] = obs
                continue
            parents = self.cascade.parents_of(v)
            if all(p[1] < 0 or values[p] == float(observation[p]) for p in parents):
                values[v] = obs
            else:
                values[v] = self.mechanism(v)(self._inputs(v, values, boundary)) + u[v]
        return values


def _single(model: StructuralModel) -> UnrolledSCM:
    return UnrolledSCM(model, unroll(model.skeleton, 1))


def _to_vertices(d: Mapping[str, float] | None) -> dict[Vertex, float]:
    return {(k, 0): v for k, v in (d or {}).items()}


def _from_vertices(d: Mapping[Vertex, float]) -> dict[str, float]:
    return {k[0]: v for k, v in d.items()}


def forward(
    model: StructuralModel,
    exogenous: Mapping[str, float],
    interventions: Mapping[str, float] | None = None,
    boundary: Mapping[str, float] | None = None,
) -> dict[str, float]:
    return _from_vertices(_single(model).forward(_to_vertices(exogenous), _to_vertices(interventions), boundary))


def abduce(
    model: StructuralModel, observation: Mapping[str, float], boundary: Mapping[str, float] | None = None
) -> dict[str, float]:
    return _from_vertices(_single(model).abduce(_to_vertices(observation), boundary))


def counterfactual(
    model: StructuralModel,
    observation: Mapping[str, float],
    interventions: Mapping[str, float] | None = None,
    boundary: Mapping[str, float] | None = None,
) -> dict[str, float]:
    return _from_vertices(
        _single(model).counterfactual(_to_vertices(observation), _to_vertices(interventions), boundary)
    )


# --------------------------------------------------------------------------
# fitting


@dataclass
class TrainingConfig:
    epochs: int = 50
    lr: float = 3e-5
    batch_size: int = 1
    holdout_fraction: float = 0.1


RegressorSpec = Union[str, Mapping[str, Union[str, AnalyticRegressor]]]


def design_matrix(
    dataset: TrajectoryDataset, child: str, parents: tuple[ParentRef, ...]
) -> tuple[np.ndarray, np.ndarray]:
    """Rows (parent values, child value); rows needing a previous step skip step 0."""
    needs_prev = any(lag for _, lag in parents)
    X, y = [], []
    for ep in dataset.episodes:
        for i, rec in enumerate(ep):
            if needs_prev and i == 0:
                continue
            prev = ep[i - 1] if i > 0 else None
            X.append([(rec if lag == 0 else prev).values[name] for name, lag in parents])
            y.append(rec.values[child])
    return np.asarray(X, dtype=float).reshape(len(y), len(parents)), np.asarray(y, dtype=float)


def _fit_linear(X: np.ndarray, y: np.ndarray, child: str) -> LinearRegressor:
    A = np.hstack([X, np.ones((len(y), 1))])
    if len(y) < A.shape[1] or np.linalg.matrix_rank(A) < A.shape[1]:
        raise SingularDesignMatrix(f"design matrix for {child!r} is rank deficient")
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return LinearRegressor(coef[:-1].copy(), float(coef[-1]))


def _spec_for(spec: RegressorSpec, name: str):
    if isinstance(spec, str):
        return spec
    if name in spec:
        return spec[name]
    if "*" in spec:
        return spec["*"]
    raise ValueError(f"no regressor specified for {name!r}")


def fit(
    skeleton: CausalSkeleton,
    dataset: TrajectoryDataset,
    regressor_spec: RegressorSpec = "linear",
    training_config: TrainingConfig | None = None,
    seed: int = 0,
) -> StructuralModel:
    """Fit one additive-noise mechanism per non-root vertex."""
    cfg = training_config or TrainingConfig()
    dataset.require(skeleton.names)
    functions: dict[str, StructuralFunction] = {}
    for index, name in enumerate(skeleton.topological_order()):
        parents = skeleton.parents_of(name)
        if not parents:
            continue
        X, y = design_matrix(dataset, name, parents)
        if len(y) == 0:
            raise EmptyDataset(f"no rows to fit {name!r} (needs consecutive steps)")
        choice = _spec_for(regressor_spec, name)
        diag: dict = {"n_samples": int(len(y))}
        if isinstance(choice, AnalyticRegressor):
            fn = StructuralFunction(name, parents, choice)
        elif choice == "linear":
            fn = StructuralFunction(name, parents, _fit_linear(X, y, name))
        elif choice == "mlp":
            rng = np.random.default_rng([seed, index])
            n_hold = int(round(cfg.holdout_fraction * len(y)))
            perm = rng.permutation(len(y))
            hold, train = perm[:n_hold], perm[n_hold:]
            reg, losses = train_mlp(X[train], y[train], rng=rng, epochs=cfg.epochs, lr=cfg.lr, batch_size=cfg.batch_size)
            fn = StructuralFunction(name, parents, reg)
            diag["n_train"] = int(len(train))
            diag["epoch_losses"] = [float(v) for v in losses]
            if n_hold:
                pred = reg.predict_many(X[hold])
                diag["holdout_rmse"] = float(np.sqrt(np.mean((pred - y[hold]) ** 2)))
                diag["baseline_rmse"] = float(np.sqrt(np.mean((y[train].mean() - y[hold]) ** 2)))
        else:
            raise ValueError(f"unknown regressor {choice!r} for {name!r}")
        resid = y - fn.predict_many(X)
        diag["loss"] = float(np.mean(resid**2))
        fn.diagnostics = diag
        functions[name] = fn
    return StructuralModel(skeleton, functions)
