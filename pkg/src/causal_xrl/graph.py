"""Causal skeletons over states and actions, and their unrolled cascades.

A skeleton describes one time slice. Intra-state and policy-defined edges live
inside the slice and must form a DAG; transition-defined edges connect a
parent at slice ``t - 1`` to a child at slice ``t`` (self-loops such as
``H -> H`` are allowed for those).
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

from .errors import CycleDetected, DuplicateName, InvalidHorizon, UnknownVariable


class Role(str, Enum):
    STATE = "state-feature"
    ACTION = "action"
    AUXILIARY = "auxiliary-observed"


class Kind(str, Enum):
    CONTINUOUS = "continuous"
    INTEGER = "integer"
    BOOLEAN = "boolean"


class EdgeClass(str, Enum):
    INTRA = "intra-state"
    POLICY = "policy-defined"
    TRANSITION = "transition-defined"


@dataclass(frozen=True)
class Variable:
    name: str
    role: Role = Role.STATE
    kind: Kind = Kind.CONTINUOUS
    range: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "role", Role(self.role))
        object.__setattr__(self, "kind", Kind(self.kind))
        if self.kind is Kind.BOOLEAN:
            if self.range not in (None, (0, 1), (0.0, 1.0)):
                raise ValueError(f"boolean variable {self.name!r} must have range (0, 1)")
            object.__setattr__(self, "range", (0.0, 1.0))
        elif self.range is not None:
            lo, hi = (float(v) for v in self.range)
            if not lo <= hi:
                raise ValueError(f"empty range for {self.name!r}: {self.range}")
            object.__setattr__(self, "range", (lo, hi))

    @property
    def width(self) -> float | None:
        return None if self.range is None else self.range[1] - self.range[0]


@dataclass(frozen=True)
class Edge:
    parent: str
    child: str
    edge_class: EdgeClass = EdgeClass.INTRA

    def __post_init__(self) -> None:
        object.__setattr__(self, "edge_class", EdgeClass(self.edge_class))

    @property
    def lag(self) -> int:
        return 1 if self.edge_class is EdgeClass.TRANSITION else 0


# A parent reference inside a slice: (variable name, lag), lag 1 = previous slice.
ParentRef = tuple[str, int]
# A vertex of an unrolled cascade: (variable name, slice index).
Vertex = tuple[str, int]


@dataclass(frozen=True)
class CausalSkeleton:
    variables: tuple[Variable, ...]
    edges: tuple[Edge, ...]
    _order: tuple[str, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        names = [v.name for v in self.variables]
        seen: set[str] = set()
        for n in names:
            if n in seen:
                raise DuplicateName(f"duplicate variable name {n!r}")
            seen.add(n)
        edge_keys: set[tuple[str, str, int]] = set()
        for e in self.edges:
            for end in (e.parent, e.child):
                if end not in seen:
                    raise UnknownVariable(f"edge {e.parent}->{e.child} references unknown variable {end!r}")
            key = (e.parent, e.child, e.lag)
            if key in edge_keys:
                raise DuplicateName(f"duplicate edge {e.parent}->{e.child} ({e.edge_class.value})")
            edge_keys.add(key)
            if e.lag == 0 and e.parent == e.child:
                raise CycleDetected(f"self-loop on {e.parent!r} within a slice")
        object.__setattr__(self, "_order", self._kahn())
        self._check_policy_edges()

    # construction helpers -------------------------------------------------

    def _kahn(self) -> tuple[str, ...]:
        indeg = {v.name: 0 for v in self.variables}
        children: dict[str, list[str]] = {v.name: [] for v in self.variables}
        for e in self.edges:
            if e.lag == 0:
                indeg[e.child] += 1
                children[e.parent].append(e.child)
        heap = [n for n, d in indeg.items() if d == 0]
        heapq.heapify(heap)
        out: list[str] = []
        while heap:
            n = heapq.heappop(heap)
            out.append(n)
            for c in children[n]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    heapq.heappush(heap, c)
        if len(out) != len(self.variables):
            stuck = sorted(n for n, d in indeg.items() if d > 0)
            raise CycleDetected(f"cycle among {stuck}")
        return tuple(out)

    def _check_policy_edges(self) -> None:
        actions = [v.name for v in self.variables if v.role is Role.ACTION]
        if not actions:
            return
        for e in self.edges:
            if e.edge_class is EdgeClass.POLICY:
                if self.variable(e.child).role is not Role.ACTION:
                    raise ValueError(f"policy-defined edge {e.parent}->{e.child} must end at an action")
                if self.variable(e.parent).role is not Role.STATE:
                    raise ValueError(f"policy-defined edge {e.parent}->{e.child} must start at a state feature")
        for v in self.variables:
            if v.role is not Role.STATE:
                continue
            if not any(
                e.parent == v.name and e.edge_class is EdgeClass.POLICY for e in self.edges
            ):
                raise ValueError(f"state feature {v.name!r} has no policy-defined edge into the action")

    # queries ---------------------------------------------------------------

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    def variable(self, name: str) -> Variable:
        for v in self.variables:
            if v.name == name:
                return v
        raise UnknownVariable(f"unknown variable {name!r}")

    def __contains__(self, name: object) -> bool:
        return any(v.name == name for v in self.variables)

    def parents_of(self, name: str) -> tuple[ParentRef, ...]:
        """Parents of ``name`` in regressor-input order.

        Same-slice parents come first (sorted by name), then previous-slice
        parents (sorted by name).
        """
        self.variable(name)
        same = sorted(e.parent for e in self.edges if e.child == name and e.lag == 0)
        prev = sorted(e.parent for e in self.edges if e.child == name and e.lag == 1)
        return tuple((p, 0) for p in same) + tuple((p, 1) for p in prev)

    def children_of(self, name: str) -> tuple[ParentRef, ...]:
        return tuple(sorted((e.child, e.lag) for e in self.edges if e.parent == name))

    @property
    def actions(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables if v.role is Role.ACTION)

    @property
    def state_features(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables if v.role is Role.STATE)

    @property
    def has_transitions(self) -> bool:
        return any(e.lag == 1 for e in self.edges)

    def policy_inputs(self, action: str) -> tuple[str, ...]:
        return tuple(sorted(e.parent for e in self.edges if e.child == action and e.edge_class is EdgeClass.POLICY))

    def topological_order(self) -> list[str]:
        return list(self._order)

    # serialization ---------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "variables": [
                {
                    "name": v.name,
                    "role": v.role.value,
                    "kind": v.kind.value,
                    "range": None if v.range is None else list(v.range),
                }
                for v in self.variables
            ],
            "edges": [
                {"parent": e.parent, "child": e.child, "class": e.edge_class.value} for e in self.edges
            ],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "CausalSkeleton":
        variables = tuple(
            Variable(
                d["name"],
                Role(d.get("role", Role.STATE.value)),
                Kind(d.get("kind", Kind.CONTINUOUS.value)),
                None if d.get("range") is None else tuple(d["range"]),
            )
            for d in data["variables"]
        )
        edges = tuple(Edge(d["parent"], d["child"], EdgeClass(d.get("class", EdgeClass.INTRA.value))) for d in data["edges"])
        return cls(variables, edges)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "CausalSkeleton":
        return cls.from_dict(json.loads(text))


def build_skeleton(
    variables: Iterable[Variable],
    edges: Iterable[tuple[str, str] | Edge],
    edge_classes: Sequence[EdgeClass | str] | None = None,
) -> CausalSkeleton:
    """Validate and build a skeleton.

    ``edges`` may be ``Edge`` objects or ``(parent, child)`` pairs; in the
    latter case ``edge_classes`` gives the class per pair (default intra-state).
    """
    edges = list(edges)
    if edge_classes is not None and len(edge_classes) != len(edges):
        raise ValueError("edge_classes must match edges in length")
    built = []
    for i, e in enumerate(edges):
        if isinstance(e, Edge):
            built.append(e)
        else:
            cls = EdgeClass.INTRA if edge_classes is None else EdgeClass(edge_classes[i])
            built.append(Edge(e[0], e[1], cls))
    return CausalSkeleton(tuple(variables), tuple(built))


def topological_order(skeleton: CausalSkeleton) -> list[str]:
    return skeleton.topological_order()


@dataclass(frozen=True)
class CascadeModel:
    """``horizon`` copies of a skeleton chained by its transition edges.

    Vertices are ``(name, tau)`` with ``tau`` in ``range(horizon)``. The
    previous-slice parents of slice 0 are not vertices; they are listed in
    ``boundary`` and, when known, enter as fixed exogenous inputs.
    """

    base: CausalSkeleton
    horizon: int

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise InvalidHorizon(f"horizon must be >= 1, got {self.horizon}")
        if self.horizon > 1 and not self.base.has_transitions:
            raise InvalidHorizon("a skeleton without transition-defined edges cannot be unrolled past one slice")

    @property
    def vertices(self) -> list[Vertex]:
        return [(n, tau) for tau in range(self.horizon) for n in self.base.topological_order()]

    @property
    def edges(self) -> list[tuple[Vertex, Vertex, EdgeClass]]:
        out = []
        for tau in range(self.horizon):
            for e in self.base.edges:
                if e.lag == 0:
                    out.append(((e.parent, tau), (e.child, tau), e.edge_class))
                elif tau >= 1:
                    out.append(((e.parent, tau - 1), (e.child, tau), e.edge_class))
        return out

    @property
    def boundary(self) -> tuple[str, ...]:
        """Base variables feeding slice 0 from the (absent) previous slice."""
        return tuple(sorted({e.parent for e in self.base.edges if e.lag == 1}))

    def parents_of(self, vertex: Vertex) -> tuple[Vertex, ...]:
        """Parents in mechanism-input order; slice-0 previous parents get tau = -1."""
        name, tau = vertex
        return tuple((p, tau - lag) for p, lag in self.base.parents_of(name))

    def topological_order(self) -> list[Vertex]:
        return self.vertices

    def children_of(self, vertex: Vertex) -> list[Vertex]:
        name, tau = vertex
        return [
            (c, tau + lag)
            for c, lag in self.base.children_of(name)
            if tau + lag < self.horizon
        ]

    def descendants(self, vertices: Iterable[Vertex]) -> set[Vertex]:
        stack = list(vertices)
        seen: set[Vertex] = set()
        while stack:
            v = stack.pop()
            for c in self.children_of(v):
                if c not in seen:
                    seen.add(c)
                    stack.append(c)
        return seen


def unroll(skeleton: CausalSkeleton, horizon: int) -> CascadeModel:
    return CascadeModel(skeleton, horizon)
