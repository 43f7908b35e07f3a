"""Causal graphs: named variables with parent sets, validation, and the
edge surgery behind do-interventions.

A :class:`Dag` is immutable after construction and therefore safe to share
across threads and worker processes. Construction does not validate; call
:func:`validate` (or any operation that requires a valid graph) to check the
structural invariants.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

KINDS = ("binary", "continuous-real", "continuous-positive")


class GraphError(ValueError):
    """Structural problem with a causal graph."""


class DuplicateNameError(GraphError):
    pass


class UnknownParentError(GraphError):
    pass


class UnknownVariableError(GraphError):
    pass


class CycleError(GraphError):
    def __init__(self, cycle: Sequence[str]):
        self.cycle = list(cycle)
        super().__init__("cycle detected: " + " -> ".join(self.cycle))


@dataclass(frozen=True)
class Variable:
    name: str
    kind: str

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise GraphError(f"unknown kind {self.kind!r} for variable {self.name!r}")


class Dag:
    """Directed graph over named, typed variables.

    ``variables`` is an ordered sequence of ``Variable`` (or ``(name, kind)``
    pairs); the sequence order is the declaration order used for deterministic
    tie-breaking. ``parents`` maps a variable name to the ordered names of its
    direct causes.
    """

    def __init__(
        self,
        variables: Iterable[Variable | tuple[str, str]],
        parents: Mapping[str, Sequence[str]] | None = None,
    ):
        vs = []
        for v in variables:
            vs.append(v if isinstance(v, Variable) else Variable(*v))
        self._variables: tuple[Variable, ...] = tuple(vs)
        raw = {k: tuple(v) for k, v in (parents or {}).items()}
        declared = [v.name for v in self._variables]
        self._parents = {name: raw.pop(name, ()) for name in declared}
        # keys naming undeclared variables are kept so validate() can flag them
        self._parents.update(raw)

    @property
    def variables(self) -> tuple[Variable, ...]:
        return self._variables

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self._variables)

    def kind_of(self, name: str) -> str:
        for v in self._variables:
            if v.name == name:
                return v.kind
        raise UnknownVariableError(f"no variable named {name!r}")

    def parents_of(self, name: str) -> tuple[str, ...]:
        if name not in (v.name for v in self._variables):
            raise UnknownVariableError(f"no variable named {name!r}")
        return self._parents.get(name, ())

    def parent_map(self) -> dict[str, tuple[str, ...]]:
        return dict(self._parents)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dag):
            return NotImplemented
        return self._variables == other._variables and self._parents == other._parents

    def __repr__(self) -> str:
        edges = ", ".join(
            f"{p}->{c}" for c, ps in self._parents.items() for p in ps
        )
        return f"Dag({[v.name for v in self._variables]}, edges=[{edges}])"


@dataclass(frozen=True)
class Intervention:
    """A do-assignment: variable names fixed to constant values."""

    assignments: Mapping[str, float]

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "assignments", {str(k): float(v) for k, v in self.assignments.items()}
        )

    def __contains__(self, name: str) -> bool:
        return name in self.assignments

    def __getitem__(self, name: str) -> float:
        return self.assignments[name]

    def __bool__(self) -> bool:
        return bool(self.assignments)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self.assignments)


def validate(dag: Dag) -> None:
    """Check all Dag invariants, raising on the first violation.

    Raises DuplicateNameError, UnknownParentError or CycleError; the message
    names the offending variable (or one offending cycle).
    """
    seen: set[str] = set()
    for v in dag.variables:
        if not v.name:
            raise GraphError("variable with empty name")
        if v.name in seen:
            raise DuplicateNameError(f"duplicate variable name {v.name!r}")
        seen.add(v.name)
    for child, ps in dag.parent_map().items():
        if child not in seen:
            raise UnknownParentError(
                f"parent list given for undeclared variable {child!r}"
            )
        for p in ps:
            if p not in seen:
                raise UnknownParentError(
                    f"variable {child!r} names undeclared parent {p!r}"
                )
    _kahn_order(dag)  # raises CycleError on any cycle (self-loops included)


def topological_order(dag: Dag) -> list[str]:
    """Variable names, every one after all of its parents.

    Deterministic: ties are broken by declaration order.
    """
    validate(dag)
    return _kahn_order(dag)


def _kahn_order(dag: Dag) -> list[str]:
    names = list(dag.names)
    indeg = {n: len(set(dag.parents_of(n)) & set(names)) for n in names}
    emitted: list[str] = []
    done: set[str] = set()
    while len(emitted) < len(names):
        ready = next(
            (n for n in names if n not in done and indeg[n] == 0), None
        )
        if ready is None:
            raise CycleError(_find_cycle(dag, [n for n in names if n not in done]))
        emitted.append(ready)
        done.add(ready)
        for n in names:
            if n not in done and ready in dag.parents_of(n):
                indeg[n] -= dag.parents_of(n).count(ready)
    return emitted


def _find_cycle(dag: Dag, remaining: Sequence[str]) -> list[str]:
    # every remaining node has a parent among the remaining ones, so walking
    # parent pointers must revisit a node
    rem = set(remaining)
    node = remaining[0]
    trail = [node]
    pos = {node: 0}
    while True:
        node = next(p for p in dag.parents_of(node) if p in rem)
        if node in pos:
            return trail[pos[node]:] + [node]
        pos[node] = len(trail)
        trail.append(node)


def mutilate(dag: Dag, iv: Intervention) -> Dag:
    """Remove all incoming edges of every intervened variable.

    The variable set is unchanged; the result is the graph of the truncated
    factorization for the given do-assignment.
    """
    declared = set(dag.names)
    for name in iv.names:
        if name not in declared:
            raise UnknownVariableError(f"cannot intervene on unknown variable {name!r}")
    parents = {
        name: (() if name in iv else dag.parents_of(name)) for name in dag.names
    }
    return Dag(dag.variables, parents)


def dag_from_dict(spec: Mapping) -> Dag:
    """Build a Dag from the config-file graph literal.

    Expected shape::

        {"variables": [{"name": "KS", "kind": "binary", "parents": []}, ...]}

    Entry order is the declaration order.
    """
    entries = spec.get("variables")
    if not isinstance(entries, list):
        raise GraphError("graph literal needs a 'variables' list")
    variables = []
    parents = {}
    for e in entries:
        try:
            name, kind = e["name"], e["kind"]
        except (TypeError, KeyError) as exc:
            raise GraphError(f"bad variable entry {e!r}") from exc
        variables.append(Variable(str(name), str(kind)))
        parents[str(name)] = tuple(str(p) for p in e.get("parents", ()))
    return Dag(variables, parents)


def dag_to_dict(dag: Dag) -> dict:
    return {
        "variables": [
            {"name": v.name, "kind": v.kind, "parents": list(dag.parents_of(v.name))}
            for v in dag.variables
        ]
    }
