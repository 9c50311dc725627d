"""Discrete Bayesian network model and structural queries.

Variables are identified by integer ids equal to their declaration position.
A CPT stores its table as an array of shape ``(*parent_cards, child_card)``,
so flattening it in C order gives the row-major layout used on disk (parents
in declared order, last parent fastest, child states within each row).
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

ROW_TOLERANCE = 1e-9

Evidence = Mapping[int, int]
Assignment = Mapping[int, int]


class StructuralError(ValueError):
    """Raised when a network violates a structural invariant (e.g. a cycle)."""


@dataclass(frozen=True)
class Variable:
    id: int
    name: str
    states: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        if len(self.states) < 2:
            raise ValueError(f"variable {self.name} needs at least 2 states")
        if len(set(self.states)) != len(self.states):
            raise ValueError(f"variable {self.name} has duplicate state labels")

    @property
    def card(self) -> int:
        return len(self.states)

    def state_index(self, label: str) -> int:
        try:
            return self.states.index(label)
        except ValueError:
            raise KeyError(f"unknown state {label} for variable {self.name}") from None


@dataclass(frozen=True, eq=False)
class Cpt:
    """Conditional table P(child | parents).

    ``degenerate_rows`` lists flat parent-configuration indices that were
    filled uniformly because their conditioning configuration had zero mass.
    """

    child: int
    parents: tuple[int, ...]
    table: np.ndarray
    degenerate_rows: tuple[int, ...] = field(default=())

    def __post_init__(self):
        table = np.array(self.table, dtype=float)
        table.flags.writeable = False
        object.__setattr__(self, "table", table)
        object.__setattr__(self, "parents", tuple(int(p) for p in self.parents))
        if table.ndim != len(self.parents) + 1:
            raise ValueError(
                f"CPT table for {self.child} has {table.ndim} axes, "
                f"expected {len(self.parents) + 1}"
            )

    @property
    def rows(self) -> np.ndarray:
        """Table as a 2-D array (parent configurations x child states)."""
        return self.table.reshape(-1, self.table.shape[-1])

    @property
    def size(self) -> int:
        return int(self.table.size)

    def row(self, parent_states: Sequence[int]) -> np.ndarray:
        return self.table[tuple(parent_states)]

    def same_as(self, other: "Cpt", atol: float = 0.0) -> bool:
        return (
            self.child == other.child
            and self.parents == other.parents
            and self.table.shape == other.table.shape
            and np.allclose(self.table, other.table, rtol=0.0, atol=atol)
        )


class BayesianNetwork:
    """A DAG of discrete variables, one CPT per variable.

    The constructor only checks what it needs to index things; use
    :func:`validate_network` for the full list of invariant violations.
    """

    def __init__(self, variables: Sequence[Variable], cpts: Iterable[Cpt], name: str = "net"):
        self.name = name
        self.variables: tuple[Variable, ...] = tuple(variables)
        for pos, var in enumerate(self.variables):
            if var.id != pos:
                raise ValueError(f"variable {var.name} has id {var.id}, expected {pos}")
        self._by_name = {v.name: v.id for v in self.variables}
        if len(self._by_name) != len(self.variables):
            raise ValueError("duplicate variable names")
        by_child: dict[int, Cpt] = {}
        for cpt in cpts:
            if cpt.child in by_child:
                raise ValueError(f"two CPTs for {self.variables[cpt.child].name}")
            by_child[cpt.child] = cpt
        self.cpts: tuple[Cpt, ...] = tuple(by_child[i] for i in sorted(by_child))
        self._cpt_of = by_child
        self._children: dict[int, list[int]] = {v.id: [] for v in self.variables}
        for cpt in self.cpts:
            for p in cpt.parents:
                if p in self._children:
                    self._children[p].append(cpt.child)

    def __len__(self) -> int:
        return len(self.variables)

    def __repr__(self) -> str:
        return f"BayesianNetwork({self.name!r}, {len(self)} variables)"

    @property
    def ids(self) -> range:
        return range(len(self.variables))

    def id(self, name: str) -> int:
        try:
            return self._by_name[name]
        except KeyError:
            raise KeyError(f"unknown variable {name}") from None

    def ids_of(self, names: Iterable[str]) -> list[int]:
        return [self.id(n) for n in names]

    def var(self, key: int | str) -> Variable:
        if isinstance(key, str):
            key = self.id(key)
        return self.variables[key]

    def card(self, node: int) -> int:
        return self.variables[node].card

    def cpt(self, node: int) -> Cpt:
        return self._cpt_of[node]

    def has_cpt(self, node: int) -> bool:
        return node in self._cpt_of

    def parents(self, node: int) -> tuple[int, ...]:
        cpt = self._cpt_of.get(node)
        return cpt.parents if cpt is not None else ()

    def children(self, node: int) -> list[int]:
        return list(self._children[node])

    def arcs(self) -> list[tuple[int, int]]:
        return [(p, c.child) for c in self.cpts for p in c.parents]

    def ancestors(self, nodes: Iterable[int]) -> set[int]:
        """Strict ancestors of ``nodes`` (the nodes themselves excluded unless reachable)."""
        seen: set[int] = set()
        stack = [p for n in nodes for p in self.parents(n)]
        while stack:
            n = stack.pop()
            if n not in seen:
                seen.add(n)
                stack.extend(self.parents(n))
        return seen

    def descendants(self, node: int) -> set[int]:
        seen: set[int] = set()
        stack = list(self._children[node])
        while stack:
            n = stack.pop()
            if n not in seen:
                seen.add(n)
                stack.extend(self._children[n])
        return seen

    def evidence_by_name(self, named: Mapping[str, str]) -> dict[int, int]:
        out = {}
        for name, label in named.items():
            var = self.var(name)
            out[var.id] = var.state_index(label)
        return out


@dataclass(frozen=True)
class Issue:
    kind: str  # "cycle" | "row-sum" | "arity" | "missing-cpt" | "unknown-parent" | "negative"
    node: str
    message: str


def validate_network(net: BayesianNetwork) -> list[Issue]:
    """Return every invariant violation found in ``net``; empty means valid."""
    issues: list[Issue] = []
    known = set(net.ids)
    for var in net.variables:
        if not net.has_cpt(var.id):
            issues.append(Issue("missing-cpt", var.name, f"missing CPT for {var.name}"))
    for cpt in net.cpts:
        if cpt.child not in known:
            issues.append(Issue("unknown-parent", str(cpt.child), f"CPT for undeclared node {cpt.child}"))
            continue
        name = net.variables[cpt.child].name
        bad = [p for p in cpt.parents if p not in known]
        if bad:
            issues.append(Issue("unknown-parent", name, f"undeclared parents {bad} of {name}"))
            continue
        shape = tuple(net.card(p) for p in cpt.parents) + (net.card(cpt.child),)
        if cpt.table.shape != shape:
            issues.append(
                Issue("arity", name, f"CPT for {name} has shape {cpt.table.shape}, expected {shape}")
            )
            continue
        if np.any(cpt.table < 0) or np.any(cpt.table > 1):
            issues.append(Issue("negative", name, f"CPT for {name} has entries outside [0, 1]"))
        sums = cpt.rows.sum(axis=1)
        for r in np.flatnonzero(np.abs(sums - 1.0) > ROW_TOLERANCE):
            issues.append(Issue("row-sum", name, f"row {r} of CPT for {name} sums to {sums[r]!r}"))
    cycle = _find_cycle(net)
    if cycle:
        path = " -> ".join(net.variables[n].name for n in cycle)
        issues.append(Issue("cycle", net.variables[cycle[0]].name, f"cycle {path}"))
    return issues


def _find_cycle(net: BayesianNetwork) -> list[int] | None:
    color = {n: 0 for n in net.ids}
    stack_path: list[int] = []

    def visit(n: int) -> list[int] | None:
        color[n] = 1
        stack_path.append(n)
        for c in sorted(net.children(n)):
            if c not in color:
                continue
            if color[c] == 1:
                return stack_path[stack_path.index(c):] + [c]
            if color[c] == 0:
                found = visit(c)
                if found:
                    return found
        stack_path.pop()
        color[n] = 2
        return None

    for n in net.ids:
        if color[n] == 0:
            found = visit(n)
            if found:
                return found
    return None


def topological_sort(nodes: Iterable[int], parents_of: Mapping[int, Iterable[int]]) -> list[int]:
    """Kahn's algorithm with ties broken by ascending id.

    Parents outside ``nodes`` are ignored.
    """
    nodes = sorted(set(nodes))
    node_set = set(nodes)
    indegree = {n: 0 for n in nodes}
    kids: dict[int, list[int]] = {n: [] for n in nodes}
    for n in nodes:
        for p in set(parents_of.get(n, ())):
            if p in node_set:
                indegree[n] += 1
                kids[p].append(n)
    ready = [n for n in nodes if indegree[n] == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        n = heapq.heappop(ready)
        order.append(n)
        for c in kids[n]:
            indegree[c] -= 1
            if indegree[c] == 0:
                heapq.heappush(ready, c)
    if len(order) != len(nodes):
        raise StructuralError("graph contains a cycle")
    return order


def topological_order(net: BayesianNetwork) -> list[int]:
    """Deterministic topological order of ``net``, ties by ascending id."""
    return topological_sort(net.ids, {n: net.parents(n) for n in net.ids})


def reachable(
    parents_of: Mapping[int, Sequence[int]],
    children_of: Mapping[int, Sequence[int]],
    source: int,
    given: Iterable[int],
) -> set[int]:
    """Nodes d-connected to ``source`` given ``given`` (Bayes-ball reachability).

    ``given`` members are never returned; ``source`` is not returned.
    """
    given = set(given)
    # ancestors of the conditioning set (inclusive) activate colliders
    active_colliders = set(given)
    stack = list(given)
    while stack:
        n = stack.pop()
        for p in parents_of.get(n, ()):
            if p not in active_colliders:
                active_colliders.add(p)
                stack.append(p)

    result: set[int] = set()
    visited: set[tuple[int, bool]] = set()
    # (node, arrived_from_child): True means travelling upward
    queue = deque([(source, True)])
    while queue:
        node, upward = queue.popleft()
        if (node, upward) in visited:
            continue
        visited.add((node, upward))
        if node not in given and node != source:
            result.add(node)
        if upward:
            if node not in given:
                for p in parents_of.get(node, ()):
                    queue.append((p, True))
                for c in children_of.get(node, ()):
                    queue.append((c, False))
        else:
            if node not in given:
                for c in children_of.get(node, ()):
                    queue.append((c, False))
            if node in active_colliders:
                for p in parents_of.get(node, ()):
                    queue.append((p, True))
    return result


def _graph_maps(net: BayesianNetwork):
    parents_of = {n: net.parents(n) for n in net.ids}
    children_of = {n: net.children(n) for n in net.ids}
    return parents_of, children_of


def d_connected(net: BayesianNetwork, x: int, y: int, given: Iterable[int] = ()) -> bool:
    """True iff an active trail links ``x`` and ``y`` given ``given``."""
    given = set(given)
    for n in (x, y, *given):
        if n not in range(len(net)):
            raise ValueError(f"unknown variable id {n}")
    if x == y:
        raise ValueError("x and y must differ")
    if x in given or y in given:
        raise ValueError("x and y must not be in the conditioning set")
    return y in reachable(*_graph_maps(net), x, given)


def d_separated(net: BayesianNetwork, xs: Iterable[int], ys: Iterable[int], given: Iterable[int] = ()) -> bool:
    """True iff every member of ``xs`` is d-separated from every member of ``ys``."""
    given = set(given)
    ys = set(ys) - given
    parents_of, children_of = _graph_maps(net)
    for x in set(xs) - given:
        if reachable(parents_of, children_of, x, given) & ys:
            return False
    return True


def relevant_factor(
    net: BayesianNetwork, ordering: Sequence[int], xi: int, evidence: Evidence
) -> set[int]:
    """Predecessors of ``xi`` in ``ordering`` that stay d-connected to it.

    Conditioning set is PA(xi), the evidence and the other members of the
    result. Candidates start as all non-parent predecessors and are pruned
    in ordering position until no candidate is d-separated.
    """
    if xi in evidence:
        raise ValueError(f"{net.variables[xi].name} is observed")
    ordering = list(ordering)
    pos = ordering.index(xi)
    pa = set(net.parents(xi))
    base = pa | set(evidence)
    candidates = [n for n in ordering[:pos] if n not in base]
    parents_of, children_of = _graph_maps(net)
    changed = True
    while changed:
        changed = False
        for c in list(candidates):
            others = base | (set(candidates) - {c})
            if c not in reachable(parents_of, children_of, xi, others):
                candidates.remove(c)
                changed = True
    return set(candidates)


def check_evidence(net: BayesianNetwork, evidence: Evidence) -> None:
    """Raise ValueError unless ``evidence`` is a valid strict-subset observation."""
    for node, state in evidence.items():
        if node not in range(len(net)):
            raise ValueError(f"unknown variable id {node}")
        if not 0 <= state < net.card(node):
            raise ValueError(f"state {state} out of range for {net.variables[node].name}")
    if len(net) and len(evidence) >= len(net):
        raise ValueError("evidence must leave at least one variable unobserved")


def joint_probability(net: BayesianNetwork, full: Assignment) -> float:
    """P(x) as the product of CPT lookups for a complete assignment."""
    missing = [n for n in net.ids if n not in full]
    if missing:
        names = ", ".join(net.variables[n].name for n in missing)
        raise ValueError(f"assignment is missing {names}")
    p = 1.0
    for cpt in net.cpts:
        idx = tuple(full[q] for q in cpt.parents) + (full[cpt.child],)
        p *= float(cpt.table[idx])
    return p


def log_joint(net: BayesianNetwork, states: np.ndarray) -> np.ndarray:
    """Vectorised log P(x) for rows of a (n, |net|) integer state matrix."""
    states = np.asarray(states)
    out = np.zeros(states.shape[0])
    with np.errstate(divide="ignore"):
        for cpt in net.cpts:
            idx = tuple(states[:, q] for q in cpt.parents) + (states[:, cpt.child],)
            out += np.log(cpt.table[idx])
    return out


def unobserved(net: BayesianNetwork, evidence: Evidence) -> list[int]:
    return [n for n in net.ids if n not in evidence]
