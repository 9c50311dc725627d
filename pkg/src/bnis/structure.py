"""Factorizable structures for importance functions.

``factorize`` marries parent sets so that the posterior over the unobserved
variables factorizes into one table per node given its augmented parents.
``Mode.FULL`` marries the parents of every evidence node and of every
unobserved ancestor of evidence; ``Mode.EVPARENTS`` only marries the parents
of evidence nodes.

All added arcs are oriented along a single total order ``sigma`` (a
topological extension of the original DAG in which married parent sets are
pre-ordered by the chosen heuristic), which keeps the result acyclic.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .network import (
    BayesianNetwork,
    Cpt,
    Evidence,
    Variable,
    d_separated,
    topological_sort,
)


class Heuristic(enum.Enum):
    BY_PARENT_COUNT = "parentcount"
    BY_CPT_SIZE = "cptsize"


class Mode(enum.Enum):
    FULL = "full"
    EVPARENTS = "evparents"


@dataclass(frozen=True)
class AugmentedNetwork:
    """Original network plus added arcs among unobserved nodes.

    ``parents[x]`` is the original unobserved parents of ``x`` (declared
    order) followed by the added parents (in ``order``).  ``cpts`` holds one
    sampling table per unobserved node keyed by those parents.
    """

    base: BayesianNetwork
    evidence: dict[int, int]
    mode: Mode
    order: tuple[int, ...]
    parents: dict[int, tuple[int, ...]]
    added_arcs: tuple[tuple[int, int], ...]
    cpts: dict[int, Cpt] = field(default_factory=dict)

    @property
    def scope(self) -> tuple[int, ...]:
        return self.order

    def children(self, node: int) -> list[int]:
        return [c for c in self.order if node in self.parents[c]]

    def with_cpts(self, cpts: dict[int, Cpt]) -> "AugmentedNetwork":
        for node, cpt in cpts.items():
            if cpt.parents != self.parents[node]:
                raise ValueError(f"table for {node} has parents {cpt.parents}, expected {self.parents[node]}")
        return replace(self, cpts=dict(cpts))

    def max_cpt_cells(self) -> int:
        return max((_cells(self.base, n, self.parents[n]) for n in self.order), default=0)

    def to_network(self) -> BayesianNetwork:
        """The augmented structure over the unobserved scope as a plain network."""
        remap = {old: new for new, old in enumerate(sorted(self.order))}
        variables = [
            Variable(remap[old], self.base.variables[old].name, self.base.variables[old].states)
            for old in sorted(self.order)
        ]
        cpts = [
            Cpt(remap[n], [remap[p] for p in self.parents[n]], self.cpts[n].table)
            for n in sorted(self.order)
        ]
        return BayesianNetwork(variables, cpts, name=f"{self.base.name}_{self.mode.value}")


def _cells(net: BayesianNetwork, node: int, parents: Iterable[int]) -> int:
    return int(np.prod([net.card(p) for p in parents], dtype=float)) * net.card(node)


def mark_evidence_ancestors(net: BayesianNetwork, evidence: Evidence) -> set[int]:
    """Unobserved nodes that are ancestors of some evidence node."""
    return net.ancestors(evidence) - set(evidence)


def _heuristic_key(net: BayesianNetwork, node: int, heuristic: Heuristic | None) -> int:
    if heuristic is Heuristic.BY_CPT_SIZE:
        return _cells(net, node, net.parents(node))
    if heuristic is Heuristic.BY_PARENT_COUNT:
        return len(net.parents(node))
    return 0


def _order_nodes(net: BayesianNetwork, nodes: Sequence[int], heuristic: Heuristic | None) -> list[int]:
    """Constrained topological sort: descending key, ties by id, paths respected."""
    nodes = list(nodes)
    before = {n: {m for m in nodes if m != n and n in net.descendants(m)} for n in nodes}
    placed: list[int] = []
    remaining = set(nodes)
    while remaining:
        ready = [n for n in remaining if not (before[n] & remaining)]
        best = min(ready, key=lambda n: (-_heuristic_key(net, n, heuristic), n))
        placed.append(best)
        remaining.discard(best)
    return placed


def order_parents(net: BayesianNetwork, node: int, heuristic: Heuristic | None) -> list[int]:
    """Parents of ``node`` in descending heuristic order, subject to existing paths.

    ``heuristic=None`` keeps declaration (id) order where constraints allow.
    """
    return _order_nodes(net, net.parents(node), heuristic)


def _married_nodes(net: BayesianNetwork, evidence: Evidence, mode: Mode) -> set[int]:
    married = set(evidence)
    if mode is Mode.FULL:
        married |= mark_evidence_ancestors(net, evidence)
    return married


def total_order(net: BayesianNetwork, evidence: Evidence, mode: Mode, heuristic: Heuristic | None) -> list[int]:
    """The orientation order sigma over all network nodes."""
    precede = {n: set(net.parents(n)) for n in net.ids}
    reverse_topo = list(reversed(topological_sort(net.ids, precede)))
    married = _married_nodes(net, evidence, mode)

    def reaches(a: int, b: int) -> bool:
        stack, seen = [a], set()
        while stack:
            n = stack.pop()
            if n == b:
                return True
            for c in (m for m in net.ids if n in precede[m]):
                if c not in seen:
                    seen.add(c)
                    stack.append(c)
        return False

    for node in reverse_topo:
        if node not in married:
            continue
        pa = [p for p in net.parents(node) if p not in evidence]
        if len(pa) < 2:
            continue
        ranked = _order_nodes(net, pa, heuristic)
        for a, b in zip(ranked, ranked[1:]):
            if a not in precede[b] and not reaches(b, a):
                precede[b].add(a)
    return topological_sort(net.ids, precede)


def expand_cpt(cpt: Cpt, new_parent: int, cardinality: int) -> Cpt:
    """Append ``new_parent`` to the CPT's parents, duplicating rows across its states."""
    if new_parent in cpt.parents:
        raise ValueError(f"{new_parent} is already a parent of {cpt.child}")
    table = np.repeat(cpt.table[..., np.newaxis, :], cardinality, axis=-2)
    return Cpt(cpt.child, cpt.parents + (new_parent,), table)


def clamp_evidence_parents(net: BayesianNetwork, node: int, evidence: Evidence) -> Cpt:
    """CPT of ``node`` with observed parents fixed at their evidence states."""
    cpt = net.cpt(node)
    idx = tuple(evidence[p] if p in evidence else slice(None) for p in cpt.parents)
    kept = tuple(p for p in cpt.parents if p not in evidence)
    return Cpt(node, kept, cpt.table[idx + (slice(None),)])


def factorize(
    net: BayesianNetwork,
    evidence: Evidence,
    heuristic: Heuristic | None = Heuristic.BY_CPT_SIZE,
    mode: Mode = Mode.FULL,
) -> AugmentedNetwork:
    """Add the arcs needed for a factorizable structure over the unobserved nodes.

    Nodes are visited in reverse sigma order; each married node links every
    pair of its current (possibly already augmented) unobserved parents.
    Placeholder tables are the clamped original CPTs expanded over the added
    parents.
    """
    evidence = dict(evidence)
    sigma = total_order(net, evidence, mode, heuristic)
    pos = {n: i for i, n in enumerate(sigma)}
    married = _married_nodes(net, evidence, mode)
    orig = {n: [p for p in net.parents(n) if p not in evidence] for n in net.ids}
    added: dict[int, list[int]] = {n: [] for n in net.ids}
    for node in reversed(sigma):
        if node not in married:
            continue
        pa = sorted(orig[node] + added[node], key=pos.__getitem__)
        for i, a in enumerate(pa):
            for b in pa[i + 1:]:
                # a precedes b in sigma
                if a not in orig[b] and a not in added[b] and b not in orig[a]:
                    added[b].append(a)
    order = tuple(n for n in sigma if n not in evidence)
    parents = {}
    cpts = {}
    arcs = []
    for n in order:
        extra = sorted(added[n], key=pos.__getitem__)
        parents[n] = tuple(orig[n]) + tuple(extra)
        cpt = clamp_evidence_parents(net, n, evidence)
        for p in extra:
            cpt = expand_cpt(cpt, p, net.card(p))
            arcs.append((p, n))
        cpts[n] = cpt
    for n in order:
        assert all(pos[p] < pos[n] for p in parents[n]), "added arc breaks sigma"
    return AugmentedNetwork(net, evidence, mode, order, parents, tuple(sorted(arcs, key=lambda a: (pos[a[1]], pos[a[0]]))), cpts)


def is_factorizable(aug: AugmentedNetwork, evidence: Evidence, ordering: Sequence[int]) -> bool:
    """Check that each node is d-separated from its non-parent predecessors.

    The test runs on the original graph, conditioning on the node's augmented
    parents and the evidence.
    """
    ordering = list(ordering)
    ev = set(evidence)
    for i, node in enumerate(ordering):
        if node in ev:
            continue
        pa = set(aug.parents.get(node, ()))
        others = [n for n in ordering[:i] if n not in pa and n not in ev]
        if others and not d_separated(aug.base, [node], others, pa | ev):
            return False
    return True
