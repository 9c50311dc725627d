"""Exact inference by variable elimination.

Provides ground-truth posteriors and the exact conditional tables used to
fill a factorizable importance function.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .network import BayesianNetwork, Cpt, Evidence, check_evidence

DEFAULT_CELL_BUDGET = 2**20


class BudgetExceeded(RuntimeError):
    """An intermediate table would exceed the configured cell budget."""


class InconsistentEvidence(ValueError):
    """The evidence has probability zero under the network."""


class Factor:
    """Nonnegative table over an ordered scope, values row-major over the scope."""

    __slots__ = ("scope", "values")

    def __init__(self, scope: Sequence[int], values):
        self.scope = tuple(int(s) for s in scope)
        self.values = np.asarray(values, dtype=float)
        if self.values.ndim != len(self.scope):
            raise ValueError(f"factor values have {self.values.ndim} axes for scope {self.scope}")
        if len(set(self.scope)) != len(self.scope):
            raise ValueError(f"repeated variable in scope {self.scope}")

    def __repr__(self) -> str:
        return f"Factor(scope={self.scope}, shape={self.values.shape})"

    @property
    def size(self) -> int:
        return int(self.values.size)

    def cards(self) -> dict[int, int]:
        return dict(zip(self.scope, self.values.shape))

    def aligned(self, scope: Sequence[int]) -> np.ndarray:
        """Values broadcastable against a table over ``scope`` (a superset)."""
        perm = sorted(range(len(self.scope)), key=lambda i: scope.index(self.scope[i]))
        vals = self.values.transpose(perm)
        present = {self.scope[i] for i in perm}
        shape = []
        it = iter(vals.shape)
        for v in scope:
            shape.append(next(it) if v in present else 1)
        return vals.reshape(shape)

    def transpose_to(self, scope: Sequence[int]) -> "Factor":
        scope = tuple(scope)
        if set(scope) != set(self.scope):
            raise ValueError(f"scope {scope} does not match {self.scope}")
        return Factor(scope, self.values.transpose([self.scope.index(v) for v in scope]))

    def sum_out(self, var: int) -> "Factor":
        axis = self.scope.index(var)
        return Factor(self.scope[:axis] + self.scope[axis + 1:], self.values.sum(axis=axis))

    def reduce(self, evidence: Evidence) -> "Factor":
        idx = []
        scope = []
        for v in self.scope:
            if v in evidence:
                idx.append(evidence[v])
            else:
                idx.append(slice(None))
                scope.append(v)
        return Factor(scope, self.values[tuple(idx)])

    def normalized(self) -> "Factor":
        total = self.values.sum()
        if total <= 0:
            raise InconsistentEvidence("cannot normalize a zero factor")
        return Factor(self.scope, self.values / total)

    @classmethod
    def from_cpt(cls, cpt: Cpt) -> "Factor":
        return cls(cpt.parents + (cpt.child,), cpt.table)


def multiply(factors: Sequence[Factor], budget: int | None = None) -> Factor:
    """Product of ``factors`` over the union of their scopes."""
    scope: list[int] = []
    cards: dict[int, int] = {}
    for f in factors:
        for v, k in zip(f.scope, f.values.shape):
            if v not in cards:
                scope.append(v)
                cards[v] = k
    if budget is not None:
        cells = int(np.prod([cards[v] for v in scope], dtype=float))
        if cells > budget:
            raise BudgetExceeded(f"table over {len(scope)} variables needs {cells} cells > {budget}")
    out = np.ones([cards[v] for v in scope])
    for f in factors:
        out = out * f.aligned(scope)
    return Factor(scope, out)


def eliminate(factors: Sequence[Factor], var: int, budget: int | None = None) -> list[Factor]:
    """Multiply the factors mentioning ``var`` and sum it out."""
    touching = [f for f in factors if var in f.scope]
    if not touching:
        raise ValueError(f"variable {var} is not in any factor")
    rest = [f for f in factors if var not in f.scope]
    return rest + [multiply(touching, budget).sum_out(var)]


def min_fill_order(factors: Sequence[Factor], keep: Iterable[int] = ()) -> list[int]:
    """Greedy min-fill elimination order over all variables not in ``keep``; ties by id."""
    keep = set(keep)
    adj: dict[int, set[int]] = {}
    for f in factors:
        for v in f.scope:
            adj.setdefault(v, set()).update(u for u in f.scope if u != v)
    todo = set(adj) - keep
    order = []
    while todo:
        def fill(v: int) -> int:
            nb = list(adj[v])
            return sum(1 for i, a in enumerate(nb) for b in nb[i + 1:] if b not in adj[a])

        best = min(todo, key=lambda v: (fill(v), v))
        nb = adj.pop(best)
        for a in nb:
            adj[a].discard(best)
            adj[a].update(nb - {a})
        todo.discard(best)
        order.append(best)
    return order


def _network_factors(
    net: BayesianNetwork,
    evidence: Evidence,
    targets: Iterable[int],
    likelihoods: Mapping[int, np.ndarray] | None = None,
) -> list[Factor]:
    """Evidence-reduced CPT factors, barren nodes pruned."""
    likelihoods = likelihoods or {}
    relevant = set(targets) | set(evidence) | set(likelihoods)
    relevant |= net.ancestors(relevant)
    factors = []
    for node in sorted(relevant):
        factors.append(Factor.from_cpt(net.cpt(node)).reduce(evidence))
    for node, lik in likelihoods.items():
        factors.append(Factor((node,), lik))
    return factors


def joint_with_evidence(
    net: BayesianNetwork,
    evidence: Evidence,
    scope: Sequence[int],
    budget: int = DEFAULT_CELL_BUDGET,
    likelihoods: Mapping[int, np.ndarray] | None = None,
) -> Factor:
    """Unnormalized P(scope, e) as a factor ordered like ``scope``.

    ``likelihoods`` adds soft-evidence vectors on unobserved nodes.
    """
    check_evidence(net, evidence)
    scope = tuple(scope)
    clash = [v for v in scope if v in evidence]
    if clash:
        raise ValueError(f"scope contains observed variables {clash}")
    factors = _network_factors(net, evidence, scope, likelihoods)
    for var in min_fill_order(factors, keep=scope):
        factors = eliminate(factors, var, budget)
    result = multiply(factors + [Factor(scope, np.ones([net.card(v) for v in scope]))], budget)
    return result.transpose_to(scope)


@dataclass(frozen=True)
class PosteriorMarginals:
    marginals: dict[int, np.ndarray]
    evidence_prob: float

    def __getitem__(self, node: int) -> np.ndarray:
        return self.marginals[node]

    def __iter__(self):
        return iter(self.marginals)

    def __len__(self) -> int:
        return len(self.marginals)


def posterior_marginals(
    net: BayesianNetwork,
    evidence: Evidence,
    budget: int = DEFAULT_CELL_BUDGET,
    likelihoods: Mapping[int, np.ndarray] | None = None,
) -> PosteriorMarginals:
    """Exact P(X | e) for every unobserved X, and P(e)."""
    marginals = {}
    p_e = None
    for node in net.ids:
        if node in evidence:
            continue
        joint = joint_with_evidence(net, evidence, (node,), budget, likelihoods)
        total = float(joint.values.sum())
        if total <= 0:
            raise InconsistentEvidence("evidence has zero probability")
        marginals[node] = joint.values / total
        p_e = total if p_e is None else p_e
    if p_e is None:
        p_e = float(joint_with_evidence(net, evidence, (), budget, likelihoods).values)
    return PosteriorMarginals(marginals, p_e)


def evidence_probability(net: BayesianNetwork, evidence: Evidence, budget: int = DEFAULT_CELL_BUDGET) -> float:
    return float(joint_with_evidence(net, evidence, (), budget).values)


def posterior_joint(
    net: BayesianNetwork,
    evidence: Evidence,
    scope: Sequence[int],
    budget: int = DEFAULT_CELL_BUDGET,
) -> Factor:
    """Exact normalized P(scope | e)."""
    joint = joint_with_evidence(net, evidence, scope, budget)
    if joint.values.sum() <= 0:
        raise InconsistentEvidence("evidence has zero probability")
    return joint.normalized()


def exact_conditional_cpt(
    net: BayesianNetwork,
    xi: int,
    given: Sequence[int],
    evidence: Evidence,
    budget: int = DEFAULT_CELL_BUDGET,
) -> Cpt:
    """Exact P(xi | given, e) as a CPT with ``given`` as its parents.

    Conditioning configurations of zero probability get a uniform row and
    are listed in ``degenerate_rows``.
    """
    if xi in evidence:
        raise ValueError(f"{net.variables[xi].name} is observed")
    given = tuple(given)
    if xi in given:
        raise ValueError("xi cannot condition on itself")
    joint = joint_with_evidence(net, evidence, given + (xi,), budget)
    rows = joint.values.reshape(-1, net.card(xi))
    sums = rows.sum(axis=1, keepdims=True)
    zero = np.flatnonzero(sums[:, 0] <= 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        table = rows / sums
    table[zero] = 1.0 / net.card(xi)
    return Cpt(xi, given, table.reshape(joint.values.shape), tuple(int(z) for z in zero))
