"""Sensitivity of posteriors to evidence along causal, diagnostic and intercausal links."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .exact import DEFAULT_CELL_BUDGET, posterior_marginals
from .network import BayesianNetwork, Cpt, Variable


class LinkKind(enum.Enum):
    CAUSAL = "causal"
    DIAGNOSTIC = "diagnostic"
    INTERCAUSAL = "intercausal"


@dataclass(frozen=True)
class SensitivityReport:
    sr_value: float
    link_kind: LinkKind
    p_y_given_x: float
    p_y_given_notx: float


def sensitivity_range(p_y_given_x: float, p_y_given_notx: float, link_kind: LinkKind = LinkKind.DIAGNOSTIC) -> SensitivityReport:
    """dP(y|e)/dP(x|e) for binary X and Y.

    P(y|e) is linear in P(x|e) with slope P(y|x) - P(y|not x) for every link
    kind, so the closed form is shared.
    """
    for p in (p_y_given_x, p_y_given_notx):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"probability {p} outside [0, 1]")
    return SensitivityReport(
        float(p_y_given_x) - float(p_y_given_notx), LinkKind(link_kind), p_y_given_x, p_y_given_notx
    )


def random_chain(length: int, seed: int = 0) -> BayesianNetwork:
    """Binary chain X1 -> ... -> X{length} -> E with uniform-random CPT entries."""
    rng = np.random.default_rng(seed)
    names = [f"X{i + 1}" for i in range(length)] + ["E"]
    variables = [Variable(i, n, ("t", "f")) for i, n in enumerate(names)]
    cpts = []
    for i in range(len(names)):
        if i == 0:
            p = rng.random()
            cpts.append(Cpt(0, (), [p, 1 - p]))
        else:
            p = rng.random(2)
            cpts.append(Cpt(i, (i - 1,), np.stack([p, 1 - p], axis=1)))
    return BayesianNetwork(variables, cpts, name=f"chain{seed}")


def _distances_to(net: BayesianNetwork, target: int) -> dict[int, int]:
    """Length of the shortest directed path from each ancestor to ``target``."""
    dist = {target: 0}
    frontier = [target]
    while frontier:
        nxt = []
        for n in frontier:
            for p in net.parents(n):
                if p not in dist:
                    dist[p] = dist[n] + 1
                    nxt.append(p)
        frontier = nxt
    del dist[target]
    return dist


def evidence_decay(
    net: BayesianNetwork,
    evidence_node: int,
    state: int,
    step: float = 1e-6,
    budget: int = DEFAULT_CELL_BUDGET,
) -> list[tuple[int, int, float]]:
    """Finite-difference sensitivity of each ancestor's posterior to the evidence.

    The hard observation ``evidence_node = state`` is softened by giving the
    other states likelihood ``step``; the sensitivity of X is the total
    variation change of P(X | .) divided by ``step``.  Returns
    ``(node, distance, sensitivity)`` sorted by distance then id.
    """
    hard = posterior_marginals(net, {evidence_node: state}, budget)
    lik = np.full(net.card(evidence_node), step)
    lik[state] = 1.0
    soft = posterior_marginals(net, {}, budget, likelihoods={evidence_node: lik})
    rows = []
    for node, d in _distances_to(net, evidence_node).items():
        tv = 0.5 * float(np.abs(soft[node] - hard[node]).sum())
        rows.append((node, d, tv / step))
    return sorted(rows, key=lambda r: (r[1], r[0]))
