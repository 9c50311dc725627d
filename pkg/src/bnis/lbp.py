"""Loopy belief propagation (Pearl's pi/lambda messages) and ICPT estimates."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exact import Factor, multiply
from .network import BayesianNetwork, Cpt, Evidence, check_evidence

DEFAULT_DAMPING = 0.1
DEFAULT_TOLERANCE = 1e-8


@dataclass(frozen=True)
class LbpConfig:
    max_iterations: int | None = None  # None: 2 * skeleton diameter + 5
    damping: float = DEFAULT_DAMPING
    tolerance: float = DEFAULT_TOLERANCE


@dataclass
class MessageState:
    """Messages after a run.

    ``pi[(u, x)]`` is the message from parent ``u`` to child ``x`` (over u's
    states); ``lam[(x, u)]`` goes from child ``x`` to parent ``u``.
    """

    pi: dict[tuple[int, int], np.ndarray]
    lam: dict[tuple[int, int], np.ndarray]
    evidence: dict[int, int]
    iterations: int
    residual: float
    converged: bool

    def lambda_product(self, net: BayesianNetwork, node: int) -> np.ndarray:
        out = np.ones(net.card(node))
        for c in net.children(node):
            out = out * self.lam[(c, node)]
        return out

    def belief(self, net: BayesianNetwork, node: int) -> np.ndarray:
        b = _pi_of(net, node, self.pi) * self.lambda_product(net, node) * _indicator(net, node, self.evidence)
        total = b.sum()
        return b / total if total > 0 else np.full(net.card(node), 1.0 / net.card(node))


def skeleton_diameter(net: BayesianNetwork) -> int:
    adj = {n: set(net.parents(n)) | set(net.children(n)) for n in net.ids}
    best = 0
    for s in net.ids:
        dist = {s: 0}
        queue = deque([s])
        while queue:
            n = queue.popleft()
            for m in adj[n]:
                if m not in dist:
                    dist[m] = dist[n] + 1
                    queue.append(m)
        best = max(best, max(dist.values()))
    return best


def _normalize(v: np.ndarray) -> np.ndarray:
    total = v.sum()
    if not np.isfinite(total) or total <= 0:
        return np.full(v.shape, 1.0 / v.size)
    return v / total


def _indicator(net: BayesianNetwork, node: int, evidence: Evidence) -> np.ndarray:
    if node in evidence:
        ind = np.zeros(net.card(node))
        ind[evidence[node]] = 1.0
        return ind
    return np.ones(net.card(node))


def _contract(table: np.ndarray, vectors: Sequence[np.ndarray | None], keep: int | None) -> np.ndarray:
    """Sum ``table`` against one vector per axis; ``None`` entries leave the axis summed plainly.

    With ``keep`` set, that axis is left free and returned.
    """
    ops: list = [table, list(range(table.ndim))]
    for axis, vec in enumerate(vectors):
        if vec is not None and axis != keep:
            ops += [vec, [axis]]
    ops.append([keep] if keep is not None else [])
    return np.einsum(*ops)


def _pi_of(net: BayesianNetwork, node: int, pi: dict) -> np.ndarray:
    cpt = net.cpt(node)
    m = len(cpt.parents)
    vectors = [pi[(p, node)] for p in cpt.parents] + [None]
    return _contract(cpt.table, vectors, keep=m)


def run_lbp(
    net: BayesianNetwork,
    evidence: Evidence,
    max_iterations: int | None = None,
    damping: float = DEFAULT_DAMPING,
    tolerance: float = DEFAULT_TOLERANCE,
) -> MessageState:
    """Synchronous flooding belief propagation with damping.

    Stops when the largest message change drops below ``tolerance`` or
    after ``max_iterations`` sweeps. Non-convergence is reported through
    ``MessageState.converged``.
    """
    check_evidence(net, evidence)
    if max_iterations is None:
        max_iterations = 2 * skeleton_diameter(net) + 5
    if max_iterations < 1:
        raise ValueError("max_iterations must be at least 1")
    if not 0.0 <= damping < 1.0:
        raise ValueError("damping must lie in [0, 1)")
    evidence = dict(evidence)
    arcs = net.arcs()
    pi = {(u, x): np.full(net.card(u), 1.0 / net.card(u)) for u, x in arcs}
    lam = {(x, u): np.full(net.card(u), 1.0 / net.card(u)) for u, x in arcs}
    ind = {n: _indicator(net, n, evidence) for n in net.ids}

    residual = np.inf
    it = 0
    while it < max_iterations:
        it += 1
        new_pi = {}
        new_lam = {}
        for node in net.ids:
            cpt = net.cpt(node)
            kids = net.children(node)
            pi_x = _pi_of(net, node, pi)
            lam_in = {c: lam[(c, node)] for c in kids}
            lam_x = ind[node].copy()
            for v in lam_in.values():
                lam_x = lam_x * v
            for c in kids:
                out = pi_x * ind[node]
                for other in kids:
                    if other != c:
                        out = out * lam_in[other]
                new_pi[(node, c)] = _normalize(out)
            m = len(cpt.parents)
            for k, u in enumerate(cpt.parents):
                vectors = [pi[(p, node)] for p in cpt.parents] + [lam_x]
                new_lam[(node, u)] = _normalize(_contract(cpt.table, vectors, keep=k))
        residual = 0.0
        for key, msg in new_pi.items():
            msg = (1.0 - damping) * msg + damping * pi[key]
            residual = max(residual, float(np.abs(msg - pi[key]).max()))
            pi[key] = msg
        for key, msg in new_lam.items():
            msg = (1.0 - damping) * msg + damping * lam[key]
            residual = max(residual, float(np.abs(msg - lam[key]).max()))
            lam[key] = msg
        if residual < tolerance:
            break
    return MessageState(pi, lam, evidence, it, float(residual), bool(residual < tolerance))


def _row_normalize(node: int, parents: tuple[int, ...], values: np.ndarray) -> Cpt:
    card = values.shape[-1]
    rows = values.reshape(-1, card)
    sums = rows.sum(axis=1, keepdims=True)
    zero = np.flatnonzero(sums[:, 0] <= 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        table = rows / sums
    table[zero] = 1.0 / card
    return Cpt(node, parents, table.reshape(values.shape), tuple(int(z) for z in zero))


def conditional_estimate(
    state: MessageState,
    net: BayesianNetwork,
    evidence: Evidence,
    xi: int,
    parents: Sequence[int],
) -> Cpt:
    """Message-based estimate of P(xi | parents, e) for an augmented parent set.

    ``parents`` must contain xi's unobserved original parents.  The table is
    P(xi | original parents, clamped evidence parents) times, for every child
    of xi, the child's lambda message -- except that an observed child sharing
    conditioned parents with xi contributes its likelihood as a function of
    xi and those parents, with its remaining parents summed against their pi
    messages.  With no added parents this is the ICPT.
    """
    if xi in evidence:
        raise ValueError(f"{net.variables[xi].name} is observed")
    parents = tuple(parents)
    cond = set(parents)
    cpt = net.cpt(xi)
    idx = tuple(evidence[p] if p in evidence else slice(None) for p in cpt.parents)
    own = [p for p in cpt.parents if p not in evidence]
    missing = set(own) - cond
    if missing:
        raise ValueError(f"parents {sorted(missing)} of {xi} must be conditioned on")
    factors = [Factor(own + [xi], cpt.table[idx + (slice(None),)])]
    for c in net.children(xi):
        c_cpt = net.cpt(c)
        shared = [p for p in c_cpt.parents if p != xi and p in cond and p not in evidence]
        if c not in evidence or not shared:
            factors.append(Factor((xi,), state.lam[(c, xi)]))
            continue
        # likelihood of the observed child as a function of (shared..., xi)
        vectors: list = []
        keep_axes = []
        for axis, p in enumerate(c_cpt.parents):
            if p == xi or p in shared:
                vectors.append(None)
                keep_axes.append(axis)
            else:
                vectors.append(state.pi[(p, c)])
        table = c_cpt.table[..., evidence[c]]
        ops: list = [table, list(range(table.ndim))]
        for axis, vec in enumerate(vectors):
            if vec is not None:
                ops += [vec, [axis]]
        ops.append(keep_axes)
        lik = np.einsum(*ops)
        scope = [c_cpt.parents[a] for a in keep_axes]
        factors.append(Factor(scope, lik))
    joint = multiply(factors + [Factor(parents + (xi,), np.ones([net.card(p) for p in parents] + [net.card(xi)]))])
    joint = joint.transpose_to(parents + (xi,))
    return _row_normalize(xi, parents, joint.values)


def icpt(state: MessageState, net: BayesianNetwork, evidence: Evidence, xi: int) -> Cpt:
    """Estimate of P(xi | PA(xi)\\E, E) from belief-propagation messages."""
    own = tuple(p for p in net.parents(xi) if p not in evidence)
    return conditional_estimate(state, net, evidence, xi, own)
