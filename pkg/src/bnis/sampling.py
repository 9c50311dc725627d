"""Importance functions, weighted sampling and posterior estimates."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import lbp
from .exact import DEFAULT_CELL_BUDGET, Factor, exact_conditional_cpt, multiply
from .network import (
    Assignment,
    BayesianNetwork,
    Cpt,
    Evidence,
    check_evidence,
    joint_probability,
    log_joint,
    topological_order,
)
from .rng import SampleStream, uniforms
from .structure import Heuristic, Mode, clamp_evidence_parents, factorize

EPSILON = 1e-6


class Strategy(enum.Enum):
    LW = "lw"
    ICPT = "icpt"
    EVPARENTS = "evparents"
    FULL = "full"


class DegenerateBatch(ValueError):
    """Every weight in a batch is zero."""


@dataclass(frozen=True)
class ImportanceFunction:
    strategy: Strategy
    evidence: dict[int, int]
    order: tuple[int, ...]
    tables: dict[int, Cpt]
    lbp_converged: bool | None = None

    def __post_init__(self):
        pos = {n: i for i, n in enumerate(self.order)}
        for node in self.order:
            if any(pos.get(p, len(pos)) >= pos[node] for p in self.tables[node].parents):
                raise ValueError(f"table of {node} has a parent that is sampled later")

    def parents(self, node: int) -> tuple[int, ...]:
        return self.tables[node].parents

    def probability(self, x: Assignment) -> float:
        """g(x) for an assignment over the unobserved scope."""
        g = 1.0
        for node in self.order:
            cpt = self.tables[node]
            g *= float(cpt.table[tuple(x[p] for p in cpt.parents) + (x[node],)])
        return g


@dataclass
class SampleBatch:
    scope: tuple[int, ...]
    states: np.ndarray  # (n, len(scope)) state indices
    weights: np.ndarray
    seed: int
    start: int = 0

    @property
    def n(self) -> int:
        return int(self.weights.shape[0])


@dataclass(frozen=True)
class EstimateSummary:
    marginals: dict[int, np.ndarray]
    evidence_prob_estimate: float
    weight_variance: float
    effective_sample_size: float
    n: int = field(default=0)


def floor_table(cpt: Cpt, epsilon: float) -> Cpt:
    """Raise entries below ``epsilon`` to it and renormalize rows."""
    if epsilon <= 0:
        return cpt
    t = np.maximum(cpt.table, epsilon)
    t = t / t.sum(axis=-1, keepdims=True)
    return Cpt(cpt.child, cpt.parents, t, cpt.degenerate_rows)


def build_importance_function(
    net: BayesianNetwork,
    evidence: Evidence,
    strategy: Strategy,
    lbp_config: lbp.LbpConfig | None = None,
    heuristic: Heuristic | None = Heuristic.BY_CPT_SIZE,
    budget: int = DEFAULT_CELL_BUDGET,
    evparents_fill: str = "lbp",
    epsilon: float | None = None,
) -> ImportanceFunction:
    """Construct the sampling tables for ``strategy``.

    ``evparents_fill`` selects message-based ("lbp") or exact ("exact")
    tables for the evidence-parent structure.  ``epsilon`` defaults to
    ``EPSILON`` for the approximate strategies and to 0 for FULL, whose
    exact tables already vanish only where P(x, e) does.
    """
    check_evidence(net, evidence)
    evidence = dict(evidence)
    strategy = Strategy(strategy)
    lbp_config = lbp_config or lbp.LbpConfig()
    converged = None

    if strategy in (Strategy.LW, Strategy.ICPT):
        order = tuple(n for n in topological_order(net) if n not in evidence)
        if strategy is Strategy.LW:
            tables = {n: clamp_evidence_parents(net, n, evidence) for n in order}
        else:
            state = _run(net, evidence, lbp_config)
            converged = state.converged
            tables = {n: lbp.icpt(state, net, evidence, n) for n in order}
    else:
        mode = Mode.FULL if strategy is Strategy.FULL else Mode.EVPARENTS
        aug = factorize(net, evidence, heuristic, mode)
        order = aug.order
        if strategy is Strategy.FULL or evparents_fill == "exact":
            tables = {n: exact_conditional_cpt(net, n, aug.parents[n], evidence, budget) for n in order}
        elif evparents_fill == "lbp":
            state = _run(net, evidence, lbp_config)
            converged = state.converged
            tables = {
                n: lbp.conditional_estimate(state, net, evidence, n, aug.parents[n]) for n in order
            }
        else:
            raise ValueError(f"unknown fill {evparents_fill!r}")

    if epsilon is None:
        epsilon = 0.0 if strategy is Strategy.FULL else EPSILON
    tables = {n: floor_table(t, epsilon) for n, t in tables.items()}
    return ImportanceFunction(strategy, evidence, tuple(order), tables, converged)


def _run(net, evidence, cfg: lbp.LbpConfig) -> lbp.MessageState:
    return lbp.run_lbp(net, evidence, cfg.max_iterations, cfg.damping, cfg.tolerance)


def induced_joint(ifun: ImportanceFunction) -> Factor:
    """g as an explicit table over the unobserved scope in ascending id order."""
    factors = [Factor.from_cpt(t) for t in ifun.tables.values()]
    return multiply(factors).transpose_to(sorted(ifun.order))


def sample_states(ifun: ImportanceFunction, n: int, seed: int, start: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Forward-sample ``n`` assignments; returns (states, log g).

    Row ``j`` uses the stream of sample index ``start + j``; column ``k``
    holds the state of ``ifun.order[k]``.
    """
    order = ifun.order
    pos = {node: k for k, node in enumerate(order)}
    u = uniforms(seed, np.arange(start, start + n), len(order))
    states = np.zeros((n, len(order)), dtype=np.int64)
    log_g = np.zeros(n)
    for k, node in enumerate(order):
        cpt = ifun.tables[node]
        if cpt.parents:
            rows = cpt.table[tuple(states[:, pos[p]] for p in cpt.parents)]
        else:
            rows = np.broadcast_to(cpt.table, (n, cpt.table.shape[-1]))
        cum = np.cumsum(rows, axis=1)
        cum = cum / cum[:, -1:]
        s = (cum <= u[:, k:k + 1]).sum(axis=1)
        states[:, k] = s
        with np.errstate(divide="ignore"):
            log_g += np.log(rows[np.arange(n), s])
    return states, log_g


def draw_sample(ifun: ImportanceFunction, stream: SampleStream) -> tuple[dict[int, int], float]:
    """One forward sample and its probability under the importance function."""
    states, log_g = sample_states(ifun, 1, stream.seed, stream.index)
    x = {node: int(states[0, k]) for k, node in enumerate(ifun.order)}
    return x, math.exp(log_g[0])


def weigh(net: BayesianNetwork, evidence: Evidence, x: Assignment, g_prob: float) -> float:
    """Importance weight P(x, e) / g(x)."""
    if g_prob <= 0:
        raise ValueError("g_prob must be positive")
    full = dict(x)
    full.update(evidence)
    return joint_probability(net, full) / g_prob


def full_states(net: BayesianNetwork, evidence: Evidence, order: Sequence[int], states: np.ndarray) -> np.ndarray:
    out = np.zeros((states.shape[0], len(net)), dtype=np.int64)
    for k, node in enumerate(order):
        out[:, node] = states[:, k]
    for node, s in evidence.items():
        out[:, node] = s
    return out


def draw_samples(net: BayesianNetwork, ifun: ImportanceFunction, n: int, seed: int, start: int = 0) -> SampleBatch:
    """Draw ``n`` weighted samples; sample ``i`` depends only on (seed, i)."""
    if n < 1:
        raise ValueError("n must be at least 1")
    states, log_g = sample_states(ifun, n, seed, start)
    log_f = log_joint(net, full_states(net, ifun.evidence, ifun.order, states))
    with np.errstate(invalid="ignore"):
        weights = np.where(np.isneginf(log_f), 0.0, np.exp(log_f - log_g))
    return SampleBatch(tuple(ifun.order), states, weights, seed, start)


def estimate(batch: SampleBatch, net: BayesianNetwork) -> EstimateSummary:
    """Self-normalized marginals plus weight diagnostics."""
    if batch.n < 1:
        raise ValueError("empty batch")
    w = batch.weights
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValueError("weights must be finite and nonnegative")
    total = math.fsum(w)
    if total <= 0:
        raise DegenerateBatch("all weights are zero")
    marginals = {}
    for k, node in enumerate(batch.scope):
        sums = np.bincount(batch.states[:, k], weights=w, minlength=net.card(node))
        marginals[node] = sums / sums.sum()
    var = float(np.var(w, ddof=1)) if batch.n > 1 else 0.0
    ess = total * total / math.fsum(w * w)
    return EstimateSummary(marginals, total / batch.n, var, ess, batch.n)


def relative_spread(weights: np.ndarray) -> float:
    weights = np.asarray(weights)
    return float((weights.max() - weights.min()) / weights.mean())
