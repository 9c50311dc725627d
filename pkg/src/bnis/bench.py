"""Experiment harness: random networks and cases, strategy runs, Hellinger scoring."""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .exact import DEFAULT_CELL_BUDGET, InconsistentEvidence, PosteriorMarginals, posterior_marginals
from .lbp import LbpConfig
from .netio import Case, CaseFile, read_cases, read_network, write_csv
from .network import BayesianNetwork, Cpt, Variable, topological_order
from .sampling import EstimateSummary, Strategy, build_importance_function, draw_samples, estimate
from .structure import Heuristic

CSV_HEADER = ("case_id", "strategy", "n_samples", "seed", "avg_hellinger", "weight_variance", "ess", "wall_ms")


class ConfigError(ValueError):
    pass


def hellinger(p: Sequence[float], q: Sequence[float]) -> float:
    """Hellinger distance, scaled to lie in [0, 1]."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {q.shape}")
    for d in (p, q):
        if np.any(d < 0) or abs(d.sum() - 1.0) > 1e-6:
            raise ValueError("distributions must be nonnegative and sum to 1")
    return float(np.sqrt(np.sum((np.sqrt(p) - np.sqrt(q)) ** 2) / 2.0))


def avg_hellinger(exact: PosteriorMarginals | dict, estimated: EstimateSummary | dict) -> float:
    """Mean per-variable Hellinger distance over the unobserved scope."""
    exact = exact.marginals if isinstance(exact, PosteriorMarginals) else exact
    est = estimated.marginals if isinstance(estimated, EstimateSummary) else estimated
    if set(exact) != set(est):
        raise ValueError("exact and estimated marginals cover different variables")
    if not exact:
        return 0.0
    return math.fsum(hellinger(exact[n], est[n]) for n in sorted(exact)) / len(exact)


# --- generators ---------------------------------------------------------------


def _names(count: int) -> list[str]:
    width = len(str(max(count - 1, 0)))
    return [f"X{i:0{width}d}" for i in range(count)]


def _dirichlet_cpt(rng: np.random.Generator, node: int, parents: list[int], cards: list[int]) -> Cpt:
    shape = [cards[p] for p in parents] + [cards[node]]
    rows = rng.dirichlet(np.ones(cards[node]), size=int(np.prod(shape[:-1])))
    return Cpt(node, parents, rows.reshape(shape))


def gen_random_network(
    node_count: int, max_parents: int = 3, max_states: int = 2, seed: int = 0, min_states: int = 2
) -> BayesianNetwork:
    """Random DAG with Dirichlet(1, ..., 1) CPT rows.

    Node ``i`` picks up to ``max_parents`` parents among nodes ``< i``.
    """
    if node_count < 1:
        raise ValueError("node_count must be at least 1")
    rng = np.random.default_rng(seed)
    cards = [int(rng.integers(min_states, max_states + 1)) for _ in range(node_count)]
    variables = [Variable(i, name, [f"s{k}" for k in range(cards[i])]) for i, name in enumerate(_names(node_count))]
    cpts = []
    for i in range(node_count):
        k = int(rng.integers(0, min(max_parents, i) + 1))
        parents = sorted(int(p) for p in rng.choice(i, size=k, replace=False)) if k else []
        cpts.append(_dirichlet_cpt(rng, i, parents, cards))
    return BayesianNetwork(variables, cpts, name=f"random{seed}")


def gen_random_polytree(node_count: int, max_states: int = 2, seed: int = 0) -> BayesianNetwork:
    """Random polytree: a random tree skeleton with random arc directions."""
    rng = np.random.default_rng(seed)
    cards = [int(rng.integers(2, max_states + 1)) for _ in range(node_count)]
    parents: dict[int, list[int]] = {i: [] for i in range(node_count)}
    for i in range(1, node_count):
        j = int(rng.integers(0, i))
        if rng.random() < 0.5:
            parents[i].append(j)
        else:
            parents[j].append(i)
    variables = [Variable(i, name, [f"s{k}" for k in range(cards[i])]) for i, name in enumerate(_names(node_count))]
    cpts = [_dirichlet_cpt(rng, i, sorted(parents[i]), cards) for i in range(node_count)]
    return BayesianNetwork(variables, cpts, name=f"polytree{seed}")


def forward_sample(net: BayesianNetwork, rng: np.random.Generator) -> list[int]:
    x = [0] * len(net)
    for node in topological_order(net):
        cpt = net.cpt(node)
        row = cpt.table[tuple(x[p] for p in cpt.parents)]
        x[node] = int(rng.choice(len(row), p=row / row.sum()))
    return x


def gen_cases(
    net: BayesianNetwork,
    case_count: int,
    evidence_sizes: Sequence[int],
    seed: int,
    pool: Sequence[int] | None = None,
) -> CaseFile:
    """``case_count`` cases per evidence size.

    Evidence variables are drawn uniformly without replacement from ``pool``
    (all variables by default); their states come from one prior forward
    sample, so every case has positive probability.
    """
    pool = list(net.ids if pool is None else pool)
    rng = np.random.default_rng(seed)
    cases: CaseFile = []
    for size in evidence_sizes:
        if size >= len(net) or size > len(pool):
            raise ValueError(f"evidence size {size} too large for {len(net)} variables")
        for _ in range(case_count):
            chosen = sorted(int(v) for v in rng.choice(pool, size=size, replace=False)) if size else []
            x = forward_sample(net, rng)
            cases.append(Case(str(len(cases) + 1), {v: x[v] for v in chosen}))
    return cases


# --- experiments ----------------------------------------------------------------


@dataclass
class ExperimentConfig:
    network: str
    strategies: list[Strategy]
    n_samples: int
    seed: int = 0
    cases: str | None = None
    case_count: int = 1
    evidence_sizes: list[int] = field(default_factory=list)
    repetitions: int = 1
    output: str | None = None
    heuristic: Heuristic = Heuristic.BY_CPT_SIZE
    lbp: LbpConfig = field(default_factory=LbpConfig)
    budget: int = DEFAULT_CELL_BUDGET
    record_wall_time: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.n_samples < 1:
            raise ConfigError("n_samples must be at least 1")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be at least 1")
        self.strategies = [Strategy(s) for s in self.strategies]
        self.heuristic = Heuristic(self.heuristic)

    @classmethod
    def from_dict(cls, data: dict, base: Path | None = None) -> "ExperimentConfig":
        data = dict(data)
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "network" not in data or "n_samples" not in data:
            raise ConfigError("config needs 'network' and 'n_samples'")
        if base is not None:
            for key in ("network", "cases", "output"):
                if data.get(key):
                    data[key] = str((base / data[key]) if not Path(data[key]).is_absolute() else data[key])
        if "lbp" in data:
            data["lbp"] = LbpConfig(**data["lbp"])
        data.setdefault("strategies", [])
        try:
            return cls(**data)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(data, base=path.parent)


@dataclass(frozen=True)
class ResultRow:
    case_id: str
    strategy: Strategy
    n_samples: int
    seed: int
    avg_hellinger: float
    weight_variance: float
    ess: float
    wall_ms: float
    skipped: bool = False

    def as_csv(self) -> list:
        if self.skipped:
            return [self.case_id, self.strategy.value, self.n_samples, self.seed, "skipped", "", "", ""]
        return [
            self.case_id,
            self.strategy.value,
            self.n_samples,
            self.seed,
            self.avg_hellinger,
            self.weight_variance,
            self.ess,
            self.wall_ms,
        ]


def run_case(
    net: BayesianNetwork,
    case: Case,
    strategies: Sequence[Strategy],
    n_samples: int,
    seeds: Sequence[int],
    heuristic: Heuristic | None = Heuristic.BY_CPT_SIZE,
    lbp_config: LbpConfig | None = None,
    budget: int = DEFAULT_CELL_BUDGET,
    record_wall_time: bool = False,
) -> list[ResultRow]:
    """Score each (strategy, seed) on one evidence case against exact marginals."""
    try:
        exact = posterior_marginals(net, case.evidence, budget)
    except InconsistentEvidence:
        return [ResultRow(case.id, s, n_samples, seed, math.nan, math.nan, math.nan, math.nan, True)
                for s in strategies for seed in seeds]
    rows = []
    for strategy in strategies:
        for seed in seeds:
            t0 = time.perf_counter()
            ifun = build_importance_function(net, case.evidence, strategy, lbp_config, heuristic, budget)
            summary = estimate(draw_samples(net, ifun, n_samples, seed), net)
            wall = (time.perf_counter() - t0) * 1000.0 if record_wall_time else 0.0
            rows.append(ResultRow(
                case.id, strategy, n_samples, seed, avg_hellinger(exact, summary),
                summary.weight_variance, summary.effective_sample_size, wall,
            ))
    return rows


def _case_key(case_id: str):
    return (0, int(case_id), "") if case_id.isdigit() else (1, 0, case_id)


def sort_rows(rows: Sequence[ResultRow]) -> list[ResultRow]:
    strategy_rank = {s: i for i, s in enumerate(Strategy)}
    return sorted(rows, key=lambda r: (_case_key(r.case_id), strategy_rank[r.strategy], r.seed))


def _run_case_job(args):
    return run_case(*args)


def run_experiment(config: ExperimentConfig) -> list[ResultRow]:
    """Run every (case, strategy, repetition); writes CSV when ``config.output`` is set."""
    net = read_network(config.network)
    if config.cases:
        cases = read_cases(config.cases, net)
    else:
        for size in config.evidence_sizes:
            if size >= len(net):
                raise ConfigError(f"evidence size {size} leaves no unobserved variable")
        cases = gen_cases(net, config.case_count, config.evidence_sizes, config.seed)
    seeds = [config.seed + r for r in range(config.repetitions)]
    jobs = [
        (net, case, config.strategies, config.n_samples, seeds, config.heuristic, config.lbp,
         config.budget, config.record_wall_time)
        for case in cases
    ] if config.strategies else []
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            chunks = list(pool.map(_run_case_job, jobs))
    else:
        chunks = [_run_case_job(job) for job in jobs]
    rows = sort_rows([r for chunk in chunks for r in chunk])
    if config.output:
        Path(config.output).write_text(results_csv(rows), encoding="utf-8", newline="")
    return rows


def results_csv(rows: Sequence[ResultRow]) -> str:
    return write_csv(CSV_HEADER, (r.as_csv() for r in rows))


# --- strategy comparison on synthetic networks ---------------------------------


@dataclass
class Comparison:
    errors: dict[Strategy, list[float]]
    networks: list[str]

    def median(self, strategy: Strategy) -> float:
        return float(np.median(self.errors[strategy]))

    def sign_test(self, better: Strategy, worse: Strategy) -> tuple[int, int, float]:
        """Paired one-tailed sign test that ``better`` has lower error; ties dropped.

        Returns (wins, non-tied pairs, p-value).
        """
        from scipy.stats import binomtest

        a = np.asarray(self.errors[better])
        b = np.asarray(self.errors[worse])
        wins = int(np.sum(a < b))
        n = int(np.sum(a != b))
        if n == 0:
            return 0, 0, 1.0
        return wins, n, float(binomtest(wins, n, 0.5, alternative="greater").pvalue)


def evidence_pool(net: BayesianNetwork) -> list[int]:
    """Leaves with two or more parents: observing them couples their causes."""
    return [n for n in net.ids if not net.children(n) and len(net.parents(n)) >= 2]


def compare_strategies(
    n_networks: int = 40,
    seed: int = 2024,
    n_samples: int = 10_000,
    strategies: Sequence[Strategy] = (Strategy.LW, Strategy.ICPT, Strategy.EVPARENTS),
    node_range: tuple[int, int] = (15, 30),
    evidence_range: tuple[int, int] = (3, 6),
    max_parents: int = 3,
    max_states: int = 3,
    lbp_config: LbpConfig | None = None,
) -> Comparison:
    """Average Hellinger error per strategy on seeded random networks.

    Each network gets one evidence case drawn from :func:`evidence_pool`
    (networks with too small a pool are skipped); all strategies share the
    sample seed.
    """
    rng = np.random.default_rng(seed)
    errors: dict[Strategy, list[float]] = {Strategy(s): [] for s in strategies}
    names = []
    while len(names) < n_networks:
        net_seed = int(rng.integers(2**31))
        nodes = int(rng.integers(node_range[0], node_range[1] + 1))
        net = gen_random_network(nodes, max_parents, max_states, net_seed)
        pool = evidence_pool(net)
        k = int(rng.integers(evidence_range[0], evidence_range[1] + 1))
        if len(pool) < k:
            continue
        case = gen_cases(net, 1, [k], net_seed, pool=pool)[0]
        rows = run_case(net, case, list(errors), n_samples, [net_seed], lbp_config=lbp_config)
        for row in rows:
            errors[row.strategy].append(row.avg_hellinger)
        names.append(net.name)
    return Comparison(errors, names)
