import itertools
from importlib import resources

import numpy as np
import pytest

from bnis.netio import parse_network
from bnis.network import BayesianNetwork, Cpt, Variable

A, B, C = 0, 1, 2
NOTC = 1  # index of state "notc"


def collider() -> BayesianNetwork:
    text = resources.files("bnis").joinpath("data/collider.net").read_text()
    return parse_network(text)


def make_net(spec, cards=None):
    """Build a network from {name: (parents, flat_table)} in declaration order."""
    names = list(spec)
    cards = cards or {}
    variables = [Variable(i, n, [f"{n.lower()}{k}" for k in range(cards.get(n, 2))]) for i, n in enumerate(names)]
    cpts = []
    for i, n in enumerate(names):
        parents, table = spec[n]
        pids = [names.index(p) for p in parents]
        shape = [variables[p].card for p in pids] + [variables[i].card]
        cpts.append(Cpt(i, pids, np.asarray(table, dtype=float).reshape(shape)))
    return BayesianNetwork(variables, cpts)


def chain() -> BayesianNetwork:
    return make_net({
        "A": ([], [0.3, 0.7]),
        "B": (["A"], [0.9, 0.1, 0.2, 0.8]),
        "C": (["B"], [0.6, 0.4, 0.25, 0.75]),
    })


def diamond() -> BayesianNetwork:
    return make_net({
        "A": ([], [0.4, 0.6]),
        "B": (["A"], [0.7, 0.3, 0.1, 0.9]),
        "C": (["A"], [0.2, 0.8, 0.5, 0.5]),
        "D": (["B", "C"], [0.9, 0.1, 0.6, 0.4, 0.3, 0.7, 0.05, 0.95]),
    })


def brute_joint(net: BayesianNetwork):
    """Yield (assignment tuple, probability) for every complete assignment.

    Independent of the library's inference code: raw CPT lookups only.
    """
    cards = [v.card for v in net.variables]
    for x in itertools.product(*(range(k) for k in cards)):
        p = 1.0
        for cpt in net.cpts:
            p *= cpt.table[tuple(x[q] for q in cpt.parents) + (x[cpt.child],)]
        yield x, p


def brute_posterior(net: BayesianNetwork, evidence):
    """Posterior marginals and P(e) by exhaustive enumeration."""
    marg = {n: np.zeros(net.card(n)) for n in net.ids if n not in evidence}
    total = 0.0
    for x, p in brute_joint(net):
        if any(x[e] != s for e, s in evidence.items()):
            continue
        total += p
        for n in marg:
            marg[n][x[n]] += p
    return {n: m / total for n, m in marg.items()}, total


def brute_joint_table(net: BayesianNetwork, evidence, scope):
    table = np.zeros([net.card(v) for v in scope])
    for x, p in brute_joint(net):
        if any(x[e] != s for e, s in evidence.items()):
            continue
        table[tuple(x[v] for v in scope)] += p
    return table / table.sum()


def random_evidence(net, rng, max_size=None):
    n = len(net)
    k = int(rng.integers(0, (max_size or n - 1) + 1))
    k = min(k, n - 1)
    chosen = rng.choice(n, size=k, replace=False)
    # forward-sampled states keep P(e) > 0
    x = [0] * n
    from bnis.network import topological_order

    for node in topological_order(net):
        cpt = net.cpt(node)
        row = cpt.table[tuple(x[p] for p in cpt.parents)]
        x[node] = int(rng.choice(len(row), p=row / row.sum()))
    return {int(v): x[int(v)] for v in chosen}


@pytest.fixture
def collider_net():
    return collider()


@pytest.fixture
def notc():
    return {C: NOTC}


def random_linear_extension(net, rng):
    """A uniformly tie-broken topological order (parents before children)."""
    placed, order = set(), []
    while len(order) < len(net):
        ready = [n for n in net.ids if n not in placed and set(net.parents(n)) <= placed]
        pick = int(rng.choice(ready))
        placed.add(pick)
        order.append(pick)
    return order


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_log():
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
