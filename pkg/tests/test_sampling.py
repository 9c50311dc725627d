import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bnis.bench import gen_random_network
from bnis.exact import posterior_joint, posterior_marginals
from bnis.network import Cpt
from bnis.rng import SampleStream
from bnis.sampling import (
    DegenerateBatch,
    ImportanceFunction,
    SampleBatch,
    Strategy,
    build_importance_function,
    draw_sample,
    draw_samples,
    estimate,
    induced_joint,
    relative_spread,
    weigh,
)

from conftest import A, B, C, NOTC, collider, random_evidence

P_NOTC = 0.5888


def test_lw_tables_and_joint(notc):
    ifun = build_importance_function(collider(), notc, Strategy.LW, epsilon=0)
    np.testing.assert_array_equal(ifun.tables[A].table, [0.2, 0.8])
    np.testing.assert_array_equal(ifun.tables[B].table, [0.7, 0.3])
    # rows a, nota; columns b, notb
    np.testing.assert_allclose(induced_joint(ifun).values, [[0.14, 0.06], [0.56, 0.24]], atol=1e-15)


def test_full_tables_and_joint(notc):
    net = collider()
    ifun = build_importance_function(net, notc, Strategy.FULL)
    assert ifun.tables[B].parents == (A,)
    np.testing.assert_allclose(ifun.tables[A].table, [0.1033, 0.8967], atol=1e-4)
    np.testing.assert_allclose(ifun.tables[B].table[1], [0.9545, 0.0455], atol=1e-4)
    np.testing.assert_allclose(induced_joint(ifun).values, posterior_joint(net, notc, (A, B)).values, atol=1e-12)


def test_evparents_matches_full_on_collider(notc):
    net = collider()
    full = induced_joint(build_importance_function(net, notc, Strategy.FULL)).values
    for fill in ("exact", "lbp"):
        ev = build_importance_function(net, notc, Strategy.EVPARENTS, evparents_fill=fill, epsilon=0)
        np.testing.assert_allclose(induced_joint(ev).values, full, atol=1e-9)


def test_importance_function_rejects_late_parent():
    tables = {0: Cpt(0, (1,), [[0.5, 0.5], [0.5, 0.5]]), 1: Cpt(1, (), [0.5, 0.5])}
    with pytest.raises(ValueError):
        ImportanceFunction(Strategy.LW, {}, (0, 1), tables)


def test_draw_sample_deterministic_tables():
    tables = {0: Cpt(0, (), [0.0, 1.0]), 1: Cpt(1, (0,), [[1.0, 0.0], [1.0, 0.0]])}
    ifun = ImportanceFunction(Strategy.LW, {}, (0, 1), tables)
    x, g = draw_sample(ifun, SampleStream(7, 0))
    assert x == {0: 1, 1: 0} and g == 1.0


def test_draw_sample_full_probability(notc):
    ifun = build_importance_function(collider(), notc, Strategy.FULL)
    seen = {}
    for i in range(200):
        x, g = draw_sample(ifun, SampleStream(3, i))
        seen[(x[A], x[B])] = g
    # (nota, b): P(nota | notc) P(b | nota, notc)
    assert seen[(1, 0)] == pytest.approx((0.528 / P_NOTC) * (0.504 / 0.528), rel=1e-12)
    assert seen[(1, 0)] == pytest.approx(0.8967 * 0.9545, abs=2e-4)


def test_draw_sample_fixed_seed(notc):
    ifun = build_importance_function(collider(), notc, Strategy.ICPT)
    assert draw_sample(ifun, SampleStream(11, 5)) == draw_sample(ifun, SampleStream(11, 5))


def test_draw_samples_partition_independent(notc):
    net = collider()
    ifun = build_importance_function(net, notc, Strategy.ICPT)
    whole = draw_samples(net, ifun, 100, seed=42)
    first = draw_samples(net, ifun, 37, seed=42)
    rest = draw_samples(net, ifun, 63, seed=42, start=37)
    np.testing.assert_array_equal(whole.states, np.vstack([first.states, rest.states]))
    np.testing.assert_array_equal(whole.weights, np.concatenate([first.weights, rest.weights]))
    for i in (0, 50, 99):
        x, g = draw_sample(ifun, SampleStream(42, i))
        assert [x[n] for n in whole.scope] == list(whole.states[i])
        assert weigh(net, notc, x, g) == pytest.approx(whole.weights[i], rel=1e-12)


def test_weigh_examples(notc):
    net = collider()
    assert weigh(net, notc, {A: 0, B: 0}, 0.14) == pytest.approx(0.01)
    assert weigh(net, notc, {A: 1, B: 0}, 0.56) == pytest.approx(0.9)
    full = build_importance_function(net, notc, Strategy.FULL)
    for a, b in itertools.product(range(2), repeat=2):
        x = {A: a, B: b}
        assert weigh(net, notc, x, full.probability(x)) == pytest.approx(P_NOTC, rel=1e-12)
    with pytest.raises(ValueError):
        weigh(net, notc, {A: 0, B: 0}, 0.0)


def test_estimate_single_sample():
    batch = SampleBatch((A, B), np.array([[0, 1]]), np.array([0.5]), seed=0)
    s = estimate(batch, collider())
    np.testing.assert_array_equal(s.marginals[A], [1.0, 0.0])
    assert s.weight_variance == 0.0 and s.effective_sample_size == 1.0
    assert s.evidence_prob_estimate == 0.5


def test_estimate_equal_weights():
    states = np.array([[0, 0], [1, 0], [1, 1], [0, 1]])
    s = estimate(SampleBatch((A, B), states, np.full(4, 0.3), seed=0), collider())
    assert s.weight_variance == 0.0
    assert s.effective_sample_size == pytest.approx(4.0)
    np.testing.assert_allclose(s.marginals[A], [0.5, 0.5])


def test_estimate_exhaustive_lw_is_exact(notc):
    net = collider()
    ifun = build_importance_function(net, notc, Strategy.LW, epsilon=0)
    states, weights = [], []
    for a, b in itertools.product(range(2), repeat=2):
        x = {A: a, B: b}
        g = ifun.probability(x)
        states.append([a, b])
        # weight each distinct assignment by its mass under g
        weights.append(g * weigh(net, notc, x, g))
    s = estimate(SampleBatch((A, B), np.array(states), np.array(weights), seed=0), net)
    post = posterior_marginals(net, notc)
    np.testing.assert_allclose(s.marginals[A], post[A], atol=1e-15)
    np.testing.assert_allclose(s.marginals[B], post[B], atol=1e-15)


def test_estimate_all_zero_weights():
    with pytest.raises(DegenerateBatch):
        estimate(SampleBatch((A,), np.array([[0], [1]]), np.zeros(2), seed=0), collider())


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 100_000), n=st.integers(2, 10), strategy=st.sampled_from(list(Strategy)))
def test_support_dominance(seed, n, strategy):
    net = gen_random_network(n, max_parents=3, seed=seed)
    ev = random_evidence(net, np.random.default_rng(seed), max_size=4)
    ifun = build_importance_function(net, ev, strategy)
    g = induced_joint(ifun)
    f = posterior_joint(net, ev, g.scope)
    assert np.all(g.values[f.values > 0] > 0)


@pytest.mark.parametrize("strategy", list(Strategy))
def test_unbiased_on_collider(strategy, notc):
    net = collider()
    ifun = build_importance_function(net, notc, strategy)
    n = 100_000
    batch = draw_samples(net, ifun, n, seed=123)
    s = estimate(batch, net)
    sd = math.sqrt(s.weight_variance)
    assert abs(s.evidence_prob_estimate - P_NOTC) <= 4 * sd / math.sqrt(n) + 1e-12
    post = posterior_marginals(net, notc)
    np.testing.assert_allclose(s.marginals[A], post[A], atol=0.01)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 100_000), n=st.integers(2, 10))
def test_full_zero_variance(seed, n):
    net = gen_random_network(n, max_parents=3, seed=seed)
    ev = random_evidence(net, np.random.default_rng(seed), max_size=4)
    p_e = posterior_marginals(net, ev).evidence_prob
    batch = draw_samples(net, build_importance_function(net, ev, Strategy.FULL), 500, seed=seed)
    assert relative_spread(batch.weights) < 1e-9
    np.testing.assert_allclose(batch.weights, p_e, rtol=1e-9)


def test_lw_converges(notc):
    net = collider()
    ifun = build_importance_function(net, notc, Strategy.LW)
    post = posterior_marginals(net, notc)
    errs = []
    for n in (1_000, 100_000):
        s = estimate(draw_samples(net, ifun, n, seed=5), net)
        errs.append(abs(s.marginals[A][0] - post[A][0]))
    assert errs[1] < errs[0]
