"""End-to-end acceptance checks, one test per criterion.

Each test prints a PASS/FAIL line (also collected into the terminal summary)
and then asserts both the numeric condition and the runtime limit.
"""

import json
import math
import time
from importlib import resources

import numpy as np
import pytest

from bnis.bench import (
    ExperimentConfig,
    compare_strategies,
    gen_random_network,
    gen_random_polytree,
    results_csv,
    run_experiment,
    avg_hellinger,
)
from bnis.exact import Factor, exact_conditional_cpt, multiply, posterior_joint, posterior_marginals
from bnis.influence import LinkKind, sensitivity_range
from bnis.lbp import icpt, run_lbp
from bnis.sampling import Strategy, build_importance_function, draw_samples, estimate, induced_joint, relative_spread
from bnis.structure import factorize, is_factorizable

from conftest import A, B, C, NOTC, brute_posterior, collider, random_evidence

pytestmark = pytest.mark.acceptance

NOTC_EV = {C: NOTC}


def _check(log, number, title, ok, elapsed, limit, detail=""):
    within = elapsed < limit
    status = "PASS" if ok and within else "FAIL"
    line = f"criterion {number:2d} {status}  {title}  ({elapsed:.2f}s / {limit:g}s) {detail}".rstrip()
    print(line)
    log.append(line)
    assert ok, detail
    assert within, f"took {elapsed:.2f}s, limit {limit}s"


def _order_abab(table):
    """(a,b), (nota,b), (a,notb), (nota,notb) from a [A][B] table."""
    return np.array([table[0, 0], table[1, 0], table[0, 1], table[1, 1]])


def test_criterion_01_golden_posterior_joint(acceptance_log):
    t0 = time.perf_counter()
    joint = _order_abab(posterior_joint(collider(), NOTC_EV, (A, B)).values)
    expected = np.array([0.0024, 0.8560, 0.1009, 0.0408])
    err = float(np.abs(joint - expected).max())
    _check(acceptance_log, 1, "golden posterior joint", err <= 1e-4, time.perf_counter() - t0, 1,
           f"max err {err:.2e}")


def test_criterion_02_golden_exact_filled_cpts(acceptance_log):
    t0 = time.perf_counter()
    ifun = build_importance_function(collider(), NOTC_EV, Strategy.FULL)
    pa = ifun.tables[A].table
    pb = ifun.tables[B].table
    assert ifun.tables[B].parents == (A,)
    errs = {
        "P(A)": float(np.abs(pa - [0.1033, 0.8967]).max()),
        "P(B|a)": float(np.abs(pb[0] - [0.0232, 0.9768]).max()),
        "P(B|nota)": float(np.abs(pb[1] - [0.9545, 0.0455]).max()),
    }
    detail = ", ".join(f"{k} err {v:.2e}" for k, v in errs.items())
    _check(acceptance_log, 2, "golden exact-filled CPTs", max(errs.values()) <= 1e-4, time.perf_counter() - t0, 1,
           detail)


def test_criterion_03_golden_strategy_joints(acceptance_log):
    t0 = time.perf_counter()
    net = collider()
    lw = _order_abab(induced_joint(build_importance_function(net, NOTC_EV, Strategy.LW)).values)
    ic = _order_abab(induced_joint(build_importance_function(net, NOTC_EV, Strategy.ICPT)).values)
    lw_err = float(np.abs(lw - [0.14, 0.56, 0.06, 0.24]).max())
    ic_err = float(np.abs(ic - [0.0886, 0.7697, 0.0146, 0.1270]).max())
    ok = lw_err <= 1e-15 and ic_err <= 5e-4
    _check(acceptance_log, 3, "golden strategy joints", ok, time.perf_counter() - t0, 1,
           f"LW err {lw_err:.1e}, ICPT err {ic_err:.2e}")


def test_criterion_04_zero_variance_optimum(acceptance_log):
    t0 = time.perf_counter()
    cases = [(collider(), NOTC_EV)]
    rng = np.random.default_rng(404)
    while len(cases) < 21:
        seed = int(rng.integers(2**31))
        net = gen_random_network(int(rng.integers(2, 11)), max_parents=3, seed=seed)
        ev = random_evidence(net, np.random.default_rng(seed), max_size=4)
        if ev:
            cases.append((net, ev))
    worst_spread = worst_err = 0.0
    for i, (net, ev) in enumerate(cases):
        p_e = posterior_marginals(net, ev).evidence_prob
        w = draw_samples(net, build_importance_function(net, ev, Strategy.FULL), 2000, seed=i).weights
        worst_spread = max(worst_spread, relative_spread(w))
        worst_err = max(worst_err, float(np.abs(w - p_e).max()))
    ok = worst_spread < 1e-9 and worst_err <= 1e-9
    _check(acceptance_log, 4, "zero-variance optimum", ok, time.perf_counter() - t0, 30,
           f"max spread {worst_spread:.1e}, max |w - P(e)| {worst_err:.1e}")


def test_criterion_05_factorizable_structure(acceptance_log):
    t0 = time.perf_counter()
    rng = np.random.default_rng(505)
    failures = 0
    for _ in range(100):
        seed = int(rng.integers(2**31))
        net = gen_random_network(int(rng.integers(2, 16)), max_parents=3, max_states=3, seed=seed)
        ev = random_evidence(net, np.random.default_rng(seed), max_size=6)
        aug = factorize(net, ev)
        failures += not is_factorizable(aug, ev, aug.order)
    worst = 0.0
    for _ in range(100):
        seed = int(rng.integers(2**31))
        net = gen_random_network(int(rng.integers(2, 13)), max_parents=3, seed=seed)
        ev = random_evidence(net, np.random.default_rng(seed), max_size=5)
        aug = factorize(net, ev)
        scope = tuple(sorted(aug.order))
        tables = [Factor.from_cpt(exact_conditional_cpt(net, x, aug.parents[x], ev)) for x in aug.order]
        product = multiply(tables).transpose_to(scope).values
        worst = max(worst, float(np.abs(product - posterior_joint(net, ev, scope).values).max()))
    ok = failures == 0 and worst <= 1e-9
    _check(acceptance_log, 5, "factorizable structure", ok, time.perf_counter() - t0, 120,
           f"{failures}/100 not factorizable, max joint err {worst:.1e}")


def test_criterion_06_oracle_equivalence(acceptance_log):
    t0 = time.perf_counter()
    rng = np.random.default_rng(606)
    ve_err = 0.0
    for _ in range(50):
        seed = int(rng.integers(2**31))
        net = gen_random_network(int(rng.integers(2, 13)), max_parents=3, seed=seed)
        ev = random_evidence(net, np.random.default_rng(seed), max_size=5)
        expected, _ = brute_posterior(net, ev)
        post = posterior_marginals(net, ev)
        for node, dist in expected.items():
            ve_err = max(ve_err, float(np.abs(post[node] - dist).max()))
    lbp_err = 0.0
    for _ in range(50):
        seed = int(rng.integers(2**31))
        net = gen_random_polytree(int(rng.integers(2, 16)), max_states=3, seed=seed)
        ev = random_evidence(net, np.random.default_rng(seed), max_size=5)
        state = run_lbp(net, ev)
        for x in net.ids:
            if x in ev:
                continue
            own = tuple(p for p in net.parents(x) if p not in ev)
            diff = icpt(state, net, ev, x).table - exact_conditional_cpt(net, x, own, ev).table
            lbp_err = max(lbp_err, float(np.abs(diff).max()))
    ok = ve_err <= 1e-9 and lbp_err <= 1e-6
    _check(acceptance_log, 6, "oracle equivalence", ok, time.perf_counter() - t0, 120,
           f"VE err {ve_err:.1e}, polytree ICPT err {lbp_err:.1e}")


def test_criterion_07_sensitivity_bound(acceptance_log):
    t0 = time.perf_counter()
    rng = np.random.default_rng(707)
    kinds = list(LinkKind)
    worst = 0.0
    for i, (p, q) in enumerate(rng.random((10_000, 2))):
        worst = max(worst, abs(sensitivity_range(p, q, kinds[i % 3]).sr_value))
    _check(acceptance_log, 7, "sensitivity range bound", worst <= 1.0, time.perf_counter() - t0, 1,
           f"max |SR| {worst:.6f}")


def test_criterion_08_convergence_rate(acceptance_log):
    t0 = time.perf_counter()
    net = collider()
    exact = posterior_marginals(net, NOTC_EV)
    ifun = build_importance_function(net, NOTC_EV, Strategy.LW)
    med = {}
    for n in (1_000, 100_000):
        errs = [avg_hellinger(exact, estimate(draw_samples(net, ifun, n, seed), net)) for seed in range(20)]
        med[n] = float(np.median(errs))
    ok = med[100_000] < med[1_000] / 5
    _check(acceptance_log, 8, "LW convergence rate", ok, time.perf_counter() - t0, 60,
           f"median {med[1_000]:.2e} -> {med[100_000]:.2e} (ratio {med[1_000] / med[100_000]:.1f})")


def test_criterion_09_strategy_ordering(acceptance_log):
    t0 = time.perf_counter()
    cmp = compare_strategies(n_networks=40, seed=2024, n_samples=10_000)
    m_lw, m_ic, m_ev = (cmp.median(s) for s in (Strategy.LW, Strategy.ICPT, Strategy.EVPARENTS))
    wins, n, p = cmp.sign_test(Strategy.EVPARENTS, Strategy.ICPT)
    ok = m_ev <= m_ic <= m_lw and p < 0.05
    _check(acceptance_log, 9, "strategy ordering", ok, time.perf_counter() - t0, 600,
           f"medians EVPARENTS {m_ev:.4f} ICPT {m_ic:.4f} LW {m_lw:.4f}; sign test {wins}/{n}, p={p:.1e}")


def test_criterion_10_determinism(acceptance_log, tmp_path):
    t0 = time.perf_counter()
    data = resources.files("bnis").joinpath("data")
    config = {
        "network": str(data / "collider.net"),
        "cases": str(data / "collider.cases"),
        "strategies": ["lw", "icpt", "evparents", "full"],
        "n_samples": 20_000,
        "repetitions": 3,
        "seed": 77,
    }
    outputs = []
    for run, workers in enumerate((1, 1, 2)):
        path = tmp_path / f"run{run}.json"
        path.write_text(json.dumps(dict(config, output=str(tmp_path / f"run{run}.csv"), workers=workers)))
        run_experiment(ExperimentConfig.load(path))
        outputs.append((tmp_path / f"run{run}.csv").read_bytes())
    ok = outputs[0] == outputs[1] and len(outputs[0]) > 0
    detail = f"{len(outputs[0])} bytes, identical={outputs[0] == outputs[1]}"
    detail += f", parallel partition identical={outputs[0] == outputs[2]}"
    _check(acceptance_log, 10, "determinism", ok, time.perf_counter() - t0, 60, detail)
