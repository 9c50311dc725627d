"""Command-line entry point ``bnis``.

Exit codes: 0 success, 1 configuration or input error, 2 exact-inference
budget exceeded.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import bench, influence
from .exact import BudgetExceeded, InconsistentEvidence, posterior_marginals, exact_conditional_cpt
from .lbp import LbpConfig
from .netio import Case, ParseError, read_cases, read_network, serialize_cases, serialize_network, write_csv
from .sampling import Strategy, build_importance_function, draw_samples, estimate
from .structure import Heuristic, Mode, factorize

log = logging.getLogger("bnis")


def _cases(args, net) -> list[Case]:
    if getattr(args, "cases", None):
        return read_cases(args.cases, net)
    return [Case("prior", {})]


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8", newline="")
    else:
        sys.stdout.write(text)


def cmd_exact(args) -> int:
    net = read_network(args.net)
    rows = []
    for case in _cases(args, net):
        post = posterior_marginals(net, case.evidence, args.budget)
        for node in sorted(post.marginals):
            var = net.variables[node]
            for s, p in enumerate(post[node]):
                rows.append([case.id, post.evidence_prob, var.name, var.states[s], float(p)])
    _emit(write_csv(["case_id", "evidence_prob", "node", "state", "probability"], rows), args.out)
    return 0


def cmd_factorize(args) -> int:
    net = read_network(args.net)
    mode = Mode(args.mode)
    heuristic = Heuristic(args.heuristic)
    chunks = []
    for case in _cases(args, net):
        aug = factorize(net, case.evidence, heuristic, mode)
        if args.fill == "exact":
            aug = aug.with_cpts({
                n: exact_conditional_cpt(net, n, aug.parents[n], case.evidence, args.budget) for n in aug.order
            })
        name = net.variables
        lines = [f"# case {case.id}", f"# mode {mode.value} heuristic {heuristic.value}"]
        lines += [f"# added arc {name[a].name} -> {name[b].name}" for a, b in aug.added_arcs]
        lines.append(f"# added arcs {len(aug.added_arcs)} max cpt cells {aug.max_cpt_cells()}")
        chunks.append("\n".join(lines) + "\n" + serialize_network(aug.to_network()))
    _emit("\n".join(chunks), args.out)
    return 0


def cmd_sample(args) -> int:
    net = read_network(args.net)
    strategy = Strategy(args.strategy)
    rows = []
    for case in _cases(args, net):
        ifun = build_importance_function(net, case.evidence, strategy, budget=args.budget)
        summary = estimate(draw_samples(net, ifun, args.samples, args.seed), net)
        log.info(
            "case %s: P(e) ~ %.6g, weight variance %.6g, ESS %.1f",
            case.id, summary.evidence_prob_estimate, summary.weight_variance, summary.effective_sample_size,
        )
        for node in sorted(summary.marginals):
            var = net.variables[node]
            for s, p in enumerate(summary.marginals[node]):
                rows.append([case.id, strategy.value, args.seed, var.name, var.states[s], float(p)])
    _emit(write_csv(["case_id", "strategy", "seed", "node", "state", "estimate"], rows), args.out)
    return 0


def cmd_bench(args) -> int:
    config = bench.ExperimentConfig.load(args.config)
    if args.out:
        config.output = args.out
    rows = bench.run_experiment(config)
    if not config.output:
        sys.stdout.write(bench.results_csv(rows))
    log.info("%d rows", len(rows))
    return 0


def cmd_diagnose(args) -> int:
    net = read_network(args.net)
    rows = []
    for case in _cases(args, net):
        for ev_node in sorted(case.evidence):
            for node, dist, sens in influence.evidence_decay(net, ev_node, case.evidence[ev_node], budget=args.budget):
                rows.append([case.id, net.variables[ev_node].name, net.variables[node].name, dist, sens])
    _emit(write_csv(["case_id", "evidence", "node", "distance", "sensitivity"], rows), args.out)
    return 0


def cmd_gen(args) -> int:
    net = bench.gen_random_network(args.nodes, args.max_parents, args.max_states, args.seed)
    _emit(serialize_network(net), args.out)
    if args.cases_out:
        cases = bench.gen_cases(net, args.case_count, args.sizes, args.seed)
        Path(args.cases_out).write_text(serialize_cases(cases, net), encoding="utf-8", newline="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bnis", description="Importance sampling in discrete Bayesian networks")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, cases_required=False):
        p.add_argument("--net", required=True)
        p.add_argument("--cases", required=cases_required)
        p.add_argument("--out")
        p.add_argument("--budget", type=int, default=2**20, help="exact-inference cell budget")

    p = sub.add_parser("exact", help="exact posterior marginals")
    common(p)
    p.set_defaults(func=cmd_exact)

    p = sub.add_parser("factorize", help="augmented structure for each case")
    common(p, cases_required=True)
    p.add_argument("--mode", choices=[m.value for m in Mode], default="full")
    p.add_argument("--heuristic", choices=[h.value for h in Heuristic], default="cptsize")
    p.add_argument("--fill", choices=["none", "exact"], default="none")
    p.set_defaults(func=cmd_factorize)

    p = sub.add_parser("sample", help="importance-sampling estimates")
    common(p, cases_required=True)
    p.add_argument("--strategy", choices=[s.value for s in Strategy], required=True)
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("bench", help="run an experiment config and write result CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("diagnose", help="evidence influence decay by distance")
    common(p, cases_required=True)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("gen", help="random network (and optional cases)")
    p.add_argument("--nodes", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-parents", type=int, default=3)
    p.add_argument("--max-states", type=int, default=2)
    p.add_argument("--out")
    p.add_argument("--cases-out")
    p.add_argument("--case-count", type=int, default=15)
    p.add_argument("--sizes", type=int, nargs="+", default=[1])
    p.set_defaults(func=cmd_gen)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except BudgetExceeded as exc:
        print(f"bnis: exact-inference budget exceeded: {exc}", file=sys.stderr)
        return 2
    except (ParseError, bench.ConfigError, InconsistentEvidence, OSError, ValueError, KeyError) as exc:
        print(f"bnis: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
