"""Line-oriented text formats for networks and evidence cases, plus CSV output.

Network grammar (``#`` starts a comment)::

    net <name>
    node <name> states <s1> <s2> ...
    parents <node> [<p1> <p2> ...]
    cpt <node> <p_1> ... <p_k>

CPT entries are row-major over parent configurations (parents in declared
order, last fastest); each row lists the child-state probabilities.

Case grammar::

    case <id>
    <node> = <state>
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .network import ROW_TOLERANCE, BayesianNetwork, Cpt, Variable, validate_network


class ParseError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def _lines(text: str):
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield number, line.split()


def parse_network(text: str, renormalize: bool = False) -> BayesianNetwork:
    """Parse a network document.

    Rows off by more than 1e-9 are rejected unless ``renormalize`` is set.
    """
    name = "net"
    nodes: dict[str, tuple[int, list[str]]] = {}
    parents: dict[str, tuple[int, list[str]]] = {}
    entries: dict[str, tuple[int, list[str]]] = {}
    for number, tok in _lines(text):
        kw = tok[0]
        if kw == "net":
            if len(tok) != 2:
                raise ParseError("expected 'net <name>'", number)
            name = tok[1]
        elif kw == "node":
            if len(tok) < 3 or tok[2] != "states":
                raise ParseError("expected 'node <name> states <s1> <s2> ...'", number)
            if tok[1] in nodes:
                raise ParseError(f"node {tok[1]} declared twice", number)
            if len(tok) < 5:
                raise ParseError(f"node {tok[1]} needs at least 2 states", number)
            if len(set(tok[3:])) != len(tok) - 3:
                raise ParseError(f"node {tok[1]} has duplicate states", number)
            nodes[tok[1]] = (number, tok[3:])
        elif kw == "parents":
            if len(tok) < 2:
                raise ParseError("expected 'parents <node> [<p1> ...]'", number)
            if tok[1] in parents:
                raise ParseError(f"parents of {tok[1]} given twice", number)
            parents[tok[1]] = (number, tok[2:])
        elif kw == "cpt":
            if len(tok) < 2:
                raise ParseError("expected 'cpt <node> <p_1> ... <p_k>'", number)
            if tok[1] in entries:
                raise ParseError(f"CPT for {tok[1]} given twice", number)
            entries[tok[1]] = (number, tok[2:])
        else:
            raise ParseError(f"unknown keyword {kw!r}", number)

    variables = [Variable(i, n, states) for i, (n, (_, states)) in enumerate(nodes.items())]
    index = {v.name: v.id for v in variables}
    for node, (number, _) in list(parents.items()) + list(entries.items()):
        if node not in index:
            raise ParseError(f"undefined node {node}", number)
    cpts = []
    for var in variables:
        number, pa = parents.get(var.name, (None, []))
        for p in pa:
            if p not in index:
                raise ParseError(f"undefined parent {p} of {var.name}", number)
        if len(set(pa)) != len(pa):
            raise ParseError(f"repeated parent of {var.name}", number)
        if var.name not in entries:
            raise ParseError(f"missing CPT for {var.name}")
        number, raw = entries[var.name]
        shape = [variables[index[p]].card for p in pa] + [var.card]
        expected = int(np.prod(shape))
        if len(raw) != expected:
            raise ParseError(f"expected {expected} entries for CPT of {var.name}, got {len(raw)}", number)
        try:
            values = np.array([float(x) for x in raw])
        except ValueError as exc:
            raise ParseError(f"bad probability in CPT of {var.name}: {exc}", number) from None
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ParseError(f"negative or non-finite entry in CPT of {var.name}", number)
        rows = values.reshape(-1, var.card)
        sums = rows.sum(axis=1)
        if renormalize:
            if np.any(sums <= 0):
                raise ParseError(f"zero row in CPT of {var.name}", number)
            rows = rows / sums[:, None]
        else:
            bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_TOLERANCE)
            if bad.size:
                raise ParseError(f"row {bad[0]} of CPT for {var.name} sums to {sums[bad[0]]!r}", number)
        cpts.append(Cpt(var.id, [index[p] for p in pa], rows.reshape(shape)))
    net = BayesianNetwork(variables, cpts, name=name)
    issues = validate_network(net)
    if issues:
        raise ParseError("; ".join(i.message for i in issues))
    return net


def _num(x: float) -> str:
    return repr(float(x))


def serialize_network(net: BayesianNetwork) -> str:
    out = [f"net {net.name}"]
    for v in net.variables:
        out.append(f"node {v.name} states {' '.join(v.states)}")
    for v in net.variables:
        pa = net.parents(v.id)
        if pa:
            out.append(f"parents {v.name} {' '.join(net.variables[p].name for p in pa)}")
    for v in net.variables:
        vals = " ".join(_num(x) for x in net.cpt(v.id).table.ravel())
        out.append(f"cpt {v.name} {vals}")
    return "\n".join(out) + "\n"


@dataclass
class Case:
    id: str
    evidence: dict[int, int] = field(default_factory=dict)


CaseFile = list[Case]


def parse_cases(text: str, net: BayesianNetwork) -> CaseFile:
    cases: CaseFile = []
    current: Case | None = None
    seen_ids: set[str] = set()
    for number, tok in _lines(text):
        if tok[0] == "case":
            if len(tok) != 2:
                raise ParseError("expected 'case <id>'", number)
            if tok[1] in seen_ids:
                raise ParseError(f"duplicate case id {tok[1]}", number)
            seen_ids.add(tok[1])
            current = Case(tok[1])
            cases.append(current)
            continue
        if current is None:
            raise ParseError("observation before any 'case' line", number)
        if len(tok) != 3 or tok[1] != "=":
            raise ParseError("expected '<node> = <state>'", number)
        node, _, label = tok
        try:
            var = net.var(node)
        except KeyError:
            raise ParseError(f"unknown variable {node}", number) from None
        if label not in var.states:
            raise ParseError(f"unknown state {label} for variable {node}", number)
        if var.id in current.evidence:
            raise ParseError(f"duplicate variable {node} in case {current.id}", number)
        current.evidence[var.id] = var.states.index(label)
        if len(current.evidence) >= len(net):
            raise ParseError(f"case {current.id} observes every variable", number)
    return cases


def serialize_cases(cases: Iterable[Case], net: BayesianNetwork) -> str:
    out = []
    for case in cases:
        out.append(f"case {case.id}")
        for node in sorted(case.evidence):
            var = net.variables[node]
            out.append(f"{var.name} = {var.states[case.evidence[node]]}")
    return "\n".join(out) + ("\n" if out else "")


def write_csv(header: Sequence[str], rows: Iterable[Sequence], stream=None) -> str:
    """Comma-separated, LF line endings; floats in shortest round-trip form."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_num(v) if isinstance(v, (float, np.floating)) else v for v in row])
    text = buf.getvalue()
    if stream is not None:
        stream.write(text)
    return text


def read_network(path) -> BayesianNetwork:
    with open(path, encoding="utf-8") as fh:
        return parse_network(fh.read())


def read_cases(path, net: BayesianNetwork) -> CaseFile:
    with open(path, encoding="utf-8") as fh:
        return parse_cases(fh.read(), net)
