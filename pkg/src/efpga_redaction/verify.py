"""Equivalence checking over the full-scan interface, and loop reports.

Two netlists are compared on their scan interface: primary inputs and
register outputs are matched by name, primary outputs by position, and
register next-state pins by register name.  An X on any compared output
under a fully specified input vector counts as a mismatch.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field

from .netlist import (Netlist, NetlistError, exhaustive_patterns, feedback_edge_set,
                      find_sccs, _successors, is_acyclic, simulate, simulate_words)
from .sat.cnf import Builder, encode
from .sat.solver import Solver


class InterfaceError(ValueError):
    pass


@dataclass
class EquivalenceVerdict:
    method: str
    equivalent: bool
    counterexample: dict[str, int] | None = None
    vectors_checked: int = 0
    mismatched: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"method": self.method, "equivalent": self.equivalent,
                "counterexample": self.counterexample, "vectors_checked": self.vectors_checked,
                "mismatched": self.mismatched}


def scan_interface(a: Netlist, b: Netlist) -> tuple[list[str], list[tuple[str, str, str]]]:
    """(shared scan inputs, [(label, net in a, net in b)]) or InterfaceError."""
    if a.key_inputs or b.key_inputs:
        raise InterfaceError("netlists with unassigned key inputs cannot be compared")
    ins_a = list(a.scan_inputs())
    ins_b = set(b.scan_inputs())
    if set(ins_a) != ins_b:
        diff = sorted(set(ins_a) ^ ins_b)
        raise InterfaceError(f"scan inputs differ: {diff[:6]}")
    if len(a.outputs) != len(b.outputs):
        raise InterfaceError(f"output counts differ: {len(a.outputs)} vs {len(b.outputs)}")
    pairs = [(oa, oa, ob) for oa, ob in zip(a.outputs, b.outputs)]
    da = {c.output: c.inputs[0] for c in a.dffs}
    db = {c.output: c.inputs[0] for c in b.dffs}
    for q in sorted(da):
        pairs.append((q + ".D", da[q], db[q]))
    return ins_a, pairs


def _compare_words(a, b, inputs, pairs, ones, zeros, width):
    oa, za, ida = simulate_words(a, ones, zeros, width)
    ob, zb, idb = simulate_words(b, ones, zeros, width)
    full = (1 << width) - 1
    bad = 0
    where = {}
    for label, na, nb in pairs:
        i, j = ida[na], idb[nb]
        agree = (oa[i] & ob[j]) | (za[i] & zb[j])
        diff = ~agree & full
        if diff:
            where[label] = diff
            bad |= diff
    return bad, where


def _vector(inputs, ones, bit):
    return {net: (ones[net] >> bit) & 1 for net in inputs}


def exhaustive_equiv(a: Netlist, b: Netlist, max_inputs: int = 16) -> EquivalenceVerdict:
    inputs, pairs = scan_interface(a, b)
    if len(inputs) > max_inputs:
        raise InterfaceError(f"{len(inputs)} scan inputs exceed the exhaustive limit of {max_inputs}")
    width = 1 << len(inputs)
    words = exhaustive_patterns(len(inputs))
    full = (1 << width) - 1
    ones = dict(zip(inputs, words))
    zeros = {net: ~w & full for net, w in ones.items()}
    bad, where = _compare_words(a, b, inputs, pairs, ones, zeros, width)
    if not bad:
        return EquivalenceVerdict("exhaustive", True, None, width)
    bit = (bad & -bad).bit_length() - 1
    cex = _vector(inputs, ones, bit)
    labels = [lab for lab, m in where.items() if (m >> bit) & 1]
    return EquivalenceVerdict("exhaustive", False, cex, width, labels)


def random_equiv(a: Netlist, b: Netlist, n_vectors: int = 1000, seed: int = 0) -> EquivalenceVerdict:
    """Seeded random simulation; only a "not equivalent" verdict is conclusive."""
    inputs, pairs = scan_interface(a, b)
    rng = random.Random(seed)
    full = (1 << n_vectors) - 1
    ones = {net: rng.getrandbits(n_vectors) for net in inputs}
    zeros = {net: ~w & full for net, w in ones.items()}
    bad, where = _compare_words(a, b, inputs, pairs, ones, zeros, n_vectors)
    if not bad:
        return EquivalenceVerdict("random", True, None, n_vectors)
    bit = (bad & -bad).bit_length() - 1
    labels = [lab for lab, m in where.items() if (m >> bit) & 1]
    return EquivalenceVerdict("random", False, _vector(inputs, ones, bit), n_vectors, labels)


def sat_equiv(a: Netlist, b: Netlist, seed: int = 0, deadline: float | None = None) -> EquivalenceVerdict:
    """Miter check: UNSAT means equivalent, a model is a counterexample."""
    inputs, pairs = scan_interface(a, b)
    for n in (a, b):
        if not is_acyclic(n):
            raise NetlistError(f"sat_equiv needs acyclic netlists; {n.name!r} has loops")
    solver = Solver(seed)
    bld = Builder(solver)
    va = encode(bld, a)
    shared = {net: va[net] for net in inputs}
    vb = encode(bld, b, shared)
    diffs = [bld.xor2(va[na], vb[nb]) for _, na, nb in pairs]
    flag = bld.or_(diffs)
    if not bld.assert_value(flag, True):
        return EquivalenceVerdict("sat", True, None, 0)
    if not solver.solve(deadline=deadline):
        return EquivalenceVerdict("sat", True, None, 0)
    cex = {}
    for net in inputs:
        v = shared[net]
        cex[net] = int(v) if isinstance(v, bool) else int(solver.model_value(v))
    # replay to name the differing outputs
    ra = simulate(a, cex, state=True)
    rb = simulate(b, cex, state=True)
    labels = []
    for k, (label, _, _) in enumerate(pairs):
        if k < len(a.outputs):
            x, y = ra[a.outputs[k]], rb[b.outputs[k]]
        else:
            x, y = ra[label], rb[label]
        if x != y or x == 2:
            labels.append(label)
    return EquivalenceVerdict("sat", False, cex, 1, labels)


def check_equivalence(a: Netlist, b: Netlist, max_inputs: int = 16, seed: int = 0) -> EquivalenceVerdict:
    """Exhaustive when the scan interface is small enough, SAT otherwise."""
    inputs, _ = scan_interface(a, b)
    if len(inputs) <= max_inputs:
        return exhaustive_equiv(a, b, max_inputs)
    return sat_equiv(a, b, seed)


def replay(a: Netlist, b: Netlist, vector: dict[str, int]) -> bool:
    """True when the two netlists disagree (or give X) on ``vector``."""
    _, pairs = scan_interface(a, b)
    ra = simulate(a, vector, state=True)
    rb = simulate(b, vector, state=True)
    for k, (label, _, _) in enumerate(pairs):
        if k < len(a.outputs):
            x, y = ra[a.outputs[k]], rb[b.outputs[k]]
        else:
            x, y = ra[label], rb[label]
        if x != y or x == 2:
            return True
    return False


# ----------------------------------------------------------------------
# loop report
# ----------------------------------------------------------------------

@dataclass
class LoopEntry:
    cells: list[str]
    break_edges: list[tuple[str, int]]
    path: list[str]
    config_muxes: list[str]

    def describe(self) -> str:
        return " -> ".join(self.path)


def loop_report(n: Netlist) -> list[LoopEntry]:
    """One entry per combinational loop with its break edges and one example cycle.

    ``config_muxes`` lists the cells on the example cycle that are MUX2s
    selected by a key input.
    """
    keys = set(n.key_inputs)
    fes = feedback_edge_set(n)
    succ = _successors(n)
    idx = n.cell_index
    entries = []
    for comp in find_sccs(n):
        members = set(comp)
        if len(comp) == 1:
            c = n.driver(comp[0])
            if c.kind == "DFF" or comp[0] not in c.inputs:
                continue
        edges = [e for e in fes if e[0] in members]
        cell, pos = edges[0]
        start = n.driver(cell).inputs[pos]
        path = _cycle_through(n, succ, idx, members, start, cell)
        muxes = [net for net in path[:-1] if (d := n.driver(net)).kind == "MUX2" and d.inputs[0] in keys]
        entries.append(LoopEntry(list(comp), edges, path, muxes))
    return entries


def _cycle_through(n, succ, idx, members, start, end) -> list[str]:
    """Shortest path start -> ... -> end inside the component, closed back to start."""
    s, t = idx[start], idx[end]
    prev = {s: None}
    todo = deque([s])
    while todo:
        v = todo.popleft()
        if v == t:
            break
        for w, _ in succ[v]:
            if w not in prev and n.cells[w].output in members:
                prev[w] = v
                todo.append(w)
    path = []
    v = t
    while v is not None:
        path.append(n.cells[v].output)
        v = prev[v]
    path.reverse()
    return path + [start]
