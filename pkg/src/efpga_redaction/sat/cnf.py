"""Tseitin encoding of netlists into CNF.

Net values during encoding are either a DIMACS literal (int) or a Python
bool for nets that constant propagation already fixed.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Union

from ..netlist import Netlist, feedback_edge_set, topological_order
from .solver import SolverTimeout

Value = Union[int, bool]


@dataclass
class CNF:
    nvars: int = 0
    clauses: list[list[int]] = field(default_factory=list)
    varmap: dict = field(default_factory=dict)

    def new_var(self) -> int:
        self.nvars += 1
        return self.nvars

    def add(self, clause: Iterable[int]) -> None:
        clause = list(clause)
        if not clause:
            raise ValueError("empty clause")
        self.clauses.append(clause)

    def __len__(self) -> int:
        return len(self.clauses)


class Builder:
    """Clause sink that allocates variables and optionally streams into a solver.

    Keeping the solver in sync clause by clause makes the DIP loop incremental.
    """

    def __init__(self, solver=None, cnf: CNF | None = None):
        self.solver = solver
        self.cnf = cnf if cnf is not None else CNF()
        self.count = 0

    def new_var(self) -> int:
        v = self.cnf.new_var()
        if self.solver is not None:
            self.solver.ensure_vars(v)
        return v

    def add(self, clause: list[int]) -> None:
        self.count += 1
        self.cnf.clauses.append(clause)
        if self.solver is not None:
            self.solver.add_clause(clause)

    # -- gate helpers ----------------------------------------------------

    def and_(self, vals: list[Value]) -> Value:
        lits = []
        for v in vals:
            if v is False:
                return False
            if v is True:
                continue
            lits.append(v)
        lits = list(dict.fromkeys(lits))
        if not lits:
            return True
        if len(lits) == 1:
            return lits[0]
        if any(-l in lits for l in lits):
            return False
        y = self.new_var()
        for l in lits:
            self.add([-y, l])
        self.add([y] + [-l for l in lits])
        return y

    def or_(self, vals: list[Value]) -> Value:
        return neg(self.and_([neg(v) for v in vals]))

    def xor2(self, a: Value, b: Value) -> Value:
        if isinstance(a, bool):
            return neg(b) if a else b
        if isinstance(b, bool):
            return neg(a) if b else a
        if a == b:
            return False
        if a == -b:
            return True
        y = self.new_var()
        self.add([-y, a, b])
        self.add([-y, -a, -b])
        self.add([y, -a, b])
        self.add([y, a, -b])
        return y

    def mux(self, s: Value, a: Value, b: Value) -> Value:
        """s ? b : a"""
        if isinstance(s, bool):
            return b if s else a
        # constants first: 1 == True in Python, so literal comparison must wait
        if isinstance(a, bool) and isinstance(b, bool):
            return a if a == b else (s if b else neg(s))
        if isinstance(a, bool):
            return self.or_([neg(s), b]) if a else self.and_([s, b])
        if isinstance(b, bool):
            return self.or_([s, a]) if b else self.and_([neg(s), a])
        if a == b:
            return a
        y = self.new_var()
        self.add([s, -a, y])
        self.add([s, a, -y])
        self.add([-s, -b, y])
        self.add([-s, b, -y])
        return y

    def lut(self, ins: list[Value], table: int) -> Value:
        # cofactor away constant inputs
        free = []
        fixed = 0
        for pos, v in enumerate(ins):
            if isinstance(v, bool):
                fixed |= int(v) << pos
            else:
                free.append(pos)
        sub = 0
        for row in range(1 << len(free)):
            full = fixed
            for j, pos in enumerate(free):
                full |= ((row >> j) & 1) << pos
            sub |= ((table >> full) & 1) << row
        nrows = 1 << len(free)
        if sub == 0:
            return False
        if sub == (1 << nrows) - 1:
            return True
        lits = [ins[p] for p in free]
        if len(lits) == 1:
            return lits[0] if sub == 0b10 else -lits[0]
        y = self.new_var()
        for row in range(nrows):
            clause = [-l if (row >> j) & 1 else l for j, l in enumerate(lits)]
            clause.append(y if (sub >> row) & 1 else -y)
            self.add(clause)
        return y

    def equal(self, a: Value, b: Value) -> Value:
        return neg(self.xor2(a, b))

    def contradict(self) -> None:
        """Make the clause set unsatisfiable."""
        z = self.new_var()
        self.add([z])
        self.add([-z])

    def assert_value(self, v: Value, want: bool = True) -> bool:
        """Constrain ``v`` to ``want``; returns False if that is a constant contradiction."""
        if isinstance(v, bool):
            return v == want
        self.add([v if want else -v])
        return True


def neg(v: Value) -> Value:
    return (not v) if isinstance(v, bool) else -v


def encode(builder: Builder, n: Netlist, bind: Mapping[str, Value] | None = None,
           order: list[int] | None = None, deadline: float | None = None,
           cut: Mapping[tuple[str, int], Value] | None = None) -> dict[str, Value]:
    """Encode an acyclic netlist; returns net -> value.

    ``bind`` fixes the value of some scan inputs (primary inputs or DFF
    outputs), e.g. shared key variables or concrete input bits; all other
    scan inputs get fresh variables.  ``cut`` overrides the value read by
    particular (cell, input position) pins, which is how loops are opened.
    Past ``deadline`` (a ``time.monotonic()`` instant)
    :class:`SolverTimeout` is raised.
    """
    bind = bind or {}
    vals: dict[str, Value] = {}
    for net in n.inputs:
        vals[net] = bind[net] if net in bind else builder.new_var()
    for c in n.dffs:
        vals[c.output] = bind[c.output] if c.output in bind else builder.new_var()
    if order is None:
        order = topological_order(n)
    cells = n.cells
    cut_cells = {c for c, _ in cut} if cut else set()
    for step, ci in enumerate(order):
        if deadline is not None and not step & 4095 and time.monotonic() > deadline:
            raise SolverTimeout({"encoded_cells": step})
        c = cells[ci]
        kind = c.kind
        if kind == "DFF":
            continue
        if c.output in cut_cells:
            ins = [cut[(c.output, pos)] if (c.output, pos) in cut else vals[i]
                   for pos, i in enumerate(c.inputs)]
        else:
            ins = [vals[i] for i in c.inputs]
        if kind == "MUX2":
            v = builder.mux(*ins)
        elif kind == "BUF":
            v = ins[0]
        elif kind == "NOT":
            v = neg(ins[0])
        elif kind == "AND":
            v = builder.and_(ins)
        elif kind == "NAND":
            v = neg(builder.and_(ins))
        elif kind == "OR":
            v = builder.or_(ins)
        elif kind == "NOR":
            v = neg(builder.or_(ins))
        elif kind in ("XOR", "XNOR"):
            v = ins[0]
            for other in ins[1:]:
                v = builder.xor2(v, other)
            if kind == "XNOR":
                v = neg(v)
        elif kind == "LUT":
            v = builder.lut(ins, c.table)
        elif kind == "CONST0":
            v = False
        elif kind == "CONST1":
            v = True
        else:
            raise AssertionError(kind)
        vals[c.output] = v
    return vals


def encode_cyclic(builder: Builder, n: Netlist, bind: Mapping[str, Value] | None = None,
                  deadline: float | None = None) -> dict[str, Value]:
    """Gate-consistency encoding of a possibly cyclic netlist.

    Each feedback edge reads a fresh variable that is then tied to the net
    it stands for.  When the active part of the netlist is acyclic the
    constraints have exactly one solution per input vector.
    """
    fes = feedback_edge_set(n)
    order = topological_order(n, skip=fes)
    fresh: dict[str, Value] = {}
    cut = {}
    for cell, pos in fes:
        src = n.driver(cell).inputs[pos]
        if src not in fresh:
            fresh[src] = builder.new_var()
        cut[(cell, pos)] = fresh[src]
    vals = encode(builder, n, bind, order, deadline, cut)
    for src, v in fresh.items():
        if not builder.assert_value(builder.equal(v, vals[src]), True):
            builder.contradict()
    return vals


def to_cnf(n: Netlist, copies: int = 1, unroll: int | None = None) -> CNF:
    """CNF of ``copies`` instances of ``n`` that share key variables.

    Cyclic netlists are unrolled first (``unroll`` copies of each loop,
    default one more than the feedback edge set size).  ``varmap`` maps
    ``(instance, net)`` to a literal or constant and ``("key", name)`` to
    the shared key variable.  Constant outputs are asserted as facts so
    every clause references allocated variables.
    """
    if copies < 1:
        raise ValueError("copies must be >= 1")
    fes = feedback_edge_set(n)
    if fes:
        from .attack import unroll as _unroll
        n = _unroll(n, unroll if unroll is not None else len(fes) + 1)
    cnf = CNF()
    b = Builder(cnf=cnf)
    keys = {k: b.new_var() for k in n.key_inputs}
    for k, v in keys.items():
        cnf.varmap[("key", k)] = v
    order = topological_order(n)
    for inst in range(copies):
        vals = encode(b, n, keys, order)
        for net, v in vals.items():
            cnf.varmap[(inst, net)] = v
    return cnf
