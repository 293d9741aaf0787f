"""Gate-level netlist IR: .bench I/O, three-valued simulation, cycle analysis.

Every other stage of the flow consumes and produces :class:`Netlist` values.
Cells are identified by the name of the net they drive.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import IntEnum
from functools import cached_property
from typing import Iterable, Mapping, Sequence

GATE_KINDS = ("BUF", "NOT", "AND", "OR", "NAND", "NOR", "XOR", "XNOR")
KINDS = GATE_KINDS + ("MUX2", "LUT", "DFF", "CONST0", "CONST1")

NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_.\[\]]*\Z")
KEY_PREFIX = "key"


class LogicValue(IntEnum):
    ZERO = 0
    ONE = 1
    X = 2


X = LogicValue.X


class NetlistError(ValueError):
    """Structural violation of the netlist invariants."""


class BenchSyntaxError(NetlistError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


@dataclass(frozen=True)
class Cell:
    kind: str
    inputs: tuple[str, ...]
    output: str
    table: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))
        _check_arity(self.kind, len(self.inputs), self.table)

    @property
    def k(self) -> int:
        return len(self.inputs)


def _check_arity(kind: str, n: int, table: int | None) -> None:
    if kind not in KINDS:
        raise NetlistError(f"unknown cell kind {kind!r}")
    if kind in ("BUF", "NOT", "DFF"):
        ok = n == 1
    elif kind == "MUX2":
        ok = n == 3
    elif kind in ("CONST0", "CONST1"):
        ok = n == 0
    elif kind == "LUT":
        if table is None or table < 0 or table >> (1 << n):
            raise NetlistError(f"LUT truth table must have exactly {1 << n} bits")
        ok = True
    else:
        ok = n >= 2
    if not ok:
        raise NetlistError(f"bad arity {n} for {kind}")


@dataclass(frozen=True)
class Netlist:
    name: str
    inputs: tuple[str, ...]
    outputs: tuple[str, ...]
    cells: tuple[Cell, ...]
    key_inputs: tuple[str, ...] = ()

    def __post_init__(self):
        for attr in ("inputs", "outputs", "cells", "key_inputs"):
            object.__setattr__(self, attr, tuple(getattr(self, attr)))
        self._validate()

    def _validate(self) -> None:
        for label, seq in (("inputs", self.inputs), ("outputs", self.outputs),
                           ("key_inputs", self.key_inputs)):
            if len(set(seq)) != len(seq):
                raise NetlistError(f"duplicate entry in {label}")
        if not set(self.key_inputs) <= set(self.inputs):
            raise NetlistError("key_inputs must be a subset of inputs")
        drivers = set(self.inputs)
        for c in self.cells:
            if c.output in drivers:
                raise NetlistError(f"net {c.output!r} has more than one driver")
            drivers.add(c.output)
        for c in self.cells:
            for net in c.inputs:
                if net not in drivers:
                    raise NetlistError(f"cell {c.output!r} reads undeclared net {net!r}")
        for net in self.outputs:
            if net not in drivers:
                raise NetlistError(f"output {net!r} has no driver")

    # -- derived views -------------------------------------------------

    @cached_property
    def cell_index(self) -> dict[str, int]:
        """Map from driven net to the index of its cell."""
        return {c.output: i for i, c in enumerate(self.cells)}

    @cached_property
    def nets(self) -> tuple[str, ...]:
        return self.inputs + tuple(c.output for c in self.cells)

    @cached_property
    def dffs(self) -> tuple[Cell, ...]:
        return tuple(c for c in self.cells if c.kind == "DFF")

    @cached_property
    def fanout(self) -> dict[str, list[tuple[int, int]]]:
        """net -> list of (consumer cell index, input position)."""
        fo: dict[str, list[tuple[int, int]]] = {n: [] for n in self.nets}
        for i, c in enumerate(self.cells):
            for pos, net in enumerate(c.inputs):
                fo[net].append((i, pos))
        return fo

    def driver(self, net: str) -> Cell | None:
        """The cell driving ``net``; None for primary inputs."""
        i = self.cell_index.get(net)
        return None if i is None else self.cells[i]

    @property
    def data_inputs(self) -> tuple[str, ...]:
        keys = set(self.key_inputs)
        return tuple(n for n in self.inputs if n not in keys)

    def scan_inputs(self) -> tuple[str, ...]:
        """Primary inputs followed by DFF outputs (full-scan pseudo-inputs)."""
        return self.inputs + tuple(c.output for c in self.dffs)

    def scan_outputs(self) -> tuple[tuple[str, str], ...]:
        """(label, net) pairs: primary outputs then DFF next-state pins.

        A DFF's next-state pseudo-output is labelled ``<q>.D``.
        """
        return (tuple((o, o) for o in self.outputs)
                + tuple((c.output + ".D", c.inputs[0]) for c in self.dffs))

    def replace(self, **changes) -> "Netlist":
        fields = dict(name=self.name, inputs=self.inputs, outputs=self.outputs,
                      cells=self.cells, key_inputs=self.key_inputs)
        fields.update(changes)
        return Netlist(**fields)

    def __len__(self) -> int:
        return len(self.cells)


# ----------------------------------------------------------------------
# .bench reader / writer
# ----------------------------------------------------------------------

_DECL_RE = re.compile(r"(INPUT|OUTPUT)\s*\(\s*([^()\s]+)\s*\)\Z", re.I)
_ASSIGN_RE = re.compile(r"([^=\s]+)\s*=\s*(.+)\Z")
_CALL_RE = re.compile(r"([A-Za-z]+)\s*(0[xX][0-9A-Fa-f]+)?\s*\((.*)\)\Z")
_BENCH_OPS = {"BUFF": "BUF", "MUX": "MUX2"}


def _check_name(name: str, lineno: int) -> str:
    if not NAME_RE.match(name):
        raise BenchSyntaxError(lineno, f"illegal net name {name!r}")
    return name


def parse_bench(text: str, name: str = "top") -> Netlist:
    """Parse the .bench dialect; inputs prefixed ``key`` become key inputs."""
    inputs: list[str] = []
    outputs: list[str] = []
    cells: list[Cell] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _DECL_RE.match(line)
        if m:
            net = _check_name(m.group(2), lineno)
            (inputs if m.group(1).upper() == "INPUT" else outputs).append(net)
            continue
        m = _ASSIGN_RE.match(line)
        if not m:
            raise BenchSyntaxError(lineno, f"cannot parse {line!r}")
        out = _check_name(m.group(1), lineno)
        rhs = m.group(2).strip()
        if rhs.lower() in ("vcc", "gnd"):
            cells.append(Cell("CONST1" if rhs.lower() == "vcc" else "CONST0", (), out))
            continue
        m = _CALL_RE.match(rhs)
        if not m:
            raise BenchSyntaxError(lineno, f"cannot parse expression {rhs!r}")
        op, hextab, argtext = m.group(1).upper(), m.group(2), m.group(3).strip()
        args = tuple(_check_name(a.strip(), lineno) for a in argtext.split(",")) if argtext else ()
        op = _BENCH_OPS.get(op, op)
        if op == "LUT":
            if hextab is None:
                raise BenchSyntaxError(lineno, "LUT without truth table")
            table = int(hextab, 16)
        elif hextab is not None or op not in KINDS or op in ("LUT", "CONST0", "CONST1"):
            raise BenchSyntaxError(lineno, f"unknown operator {m.group(1)!r}")
        else:
            table = None
        try:
            cells.append(Cell(op, args, out, table))
        except NetlistError as exc:
            raise BenchSyntaxError(lineno, str(exc)) from None
    keys = tuple(n for n in inputs if n.startswith(KEY_PREFIX))
    return Netlist(name, inputs, outputs, cells, keys)


def _hex_table(table: int, k: int) -> str:
    digits = max(1, ((1 << k) + 3) // 4)
    return f"0x{table:0{digits}X}"


def write_bench(n: Netlist) -> str:
    """Serialize to .bench text. Deterministic: cell order is preserved."""
    lines = [f"# {n.name}"]
    lines += [f"INPUT({i})" for i in n.inputs]
    lines += [f"OUTPUT({o})" for o in n.outputs]
    for c in n.cells:
        if c.kind == "CONST0":
            lines.append(f"{c.output} = gnd")
        elif c.kind == "CONST1":
            lines.append(f"{c.output} = vcc")
        elif c.kind == "LUT":
            lines.append(f"{c.output} = LUT {_hex_table(c.table, c.k)}({', '.join(c.inputs)})")
        else:
            op = "MUX" if c.kind == "MUX2" else c.kind
            lines.append(f"{c.output} = {op}({', '.join(c.inputs)})")
    return "\n".join(lines) + "\n"


def read_bench(path, name: str | None = None) -> Netlist:
    from pathlib import Path
    p = Path(path)
    return parse_bench(p.read_text(), name or p.stem)


# ----------------------------------------------------------------------
# Graph analysis
# ----------------------------------------------------------------------

def comb_fanins(n: Netlist) -> list[list[tuple[int, int]]]:
    """For each cell: list of (driver cell index, input position).

    DFFs are cut points: a DFF has no combinational fanin and its output
    does not feed anything combinationally.
    """
    idx = n.cell_index
    out: list[list[tuple[int, int]]] = []
    for c in n.cells:
        preds = []
        if c.kind != "DFF":
            for pos, net in enumerate(c.inputs):
                j = idx.get(net)
                if j is not None and n.cells[j].kind != "DFF":
                    preds.append((j, pos))
        out.append(preds)
    return out


def _successors(n: Netlist) -> list[list[tuple[int, int]]]:
    succ: list[list[tuple[int, int]]] = [[] for _ in n.cells]
    for i, preds in enumerate(comb_fanins(n)):
        for j, pos in preds:
            succ[j].append((i, pos))
    return succ


def find_sccs(n: Netlist) -> list[list[str]]:
    """Strongly connected components of the combinational cell graph.

    Components partition all cells and are returned as lists of cell names,
    each sorted by cell index, ordered by their first cell.
    """
    succ = _successors(n)
    count = len(succ)
    index = [-1] * count
    low = [0] * count
    on_stack = [False] * count
    stack: list[int] = []
    comps: list[list[int]] = []
    counter = 0
    for root in range(count):
        if index[root] != -1:
            continue
        work = [(root, 0)]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack[root] = True
        while work:
            v, it = work[-1]
            if it < len(succ[v]):
                work[-1] = (v, it + 1)
                w = succ[v][it][0]
                if index[w] == -1:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack[w] = True
                    work.append((w, 0))
                elif on_stack[w]:
                    low[v] = min(low[v], index[w])
                continue
            work.pop()
            if work:
                u = work[-1][0]
                low[u] = min(low[u], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == v:
                        break
                comps.append(sorted(comp))
    comps.sort(key=lambda c: c[0])
    return [[n.cells[i].output for i in comp] for comp in comps]


def combinational_loops(n: Netlist) -> list[list[str]]:
    """Only the components that are loops (size > 1, or a self-looping cell)."""
    loops = []
    for comp in find_sccs(n):
        if len(comp) > 1:
            loops.append(comp)
        else:
            c = n.driver(comp[0])
            if c.kind != "DFF" and comp[0] in c.inputs:
                loops.append(comp)
    return loops


def feedback_edge_set(n: Netlist) -> list[tuple[str, int]]:
    """DFS back edges as (consumer cell, input position).

    Removing these edges leaves the combinational cell graph acyclic.
    Roots and successors are visited in cell-index order.
    """
    succ = _successors(n)
    state = [0] * len(succ)   # 0 new, 1 on stack, 2 done
    back: list[tuple[int, int]] = []
    for root in range(len(succ)):
        if state[root]:
            continue
        state[root] = 1
        work = [(root, 0)]
        while work:
            v, it = work[-1]
            if it < len(succ[v]):
                work[-1] = (v, it + 1)
                w, pos = succ[v][it]
                if state[w] == 0:
                    state[w] = 1
                    work.append((w, 0))
                elif state[w] == 1:
                    back.append((w, pos))
            else:
                state[v] = 2
                work.pop()
    back.sort()
    return [(n.cells[i].output, pos) for i, pos in back]


def remove_edges(n: Netlist, edges: Iterable[tuple[str, int]]) -> Netlist:
    """Disconnect the given cell inputs, rewiring each to a fresh primary input.

    Used to check that a feedback edge set really breaks every loop.
    """
    cut: dict[str, set[int]] = {}
    for cell, pos in edges:
        cut.setdefault(cell, set()).add(pos)
    cells = []
    fresh = []
    for c in n.cells:
        if c.output in cut:
            ins = list(c.inputs)
            for pos in sorted(cut[c.output]):
                name = f"{c.output}__cut{pos}"
                ins[pos] = name
                fresh.append(name)
            c = Cell(c.kind, tuple(ins), c.output, c.table)
        cells.append(c)
    return n.replace(inputs=n.inputs + tuple(fresh), cells=tuple(cells))


def topological_order(n: Netlist, skip: Iterable[tuple[str, int]] = ()) -> list[int]:
    """Cell indices in an order consistent with combinational edges.

    Edges in ``skip`` are ignored; the remaining graph must be acyclic or a
    NetlistError is raised.
    """
    skipped = {(n.cell_index[c], p) for c, p in skip}
    fanins = comb_fanins(n)
    indeg = [0] * len(fanins)
    succ: list[list[int]] = [[] for _ in fanins]
    for i, preds in enumerate(fanins):
        for j, pos in preds:
            if (i, pos) in skipped:
                continue
            indeg[i] += 1
            succ[j].append(i)
    ready = [i for i, d in enumerate(indeg) if d == 0]
    ready.reverse()
    order = []
    while ready:
        v = ready.pop()
        order.append(v)
        for w in reversed(succ[v]):
            indeg[w] -= 1
            if indeg[w] == 0:
                ready.append(w)
    if len(order) != len(fanins):
        raise NetlistError(f"netlist {n.name!r} has a combinational cycle")
    return order


def is_acyclic(n: Netlist) -> bool:
    return not combinational_loops(n)


def output_cone(n: Netlist, roots: Iterable[str] | None = None) -> set[str]:
    """Nets in the transitive fanin of ``roots`` (default: scan outputs).

    DFF pins are followed through, so the cone of a used register includes
    the logic computing its next state.
    """
    if roots is None:
        roots = [net for _, net in n.scan_outputs()]
    seen: set[str] = set()
    todo = list(roots)
    while todo:
        net = todo.pop()
        if net in seen:
            continue
        seen.add(net)
        c = n.driver(net)
        if c is not None:
            todo.extend(c.inputs)
    return seen


def sweep(n: Netlist) -> Netlist:
    """Drop cells outside the fanin cone of the primary outputs.

    DFFs are kept only when their output lies in that cone (iterated to a
    fixed point); inputs are kept verbatim so the interface is unchanged.
    """
    roots = set(n.outputs)
    while True:
        cone = output_cone(n, roots)
        more = {c.inputs[0] for c in n.dffs if c.output in cone} - cone
        if not more:
            break
        roots |= more
    cells = tuple(c for c in n.cells if c.output in cone)
    return n.replace(cells=cells)


# ----------------------------------------------------------------------
# Three-valued, bit-parallel simulation
# ----------------------------------------------------------------------

_OPCODES = {k: i for i, k in enumerate(KINDS)}


class _Compiled:
    """Netlist lowered to integer-indexed ops for fast word simulation."""

    def __init__(self, n: Netlist):
        self.netlist = n
        self.net_id = {net: i for i, net in enumerate(n.nets)}
        fes = feedback_edge_set(n)
        self.acyclic = not fes
        order = topological_order(n, skip=fes)
        self.ops = []
        for ci in order:
            c = n.cells[ci]
            if c.kind == "DFF":
                continue
            self.ops.append((_OPCODES[c.kind], self.net_id[c.output],
                             tuple(self.net_id[i] for i in c.inputs), c.table))
        self.n_cells = len(n.cells)


_COMPILED_ATTR = "_compiled_sim"


def _compiled(n: Netlist) -> _Compiled:
    comp = n.__dict__.get(_COMPILED_ATTR)
    if comp is None:
        comp = _Compiled(n)
        n.__dict__[_COMPILED_ATTR] = comp
    return comp


def _eval_op(op, ins, table, o, z, mask):
    """Evaluate one cell on (ones, zeros) word pairs."""
    if op == _OP_MUX2:
        s, a, b = ins
        os_, zs = o[s], z[s]
        oa, za, ob, zb = o[a], z[a], o[b], z[b]
        return (zs & oa) | (os_ & ob) | (oa & ob), (zs & za) | (os_ & zb) | (za & zb)
    if op == _OP_BUF:
        return o[ins[0]], z[ins[0]]
    if op == _OP_NOT:
        return z[ins[0]], o[ins[0]]
    if op in (_OP_AND, _OP_NAND):
        ro, rz = mask, 0
        for i in ins:
            ro &= o[i]
            rz |= z[i]
        return (ro, rz) if op == _OP_AND else (rz, ro)
    if op in (_OP_OR, _OP_NOR):
        ro, rz = 0, mask
        for i in ins:
            ro |= o[i]
            rz &= z[i]
        return (ro, rz) if op == _OP_OR else (rz, ro)
    if op in (_OP_XOR, _OP_XNOR):
        ro, rz = o[ins[0]], z[ins[0]]
        for i in ins[1:]:
            ro, rz = (ro & z[i]) | (rz & o[i]), (ro & o[i]) | (rz & z[i])
        return (ro, rz) if op == _OP_XOR else (rz, ro)
    if op == _OP_LUT:
        # output is 1 (0) where every row compatible with the known inputs is 1 (0)
        ro, rz = mask, mask
        for row in range(1 << len(ins)):
            compat = mask
            for bit, i in enumerate(ins):
                compat &= ~z[i] if (row >> bit) & 1 else ~o[i]
            if (table >> row) & 1:
                rz &= ~compat
            else:
                ro &= ~compat
        return ro & mask, rz & mask
    if op == _OP_CONST0:
        return 0, mask
    if op == _OP_CONST1:
        return mask, 0
    raise AssertionError(op)


(_OP_BUF, _OP_NOT, _OP_AND, _OP_OR, _OP_NAND, _OP_NOR, _OP_XOR, _OP_XNOR,
 _OP_MUX2, _OP_LUT, _OP_DFF, _OP_CONST0, _OP_CONST1) = range(len(KINDS))


def simulate_words(n: Netlist, ones: Mapping[str, int], zeros: Mapping[str, int],
                   width: int, max_iterations: int | None = None) -> tuple[list[int], list[int], dict[str, int]]:
    """Bit-parallel three-valued simulation over ``width`` vectors at once.

    ``ones``/``zeros`` give, per scan input (primary input or DFF output),
    the bit masks of vectors where the net is 1 / 0; unspecified bits are X.
    Returns (ones, zeros, net_id) arrays for every net.  Internal nets
    start at X and sweeps repeat until nothing changes, at most
    ``max_iterations`` times (default: cell count + 1).
    """
    comp = _compiled(n)
    mask = (1 << width) - 1
    count = len(comp.net_id)
    o = [0] * count
    z = [0] * count
    for net, w in ones.items():
        o[comp.net_id[net]] = w & mask
    for net, w in zeros.items():
        z[comp.net_id[net]] = w & mask
    if max_iterations is None:
        max_iterations = comp.n_cells + 1
    ops = comp.ops
    sweeps = 0
    while sweeps < max_iterations:
        sweeps += 1
        changed = False
        for op, out, ins, table in ops:
            ro, rz = _eval_op(op, ins, table, o, z, mask)
            if ro != o[out] or rz != z[out]:
                o[out] = ro
                z[out] = rz
                changed = True
        if comp.acyclic or not changed:
            break
    return o, z, comp.net_id


def simulate(n: Netlist, assignment: Mapping[str, int], max_iterations: int | None = None,
             state: bool = False) -> dict[str, LogicValue]:
    """Three-valued simulation of one input vector.

    ``assignment`` maps inputs (and, under full scan, DFF outputs) to 0/1/X;
    anything unassigned is X.  Returns output -> value; with ``state=True``
    the DFF next-state pseudo-outputs (``<q>.D``) are included too.
    Non-convergence shows up as X, never as an exception.
    """
    ones = {net: 1 for net, v in assignment.items() if v == 1}
    zeros = {net: 1 for net, v in assignment.items() if v == 0}
    o, z, ids = simulate_words(n, ones, zeros, 1, max_iterations)
    pairs = n.scan_outputs() if state else tuple((out, out) for out in n.outputs)
    result = {}
    for label, net in pairs:
        i = ids[net]
        result[label] = LogicValue.ONE if o[i] else LogicValue.ZERO if z[i] else X
    return result


def evaluate_all(n: Netlist, assignment: Mapping[str, int], max_iterations: int | None = None) -> dict[str, LogicValue]:
    """Like :func:`simulate` but returns the value of every net."""
    ones = {net: 1 for net, v in assignment.items() if v == 1}
    zeros = {net: 1 for net, v in assignment.items() if v == 0}
    o, z, ids = simulate_words(n, ones, zeros, 1, max_iterations)
    return {net: (LogicValue.ONE if o[i] else LogicValue.ZERO if z[i] else X)
            for net, i in ids.items()}


def exhaustive_patterns(count: int) -> list[int]:
    """Words enumerating all 2**count vectors; input i is bit i of the index."""
    width = 1 << count
    words = []
    for i in range(count):
        period = 1 << i
        block = ((1 << period) - 1) << period        # 0...0 1...1 over 2*period bits
        word = block
        span = 2 * period
        while span < width:
            word |= word << span
            span *= 2
        words.append(word)
    return words


# ----------------------------------------------------------------------
# Rewriting helpers
# ----------------------------------------------------------------------

def propagate_constants(n: Netlist, values: Mapping[str, int] | None = None,
                        keep_inputs: bool = False) -> Netlist:
    """Substitute constants for the given inputs and simplify.

    Constant-select multiplexers become buffers of the selected input and
    gates whose value is fixed become constant cells.  Substituted inputs
    are removed from the interface unless ``keep_inputs``.
    """
    values = dict(values or {})
    const: dict[str, int] = {net: v for net, v in values.items()}
    cells: list[Cell] = []
    for ci in _const_order(n):
        c = n.cells[ci]
        new = _simplify(c, const)
        if new.kind == "CONST0":
            const[c.output] = 0
        elif new.kind == "CONST1":
            const[c.output] = 1
        cells.append((ci, new))
    cells.sort(key=lambda t: t[0])
    out_cells = [c for _, c in cells]
    inputs = n.inputs
    keys = n.key_inputs
    if values and not keep_inputs:
        inputs = tuple(i for i in n.inputs if i not in values)
        keys = tuple(k for k in keys if k not in values)
        # substituted inputs that are still read need a constant driver
        read = {net for c in out_cells for net in c.inputs} | set(n.outputs)
        for net in n.inputs:
            if net in values and net in read:
                out_cells.append(Cell("CONST1" if values[net] else "CONST0", (), net))
    return n.replace(inputs=inputs, key_inputs=keys, cells=tuple(out_cells))


def _const_order(n: Netlist) -> list[int]:
    return topological_order(n, skip=feedback_edge_set(n))


def _simplify(c: Cell, const: Mapping[str, int]) -> Cell:
    kind = c.kind
    vals = [const.get(i) for i in c.inputs]
    if kind == "DFF" or kind in ("CONST0", "CONST1"):
        return c

    def k(v):
        return Cell("CONST1" if v else "CONST0", (), c.output)

    if kind == "MUX2":
        s, a, b = vals
        if s is not None:
            chosen = c.inputs[2] if s else c.inputs[1]
            v = vals[2] if s else vals[1]
            return k(v) if v is not None else Cell("BUF", (chosen,), c.output)
        if a is not None and a == b:
            return k(a)
        if c.inputs[1] == c.inputs[2]:
            return Cell("BUF", (c.inputs[1],), c.output)
        return c
    if kind in ("BUF", "NOT"):
        if vals[0] is None:
            return c
        return k(vals[0] if kind == "BUF" else 1 - vals[0])
    if kind == "LUT":
        free = [p for p, v in enumerate(vals) if v is None]
        if len(free) == len(vals):
            return c
        table = 0
        for row in range(1 << len(free)):
            full = 0
            for p, v in enumerate(vals):
                bit = (row >> free.index(p)) & 1 if v is None else v
                full |= bit << p
            table |= ((c.table >> full) & 1) << row
        if not free:
            return k(table & 1)
        if table == 0:
            return k(0)
        if table == (1 << (1 << len(free))) - 1:
            return k(1)
        return Cell("LUT", tuple(c.inputs[p] for p in free), c.output, table)
    if kind in ("AND", "NAND", "OR", "NOR"):
        ctrl = 0 if kind in ("AND", "NAND") else 1
        inv = kind in ("NAND", "NOR")
        if ctrl in vals:
            return k(ctrl ^ inv)
        rest = tuple(i for i, v in zip(c.inputs, vals) if v is None)
        if not rest:
            return k((1 - ctrl) ^ inv)
        if len(rest) == 1:
            return Cell("NOT" if inv else "BUF", rest, c.output)
        return Cell(kind, rest, c.output) if len(rest) != len(c.inputs) else c
    if kind in ("XOR", "XNOR"):
        parity = sum(v for v in vals if v is not None) & 1
        rest = tuple(i for i, v in zip(c.inputs, vals) if v is None)
        inv = (kind == "XNOR") ^ bool(parity)
        if not rest:
            return k(int(inv))
        if len(rest) == 1:
            return Cell("NOT" if inv else "BUF", rest, c.output)
        if len(rest) == len(c.inputs):
            return c
        return Cell("XNOR" if inv else "XOR", rest, c.output)
    raise AssertionError(kind)


def signature(n: Netlist) -> tuple:
    """Name-independent canonical fingerprint used for isomorphism checks.

    Colour refinement: inputs are coloured by interface position, cells by
    kind/table, then each net is repeatedly recoloured from the ordered
    colours of its fanins until the number of classes stops growing.
    Equal signatures are necessary for isomorphism and, in practice,
    sufficient for the netlists exercised here.
    """
    keys = set(n.key_inputs)
    color: dict[str, int] = {}
    for pos, net in enumerate(n.inputs):
        color[net] = hash(("in", pos, net in keys))
    for c in n.cells:
        color[c.output] = hash((c.kind, c.table, c.k))
    classes = len(set(color.values()))
    for _ in range(len(n.cells) + 1):
        new = dict(color)
        for c in n.cells:
            new[c.output] = hash((color[c.output], tuple(color[i] for i in c.inputs)))
        color = new
        now = len(set(color.values()))
        if now == classes:
            break
        classes = now
    outs = tuple(color[o] for o in n.outputs)
    body = tuple(sorted(color[c.output] for c in n.cells))
    return (len(n.inputs), len(n.key_inputs), outs, body)
