"""K-LUT technology mapping by priority-cut enumeration.

The design is first lowered to a subject graph of small nodes (gates wider
than two inputs become balanced trees), then every node gets a handful of
K-feasible cuts ranked by depth and area flow.  Covering starts from the
primary outputs and DFF data pins and walks the chosen cuts backwards.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..netlist import Cell, Netlist, NetlistError, exhaustive_patterns, is_acyclic, propagate_constants

CUTS_PER_NODE = 10


@dataclass
class _Node:
    op: str                     # cell kind, or LUT
    fanins: tuple[str, ...]
    table: int | None = None


def _subject_graph(design: Netlist, k: int) -> dict[str, _Node]:
    nodes: dict[str, _Node] = {}

    def tree(op, ins, out):
        ins = list(ins)
        if len(ins) <= 2:
            nodes[out] = _Node(op, tuple(ins))
            return
        mid = len(ins) // 2
        left, right = f"{out}__m{len(nodes)}a", f"{out}__m{len(nodes)}b"
        tree(op, ins[:mid], left)
        tree(op, ins[mid:], right)
        nodes[out] = _Node(op, (left, right))

    for c in design.cells:
        kind = c.kind
        if kind == "DFF":
            continue
        if kind in ("AND", "OR", "XOR"):
            tree(kind, c.inputs, c.output)
        elif kind in ("NAND", "NOR", "XNOR"):
            base = kind[1:] if kind != "XNOR" else "XOR"
            inner = f"{c.output}__mn"
            tree(base, c.inputs, inner)
            nodes[c.output] = _Node("NOT", (inner,))
        elif kind == "MUX2" and k < 3:
            s, a, b = c.inputs
            o = c.output
            nodes[f"{o}__mns"] = _Node("NOT", (s,))
            nodes[f"{o}__ma"] = _Node("AND", (f"{o}__mns", a))
            nodes[f"{o}__mb"] = _Node("AND", (s, b))
            nodes[o] = _Node("OR", (f"{o}__ma", f"{o}__mb"))
        elif kind == "LUT":
            if c.k > k:
                raise NetlistError(f"LUT {c.output!r} has {c.k} inputs, more than K={k}")
            nodes[c.output] = _Node("LUT", c.inputs, c.table)
        elif kind in ("BUF", "NOT", "MUX2", "CONST0", "CONST1"):
            nodes[c.output] = _Node(kind, c.inputs)
        else:
            raise NetlistError(f"cell kind {kind} is not supported by the mapper")
    return nodes


def _eval(node: _Node, ins: list[int], mask: int) -> int:
    op = node.op
    if op == "BUF":
        return ins[0]
    if op == "NOT":
        return ~ins[0] & mask
    if op == "AND":
        return ins[0] & ins[1] if len(ins) == 2 else ins[0]
    if op == "OR":
        return ins[0] | ins[1] if len(ins) == 2 else ins[0]
    if op == "XOR":
        return ins[0] ^ ins[1] if len(ins) == 2 else ins[0]
    if op == "MUX2":
        s, a, b = ins
        return (s & b) | (~s & a & mask)
    if op == "CONST0":
        return 0
    if op == "CONST1":
        return mask
    if op == "LUT":
        out = 0
        for row in range(1 << len(ins)):
            if (node.table >> row) & 1:
                term = mask
                for j, w in enumerate(ins):
                    term &= w if (row >> j) & 1 else ~w
                out |= term
        return out & mask
    raise AssertionError(op)


def cut_function(nodes: dict[str, _Node], root: str, leaves: tuple[str, ...]) -> int:
    """Truth table of ``root`` over ``leaves`` (leaf 0 is the least significant input)."""
    width = 1 << len(leaves)
    mask = (1 << width) - 1
    vals = dict(zip(leaves, exhaustive_patterns(len(leaves))))
    stack = [root]
    while stack:
        net = stack[-1]
        if net in vals:
            stack.pop()
            continue
        node = nodes[net]
        pending = [f for f in node.fanins if f not in vals]
        if pending:
            stack.extend(pending)
            continue
        stack.pop()
        vals[net] = _eval(node, [vals[f] for f in node.fanins], mask)
    return vals[root] & mask


def lut_map(design: Netlist, k: int) -> Netlist:
    """Cover ``design`` with LUTs of at most ``k`` inputs; DFFs are kept as is.

    Every DFF ends up fed by a LUT that drives nothing else, so each
    LUT/DFF pair fits one BLE.  Outputs that are plain inputs stay wires.
    """
    if k < 2:
        raise NetlistError("K must be at least 2")
    if not is_acyclic(design):
        raise NetlistError(f"design {design.name!r} has combinational cycles")
    design = propagate_constants(design)
    nodes = _subject_graph(design, k)
    sources = set(design.inputs) | {c.output for c in design.dffs}

    fanout: dict[str, int] = {}
    for node in nodes.values():
        for f in node.fanins:
            fanout[f] = fanout.get(f, 0) + 1
    roots = [o for o in design.outputs if o in nodes] + [c.inputs[0] for c in design.dffs if c.inputs[0] in nodes]
    for r in roots:
        fanout[r] = fanout.get(r, 0) + 1

    order = _node_order(nodes, sources)
    depth: dict[str, int] = {s: 0 for s in sources}
    flow: dict[str, float] = {s: 0.0 for s in sources}
    cuts: dict[str, list[tuple[str, ...]]] = {s: [(s,)] for s in sources}
    best: dict[str, tuple[str, ...]] = {}

    def rank(cut):
        d = 1 + max((depth[l] for l in cut), default=-1)
        af = (1.0 + sum(flow[l] for l in cut))
        return d, af, len(cut), cut

    for net in order:
        node = nodes[net]
        if node.op in ("CONST0", "CONST1"):
            cuts[net] = [()]
            best[net] = ()
            depth[net], flow[net] = 0, 0.0
            continue
        merged = {()}
        for f in node.fanins:
            nxt = set()
            for a in merged:
                for b in cuts[f]:
                    u = tuple(sorted(set(a) | set(b)))
                    if len(u) <= k:
                        nxt.add(u)
            merged = nxt
        # drop dominated cuts (strict supersets of another cut)
        cands = sorted(merged, key=len)
        kept = []
        for c in cands:
            cs = set(c)
            if not any(set(o) < cs for o in kept):
                kept.append(c)
        kept.sort(key=rank)
        kept = kept[:CUTS_PER_NODE]
        if not kept:
            raise NetlistError(f"no {k}-feasible cut for {net!r}")
        best[net] = kept[0]
        d, af, _, _ = rank(kept[0])
        depth[net] = d
        flow[net] = af / max(1, fanout.get(net, 0))
        cuts[net] = [(net,)] + kept

    # cover from the roots
    chosen: dict[str, tuple[str, ...]] = {}
    todo = list(dict.fromkeys(roots))
    while todo:
        net = todo.pop()
        if net in chosen or net in sources:
            continue
        chosen[net] = best[net]
        todo.extend(l for l in best[net] if l not in sources)

    cells = []
    for net in order:
        if net in chosen:
            leaves = chosen[net]
            cells.append(Cell("LUT", leaves, net, cut_function(nodes, net, leaves)))

    # each DFF needs a private LUT in front of it
    uses: dict[str, int] = {}
    for c in cells:
        for f in c.inputs:
            uses[f] = uses.get(f, 0) + 1
    for o in design.outputs:
        uses[o] = uses.get(o, 0) + 1
    for c in design.dffs:
        uses[c.inputs[0]] = uses.get(c.inputs[0], 0) + 1
    lut_out = {c.output for c in cells}
    dffs = []
    for c in design.dffs:
        d = c.inputs[0]
        if d in lut_out and uses[d] == 1:
            dffs.append(c)
            continue
        buf = f"{c.output}__d"
        cells.append(Cell("LUT", (d,), buf, 0b10))
        dffs.append(Cell("DFF", (buf,), c.output))
    return Netlist(design.name, design.inputs, design.outputs, cells + dffs)


def _node_order(nodes: dict[str, _Node], sources: set[str]) -> list[str]:
    done = set(sources)
    order = []
    for start in sorted(nodes):
        if start in done:
            continue
        stack = [(start, 0)]
        while stack:
            net, i = stack.pop()
            if net in done:
                continue
            fan = nodes[net].fanins
            if i < len(fan):
                stack.append((net, i + 1))
                if fan[i] not in done:
                    stack.append((fan[i], 0))
            else:
                done.add(net)
                order.append(net)
    return order


def lut_count(n: Netlist) -> int:
    return sum(1 for c in n.cells if c.kind == "LUT")

