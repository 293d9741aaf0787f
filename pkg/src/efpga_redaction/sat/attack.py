"""Oracle-guided key recovery on key-exposed fabrics.

The keyed netlist is the fabric with every configuration bit as a key
input.  Routing rings make it cyclic, so the attack works on an unrolled
copy (``unroll``) and adds key constraints that break the rings a
candidate key would close (``CycleBreaker``).  Differentiating input
patterns are found with a two-key miter and answered by simulating the
oracle; the surviving key is programmed and checked for equivalence.
When the check fails the unroll factor doubles.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from ..cad.bitstream import Bitstream, program
from ..fabric.build import Fabric
from ..netlist import (Cell, Netlist, NetlistError, _successors, feedback_edge_set, find_sccs,
                       simulate, topological_order)
from ..verify import InterfaceError, check_equivalence
from .cnf import Builder, encode, encode_cyclic
from .solver import SolverTimeout, make_solver

STRATEGIES = ("break_then_unroll", "unroll_only")
# hubs x links below which cycle-free ranks use the order encoding
UNARY_RANK_LIMIT = 50_000

# a key literal is (key name, value); a clause holds when any literal does
KeyClause = tuple[tuple[str, int], ...]


class FabricInvariantError(RuntimeError):
    """A combinational cycle that no configuration bit can open."""


@dataclass
class AttackConfig:
    timeout_s: float = 600.0
    max_unroll: int = 256
    initial_unroll: int | None = None     # None: feedback edge count + 1
    strategy: str = "break_then_unroll"
    seed: int = 0
    engine: str = "auto"                  # see sat.solver.make_solver

    def __post_init__(self):
        if not self.timeout_s > 0:
            raise ValueError("timeout_s must be positive")
        if self.max_unroll < 1:
            raise ValueError("max_unroll must be >= 1")
        if self.initial_unroll is not None and not 1 <= self.initial_unroll <= self.max_unroll:
            raise ValueError("initial_unroll must be within 1..max_unroll")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")


@dataclass
class AttackReport:
    fabric: str
    unroll: int
    clauses: int
    time_s: float
    key_reported: bool
    iterations: int
    recovered_key: Bitstream | None = None
    verified: bool = False

    def as_dict(self) -> dict:
        key = None if self.recovered_key is None else "".join(map(str, self.recovered_key.bits))
        return {"fabric": self.fabric, "unroll": self.unroll, "clauses": self.clauses,
                "time_s": self.time_s, "key_reported": self.key_reported,
                "iterations": self.iterations, "recovered_key": key, "verified": self.verified}


@dataclass
class AttackLog:
    """Every constraint an attack added, for checking against a known key."""
    break_clauses: list[KeyClause] = field(default_factory=list)
    ranked: bool = False            # the keys were required to close no cycle
    io: list[tuple[dict[str, int], tuple[int, ...]]] = field(default_factory=list)
    unrolls: list[int] = field(default_factory=list)
    timed_out: bool = False


# ----------------------------------------------------------------------
# keyed netlist and unrolling
# ----------------------------------------------------------------------

def key_expose(f: Fabric) -> Netlist:
    """The fabric netlist with configuration bits as keys, in scan order."""
    n = f.netlist
    if len(n.key_inputs) != len(f.config_chain):
        raise AssertionError(f"{len(n.key_inputs)} key inputs for a {len(f.config_chain)}-bit chain")
    return n


def cyclic_nets(n: Netlist) -> set[str]:
    """Nets of cells that lie on some combinational cycle."""
    out = set()
    for comp in find_sccs(n):
        if len(comp) > 1:
            out.update(comp)
        else:
            c = n.driver(comp[0])
            if c.kind != "DFF" and comp[0] in c.inputs:
                out.add(comp[0])
    return out


def copy_name(net: str, t: int, u: int) -> str:
    return net if t == u else f"{net}__u{t}"


def init_name(net: str) -> str:
    return f"{net}__init"


def unroll(keyed: Netlist, u: int, deadline: float | None = None) -> Netlist:
    """Acyclic expansion of ``keyed`` with ``u + 1`` copies of its cyclic part.

    Copy t of a cyclic cell reads copy t of its cyclic fanins, except over
    a feedback edge, where it reads copy t - 1; copy 0 reads a fresh input
    ``<net>__init`` there.  Copy ``u`` keeps the original names, so every
    cell outside the cycles (and every output) reads the final copy.
    """
    return _unroll(keyed, u, deadline)[0]


def _unroll(keyed: Netlist, u: int, deadline: float | None = None) -> tuple[Netlist, list[int], list[str]]:
    if u < 1:
        raise ValueError("unroll factor must be >= 1")
    members = cyclic_nets(keyed)
    if not members:
        return keyed, topological_order(keyed), []
    back: dict[str, set[int]] = {}
    for cell, pos in feedback_edge_set(keyed):
        back.setdefault(cell, set()).add(pos)
    inits = sorted({keyed.driver(cell).inputs[pos] for cell, ps in back.items() for pos in ps})
    cells = [c for c in keyed.cells if c.output not in members]
    cyclic = [c for c in keyed.cells if c.output in members]
    for t in range(u + 1):
        if deadline is not None and time.monotonic() > deadline:
            raise SolverTimeout({"unrolled_copies": t})
        for c in cyclic:
            fb = back.get(c.output, ())
            ins = []
            for pos, net in enumerate(c.inputs):
                if net not in members:
                    ins.append(net)
                elif pos in fb:
                    ins.append(init_name(net) if t == 0 else copy_name(net, t - 1, u))
                else:
                    ins.append(copy_name(net, t, u))
            cells.append(Cell(c.kind, tuple(ins), copy_name(c.output, t, u), c.table))
    n = keyed.replace(name=f"{keyed.name}_u{u}", inputs=keyed.inputs + tuple(init_name(x) for x in inits),
                      cells=tuple(cells))
    return n, topological_order(n), [init_name(x) for x in inits]


# ----------------------------------------------------------------------
# cycle breaking
# ----------------------------------------------------------------------

class CycleBreaker:
    """Key clauses that open combinational cycles.

    An edge into a MUX2 whose select is a key is open when the key selects
    the other data input; every other edge is always closed.
    """

    def __init__(self, keyed: Netlist):
        self.n = keyed
        self.keys = set(keyed.key_inputs)
        self.members = cyclic_nets(keyed)
        self.idx = keyed.cell_index
        succ = _successors(keyed)
        mem = {self.idx[m] for m in self.members}
        self.succ = {v: [(w, pos) for w, pos in succ[v] if w in mem] for v in sorted(mem)}
        self._contracted = None

    def _literal(self, ci: int, pos: int):
        """Key literal that opens edge ``pos`` of cell ``ci``; None when no key can."""
        c = self.n.cells[ci]
        if c.kind != "MUX2" or c.inputs[0] not in self.keys or pos == 0:
            return None
        if c.inputs[1] == c.inputs[2]:
            return None
        return (c.inputs[0], 1 if pos == 1 else 0)

    def clause_for(self, cycle: list[tuple[int, int]]) -> KeyClause:
        """``cycle`` is a list of (cell, input position) edges closing a loop."""
        lits = {lit for ci, pos in cycle if (lit := self._literal(ci, pos)) is not None}
        if not lits:
            names = [self.n.cells[ci].output for ci, _ in cycle]
            raise FabricInvariantError(f"cycle without a configurable mux: {names[:8]}")
        return tuple(sorted(lits))

    def initial_clauses(self) -> list[KeyClause]:
        """One clause per feedback edge, for a shortest cycle through it."""
        out = []
        for cell, pos in feedback_edge_set(self.n):
            ci = self.idx[cell]
            src = self.idx[self.n.cells[ci].inputs[pos]]
            path = self._path(ci, src)
            if path is None:
                continue
            out.append(self.clause_for(path + [(ci, pos)]))
        return list(dict.fromkeys(out))

    def _path(self, start: int, goal: int):
        """Edges of a shortest path start -> goal as (cell, position) pairs."""
        prev = {start: None}
        frontier = [start]
        while frontier and goal not in prev:
            nxt = []
            for v in frontier:
                for w, pos in self.succ[v]:
                    if w not in prev:
                        prev[w] = (v, pos)
                        nxt.append(w)
            frontier = nxt
        if goal not in prev:
            return None
        edges = []
        v = goal
        while prev[v] is not None:
            u, pos = prev[v]
            edges.append((v, pos))
            v = u
        edges.reverse()
        return edges

    # -- acyclicity by ranking ---------------------------------------------

    def _edge_lit(self, kv, ci: int, pos: int):
        """Solver value that is true when edge ``pos`` of cell ``ci`` is closed."""
        lit = self._literal(ci, pos)
        if lit is None:
            return True
        k, opens = lit
        return -kv[k] if opens else kv[k]

    def _links(self):
        """Contract single-successor chains.

        Returns (hubs, links, rings): hubs are cyclic cells whose cyclic
        fanout is not exactly one, a link (a, b, edges) is a chain of edges
        from hub a to hub b, and rings are chains that close on themselves
        without touching a hub.  A cycle of the cell graph is a cycle of
        links or one of the rings.
        """
        hubs = [v for v in sorted(self.succ) if len(self.succ[v]) != 1]
        hub_set = set(hubs)
        visited = set()
        links = []
        for v in hubs:
            for w, pos in self.succ[v]:
                edges = [(w, pos)]
                x = w
                while x not in hub_set:
                    visited.add(x)
                    x, p = self.succ[x][0]
                    edges.append((x, p))
                links.append((v, x, edges))
        rings = []
        for v in sorted(self.succ):
            if v in hub_set or v in visited:
                continue
            edges, x = [], v
            while x not in visited:
                visited.add(x)
                x, p = self.succ[x][0]
                edges.append((x, p))
            rings.append(edges)
        return hubs, links, rings

    def rank_guard(self, builder, kv, deadline: float | None = None) -> None:
        """Require a numbering of the cyclic cells that increases along every
        closed edge, which exists exactly when the keys close no cycle.

        Only hub cells are numbered; a chain between hubs is closed when
        all of its edges are.
        """
        if self._contracted is None:
            self._contracted = self._links()
        hubs, links, rings = self._contracted
        for edges in rings:
            self._forbid(builder, builder.and_([self._edge_lit(kv, w, p) for w, p in edges]), edges)
        if not hubs:
            return
        n = len(hubs)
        unary = n * len(links) <= UNARY_RANK_LIMIT
        if unary:
            # at_least[v][i] means rank(v) >= i + 1
            rank = {v: [builder.new_var() for _ in range(n - 1)] for v in hubs}
            for bits in rank.values():
                for i in range(1, len(bits)):
                    builder.add([-bits[i], bits[i - 1]])
        else:
            width = max(1, (n - 1).bit_length())
            rank = {v: [builder.new_var() for _ in range(width)] for v in hubs}
        for step, (a, b, edges) in enumerate(links):
            if deadline is not None and not step & 255 and time.monotonic() > deadline:
                raise SolverTimeout({"rank_guard": step})
            closed = builder.and_([self._edge_lit(kv, w, p) for w, p in edges])
            if a == b:
                self._forbid(builder, closed, edges)
                continue
            if closed is False:
                continue
            guard = [] if closed is True else [-closed]
            if unary:
                ra, rb = [True] + rank[a], rank[b] + [False]
                for x, y in zip(ra, rb):
                    lits = guard + ([] if x is True else [-x]) + ([] if y is False else [y])
                    if not lits:
                        self._forbid(builder, True, edges)
                    builder.add(lits)
            else:
                less = _less_than(builder, rank[a], rank[b])
                if isinstance(less, bool):
                    if not less:
                        if closed is True:
                            self._forbid(builder, True, edges)
                        builder.add(guard)
                else:
                    builder.add(guard + [less])

    def _forbid(self, builder, closed, edges) -> None:
        if not builder.assert_value(closed, False):
            names = [self.n.cells[ci].output for ci, _ in edges]
            raise FabricInvariantError(f"cycle without a configurable mux: {names[:8]}")

    def _closed(self, ci: int, pos: int, key: dict[str, int]) -> bool:
        c = self.n.cells[ci]
        if c.kind == "MUX2" and c.inputs[0] in self.keys and pos:
            return key[c.inputs[0]] == (0 if pos == 1 else 1)
        return True

    def active_cycles(self, key: dict[str, int], limit: int = 64) -> list[KeyClause]:
        """Clauses for cycles closed under ``key`` (one per DFS back edge)."""
        state = dict.fromkeys(self.succ, 0)
        found = []
        for root in self.succ:
            if state[root]:
                continue
            state[root] = 1
            stack = [(root, 0)]
            entry = [None]       # edge used to enter each stack frame
            while stack:
                v, it = stack[-1]
                edges = self.succ[v]
                if it >= len(edges):
                    state[v] = 2
                    stack.pop()
                    entry.pop()
                    continue
                stack[-1] = (v, it + 1)
                w, pos = edges[it]
                if not self._closed(w, pos, key):
                    continue
                if state[w] == 0:
                    state[w] = 1
                    stack.append((w, 0))
                    entry.append((w, pos))
                elif state[w] == 1:
                    at = next(i for i, (x, _) in enumerate(stack) if x == w)
                    cycle = [e for e in entry[at + 1:]] + [(w, pos)]
                    found.append(self.clause_for(cycle))
                    if len(found) >= limit:
                        return list(dict.fromkeys(found))
        return list(dict.fromkeys(found))


def _less_than(builder, a: list, b: list):
    """a < b for unsigned bit vectors, least significant bit first."""
    lt = False
    for x, y in zip(a, b):
        here = builder.and_([-x, y])
        same = builder.equal(x, y)
        lt = builder.or_([here, builder.and_([same, lt])])
    return lt


def break_phase(keyed: Netlist) -> list[KeyClause]:
    """Cycle-opening key clauses seeded by the feedback edge set."""
    return CycleBreaker(keyed).initial_clauses()


def clause_holds(clause: KeyClause, key: dict[str, int]) -> bool:
    return any(key[k] == v for k, v in clause)


# ----------------------------------------------------------------------
# the attack
# ----------------------------------------------------------------------

def _interface(keyed: Netlist, oracle: Netlist):
    if oracle.key_inputs:
        raise InterfaceError("the oracle must not have key inputs")
    ins = list(oracle.scan_inputs())
    data = [x for x in keyed.scan_inputs() if x not in set(keyed.key_inputs)]
    if set(ins) != set(data):
        raise InterfaceError(f"scan inputs differ: {sorted(set(ins) ^ set(data))[:6]}")
    if len(oracle.outputs) != len(keyed.outputs):
        raise InterfaceError(f"output counts differ: {len(oracle.outputs)} vs {len(keyed.outputs)}")
    labels = [o for o in oracle.outputs]
    nets = list(keyed.outputs)
    kd = {c.output: c.inputs[0] for c in keyed.dffs}
    for c in oracle.dffs:
        labels.append(c.output + ".D")
        nets.append(kd[c.output])
    return ins, labels, nets


class _Session:
    """One incremental solver instance at a fixed unroll factor."""

    def __init__(self, keyed, u, ins, nets, seed, engine, deadline):
        self.deadline = deadline
        if u:
            self.net, self.order, self.inits = _unroll(keyed, u, deadline)
        else:
            # loops encoded as they are; only sound when the keys close none
            self.net, self.order, self.inits = keyed, None, []
        self.solver = make_solver(engine, seed)
        self.b = Builder(self.solver)
        self.nets = nets
        self.keys = list(keyed.key_inputs)
        self.kv = [{k: self.b.new_var() for k in self.keys} for _ in range(2)]
        # free key bits default to 0, which routes the ground input and closes no ring
        for kv in self.kv:
            for v in kv.values():
                self.solver.set_phase(v, False)
        self.x = {i: self.b.new_var() for i in ins}
        # unrolled loops start from 0 everywhere; free start values would let a
        # ring that never settles match any oracle answer and stall the DIP loop
        self.start = dict.fromkeys(self.inits, False)
        outs = [self._outputs(self.kv[j], {**self.x, **self.start}) for j in range(2)]
        self.diff = self.b.or_([self.b.xor2(a, c) for a, c in zip(*outs)])

    def _outputs(self, keys, inputs):
        if self.order is None:
            vals = encode_cyclic(self.b, self.net, {**keys, **inputs}, self.deadline)
        else:
            vals = encode(self.b, self.net, {**keys, **inputs}, self.order, self.deadline)
        return [vals[n] for n in self.nets]

    def _force(self, v, want: bool):
        if not self.b.assert_value(v, want):
            self.b.contradict()

    def add_break(self, clause: KeyClause):
        for kv in self.kv:
            lits = [kv[k] if v else -kv[k] for k, v in clause]
            self.b.add(lits)

    def add_ranking(self, breaker: CycleBreaker):
        for kv in self.kv:
            breaker.rank_guard(self.b, kv, self.deadline)

    def add_io(self, vector, expected):
        consts = {**{net: bool(v) for net, v in vector.items()}, **self.start}
        for kv in self.kv:
            for v, want in zip(self._outputs(kv, consts), expected):
                self._force(v, bool(want))

    def solve(self, miter: bool) -> bool:
        if isinstance(self.diff, bool):
            if miter and not self.diff:
                return False
            return self.solver.solve(deadline=self.deadline)
        return self.solver.solve([self.diff] if miter else [], deadline=self.deadline)

    def key(self, j: int) -> dict[str, int]:
        return {k: int(self.solver.model_value(v)) for k, v in self.kv[j].items()}

    def vector(self) -> dict[str, int]:
        return {i: int(self.solver.model_value(v)) for i, v in self.x.items()}


def attack(f: Fabric, oracle: Netlist, cfg: AttackConfig | None = None,
           log: AttackLog | None = None) -> AttackReport:
    """Recover a bitstream for ``f`` that makes it behave like ``oracle``.

    ``f`` must carry the design's interface (a bound fabric).  Timeouts are
    reported through ``key_reported = False``, never raised.
    """
    cfg = cfg or AttackConfig()
    log = log if log is not None else AttackLog()
    t0 = time.monotonic()
    deadline = t0 + cfg.timeout_s
    keyed = key_expose(f)
    ins, labels, nets = _interface(keyed, oracle)
    breaking = cfg.strategy == "break_then_unroll"
    first = cfg.initial_unroll or min(len(feedback_edge_set(keyed)) + 1, cfg.max_unroll)
    # with cycle breaking the loops are first encoded as they are (unroll 0)
    u = 0 if breaking else first
    breaker = CycleBreaker(keyed) if breaking else None
    iterations = 0
    clauses = 0
    candidate = None
    verified = False

    def refine(sess, j) -> bool:
        """Add clauses for cycles closed by key copy ``j``; True if any."""
        new = [c for c in breaker.active_cycles(sess.key(j)) if c not in seen]
        for c in new:
            seen.add(c)
            log.break_clauses.append(c)
            sess.add_break(c)
        return bool(new)

    seen: set[KeyClause] = set()
    sess = None
    try:
        if breaking:
            log.ranked = True
            for c in breaker.initial_clauses():
                if c not in seen:
                    seen.add(c)
                    log.break_clauses.append(c)
        while True:
            log.unrolls.append(u)
            sess = _Session(keyed, u, ins, nets, cfg.seed, cfg.engine, deadline)
            if breaking:
                sess.add_ranking(breaker)
            for c in log.break_clauses:
                sess.add_break(c)
            for vec, exp in log.io:
                sess.add_io(vec, exp)
            while sess.solve(miter=True):
                if breaking and (refine(sess, 0) | refine(sess, 1)):
                    continue
                vec = sess.vector()
                res = simulate(oracle, vec, state=True)
                exp = tuple(int(res[label]) for label in labels)
                log.io.append((vec, exp))
                sess.add_io(vec, exp)
                iterations += 1
            candidate = None
            while sess.solve(miter=False):
                if breaking and refine(sess, 0):
                    continue
                candidate = Bitstream(tuple(sess.key(0)[k] for k in keyed.key_inputs))
                break
            clauses = sess.b.count
            if candidate is not None:
                verified = _verify(f, candidate, oracle, cfg.seed)
            if verified or u >= cfg.max_unroll:
                break
            u = first if u == 0 else min(2 * u, cfg.max_unroll)
    except SolverTimeout:
        log.timed_out = True
        if sess is not None:
            clauses = sess.b.count
        return AttackReport(f.name, u, clauses, time.monotonic() - t0, False, iterations, None, False)
    return AttackReport(f.name, u, clauses, time.monotonic() - t0, candidate is not None,
                        iterations, candidate, verified)


def _verify(f: Fabric, key: Bitstream, oracle: Netlist, seed: int) -> bool:
    try:
        return check_equivalence(program(f, key), oracle, seed=seed).equivalent
    except (NetlistError, InterfaceError, ValueError):
        return False


def constraints_hold(f: Fabric, log: AttackLog, key: Bitstream, oracle: Netlist) -> tuple[int, int]:
    """(satisfied, total) attack constraints under ``key``.

    Oracle I/O constraints are checked at every unroll factor the attack
    used (0: the loops as they are), with the unrolling's free initial
    values tied to 0.
    """
    keyed = key_expose(f)
    kv = key.as_keys(f)
    ok = sum(clause_holds(c, kv) for c in log.break_clauses)
    total = len(log.break_clauses)
    if log.ranked:
        ok += not CycleBreaker(keyed).active_cycles(kv, limit=1)
        total += 1
    _, labels, nets = _interface(keyed, oracle)
    for u in sorted(set(log.unrolls)):
        net, _, inits = _unroll(keyed, u) if u else (keyed, None, [])
        probe = net.replace(outputs=tuple(dict.fromkeys(nets)))
        for vec, exp in log.io:
            res = simulate(probe, {**vec, **kv, **dict.fromkeys(inits, 0)})
            total += 1
            ok += all(int(res[n]) == e for n, e in zip(nets, exp))
    return ok, total
