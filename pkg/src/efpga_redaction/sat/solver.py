"""Incremental CDCL SAT solver.

Two watched literals, 1UIP learning with local minimisation, VSIDS-style
activities, phase saving, Luby restarts and LBD-based clause deletion.
Clauses use DIMACS literals at the API boundary.
"""

from __future__ import annotations

import heapq
import random
import time
from typing import Iterable, Sequence


class SolverTimeout(Exception):
    """Raised when a solve call runs past its deadline."""

    def __init__(self, stats: dict):
        super().__init__("SAT solver deadline exceeded")
        self.stats = stats


def _luby(i: int) -> int:
    size, seq = 1, 0
    while size < i + 1:
        seq += 1
        size = 2 * size + 1
    while size - 1 != i:
        size = (size - 1) >> 1
        seq -= 1
        i = i % size
    return 1 << seq


class Solver:
    restart_base = 100
    var_decay = 0.95

    def __init__(self, seed: int = 0):
        self.rng = random.Random(seed)
        self.nvars = 0
        # per literal (2*v, 2*v+1 = negation): 1 true, -1 false, 0 unassigned
        self.value = [0, 0]
        self.level = [0]
        self.reason: list[list[int] | None] = [None]
        self.activity = [0.0]
        self.polarity = [1]          # saved sign bit: 1 means "assign false"
        self.pinned = [False]        # polarity fixed by the caller, not saved
        self.seen = [False]
        self.watches: list[list[list[int]]] = [[], []]
        self.trail: list[int] = []
        self.trail_lim: list[int] = []
        self.qhead = 0
        self.clauses: list[list[int]] = []
        self.learnts: list[list[int]] = []
        self.lbd: dict[int, int] = {}
        self.heap: list[tuple[float, int]] = []
        self.var_inc = 1.0
        self.ok = True
        self.model: list[bool] = []
        self.stats = {"conflicts": 0, "decisions": 0, "propagations": 0, "solves": 0}
        self.max_learnts = 2000

    # -- construction ----------------------------------------------------

    def new_var(self) -> int:
        self.nvars += 1
        self.value += [0, 0]
        self.level.append(0)
        self.reason.append(None)
        self.activity.append(self.rng.random() * 1e-5)
        self.polarity.append(1)
        self.pinned.append(False)
        self.seen.append(False)
        self.watches += [[], []]
        heapq.heappush(self.heap, (-self.activity[-1], self.nvars))
        return self.nvars

    def ensure_vars(self, n: int) -> None:
        while self.nvars < n:
            self.new_var()

    def set_phase(self, d: int, value: bool) -> None:
        """Always branch on variable ``d`` with ``value`` first."""
        self.ensure_vars(d)
        self.polarity[d] = 0 if value else 1
        self.pinned[d] = True

    @staticmethod
    def _lit(d: int) -> int:
        return 2 * d if d > 0 else -2 * d + 1

    def add_clause(self, clause: Iterable[int]) -> bool:
        """Add a clause (DIMACS literals). Returns False once the formula is UNSAT."""
        if not self.ok:
            return False
        if self.trail_lim:
            self._cancel_until(0)
        lits = []
        seen = set()
        for d in clause:
            v = abs(d)
            if v == 0:
                raise ValueError("literal 0 is not allowed")
            self.ensure_vars(v)
            lit = self._lit(d)
            if lit ^ 1 in seen:
                return True           # tautology
            if lit in seen:
                continue
            val = self.value[lit]
            if val == 1:
                return True
            if val == -1:
                continue
            seen.add(lit)
            lits.append(lit)
        if not lits:
            self.ok = False
            return False
        if len(lits) == 1:
            self._enqueue(lits[0], None)
            if self._propagate() is not None:
                self.ok = False
            return self.ok
        self.clauses.append(lits)
        self.watches[lits[0]].append(lits)
        self.watches[lits[1]].append(lits)
        return True

    # -- core --------------------------------------------------------------

    def _enqueue(self, lit: int, reason) -> None:
        self.value[lit] = 1
        self.value[lit ^ 1] = -1
        v = lit >> 1
        self.level[v] = len(self.trail_lim)
        self.reason[v] = reason
        self.trail.append(lit)

    def _propagate(self):
        value = self.value
        watches = self.watches
        trail = self.trail
        level = self.level
        reason = self.reason
        lvl = len(self.trail_lim)
        props = 0
        while self.qhead < len(trail):
            p = trail[self.qhead]
            self.qhead += 1
            props += 1
            false_lit = p ^ 1
            ws = watches[false_lit]
            keep = []
            i = 0
            n = len(ws)
            while i < n:
                c = ws[i]
                i += 1
                if c[0] == false_lit:
                    c[0], c[1] = c[1], false_lit
                first = c[0]
                if value[first] == 1:
                    keep.append(c)
                    continue
                for k in range(2, len(c)):
                    lk = c[k]
                    if value[lk] != -1:
                        c[1] = lk
                        c[k] = false_lit
                        watches[lk].append(c)
                        break
                else:
                    keep.append(c)
                    if value[first] == -1:
                        keep.extend(ws[i:])
                        watches[false_lit] = keep
                        self.qhead = len(trail)
                        self.stats["propagations"] += props
                        return c
                    value[first] = 1
                    value[first ^ 1] = -1
                    v = first >> 1
                    level[v] = lvl
                    reason[v] = c
                    trail.append(first)
            watches[false_lit] = keep
        self.stats["propagations"] += props
        return None

    def _bump(self, v: int) -> None:
        act = self.activity
        act[v] += self.var_inc
        if act[v] > 1e100:
            for i in range(1, self.nvars + 1):
                act[i] *= 1e-100
            self.var_inc *= 1e-100
            self.heap = [(-act[i], i) for i in range(1, self.nvars + 1) if self.value[2 * i] == 0]
            heapq.heapify(self.heap)
        elif self.value[2 * v] == 0:
            heapq.heappush(self.heap, (-act[v], v))

    def _analyze(self, confl: list[int]) -> tuple[list[int], int]:
        seen = self.seen
        level = self.level
        reason = self.reason
        trail = self.trail
        cur = len(self.trail_lim)
        learnt = [0]
        path = 0
        p = -1
        idx = len(trail) - 1
        to_clear = []
        while True:
            start = 0 if p == -1 else 1
            for k in range(start, len(confl)):
                q = confl[k]
                v = q >> 1
                if not seen[v] and level[v] > 0:
                    self._bump(v)
                    seen[v] = True
                    to_clear.append(v)
                    if level[v] >= cur:
                        path += 1
                    else:
                        learnt.append(q)
            while not seen[trail[idx] >> 1]:
                idx -= 1
            p = trail[idx]
            idx -= 1
            confl = reason[p >> 1]
            seen[p >> 1] = False
            path -= 1
            if path == 0:
                break
        learnt[0] = p ^ 1
        # local minimisation: drop literals implied by other learnt literals
        out = [learnt[0]]
        for q in learnt[1:]:
            r = reason[q >> 1]
            if r is None:
                out.append(q)
                continue
            for lit in r[1:]:
                v = lit >> 1
                if not seen[v] and level[v] > 0:
                    out.append(q)
                    break
        for v in to_clear:
            seen[v] = False
        if len(out) == 1:
            bt = 0
        else:
            best = 1
            for k in range(2, len(out)):
                if level[out[k] >> 1] > level[out[best] >> 1]:
                    best = k
            out[1], out[best] = out[best], out[1]
            bt = level[out[1] >> 1]
        self.var_inc /= self.var_decay
        return out, bt

    def _cancel_until(self, lvl: int) -> None:
        if len(self.trail_lim) <= lvl:
            return
        value = self.value
        act = self.activity
        heap = self.heap
        pol = self.polarity
        pinned = self.pinned
        stop = self.trail_lim[lvl]
        for k in range(len(self.trail) - 1, stop - 1, -1):
            lit = self.trail[k]
            value[lit] = 0
            value[lit ^ 1] = 0
            v = lit >> 1
            self.reason[v] = None
            if not pinned[v]:
                pol[v] = lit & 1
            heapq.heappush(heap, (-act[v], v))
        del self.trail[stop:]
        del self.trail_lim[lvl:]
        self.qhead = len(self.trail)

    def _pick_branch(self) -> int:
        heap = self.heap
        value = self.value
        while heap:
            _, v = heapq.heappop(heap)
            if value[2 * v] == 0:
                return 2 * v + self.polarity[v]
        return -1

    def _lbd(self, lits: Sequence[int]) -> int:
        return len({self.level[l >> 1] for l in lits})

    def _reduce_db(self) -> None:
        locked = set()
        for lit in self.trail:
            r = self.reason[lit >> 1]
            if r is not None:
                locked.add(id(r))
        self.learnts.sort(key=lambda c: (self.lbd.get(id(c), 99), len(c)))
        half = len(self.learnts) // 2
        keep, drop = self.learnts[:half], self.learnts[half:]
        kept_drop = [c for c in drop if id(c) in locked or self.lbd.get(id(c), 99) <= 2]
        removed = {id(c) for c in drop} - {id(c) for c in kept_drop}
        for c in drop:
            if id(c) in removed:
                self.lbd.pop(id(c), None)
        self.learnts = keep + kept_drop
        for w in range(len(self.watches)):
            ws = self.watches[w]
            if ws:
                self.watches[w] = [c for c in ws if id(c) not in removed]
        self.max_learnts = int(self.max_learnts * 1.1)

    def solve(self, assumptions: Sequence[int] = (), deadline: float | None = None) -> bool:
        """Decide satisfiability under ``assumptions`` (DIMACS literals).

        On SAT, :attr:`model` holds a bool per variable (index 0 unused).
        ``deadline`` is a ``time.monotonic()`` instant; passing it raises
        :class:`SolverTimeout`.
        """
        self.stats["solves"] += 1
        self.model = []
        if not self.ok:
            return False
        for d in assumptions:
            self.ensure_vars(abs(d))
        assume = [self._lit(d) for d in assumptions]
        self._cancel_until(0)
        if self._propagate() is not None:
            self.ok = False
            return False
        restart = 0
        while True:
            limit = _luby(restart) * self.restart_base
            restart += 1
            status = self._search(limit, assume, deadline)
            if status is not None:
                if status:
                    self.model = [False] + [self.value[2 * v] == 1 for v in range(1, self.nvars + 1)]
                self._cancel_until(0)
                return status

    def _search(self, limit: int, assume: list[int], deadline: float | None):
        conflicts = 0
        stats = self.stats
        while True:
            confl = self._propagate()
            if confl is not None:
                conflicts += 1
                stats["conflicts"] += 1
                if not self.trail_lim:
                    self.ok = False
                    return False
                if deadline is not None and (stats["conflicts"] & 63) == 0 and time.monotonic() > deadline:
                    self._cancel_until(0)
                    raise SolverTimeout(dict(stats))
                learnt, bt = self._analyze(confl)
                self._cancel_until(bt)
                if len(learnt) == 1:
                    self._enqueue(learnt[0], None)
                else:
                    self.learnts.append(learnt)
                    self.lbd[id(learnt)] = self._lbd(learnt)
                    self.watches[learnt[0]].append(learnt)
                    self.watches[learnt[1]].append(learnt)
                    self._enqueue(learnt[0], learnt)
                continue
            if conflicts >= limit:
                self._cancel_until(0)
                return None
            if len(self.learnts) - len(self.trail) >= self.max_learnts:
                self._reduce_db()
            lvl = len(self.trail_lim)
            if lvl < len(assume):
                p = assume[lvl]
                if self.value[p] == 1:
                    self.trail_lim.append(len(self.trail))
                    continue
                if self.value[p] == -1:
                    return False
                lit = p
            else:
                if deadline is not None and (stats["decisions"] & 1023) == 0 and time.monotonic() > deadline:
                    self._cancel_until(0)
                    raise SolverTimeout(dict(stats))
                lit = self._pick_branch()
                if lit == -1:
                    return True
            stats["decisions"] += 1
            self.trail_lim.append(len(self.trail))
            self._enqueue(lit, None)

    def model_value(self, d: int) -> bool:
        v = self.model[abs(d)]
        return v if d > 0 else not v


def solve(clauses: Iterable[Sequence[int]], assumptions: Sequence[int] = (), seed: int = 0,
          deadline: float | None = None) -> tuple[bool, list[bool]]:
    """One-shot convenience wrapper: (sat?, model)."""
    s = Solver(seed)
    for c in clauses:
        if not s.add_clause(c):
            return False, []
    sat = s.solve(assumptions, deadline)
    return sat, s.model


class ExternalSolver:
    """Adapter giving a python-sat engine the :class:`Solver` interface."""

    chunk = 2000      # conflicts between deadline checks

    def __init__(self, name: str = "cadical195", seed: int = 0):
        from pysat.solvers import Solver as _PySat
        self.name = name
        self._s = _PySat(name=name)
        self.nvars = 0
        self.model: list[bool] = []
        self.ok = True
        self._phases: list[int] = []
        self.stats = {"conflicts": 0, "decisions": 0, "propagations": 0, "solves": 0}

    def new_var(self) -> int:
        self.nvars += 1
        return self.nvars

    def ensure_vars(self, n: int) -> None:
        self.nvars = max(self.nvars, n)

    def set_phase(self, d: int, value: bool) -> None:
        # the engine saves phases during search, so these are re-applied per solve
        self.ensure_vars(d)
        self._phases.append(d if value else -d)

    def add_clause(self, clause: Iterable[int]) -> bool:
        clause = list(clause)
        if not clause:
            self.ok = False
            return False
        for d in clause:
            self.ensure_vars(abs(d))
        self._s.add_clause(clause)
        return self.ok

    def solve(self, assumptions: Sequence[int] = (), deadline: float | None = None) -> bool:
        self.stats["solves"] += 1
        self.model = []
        if not self.ok:
            return False
        if self._phases:
            self._s.set_phases(self._phases)
        # budgeted chunks, so the deadline is checked at conflict boundaries
        while True:
            if deadline is not None and time.monotonic() > deadline:
                raise SolverTimeout(dict(self.stats))
            self._s.conf_budget(self.chunk)
            sat = self._s.solve_limited(assumptions=list(assumptions))
            if sat is not None:
                break
        if sat:
            self.model = self._s.get_model() or []
        return bool(sat)

    def model_value(self, d: int) -> bool:
        # python-sat models list literal i at index i - 1; unmentioned variables are free
        v = abs(d)
        val = v <= len(self.model) and self.model[v - 1] > 0
        return val if d > 0 else not val


def make_solver(engine: str = "auto", seed: int = 0):
    """``embedded`` (this module), a python-sat engine name, or ``auto``.

    ``auto`` picks CaDiCaL through python-sat when that package is
    installed and the embedded solver otherwise.
    """
    if engine == "embedded":
        return Solver(seed)
    if engine == "auto":
        try:
            return ExternalSolver("cadical195", seed)
        except ImportError:
            return Solver(seed)
    return ExternalSolver(engine, seed)
