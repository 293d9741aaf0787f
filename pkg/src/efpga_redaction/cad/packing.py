"""Packing of LUT/DFF pairs into BLEs and BLEs into CLBs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..fabric.arch import ArchParams
from ..netlist import Netlist


class PackingError(ValueError):
    pass


@dataclass(frozen=True)
class PackedLut:
    lut: str                    # LUT output net
    inputs: tuple[str, ...]
    table: int
    ff: str | None = None       # DFF output when the LUT feeds a register

    @property
    def output(self) -> str:
        """The net this slot exposes to the rest of the design."""
        return self.ff if self.ff is not None else self.lut


@dataclass(frozen=True)
class PackedBle:
    slots: tuple[PackedLut, ...]        # one, or two for a fractured FLUT

    @property
    def name(self) -> str:
        return self.slots[0].output

    @property
    def inputs(self) -> tuple[str, ...]:
        return tuple(sorted({i for s in self.slots for i in s.inputs}))

    @property
    def outputs(self) -> tuple[str, ...]:
        return tuple(s.output for s in self.slots)

    @property
    def fractured(self) -> bool:
        return len(self.slots) == 2


@dataclass
class Cluster:
    bles: list[PackedBle] = field(default_factory=list)

    @property
    def name(self) -> str:
        return self.bles[0].name

    @property
    def outputs(self) -> set[str]:
        return {o for b in self.bles for o in b.outputs}

    @property
    def external_inputs(self) -> list[str]:
        outs = self.outputs
        return sorted({i for b in self.bles for i in b.inputs} - outs)


@dataclass
class Packing:
    clusters: list[Cluster]
    params: ArchParams

    def cluster_of(self) -> dict[str, int]:
        """Map from every BLE-exposed net to its cluster index."""
        return {o: ci for ci, c in enumerate(self.clusters) for o in c.outputs}

    def check(self) -> None:
        for c in self.clusters:
            if len(c.bles) > self.params.n:
                raise PackingError(f"cluster {c.name} holds {len(c.bles)} BLEs > N")
            if len(c.external_inputs) > self.params.i:
                raise PackingError(f"cluster {c.name} needs {len(c.external_inputs)} inputs > I")


def pack_bles(luts: Netlist, p: ArchParams) -> list[PackedBle]:
    """Pair every LUT with the DFF it feeds; fracturable BLEs take two small LUTs."""
    ff_of = {c.inputs[0]: c.output for c in luts.dffs}
    slots = []
    for c in luts.cells:
        if c.kind == "LUT":
            if c.k > p.k:
                raise PackingError(f"LUT {c.output!r} is wider than K={p.k}")
            slots.append(PackedLut(c.output, c.inputs, c.table, ff_of.get(c.output)))
        elif c.kind != "DFF":
            raise PackingError(f"unexpected cell kind {c.kind} in LUT network")
    slots.sort(key=lambda s: s.output)
    if p.ble_kind != "FLUT":
        return [PackedBle((s,)) for s in slots]
    limit = p.k - 1
    small = [s for s in slots if len(s.inputs) <= limit]
    taken: set[str] = set()
    bles = []
    for s in slots:
        if s.output in taken:
            continue
        taken.add(s.output)
        partner = None
        if len(s.inputs) <= limit:
            best = None
            for t in small:
                if t.output in taken:
                    continue
                union = set(s.inputs) | set(t.inputs)
                if len(union) > limit:
                    continue
                score = (len(set(s.inputs) & set(t.inputs)), -len(union))
                if best is None or score > best:
                    best, partner = score, t
        if partner is not None:
            taken.add(partner.output)
            bles.append(PackedBle((s, partner)))
        else:
            bles.append(PackedBle((s,)))
    return bles


def pack(luts: Netlist, p: ArchParams, clusters: int | None = None) -> Packing:
    """Greedy seed-and-grow clustering by attraction (shared nets).

    With ``clusters`` set, BLEs are spread over exactly that many CLBs
    (at most ceil(#BLEs / clusters) each); otherwise CLBs are filled up to N.
    """
    bles = pack_bles(luts, p)
    cap = p.n
    if clusters is not None:
        if clusters < 1 or clusters > len(bles):
            raise PackingError(f"cannot fill {clusters} CLBs with {len(bles)} BLEs")
        cap = min(p.n, math.ceil(len(bles) / clusters))
    remaining = sorted(bles, key=lambda b: b.name)
    out: list[Cluster] = []
    while remaining:
        seed = max(remaining, key=lambda b: (len(b.inputs), _neg_name(b.name)))
        remaining.remove(seed)
        cl = Cluster([seed])
        if len(cl.external_inputs) > p.i:
            raise PackingError(f"BLE {seed.name} alone needs more than I={p.i} inputs")
        nets = set(seed.inputs) | set(seed.outputs)
        while len(cl.bles) < cap and remaining:
            best, best_key = None, None
            for b in remaining:
                trial = Cluster(cl.bles + [b])
                if len(trial.external_inputs) > p.i:
                    continue
                gain = len(nets & (set(b.inputs) | set(b.outputs)))
                key = (gain, _neg_name(b.name))
                if best_key is None or key > best_key:
                    best, best_key = b, key
            if best is None:
                break
            cl.bles.append(best)
            remaining.remove(best)
            nets |= set(best.inputs) | set(best.outputs)
        out.append(cl)
    packing = Packing(out, p)
    packing.check()
    if clusters is not None and len(out) != clusters:
        raise PackingError(f"packing produced {len(out)} CLBs, wanted {clusters}")
    return packing


def _neg_name(name: str) -> tuple:
    """Sort key that makes max() prefer the lexicographically smallest name."""
    return tuple(-ord(ch) for ch in name) + (1,)
