"""Proxy area/delay/power models and overhead reports.

Area is a weighted cell count, delay the unit-delay critical path and
power the mean number of nets toggling between consecutive random
vectors.  A redacted module is the whole fabric with its
configuration bits tied to constants (see :func:`configured_fabric`):
every multiplexer and flip-flop counts towards area, while delay and
power follow the paths the configuration selects.
"""

from __future__ import annotations

import csv
import io
import math
import random
from dataclasses import asdict, dataclass
from typing import Mapping

from .cad.bitstream import Bitstream
from .fabric.build import Fabric
from .netlist import (GATE_KINDS, Cell, Netlist, NetlistError, is_acyclic, propagate_constants,
                      simulate_words, sweep, topological_order)

# fixed proxy weights; LUT(k) costs 0.5 per table row
AREA_WEIGHTS: dict[str, float] = {
    **{k: 1.0 for k in GATE_KINDS},
    "MUX2": 2.0,
    "LUT_ROW": 0.5,
    "DFF": 4.0,
    "CONST0": 0.0,
    "CONST1": 0.0,
}

POWER_VECTORS = 1000


@dataclass(frozen=True)
class PpaProxy:
    area_units: float
    delay_levels: int
    power_units: float

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class OverheadReport:
    ip: str
    fabric: str
    area_overhead: float
    power_overhead: float
    delay_overhead: float
    original: PpaProxy
    redacted: PpaProxy

    CSV_FIELDS = ("ip", "fabric", "area_overhead", "power_overhead", "delay_overhead")

    def row(self) -> dict:
        return {"ip": self.ip, "fabric": self.fabric, "area_overhead": self.area_overhead,
                "power_overhead": self.power_overhead, "delay_overhead": self.delay_overhead}

    def as_dict(self) -> dict:
        return {**self.row(), "original": self.original.as_dict(), "redacted": self.redacted.as_dict(),
                "denominator": "full original module"}

    def csv_row(self) -> str:
        return overhead_csv([self]).splitlines()[1] + "\n"


def area_proxy(n: Netlist, weights: Mapping[str, float] | None = None) -> float:
    w = AREA_WEIGHTS if weights is None else weights
    total = 0.0
    for c in n.cells:
        total += w["LUT_ROW"] * (1 << c.k) if c.kind == "LUT" else w[c.kind]
    return total


def _settled(n: Netlist) -> Netlist:
    """Fold constants (configuration included) and drop logic nothing observes."""
    m = sweep(propagate_constants(n))
    if not is_acyclic(m):
        raise NetlistError(f"{n.name!r} has combinational loops; program it first")
    return m


def delay_proxy(n: Netlist) -> int:
    """Longest input/register-to-output/register path, one level per cell."""
    m = _settled(n)
    sources = set(m.inputs) | {c.output for c in m.dffs}
    level: dict[str, int] = {net: 0 for net in sources}
    for ci in topological_order(m):
        c = m.cells[ci]
        if c.kind == "DFF":
            continue
        reach = [level[i] for i in c.inputs if i in level]
        if reach:
            level[c.output] = 1 + max(reach)
    sinks = list(m.outputs) + [c.inputs[0] for c in m.dffs]
    return max((level.get(s, 0) for s in sinks), default=0)


def power_proxy(n: Netlist, vectors: int = POWER_VECTORS, seed: int = 0) -> float:
    """Mean count of nets that toggle between consecutive random scan vectors.

    Inputs that nothing reads once the configuration is folded in are not
    counted.
    """
    if vectors < 1:
        raise ValueError("vectors must be >= 1")
    m = _settled(n)
    rng = random.Random(seed)
    width = vectors + 1
    full = (1 << width) - 1
    ins = m.scan_inputs()
    ones = {net: rng.getrandbits(width) for net in ins}
    zeros = {net: ~w & full for net, w in ones.items()}
    o, _, ids = simulate_words(m, ones, zeros, width)
    live = {c.output for c in m.cells} | {i for c in m.cells for i in c.inputs} | set(m.outputs)
    pairs = (1 << vectors) - 1
    toggles = sum(((o[ids[net]] ^ (o[ids[net]] >> 1)) & pairs).bit_count() for net in live)
    return toggles / vectors


def ppa(n: Netlist, vectors: int = POWER_VECTORS, seed: int = 0,
        weights: Mapping[str, float] | None = None) -> PpaProxy:
    return PpaProxy(area_proxy(n, weights), delay_proxy(n), power_proxy(n, vectors, seed))


def _overhead(orig: float, red: float, what: str) -> float:
    if orig <= 0:
        raise ValueError(f"original {what} is zero; overhead undefined")
    return (red - orig) / orig


def overhead_report(original: Netlist, redacted: Netlist, fabric: str = "", vectors: int = POWER_VECTORS,
                    seed: int = 0, weights: Mapping[str, float] | None = None) -> OverheadReport:
    a = ppa(original, vectors, seed, weights)
    b = ppa(redacted, vectors, seed, weights)
    return OverheadReport(original.name, fabric or redacted.name,
                          _overhead(a.area_units, b.area_units, "area"),
                          _overhead(a.power_units, b.power_units, "power"),
                          _overhead(a.delay_levels, b.delay_levels, "delay"), a, b)


def configured_fabric(f: Fabric, b: Bitstream) -> Netlist:
    """The fabric with every configuration bit held by a constant cell.

    Unlike :func:`~efpga_redaction.cad.bitstream.program` nothing is
    simplified, so the area proxy still sees every multiplexer.
    """
    n = f.netlist
    keys = b.as_keys(f)
    consts = tuple(Cell("CONST1" if keys[k] else "CONST0", (), k) for k in n.key_inputs)
    inputs = tuple(i for i in n.inputs if i not in keys)
    return n.replace(inputs=inputs, key_inputs=(), cells=n.cells + consts)


def overhead_csv(reports: list[OverheadReport]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=OverheadReport.CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in reports:
        row = r.row()
        for k in ("area_overhead", "power_overhead", "delay_overhead"):
            if not math.isfinite(row[k]):
                raise ValueError(f"{r.fabric}: {k} is not finite")
            row[k] = f"{row[k]:.6f}"
        w.writerow(row)
    return buf.getvalue()
