"""Bitstream generation, fabric binding and programming."""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

from ..fabric.build import Fabric
from ..netlist import Cell, Netlist, NetlistError, output_cone, propagate_constants
from .packing import Packing, PackedBle
from .placement import Placement
from .routing import RoutedNet, site_outputs


class BitstreamError(ValueError):
    pass


@dataclass(frozen=True)
class Bitstream:
    bits: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.bits)

    def text(self) -> str:
        return "".join(f"{b}\n" for b in self.bits)

    def write(self, path) -> None:
        Path(path).write_text(self.text())

    @classmethod
    def parse(cls, text: str) -> "Bitstream":
        bits = []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if line not in ("0", "1"):
                raise BitstreamError(f"line {lineno}: expected 0 or 1, got {line!r}")
            bits.append(int(line))
        return cls(tuple(bits))

    @classmethod
    def read(cls, path) -> "Bitstream":
        return cls.parse(Path(path).read_text())

    def as_keys(self, f: Fabric) -> dict[str, int]:
        if len(self.bits) != len(f.config_chain):
            raise BitstreamError(f"bitstream has {len(self.bits)} bits, fabric expects {len(f.config_chain)}")
        return dict(zip(f.netlist.key_inputs, self.bits))


def _remap_table(table: int, lut_inputs, pins, n_pins: int) -> int:
    """Re-express a LUT table over physical pins; rows where unused pins are 1 stay 0."""
    pos = [pins.index(i) for i in lut_inputs]
    out = 0
    for row in range(1 << len(lut_inputs)):
        if (table >> row) & 1:
            phys = 0
            for j, p in enumerate(pos):
                phys |= ((row >> j) & 1) << p
            out |= 1 << phys
    return out


def bitgen(f: Fabric, packing: Packing, placement: Placement, routes: dict[str, RoutedNet]) -> Bitstream:
    """Configuration bits for a routed design, in scan-chain order."""
    bits = [0] * len(f.config_chain)
    p = f.params
    K = p.k

    def set_mux(mux_name: str, net: str) -> None:
        m = f.muxes[mux_name]
        try:
            value = m.inputs.index(net)
        except ValueError:
            raise BitstreamError(f"mux {mux_name} cannot select {net}") from None
        for j, b in enumerate(m.bits):
            bits[b] = (value >> j) & 1

    # global routing
    for rn in routes.values():
        for u, v in rn.edges():
            tag = f.rrg.switch.get((u, v))
            if tag is None:
                continue
            name, value = tag
            m = f.muxes[name]
            for j, b in enumerate(m.bits):
                bits[b] = (value >> j) & 1

    # which CLB input pin carries each routed net, per CLB
    ipin_net: dict[tuple[int, int], dict[str, str]] = {}
    for rn in routes.values():
        for v, u in rn.parent.items():
            nd = f.rrg.nodes[v]
            if nd.kind == "SINK" and nd.tile in f.clbs and v == f.rrg.clb_sink.get(nd.tile):
                ipin_net.setdefault(nd.tile, {})[rn.name] = f.rrg.nodes[u].net

    outs = site_outputs(f, placement, packing)
    for ci, cl in enumerate(packing.clusters):
        tile = placement.clb_tile[ci]
        site = f.clbs[tile]
        local = {net: outs[net] for b in cl.bles for net in b.outputs}
        entry = ipin_net.get(tile, {})
        for b, ble in enumerate(cl.bles):
            bs = site.bles[b]
            pins = list(ble.inputs)
            if len(pins) > K:
                raise BitstreamError(f"BLE {ble.name} has more than K inputs")
            for j, net in enumerate(pins):
                src = local.get(net) or entry.get(net)
                if src is None:
                    raise BitstreamError(f"net {net} does not reach CLB {tile}")
                set_mux(bs.xbar[j].name, src)
            _program_ble(bits, bs, ble, pins, K, p.ble_kind)
    return Bitstream(tuple(bits))


def _program_ble(bits, bs, ble: PackedBle, pins, K, kind) -> None:
    if ble.fractured:
        half = 1 << (K - 1)
        lo = _remap_table(ble.slots[0].table, ble.slots[0].inputs, pins, K - 1)
        hi = _remap_table(ble.slots[1].table, ble.slots[1].inputs, pins, K - 1)
        table = lo | (hi << half)
        bits[bs.mode_bit] = 1
    else:
        slot = ble.slots[0]
        table = _remap_table(slot.table, slot.inputs, pins, K)
    for j, b in enumerate(bs.table_bits):
        bits[b] = (table >> j) & 1
    for j, slot in enumerate(ble.slots):
        bits[bs.out_select[j]] = 1 if slot.ff is not None else 0


def bind(f: Fabric, luts: Netlist, packing: Packing, placement: Placement) -> Fabric:
    """Give the fabric the design's interface.

    Pads used by the design take the design's I/O names (outputs that
    alias an input or a register get a ``__po`` suffix), unused pad inputs
    are tied low, unused pad outputs are dropped, and BLE flip-flops that
    hold design registers take the register names (scan correspondence).
    Unused flip-flops become constant zero.  Key inputs are unchanged.
    """
    n = f.netlist
    rename: dict[str, str] = {}
    used_in = {}
    for net in luts.inputs:
        used_in[f.io_pads[placement.io_pad[net]].in_net] = net
    # an output that is also an input or register name keeps its position but not its name
    taken = set(luts.inputs) | {c.output for c in luts.dffs}
    out_names = []
    for o in luts.outputs:
        io = f"{o}@out" if o in luts.inputs else o
        name = f"{o}__po" if o in taken else o
        out_names.append((f.io_pads[placement.io_pad[io]].out_net, name))
    rename.update(used_in)
    rename.update(dict(out_names))
    ff_map = {}
    for ci, cl in enumerate(packing.clusters):
        site = f.clbs[placement.clb_tile[ci]]
        for b, ble in enumerate(cl.bles):
            for j, slot in enumerate(ble.slots):
                if slot.ff is not None:
                    ff_map[site.bles[b].ffs[j]] = slot.ff
    rename.update(ff_map)
    clash = set(rename.values()) & (set(n.nets) - set(rename))
    if clash:
        raise BitstreamError(f"design names collide with fabric nets: {sorted(clash)[:5]}")

    def r(net):
        return rename.get(net, net)

    cells = []
    for c in n.cells:
        if c.kind == "DFF" and c.output not in ff_map:
            cells.append(Cell("CONST0", (), c.output))
            continue
        cells.append(Cell(c.kind, tuple(r(i) for i in c.inputs), r(c.output), c.table))
    for pad in f.io_pads:
        if pad.in_net not in used_in:
            cells.append(Cell("CONST0", (), pad.in_net))
    inputs = list(luts.inputs) + list(n.key_inputs)
    outputs = [o for _, o in out_names]
    bound = Netlist(luts.name, inputs, outputs, cells, n.key_inputs)
    return replace(f, netlist=bound)


def program(f: Fabric, b: Bitstream) -> Netlist:
    """Substitute the bitstream for the key inputs and simplify.

    Logic that no output or register reads is removed afterwards.
    """
    n = propagate_constants(f.netlist, b.as_keys(f))
    cone = output_cone(n)
    cells = [c for c in n.cells if c.output in cone or c.kind == "DFF"]
    try:
        return n.replace(cells=tuple(cells))
    except NetlistError as exc:
        raise BitstreamError(str(exc)) from exc

