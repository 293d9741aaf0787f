"""Key-programmable fabric generation.

The fabric is a grid of CLB tiles ringed by I/O tiles.  Every programmable
element is lowered to plain cells: LUTs become MUX2 trees over their
truth-table bits, configurable multiplexers become MUX2 trees over their
select bits, and every configuration bit is a key input of the netlist,
listed in scan-chain order.

Coordinates: CLBs occupy ``(x, y)`` for ``1 <= x <= grid_w``,
``1 <= y <= grid_h``; I/O tiles sit on the ring around them (corners hold
only switch blocks).  ``chanx`` row ``y`` runs between CLB rows ``y`` and
``y + 1``; ``chany`` column ``x`` between CLB columns ``x`` and ``x + 1``.
Switch block ``(i, j)`` joins chanx row ``j`` and chany column ``i``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

from ..netlist import Cell, Netlist, read_bench, write_bench
from .arch import ArchError, ArchParams, dump_arch, fc_tracks, load_arch

GND = "fab_gnd"

# side of a block / switch block
BOTTOM, RIGHT, TOP, LEFT = "B", "R", "T", "L"
_SIDES = (BOTTOM, RIGHT, TOP, LEFT)
_OPPOSITE = {BOTTOM: TOP, TOP: BOTTOM, LEFT: RIGHT, RIGHT: LEFT}
# (incoming side -> outgoing side) pairs treated as clockwise turns by the Wilton pattern
_CLOCKWISE = {(LEFT, TOP), (TOP, RIGHT), (RIGHT, BOTTOM), (BOTTOM, LEFT)}

ROLES = ("lut-bit", "mode-bit", "ble-out-select", "routing-mux-select")


@dataclass(frozen=True)
class ConfigBit:
    index: int
    role: str
    tile: tuple[int, int]
    element: str
    bit: int

    def describe(self) -> str:
        return f"{self.index} {self.role} tile=({self.tile[0]},{self.tile[1]}) element={self.element}[{self.bit}]"


@dataclass
class Mux:
    """A configuration-selected multiplexer; select value i picks ``inputs[i]``."""
    name: str
    inputs: list[str]
    tile: tuple[int, int]
    kind: str
    bits: list[int] = field(default_factory=list)

    @property
    def n_bits(self) -> int:
        return (len(self.inputs) - 1).bit_length() if len(self.inputs) > 1 else 0

    def select_value(self, net: str) -> int:
        return self.inputs.index(net)


@dataclass
class BleSite:
    clb: tuple[int, int]
    index: int
    pins: list[str]
    xbar: list[Mux]
    table_bits: list[int] = field(default_factory=list)
    mode_bit: int | None = None
    outs: list[str] = field(default_factory=list)       # BLE outputs, after the select mux
    lut_outs: list[str] = field(default_factory=list)   # combinational outputs (DFF D pins)
    ffs: list[str] = field(default_factory=list)        # DFF outputs
    out_select: list[int] = field(default_factory=list)

    @property
    def name(self) -> str:
        return f"clb{self.clb[0]}_{self.clb[1]}.ble{self.index}"


@dataclass
class ClbSite:
    xy: tuple[int, int]
    ipins: list[Mux]
    bles: list[BleSite]

    @property
    def outputs(self) -> list[str]:
        return [o for b in self.bles for o in b.outs]


@dataclass
class Pad:
    index: int
    tile: tuple[int, int]
    slot: int
    in_net: str
    out_net: str
    out_mux: Mux | None = None


@dataclass
class RRNode:
    id: int
    kind: str                   # SOURCE, SINK, OPIN, IPIN, CHANX, CHANY
    net: str | None
    tile: tuple[int, int]
    span: tuple[int, int] = (0, 0)
    capacity: int = 1
    owner: str = ""


@dataclass
class RoutingResourceGraph:
    nodes: list[RRNode] = field(default_factory=list)
    edges: list[list[int]] = field(default_factory=list)
    # (u, v) -> (mux driving v, select value choosing u)
    switch: dict[tuple[int, int], tuple[str, int]] = field(default_factory=dict)
    by_net: dict[str, int] = field(default_factory=dict)
    source_of: dict[str, int] = field(default_factory=dict)   # driver net -> SOURCE node
    clb_sink: dict[tuple[int, int], int] = field(default_factory=dict)
    pad_sink: dict[int, int] = field(default_factory=dict)

    def add(self, kind, net, tile, span=(0, 0), capacity=1, owner="") -> int:
        node = RRNode(len(self.nodes), kind, net, tile, span, capacity, owner)
        self.nodes.append(node)
        self.edges.append([])
        if net is not None and kind not in ("SOURCE", "SINK"):
            self.by_net[net] = node.id
        return node.id

    def connect(self, u: int, v: int, mux: str | None = None, value: int = 0) -> None:
        self.edges[u].append(v)
        if mux is not None:
            self.switch[(u, v)] = (mux, value)

    def config_bits(self, u: int, v: int, muxes: dict[str, Mux]) -> list[tuple[int, int]]:
        """(config index, bit value) pairs that enable edge u -> v."""
        if (u, v) not in self.switch:
            return []
        name, value = self.switch[(u, v)]
        m = muxes[name]
        return [(b, (value >> j) & 1) for j, b in enumerate(m.bits)]


@dataclass
class Fabric:
    params: ArchParams
    width: int
    netlist: Netlist
    rrg: RoutingResourceGraph
    config_chain: list[ConfigBit]
    io_pads: list[Pad]
    clbs: dict[tuple[int, int], ClbSite]
    muxes: dict[str, Mux]
    name: str = ""

    def __post_init__(self):
        if not self.name:
            self.name = self.params.name
        if len(self.config_chain) != len(self.netlist.key_inputs):
            raise ArchError("configuration chain and key inputs disagree")

    @property
    def bitstream_size(self) -> int:
        return len(self.config_chain)

    def key_name(self, index: int) -> str:
        return self.netlist.key_inputs[index]

    def chain_text(self) -> str:
        return "".join(b.describe() + "\n" for b in self.config_chain)


def io_tile_list(p: ArchParams) -> list[tuple[int, int]]:
    """Perimeter I/O tiles in raster order (corners excluded)."""
    tiles = []
    for y in range(0, p.grid_h + 2):
        for x in range(0, p.grid_w + 2):
            on_x_edge = x in (0, p.grid_w + 1)
            on_y_edge = y in (0, p.grid_h + 1)
            if on_x_edge != on_y_edge:
                tiles.append((x, y))
    return tiles


def key_name(index: int) -> str:
    return f"key{index}"


class _Builder:
    def __init__(self, p: ArchParams, width: int):
        self.p = p
        self.W = width
        self.rrg = RoutingResourceGraph()
        self.muxes: dict[str, Mux] = {}
        self.tile_muxes: dict[tuple[int, int], dict[str, list[Mux]]] = {}
        self.covering: dict[tuple[str, int, int], list[int]] = {}
        self.starting: dict[tuple[str, int, int], list[int]] = {}
        self.sb_start: dict[tuple[int, int], dict[str, list[int]]] = {}
        self.sb_end: dict[tuple[int, int], dict[str, list[int]]] = {}
        self.track_mux: dict[int, Mux] = {}
        self.clbs: dict[tuple[int, int], ClbSite] = {}
        self.pads: list[Pad] = []
        self.chain: list[ConfigBit] = []
        self.cells: list[Cell] = []

    # -- helpers ---------------------------------------------------------

    def _mux(self, name, inputs, tile, kind) -> Mux:
        m = Mux(name, list(inputs), tile, kind)
        self.muxes[name] = m
        self.tile_muxes.setdefault(tile, {}).setdefault(kind, []).append(m)
        return m

    def _sb_tile(self, sb):
        return sb

    # -- routing tracks ----------------------------------------------------

    def _channels(self):
        p = self.p
        for y in range(0, p.grid_h + 1):
            yield "X", y, p.grid_w
        for x in range(0, p.grid_w + 1):
            yield "Y", x, p.grid_h

    def build_tracks(self) -> None:
        p, W = self.p, self.W
        for axis, fixed, length in self._channels():
            for t in range(W // 2):
                off = t % p.l
                bounds = [1] + [q for q in range(2, length + 1) if (q - 1 - off) % p.l == 0]
                segs = [(b, (bounds[i + 1] - 1) if i + 1 < len(bounds) else length)
                        for i, b in enumerate(bounds)]
                for d, dname in ((0, "i"), (1, "d")):
                    for lo, hi in segs:
                        net = f"c{axis.lower()}{fixed}_{dname}{t}_{lo}"
                        kind = "CHANX" if axis == "X" else "CHANY"
                        tile = (lo, fixed) if axis == "X" else (fixed, lo)
                        nid = self.rrg.add(kind, net, tile, (lo, hi), owner=f"{kind.lower()} lane {dname}{t}")
                        for pos in range(lo, hi + 1):
                            self.covering.setdefault((axis, fixed, pos), []).append(nid)
                        self.starting.setdefault((axis, fixed, lo if d == 0 else hi), []).append(nid)
                        if axis == "X":
                            start = ((lo - 1, fixed), RIGHT) if d == 0 else ((hi, fixed), LEFT)
                            end = ((hi, fixed), LEFT) if d == 0 else ((lo - 1, fixed), RIGHT)
                        else:
                            start = ((fixed, lo - 1), TOP) if d == 0 else ((fixed, hi), BOTTOM)
                            end = ((fixed, hi), BOTTOM) if d == 0 else ((fixed, lo - 1), TOP)
                        self.sb_start.setdefault(start[0], {}).setdefault(start[1], []).append(nid)
                        self.sb_end.setdefault(end[0], {}).setdefault(end[1], []).append(nid)
                        # the driving mux lives in the switch block where the track starts
                        self.track_mux[nid] = self._mux(net, [GND], start[0], "sb")
        for table in (self.covering, self.starting):
            for key in table:
                table[key].sort(key=self._lane_key)

    def _lane_key(self, nid):
        net = self.rrg.nodes[nid].net
        lane = net.split("_")[1]
        return int(lane[1:]), lane[0]

    def build_switch_blocks(self) -> None:
        fs = self.p.fs
        for sb in sorted(self.sb_end, key=lambda s: (s[1], s[0])):
            ends = self.sb_end[sb]
            starts = self.sb_start.get(sb, {})
            for s_in in _SIDES:
                for nid in ends.get(s_in, []):
                    t = self._lane_key(nid)[0]
                    # straight, the two turns, and last the U-turn back along the same channel;
                    # the U-turn is only reached when the other sides leave Fs slots unused
                    order = [_OPPOSITE[s_in]] + [s for s in _SIDES if s not in (s_in, _OPPOSITE[s_in])]
                    cands = []
                    for s_out in order + [s_in]:
                        c = sorted(starts.get(s_out, []), key=self._lane_key)
                        if not c:
                            continue
                        if s_out == _OPPOSITE[s_in] or s_out == s_in:
                            first = t
                        elif (s_in, s_out) in _CLOCKWISE:
                            first = len(c) - 1 - t
                        else:
                            first = t + 1
                        cands.append([c[(first + j) % len(c)] for j in range(len(c))])
                    picks = []
                    depth = 0
                    while len(picks) < fs and any(depth < len(c) for c in cands):
                        for c in cands:
                            if depth < len(c) and len(picks) < fs:
                                picks.append(c[depth])
                        depth += 1
                    for v in picks:
                        self.track_mux[v].inputs.append(self.rrg.nodes[nid].net)

    # -- pins ------------------------------------------------------------

    def _adjacent(self, xy, side):
        x, y = xy
        return {BOTTOM: ("X", y - 1, x), TOP: ("X", y, x),
                LEFT: ("Y", x - 1, y), RIGHT: ("Y", x, y)}[side]

    def _pick_tracks(self, xy, side, fc, salt, drive=False):
        """Spread a pin's tracks evenly over lanes, alternating the two directions.

        Input pins may read any track passing the pin; output pins (``drive``)
        only feed tracks whose driver sits at the pin's position, when any do.
        """
        where = self._adjacent(xy, side)
        tracks = (self.starting.get(where) if drive else None) or self.covering[where]
        by_dir = ([t for t in tracks if self._lane_key(t)[1] == "i"],
                  [t for t in tracks if self._lane_key(t)[1] == "d"])
        n = min(fc_tracks(fc, self.W), len(tracks))
        first = salt % 2
        counts = [0, 0]
        for j in range(n):
            counts[(first + j) % 2] += 1
        picked = []
        if not by_dir[0] or not by_dir[1]:
            counts = [n, 0] if by_dir[0] else [0, n]
        for d in (0, 1):
            lanes = by_dir[d]
            m = min(counts[d], len(lanes))
            if not m:
                continue
            step = len(lanes) // m
            picked += [lanes[(salt // 2 + j * step) % len(lanes)] for j in range(m)]
        return sorted(picked, key=self._lane_key)

    def _opin(self, net, xy, side, owner, salt):
        src = self.rrg.add("SOURCE", net, xy, owner=owner)
        op = self.rrg.add("OPIN", net, xy, owner=owner)
        self.rrg.source_of[net] = src
        self.rrg.connect(src, op)
        for tr in self._pick_tracks(xy, side, self.p.fc_out, salt, drive=True):
            self.track_mux[tr].inputs.append(net)
        return op

    def _ipin(self, net, xy, side, owner, salt, kind):
        tracks = self._pick_tracks(xy, side, self.p.fc_in, salt)
        mux = self._mux(net, [GND] + [self.rrg.nodes[t].net for t in tracks], xy, kind)
        nid = self.rrg.add("IPIN", net, xy, owner=owner)
        return nid, mux

    def build_clbs(self) -> None:
        p = self.p
        for y in range(1, p.grid_h + 1):
            for x in range(1, p.grid_w + 1):
                xy = (x, y)
                pre = f"c{x}_{y}"
                sink = self.rrg.add("SINK", None, xy, capacity=p.i, owner=f"clb{xy}")
                self.rrg.clb_sink[xy] = sink
                ipins = []
                for q in range(p.i):
                    side = _SIDES[q % 4]
                    nid, mux = self._ipin(f"{pre}_in{q}", xy, side, f"clb{xy}.in{q}", 5 * q + 1, "cb")
                    self.rrg.connect(nid, sink)
                    ipins.append(mux)
                bles = []
                for b in range(p.n):
                    outs = [f"{pre}_b{b}_o{j}" for j in range(p.outputs_per_ble)]
                    bles.append(BleSite(xy, b, [f"{pre}_b{b}_i{j}" for j in range(p.k)], [], outs=outs))
                xbar_in = [GND] + [m.name for m in ipins] + [o for ble in bles for o in ble.outs]
                for ble in bles:
                    for j, pin in enumerate(ble.pins):
                        ble.xbar.append(self._mux(pin, xbar_in, xy, "xbar"))
                o_idx = 0
                for ble in bles:
                    for net in ble.outs:
                        side = _SIDES[o_idx % 4]
                        self._opin(net, xy, side, f"clb{xy}.out{o_idx}", 3 * o_idx)
                        o_idx += 1
                self.clbs[xy] = ClbSite(xy, ipins, bles)

    def io_tiles(self):
        return io_tile_list(self.p)

    def build_pads(self) -> None:
        p = self.p
        for xy in self.io_tiles():
            x, y = xy
            # the I/O tile faces the channel on the core side
            side = TOP if y == 0 else BOTTOM if y == p.grid_h + 1 else RIGHT if x == 0 else LEFT
            for s in range(p.io_per_tile):
                idx = len(self.pads)
                pad = Pad(idx, xy, s, f"io{idx}_in", f"io{idx}_out")
                self._opin(pad.in_net, xy, side, f"pad{idx}.in", 2 * s + 1)
                nid, mux = self._ipin(pad.out_net, xy, side, f"pad{idx}.out", 3 * s + 1, "pad")
                sink = self.rrg.add("SINK", None, xy, owner=f"pad{idx}")
                self.rrg.connect(nid, sink)
                self.rrg.pad_sink[idx] = sink
                pad.out_mux = mux
                self.pads.append(pad)

    def build_edges(self) -> None:
        """Materialise RRG edges from mux input lists (input index = select value)."""
        by_net = self.rrg.by_net
        for m in self.muxes.values():
            if m.kind not in ("sb", "cb", "pad"):
                continue
            v = by_net[m.name]
            for value, src in enumerate(m.inputs):
                if src == GND:
                    continue
                self.rrg.connect(by_net[src], v, m.name, value)

    # -- configuration chain and netlist ---------------------------------

    def _alloc(self, role, tile, element, nbits) -> list[int]:
        out = []
        for j in range(nbits):
            idx = len(self.chain)
            self.chain.append(ConfigBit(idx, role, tile, element, j))
            out.append(idx)
        return out

    def allocate_chain(self) -> None:
        p = self.p
        for y in range(0, p.grid_h + 2):
            for x in range(0, p.grid_w + 2):
                xy = (x, y)
                tm = self.tile_muxes.get(xy, {})
                clb = self.clbs.get(xy)
                if clb is not None:
                    for ble in clb.bles:
                        ble.table_bits = self._alloc("lut-bit", xy, f"{ble.name}.lut", 1 << p.k)
                    if p.ble_kind == "FLUT":
                        for ble in clb.bles:
                            ble.mode_bit = self._alloc("mode-bit", xy, f"{ble.name}.mode", 1)[0]
                    for ble in clb.bles:
                        for j in range(len(ble.outs)):
                            ble.out_select += self._alloc("ble-out-select", xy, f"{ble.name}.out{j}", 1)
                for kind in ("xbar", "cb", "pad", "sb"):
                    for m in tm.get(kind, []):
                        m.bits = self._alloc("routing-mux-select", xy, f"{kind}.{m.name}", m.n_bits)

    def _emit_mux_tree(self, m: Mux) -> None:
        keys = [key_name(b) for b in m.bits]
        self._tree(m.name, list(m.inputs), keys)

    def _tree(self, out: str, leaves: list[str], selects: list[str]) -> None:
        """MUX2 tree: select j (LSB first) picks between pairs at level j."""
        if not selects:
            self.cells.append(Cell("BUF", (leaves[0],), out))
            return
        size = 1 << len(selects)
        leaves = leaves + [leaves[-1]] * (size - len(leaves))
        level = leaves
        for j, sel in enumerate(selects):
            last = j == len(selects) - 1
            nxt = []
            for q in range(0, len(level), 2):
                name = out if last else f"{out}.m{j}_{q // 2}"
                self.cells.append(Cell("MUX2", (sel, level[q], level[q + 1]), name))
                nxt.append(name)
            level = nxt

    def emit(self) -> Netlist:
        p = self.p
        self.cells.append(Cell("CONST0", (), GND))
        for y in range(0, p.grid_h + 2):
            for x in range(0, p.grid_w + 2):
                xy = (x, y)
                clb = self.clbs.get(xy)
                if clb is not None:
                    for ble in clb.bles:
                        self._emit_ble(ble)
                for kind in ("xbar", "cb", "pad", "sb"):
                    for m in self.tile_muxes.get(xy, {}).get(kind, []):
                        self._emit_mux_tree(m)
        keys = [key_name(i) for i in range(len(self.chain))]
        inputs = [pad.in_net for pad in self.pads] + keys
        outputs = [pad.out_net for pad in self.pads]
        name = p.name.replace(" ", "_")
        return Netlist(name, inputs, outputs, self.cells, keys)

    def _emit_ble(self, ble: BleSite) -> None:
        p = self.p
        table = [key_name(b) for b in ble.table_bits]
        base = f"c{ble.clb[0]}_{ble.clb[1]}_b{ble.index}"
        if p.ble_kind == "LUT":
            lut = f"{base}_lut0"
            self._tree(lut, table, ble.pins)
            ble.lut_outs = [lut]
        else:
            half = 1 << (p.k - 1)
            lo, hi = f"{base}_lut0", f"{base}_lut1"
            self._tree(f"{lo}.lo", table[:half], ble.pins[:-1])
            self._tree(hi, table[half:], ble.pins[:-1])
            mode_n = f"{base}_moden"
            whole = f"{base}_whole"
            self.cells.append(Cell("NOT", (key_name(ble.mode_bit),), mode_n))
            self.cells.append(Cell("AND", (ble.pins[-1], mode_n), whole))
            self.cells.append(Cell("MUX2", (whole, f"{lo}.lo", hi), lo))
            ble.lut_outs = [lo, hi]
        for j, lut in enumerate(ble.lut_outs):
            ff = f"{base}_ff{j}"
            self.cells.append(Cell("DFF", (lut,), ff))
            self.cells.append(Cell("MUX2", (key_name(ble.out_select[j]), lut, ff), ble.outs[j]))
            ble.ffs.append(ff)


def build_fabric(p: ArchParams, width: int | None = None) -> Fabric:
    """Generate the fabric for ``p`` at channel width ``width`` (default ``p.w``)."""
    W = width if width is not None else p.w
    if W is None:
        raise ArchError("a fixed channel width is required to build a fabric")
    if W < 2 or W % 2:
        raise ArchError("channel width must be an even number >= 2")
    b = _Builder(p, W)
    b.build_tracks()
    b.build_switch_blocks()
    b.build_clbs()
    b.build_pads()
    b.build_edges()
    b.allocate_chain()
    netlist = b.emit()
    return Fabric(p.with_(w=W), W, netlist, b.rrg, b.chain, b.pads, b.clbs, b.muxes)


def write_chain(f: Fabric) -> str:
    return f.chain_text()


_CHAIN_RE = re.compile(r"(\d+) (\S+) tile=\((-?\d+),(-?\d+)\) element=(.+)\[(\d+)\]\Z")


def parse_chain(text: str) -> list[ConfigBit]:
    bits = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        m = _CHAIN_RE.match(line)
        if m is None:
            raise ArchError(f"chain line {lineno}: cannot parse {line!r}")
        idx, role, x, y, element, bit = m.groups()
        if int(idx) != len(bits):
            raise ArchError(f"chain line {lineno}: index {idx} out of order")
        if role not in ROLES:
            raise ArchError(f"chain line {lineno}: unknown role {role!r}")
        bits.append(ConfigBit(int(idx), role, (int(x), int(y)), element, int(bit)))
    return bits


def fabric_paths(prefix) -> tuple[Path, Path, Path]:
    """(bench, chain, arch) file paths sharing ``prefix``."""
    p = Path(prefix)
    if p.suffix in (".bench", ".chain", ".arch"):
        p = p.with_suffix("")
    return tuple(p.with_name(p.name + ext) for ext in (".bench", ".chain", ".arch"))


def save_fabric(f: Fabric, prefix) -> tuple[Path, Path, Path]:
    """Write the fabric netlist, its chain file and its architecture file."""
    bench, chain, arch = fabric_paths(prefix)
    bench.parent.mkdir(parents=True, exist_ok=True)
    bench.write_text(write_bench(f.netlist))
    chain.write_text(f.chain_text())
    arch.write_text(dump_arch(f.params.with_(w=f.width)))
    return bench, chain, arch


def load_fabric(bench, chain, arch=None) -> Fabric:
    """Rebuild a fabric from exported files.

    Only the netlist, chain and parameters are restored; the routing
    graph and site tables stay empty, which is all that programming and
    attacking need.  Without an architecture file the defaults are used
    and the fabric is named after its netlist.
    """
    netlist = read_bench(bench)
    config = parse_chain(Path(chain).read_text())
    params = load_arch(arch) if arch is not None else ArchParams()
    name = params.name if arch is not None else netlist.name
    width = params.w or 0
    return Fabric(params, width, netlist, RoutingResourceGraph(), config, [], {}, {}, name)
