"""The redaction pipeline: map, pack, place, route, generate and program.

Also hosts the utilization-driven fabric size search, which runs the whole
pipeline for each candidate architecture.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..fabric.arch import ArchError, ArchParams
from ..fabric.build import Fabric
from ..netlist import Netlist
from .bitstream import Bitstream, bind, bitgen, program
from .mapping import lut_map
from .packing import Packing, PackingError, pack, pack_bles
from .placement import Placement, PlacementError, io_names, place
from .routing import RoutedNet, RoutingError, route

STAGES = ("mapped", "packed", "placed", "routed", "programmed")


class FlowError(RuntimeError):
    pass


@dataclass
class ImplementationState:
    design: Netlist
    params: ArchParams
    stage: str = "mapped"
    lut_network: Netlist | None = None
    packing: Packing | None = None
    placement: Placement | None = None
    routing: dict[str, RoutedNet] = field(default_factory=dict)
    width: int | None = None
    widths_tried: dict[int, bool] = field(default_factory=dict)
    fabric: Fabric | None = None        # raw fabric at the routed width
    bound: Fabric | None = None         # fabric carrying the design's interface
    bitstream: Bitstream | None = None
    programmed: Netlist | None = None

    def at_least(self, stage: str) -> bool:
        return STAGES.index(self.stage) >= STAGES.index(stage)

    @property
    def wirelength(self) -> int:
        """Routing resources used: track nodes over all nets."""
        if not self.routing or self.fabric is None:
            return 0
        nodes = self.fabric.rrg.nodes
        return sum(1 for rn in self.routing.values() for nd in rn.nodes
                   if nodes[nd].kind in ("CHANX", "CHANY"))


@dataclass(frozen=True)
class FabricStats:
    block_utilization: float
    io_utilization: float
    bitstream_size: int
    channel_width: int

    def as_dict(self) -> dict:
        return {"block_utilization": self.block_utilization, "io_utilization": self.io_utilization,
                "bitstream_size": self.bitstream_size, "channel_width": self.channel_width}


def fabric_stats(f: Fabric, impl: ImplementationState) -> FabricStats:
    if not impl.at_least("routed"):
        raise FlowError("implementation is not routed")
    p = f.params
    used_clbs = len(set(impl.placement.clb_tile))
    used_pads = len(set(impl.placement.io_pad.values()))
    return FabricStats(used_clbs / p.n_clbs, used_pads / p.n_pads, len(f.config_chain), f.width)


def implement(design: Netlist, p: ArchParams, seed: int = 0, width: int | None = None,
              clusters: int | None = None) -> ImplementationState:
    """Run the full pipeline; ``width`` None defers to ``p.w`` (Auto when unset)."""
    st = ImplementationState(design, p)
    st.lut_network = lut_map(design, p.k)
    st.packing = pack(st.lut_network, p, clusters)
    st.stage = "packed"
    st.placement = place(st.lut_network, st.packing, p, seed)
    st.stage = "placed"
    res = route(p, st.lut_network, st.packing, st.placement, width)
    st.routing, st.width, st.fabric, st.widths_tried = res.routes, res.width, res.fabric, res.tried
    st.stage = "routed"
    st.bitstream = bitgen(st.fabric, st.packing, st.placement, st.routing)
    st.bound = bind(st.fabric, st.lut_network, st.packing, st.placement)
    st.programmed = program(st.bound, st.bitstream)
    st.stage = "programmed"
    return st


def report(st: ImplementationState, bitstream_path: str | None = None) -> dict:
    """JSON-ready implementation summary."""
    out = {"design": st.design.name, "fabric": st.params.name, "stage": st.stage,
           "arch": st.params.to_dict()}
    if st.lut_network is not None:
        out["luts"] = sum(1 for c in st.lut_network.cells if c.kind == "LUT")
    if st.packing is not None:
        out["clbs_used"] = len(st.packing.clusters)
    if st.at_least("routed"):
        stats = fabric_stats(st.fabric, st)
        out.update(stats.as_dict())
        out["utilization"] = {"block": stats.block_utilization, "io": stats.io_utilization}
        out["W"] = st.width
        out["wirelength"] = st.wirelength
    if bitstream_path is not None:
        out["bitstream"] = str(bitstream_path)
    return out


# ----------------------------------------------------------------------
# size search
# ----------------------------------------------------------------------

MAX_GRID = 8
MAX_IO_PER_TILE = 16
IO_TARGET = 0.90


class SizeSearchError(RuntimeError):
    pass


@dataclass
class SizeCandidate:
    params: ArchParams
    io_utilization: float


def size_candidates(design: Netlist, p0: ArchParams, relax_io: bool = False,
                    io_target: float = IO_TARGET) -> list[SizeCandidate]:
    """Architectures to try, cheapest first: by CLB count x N, then pads per tile."""
    n_io = len(io_names(design))
    out = []
    for n in range(1, 10):
        for gh in range(1, MAX_GRID + 1):
            for gw in range(1, MAX_GRID + 1):
                tiles = 2 * (gw + gh)
                io = math.ceil(n_io / tiles)
                if io > MAX_IO_PER_TILE:
                    continue
                util = n_io / (io * tiles)
                if util < io_target and not relax_io:
                    continue
                try:
                    p = p0.with_(n=n, grid_w=gw, grid_h=gh, io_per_tile=io)
                except ArchError:
                    continue
                out.append(SizeCandidate(p, util))
    out.sort(key=lambda c: (c.params.grid_w * c.params.grid_h * c.params.n, c.params.io_per_tile,
                            -c.io_utilization, c.params.grid_w * c.params.grid_h, c.params.grid_h,
                            c.params.grid_w))
    return out


def size_search(design: Netlist, p0: ArchParams, seed: int = 0, relax_io: bool = False,
                limit: int | None = None, io_target: float = IO_TARGET):
    """Smallest architecture on which the design implements with every CLB in use
    and at least ``io_target`` (default 90%) of the pads in use.

    ``relax_io`` drops the pad-utilization floor and returns the cheapest
    fully-used fabric (ties broken by higher pad utilization).  Returns
    (params, stats, implementation).
    """
    luts = lut_map(design, p0.k)
    tried = 0
    errors = []
    for cand in size_candidates(design, p0, relax_io, io_target):
        p = cand.params
        n_bles = len(pack_bles(luts, p))
        clbs = p.n_clbs
        # every CLB must hold at least one BLE and together they must hold all BLEs
        if n_bles < clbs or n_bles > clbs * p.n:
            continue
        tried += 1
        if limit is not None and tried > limit:
            break
        try:
            st = implement(design, p, seed, clusters=clbs)
        except (PackingError, PlacementError, RoutingError) as exc:
            errors.append(f"{p.name}: {exc}")
            continue
        stats = fabric_stats(st.fabric, st)
        if stats.block_utilization < 1.0:
            continue
        if not relax_io and stats.io_utilization < io_target:
            continue
        return st.params.with_(w=st.width), stats, st
    raise SizeSearchError("no feasible architecture within the search bounds"
                          + (f" ({len(errors)} candidates failed to implement)" if errors else ""))
