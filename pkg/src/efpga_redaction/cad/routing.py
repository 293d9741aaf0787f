"""PathFinder negotiated-congestion routing and channel-width search."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

from ..fabric.arch import ArchParams
from ..fabric.build import Fabric, build_fabric
from ..netlist import Netlist
from .packing import Packing
from .placement import Placement

PRES_FAC_INIT = 0.5
PRES_FAC_MULT = 1.5
HIST_INCREMENT = 1.0
MAX_ITERATIONS = 50
MAX_WIDTH = 128


class RoutingError(RuntimeError):
    pass


@dataclass
class NetRequest:
    name: str
    source: int
    sinks: list[int]


@dataclass
class RoutedNet:
    name: str
    source: int
    sinks: list[int]
    parent: dict[int, int] = field(default_factory=dict)    # node -> predecessor in the tree

    @property
    def nodes(self) -> list[int]:
        return [self.source] + sorted(self.parent)

    def edges(self) -> list[tuple[int, int]]:
        return sorted((u, v) for v, u in self.parent.items())


def site_outputs(f: Fabric, placement: Placement, packing: Packing) -> dict[str, str]:
    """Design net -> fabric BLE output net that carries it."""
    out = {}
    for ci, cl in enumerate(packing.clusters):
        site = f.clbs[placement.clb_tile[ci]]
        for b, ble in enumerate(cl.bles):
            for j, slot in enumerate(ble.slots):
                out[slot.output] = site.bles[b].outs[j]
    return out


def net_requests(f: Fabric, luts: Netlist, packing: Packing, placement: Placement) -> list[NetRequest]:
    rrg = f.rrg
    outs = site_outputs(f, placement, packing)
    owner = packing.cluster_of()
    reqs = {}

    def source_of(net):
        if net in placement.io_pad and net in luts.inputs:
            return rrg.source_of[f.io_pads[placement.io_pad[net]].in_net]
        return rrg.source_of[outs[net]]

    sinks: dict[str, list[int]] = {}
    for ci, cl in enumerate(packing.clusters):
        for net in cl.external_inputs:
            sinks.setdefault(net, []).append(rrg.clb_sink[placement.clb_tile[ci]])
    for o in luts.outputs:
        io = f"{o}@out" if o in luts.inputs else o
        sinks.setdefault(o, []).append(rrg.pad_sink[placement.io_pad[io]])
    for net in sorted(sinks):
        if net not in owner and net not in luts.inputs:
            raise RoutingError(f"net {net!r} has no driver in the packed design")
        reqs[net] = NetRequest(net, source_of(net), sorted(set(sinks[net])))
    return [reqs[k] for k in sorted(reqs)]


def pathfinder(f: Fabric, requests: list[NetRequest], max_iterations: int = MAX_ITERATIONS):
    """Negotiated congestion routing; returns {net: RoutedNet} or None on failure."""
    rrg = f.rrg
    nnodes = len(rrg.nodes)
    cap = [nd.capacity for nd in rrg.nodes]
    hist = [0.0] * nnodes
    occ = [0] * nnodes
    edges = rrg.edges
    routes: dict[str, RoutedNet] = {}
    pres_fac = PRES_FAC_INIT
    for _ in range(max_iterations):
        for req in requests:
            old = routes.get(req.name)
            if old is not None:
                for nd in old.nodes:
                    occ[nd] -= 1
            rn = _route_net(req, edges, cap, occ, hist, pres_fac)
            if rn is None:
                return None
            for nd in rn.nodes:
                occ[nd] += 1
            routes[req.name] = rn
        over = [nd for nd in range(nnodes) if occ[nd] > cap[nd]]
        if not over:
            return routes
        for nd in over:
            hist[nd] += HIST_INCREMENT
        pres_fac *= PRES_FAC_MULT
    return None


def _route_net(req, edges, cap, occ, hist, pres_fac):
    rn = RoutedNet(req.name, req.source, list(req.sinks))
    tree = {req.source}
    for sink in req.sinks:
        dist = {nd: 0.0 for nd in tree}
        prev = {}
        heap = [(0.0, nd) for nd in sorted(tree)]
        heapq.heapify(heap)
        found = False
        while heap:
            d, u = heapq.heappop(heap)
            if d > dist.get(u, float("inf")):
                continue
            if u == sink:
                found = True
                break
            for v in edges[u]:
                if v in tree:
                    continue
                over = max(0, occ[v] + 1 - cap[v])
                c = (1.0 + hist[v]) * (1.0 + pres_fac * over)
                nd_ = d + c
                if nd_ < dist.get(v, float("inf")):
                    dist[v] = nd_
                    prev[v] = u
                    heapq.heappush(heap, (nd_, v))
        if not found:
            return None
        v = sink
        while v not in tree:
            u = prev[v]
            rn.parent[v] = u
            tree.add(v)
            v = u
    return rn


@dataclass
class RouteResult:
    width: int
    fabric: Fabric
    routes: dict[str, RoutedNet]
    tried: dict[int, bool]


def route_at(p: ArchParams, width: int, luts: Netlist, packing: Packing, placement: Placement,
             fabric: Fabric | None = None):
    f = fabric if fabric is not None else build_fabric(p, width)
    routes = pathfinder(f, net_requests(f, luts, packing, placement))
    return f, routes


def route(p: ArchParams, luts: Netlist, packing: Packing, placement: Placement,
          width: int | None = None) -> RouteResult:
    """Route at a fixed width, or search the minimal even width when ``width`` is None.

    The search doubles W from 2 until routing succeeds and bisects on even
    widths.  Routability is not strictly monotone in W, so it then steps
    down while W - 2 still routes: the result routes and W - 2 fails.
    """
    if width is None:
        width = p.w
    tried: dict[int, bool] = {}
    cache = {}

    def attempt(w):
        f, routes = route_at(p, w, luts, packing, placement)
        tried[w] = routes is not None
        cache[w] = (f, routes)
        return routes is not None

    if width is not None:
        if not attempt(width):
            raise RoutingError(f"design does not route at W={width}")
        f, routes = cache[width]
        return RouteResult(width, f, routes, tried)

    lo, hi = 0, 2          # lo: largest known failing width (0 = none)
    while not attempt(hi):
        lo = hi
        if hi >= MAX_WIDTH:
            raise RoutingError(f"design does not route at W <= {MAX_WIDTH}")
        hi = min(hi * 2, MAX_WIDTH)
    while hi - lo > 2:
        mid = lo + ((hi - lo) // 4) * 2
        if attempt(mid):
            hi = mid
        else:
            lo = mid
    while hi > 2 and (tried[hi - 2] if hi - 2 in tried else attempt(hi - 2)):
        hi -= 2
    f, routes = cache[hi]
    return RouteResult(hi, f, routes, tried)
