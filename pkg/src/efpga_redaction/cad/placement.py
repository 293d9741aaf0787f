"""Placement of CLBs onto grid tiles and design I/Os onto pads.

Cost is total half-perimeter wirelength over the design nets.  Up to four
CLBs are placed by trying every permutation of tiles; larger designs use
simulated annealing with swap moves.
"""

from __future__ import annotations

import itertools
import math
import random
import statistics
from dataclasses import dataclass

from ..fabric.arch import ArchParams
from ..fabric.build import io_tile_list
from ..netlist import Netlist
from .packing import Packing


class PlacementError(ValueError):
    pass


@dataclass
class Placement:
    clb_tile: list[tuple[int, int]]     # cluster index -> tile
    io_pad: dict[str, int]              # design input/output net -> pad index
    cost: float

    def tile_of_pad(self, p: ArchParams, pad: int) -> tuple[int, int]:
        return io_tile_list(p)[pad // p.io_per_tile]


@dataclass
class _Net:
    name: str
    clbs: tuple[int, ...]
    ios: tuple[str, ...]


def design_nets(luts: Netlist, packing: Packing) -> list[_Net]:
    """Nets that connect at least two placeable blocks (CLBs or I/Os)."""
    owner = packing.cluster_of()
    users: dict[str, set[int]] = {}
    for ci, cl in enumerate(packing.clusters):
        for net in cl.external_inputs:
            users.setdefault(net, set()).add(ci)
    ios_of: dict[str, set[str]] = {}
    for net in luts.inputs:
        ios_of.setdefault(net, set()).add(net)
    for net in luts.outputs:
        ios_of.setdefault(net, set()).add(f"{net}@out" if net in luts.inputs else net)
    nets = []
    for name in sorted(set(users) | set(ios_of) | set(owner)):
        clbs = set(users.get(name, ()))
        if name in owner:
            clbs.add(owner[name])
        ios = ios_of.get(name, set())
        if len(clbs) + len(ios) >= 2:
            nets.append(_Net(name, tuple(sorted(clbs)), tuple(sorted(ios))))
    return nets


def io_names(luts: Netlist) -> list[str]:
    """Placeable I/O blocks in interface order; outputs that are inputs get an @out twin."""
    names = list(luts.inputs)
    names += [f"{o}@out" if o in luts.inputs else o for o in luts.outputs]
    return names


def _hpwl(points) -> float:
    xs = [pt[0] for pt in points]
    ys = [pt[1] for pt in points]
    return (max(xs) - min(xs)) + (max(ys) - min(ys))


class _Cost:
    def __init__(self, nets: list[_Net], pad_tile):
        self.nets = nets
        self.pad_tile = pad_tile
        self.by_clb: dict[int, list[int]] = {}
        self.by_io: dict[str, list[int]] = {}
        for k, n in enumerate(nets):
            for c in n.clbs:
                self.by_clb.setdefault(c, []).append(k)
            for io in n.ios:
                self.by_io.setdefault(io, []).append(k)

    def net_cost(self, k, clb_tile, io_pad) -> float:
        n = self.nets[k]
        pts = [clb_tile[c] for c in n.clbs] + [self.pad_tile[io_pad[io]] for io in n.ios]
        return _hpwl(pts)

    def total(self, clb_tile, io_pad) -> float:
        return sum(self.net_cost(k, clb_tile, io_pad) for k in range(len(self.nets)))


def place(luts: Netlist, packing: Packing, p: ArchParams, seed: int = 0) -> Placement:
    n_clb = len(packing.clusters)
    tiles = [(x, y) for y in range(1, p.grid_h + 1) for x in range(1, p.grid_w + 1)]
    ios = io_names(luts)
    if n_clb > len(tiles):
        raise PlacementError(f"{n_clb} CLBs do not fit a {p.grid_w}x{p.grid_h} grid")
    if len(ios) > p.n_pads:
        raise PlacementError(f"{len(ios)} I/Os do not fit {p.n_pads} pads")
    io_tiles = io_tile_list(p)
    pad_tile = [io_tiles[q // p.io_per_tile] for q in range(p.n_pads)]
    nets = design_nets(luts, packing)
    cost = _Cost(nets, pad_tile)
    if n_clb <= 4:
        return _place_exhaustive(n_clb, tiles, ios, nets, cost, pad_tile)
    return _place_anneal(n_clb, tiles, ios, cost, pad_tile, seed)


def _greedy_pads(ios, nets, clb_tile, pad_tile) -> dict[str, int]:
    """Give each I/O, in interface order, the free pad nearest to its CLBs."""
    io_nets: dict[str, list[_Net]] = {}
    for n in nets:
        for io in n.ios:
            io_nets.setdefault(io, []).append(n)
    free = list(range(len(pad_tile)))
    assign = {}
    for io in ios:
        targets = [clb_tile[c] for n in io_nets.get(io, []) for c in n.clbs]
        best = None
        for q in free:
            t = pad_tile[q]
            d = sum(abs(t[0] - a[0]) + abs(t[1] - a[1]) for a in targets)
            if best is None or d < best[0]:
                best = (d, q)
        assign[io] = best[1]
        free.remove(best[1])
    return assign


def _place_exhaustive(n_clb, tiles, ios, nets, cost, pad_tile) -> Placement:
    best = None
    for perm in itertools.permutations(tiles, n_clb):
        clb_tile = list(perm)
        io_pad = _greedy_pads(ios, nets, clb_tile, pad_tile)
        c = cost.total(clb_tile, io_pad)
        key = (c, perm)
        if best is None or key < best[0]:
            best = (key, clb_tile, io_pad)
    (c, _), clb_tile, io_pad = best
    return Placement(clb_tile, io_pad, c)


def _place_anneal(n_clb, tiles, ios, cost, pad_tile, seed) -> Placement:
    rng = random.Random(seed)
    # slots: CLB sites then pads; blocks: CLBs then I/Os
    clb_slots = list(tiles)
    rng.shuffle(clb_slots)
    pads = list(range(len(pad_tile)))
    rng.shuffle(pads)
    clb_tile = clb_slots[:n_clb]
    io_pad = {io: pads[k] for k, io in enumerate(ios)}
    tile_owner = {t: c for c, t in enumerate(clb_tile)}
    pad_owner = {q: io for io, q in io_pad.items()}

    def touched(kind, a, b):
        ks = set()
        if kind == "clb":
            for c in (a, b):
                if c is not None:
                    ks.update(cost.by_clb.get(c, ()))
        else:
            for io in (a, b):
                if io is not None:
                    ks.update(cost.by_io.get(io, ()))
        return ks

    def propose():
        if ios and (n_clb == 0 or rng.random() < len(ios) / (len(ios) + n_clb)):
            io = ios[rng.randrange(len(ios))]
            q = rng.randrange(len(pad_tile))
            return "io", io, q
        c = rng.randrange(n_clb)
        t = tiles[rng.randrange(len(tiles))]
        return "clb", c, t

    def apply(move):
        kind, blk, dest = move
        if kind == "clb":
            other = tile_owner.get(dest)
            src = clb_tile[blk]
            clb_tile[blk] = dest
            tile_owner[dest] = blk
            if other is not None:
                clb_tile[other] = src
                tile_owner[src] = other
            else:
                del tile_owner[src]
            return ("clb", blk, src, other)
        other = pad_owner.get(dest)
        src = io_pad[blk]
        io_pad[blk] = dest
        pad_owner[dest] = blk
        if other is not None:
            io_pad[other] = src
            pad_owner[src] = other
        else:
            del pad_owner[src]
        return ("io", blk, src, other)

    def delta(move):
        kind, blk, dest = move
        other = tile_owner.get(dest) if kind == "clb" else pad_owner.get(dest)
        ks = touched(kind, blk, other)
        before = sum(cost.net_cost(k, clb_tile, io_pad) for k in ks)
        undo = apply(move)
        after = sum(cost.net_cost(k, clb_tile, io_pad) for k in ks)
        return after - before, undo

    def revert(undo):
        kind, blk, src, other = undo
        apply((kind, blk, src))

    current = cost.total(clb_tile, io_pad)
    samples = []
    for _ in range(max(20, n_clb + len(ios))):
        d, undo = delta(propose())
        samples.append(current + d)
        current += d
    temp = statistics.pstdev(samples) or 1.0
    moves = max(1, int(100 * n_clb ** 1.33))
    best = (current, list(clb_tile), dict(io_pad))
    while temp > 0.005 * max(1.0, current) / max(1, len(cost.nets)):
        accepted = 0
        for _ in range(moves):
            d, undo = delta(propose())
            if d <= 0 or rng.random() < math.exp(-d / temp):
                current += d
                accepted += 1
                if current < best[0]:
                    best = (current, list(clb_tile), dict(io_pad))
            else:
                revert(undo)
        temp *= 0.9
        if accepted == 0 and temp < 1e-3:
            break
    c, clb_tile, io_pad = best
    return Placement(clb_tile, io_pad, cost.total(clb_tile, io_pad))
