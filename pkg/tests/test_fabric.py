import itertools
import math

import pytest
from hypothesis import given, strategies as st

from efpga_redaction.cad.flow import (FabricStats, SizeSearchError, fabric_stats, implement,
                                      size_search)
from efpga_redaction.fabric.arch import (ArchError, ArchParams, derive_clb_inputs, dump_arch,
                                         evaluate_flut, fc_tracks, load_arch)
from efpga_redaction.fabric.build import (GND, build_fabric, fabric_paths, load_fabric,
                                          parse_chain, save_fabric)
from efpga_redaction.fixtures import load_fixture
from efpga_redaction.netlist import Netlist, find_sccs, parse_bench, simulate
from efpga_redaction.verify import loop_report
from oracles import config_bit_census, evaluate

# 1x1 K4N1 LUT fabric at W=6, counted by config_bit_census: 74 select bits + 16 table bits
BITS_1X1_K4N1_W6 = 90


# -- CLB input formula ----------------------------------------------------------

@pytest.mark.parametrize("n, expected", [(2, 6), (6, 14), (9, 20)])
def test_clb_inputs_examples(n, expected):
    assert derive_clb_inputs(4, n) == expected


def test_clb_inputs_every_k_and_n():
    for k, n in itertools.product(range(2, 7), range(1, 10)):
        assert derive_clb_inputs(k, n) == -(-k * (n + 1) // 2)
        kind = "FLUT" if k >= 3 else "LUT"
        assert ArchParams(k=k, n=n, ble_kind=kind).i == math.ceil(k * (n + 1) / 2)


# -- parameters ---------------------------------------------------------------

@pytest.mark.parametrize("bad", [dict(n=0), dict(n=10), dict(k=1), dict(grid_w=0), dict(fc_in=0.0),
                                 dict(fc_out=1.5), dict(w=5), dict(ble_kind="ALM"), dict(l=0)])
def test_invalid_params(bad):
    with pytest.raises(ArchError):
        ArchParams(**bad)


def test_fc_rounding():
    assert fc_tracks(0.15, 6) == 1       # 0.9 rounds to 1
    assert fc_tracks(0.1, 4) == 1        # 0.4 floors to the minimum of 1
    assert fc_tracks(0.1, 18) == 2       # 1.8 rounds to 2
    assert fc_tracks(0.15, 30) == 5      # 4.5 rounds half up


def test_arch_file_round_trip(tmp_path):
    p = ArchParams(ble_kind="FLUT", n=3, grid_w=2, grid_h=1, io_per_tile=3, w=12)
    f = tmp_path / "a.arch"
    f.write_text(dump_arch(p))
    assert load_arch(f) == p
    f.write_text('{"k": 4, "ble_kind": "lut", "n": 2, "w": "auto"}')
    assert load_arch(f) == ArchParams(n=2)


def test_arch_file_rejects_unknown_field(tmp_path):
    f = tmp_path / "a.arch"
    f.write_text("k = 4\nbogus = 1\n")
    with pytest.raises(ArchError):
        load_arch(f)


# -- FLUT -----------------------------------------------------------------------

def test_flut_constant_one_table():
    for ins in itertools.product((0, 1), repeat=4):
        assert evaluate_flut(0xFFFF, 0, ins, 4) == (1,)


def test_flut_split_mode_halves():
    ins = [(5 >> j) & 1 for j in range(3)]
    assert evaluate_flut(0x00FF, 1, ins, 4) == (1, 0)


def test_flut_whole_mode_is_a_lut():
    for table in (0x1234, 0x8001, 0xBEEF, 0x0F0F):
        for ins in itertools.product((0, 1), repeat=4):
            row = sum(v << j for j, v in enumerate(ins))
            assert evaluate_flut(table, 0, ins, 4) == ((table >> row) & 1,)


@given(k=st.integers(3, 6), data=st.data())
def test_flut_halves_are_the_whole_table(k, data):
    table = data.draw(st.integers(0, (1 << (1 << k)) - 1))
    ins = data.draw(st.lists(st.integers(0, 1), min_size=k - 1, max_size=k - 1))
    lo, hi = evaluate_flut(table, 1, ins, k)
    # the top input picks between the halves in whole mode
    assert evaluate_flut(table, 0, ins + [0], k) == (lo,)
    assert evaluate_flut(table, 0, ins + [1], k) == (hi,)


def _ble_netlist(f, ble):
    """The cells of one BLE's logic as a standalone netlist over its pins and keys."""
    n = f.netlist
    base = f"c{ble.clb[0]}_{ble.clb[1]}_b{ble.index}_"
    cells = [c for c in n.cells if c.output.startswith((base + "lut", base + "moden", base + "whole"))]
    keys = [n.key_inputs[b] for b in ble.table_bits] + ([n.key_inputs[ble.mode_bit]] if ble.mode_bit is not None else [])
    return Netlist("ble", tuple(ble.pins) + tuple(keys), tuple(ble.lut_outs), tuple(cells)), keys


def test_fabric_flut_matches_evaluate_flut():
    f = build_fabric(ArchParams(ble_kind="FLUT"), 4)
    ble = f.clbs[(1, 1)].bles[0]
    sub, keys = _ble_netlist(f, ble)
    for table, mode in ((0x6996, 0), (0x00FF, 1), (0x8421, 1), (0xF0E1, 0)):
        kv = {k: (table >> j) & 1 for j, k in enumerate(keys[:16])}
        kv[keys[16]] = mode
        for ins in itertools.product((0, 1), repeat=4):
            got = evaluate(sub, {**dict(zip(ble.pins, ins)), **kv})
            want = evaluate_flut(table, mode, ins, 4)
            assert got[ble.lut_outs[0]] == want[0]
            if mode:
                assert got[ble.lut_outs[1]] == want[1]


# -- generated fabric -------------------------------------------------------------

def test_bit_count_matches_census():
    f = build_fabric(ArchParams(), 6)
    census = config_bit_census(f.netlist)
    assert census["unread"] == 0
    assert len(f.config_chain) == census["select"] + census["table"] + census["control"]
    assert len(f.config_chain) == BITS_1X1_K4N1_W6


@pytest.mark.parametrize("kind", ["LUT", "FLUT"])
def test_chain_and_keys_agree(kind):
    f = build_fabric(ArchParams(ble_kind=kind, n=2, grid_w=2, grid_h=1), 6)
    assert len(f.config_chain) == len(f.netlist.key_inputs) == f.bitstream_size
    assert [b.index for b in f.config_chain] == list(range(len(f.config_chain)))
    assert f.netlist.key_inputs == tuple(f.key_name(i) for i in range(len(f.config_chain)))


def test_flut_costs_one_mode_bit_per_ble():
    for n in (1, 3):
        f = build_fabric(ArchParams(ble_kind="FLUT", n=n), 6)
        roles = [b.role for b in f.config_chain]
        assert roles.count("mode-bit") == n
        assert roles.count("lut-bit") == n * 16
        assert roles.count("ble-out-select") == 2 * n


def test_scan_order_bijection():
    """Bit i is read only by the element config_chain[i] names."""
    f = build_fabric(ArchParams(ble_kind="FLUT", n=2), 6)
    n = f.netlist
    readers = {}
    for c in n.cells:
        for i in c.inputs:
            readers.setdefault(i, set()).add(c.output)
    owner = {}
    for m in f.muxes.values():
        for j, b in enumerate(m.bits):
            owner[b] = (f"{m.kind}.{m.name}", j, {c for c in readers[n.key_inputs[b]]
                                                   if c == m.name or c.startswith(m.name + ".m")})
    for site in f.clbs.values():
        for ble in site.bles:
            base = f"c{ble.clb[0]}_{ble.clb[1]}_b{ble.index}_"
            for j, b in enumerate(ble.table_bits):
                owner[b] = (f"{ble.name}.lut", j, {c for c in readers[n.key_inputs[b]] if c.startswith(base + "lut")})
            owner[ble.mode_bit] = (f"{ble.name}.mode", 0, {base + "moden"})
            for j, b in enumerate(ble.out_select):
                owner[b] = (None, None, {ble.outs[j]})
    assert sorted(owner) == list(range(len(f.config_chain)))
    for i, bit in enumerate(f.config_chain):
        element, j, cells = owner[i]
        assert readers[n.key_inputs[i]] == cells, bit.describe()
        if element is not None:
            assert (bit.element, bit.bit) == (element, j)


def test_mux_tree_selects_by_value():
    f = build_fabric(ArchParams(), 6)
    m = next(m for m in f.muxes.values() if len(m.inputs) >= 5)
    n = f.netlist
    cells = [c for c in n.cells if c.output == m.name or c.output.startswith(m.name + ".m")]
    keys = [n.key_inputs[b] for b in m.bits]
    data = [x for x in dict.fromkeys(m.inputs)]
    sub = Netlist("mux", tuple(data) + tuple(keys), (m.name,), tuple(cells))
    for v, net in enumerate(m.inputs):
        kv = {k: (v >> j) & 1 for j, k in enumerate(keys)}
        for hot in data:
            vec = {d: int(d == hot) for d in data}
            assert evaluate(sub, {**vec, **kv})[m.name] == int(net == hot)
    assert m.inputs[0] == GND


def test_more_bles_more_bits():
    a = build_fabric(ArchParams(n=1, grid_w=2, grid_h=2), 8)
    b = build_fabric(ArchParams(n=2, grid_w=2, grid_h=2), 8)
    assert len(b.config_chain) > len(a.config_chain)


def test_bit_count_monotone_in_every_parameter():
    base = dict(n=2, grid_w=1, grid_h=1, w=6)
    steps = {"n": [1, 2, 3, 5], "grid_w": [1, 2, 3], "grid_h": [1, 2, 3], "w": [4, 6, 10, 16]}
    for kind in ("LUT", "FLUT"):
        for field, values in steps.items():
            sizes = []
            for v in values:
                p = ArchParams(ble_kind=kind, **{**base, field: v})
                sizes.append(build_fabric(p).bitstream_size)
            assert sizes == sorted(sizes), (kind, field, sizes)


def test_tracks_span_at_most_l_and_stay_inside():
    p = ArchParams(n=1, grid_w=3, grid_h=2, l=2)
    f = build_fabric(p, 8)
    for nd in f.rrg.nodes:
        if nd.kind in ("CHANX", "CHANY"):
            lo, hi = nd.span
            assert 1 <= lo <= hi and hi - lo + 1 <= p.l
            assert hi <= (p.grid_w if nd.kind == "CHANX" else p.grid_h)


@pytest.mark.parametrize("w", [6, 18])
def test_pin_and_switch_connectivity(w):
    p = ArchParams(n=2, grid_w=2, grid_h=2)
    f = build_fabric(p, w)
    r = f.rrg
    track = {"CHANX", "CHANY"}
    for m in f.muxes.values():
        if m.kind in ("cb", "pad"):
            assert len(m.inputs) - 1 == fc_tracks(p.fc_in, w)     # plus the ground input
    for u, nd in enumerate(r.nodes):
        if nd.kind == "OPIN":
            assert len(set(r.edges[u])) == fc_tracks(p.fc_out, w)
        if nd.kind in track:
            assert sum(1 for v in r.edges[u] if r.nodes[v].kind in track) == p.fs


@pytest.mark.parametrize("kind", ["LUT", "FLUT"])
def test_every_loop_passes_a_config_mux(kind):
    f = build_fabric(ArchParams(ble_kind=kind, n=2, grid_w=2, grid_h=1), 6)
    loops = loop_report(f.netlist)
    assert loops
    assert all(entry.config_muxes for entry in loops)
    assert any(len(c) > 1 for c in find_sccs(f.netlist))


def test_generation_is_deterministic():
    p = ArchParams(ble_kind="FLUT", n=3)
    a, b = build_fabric(p, 8), build_fabric(p, 8)
    assert a.netlist == b.netlist and a.chain_text() == b.chain_text()


def test_fabric_files_round_trip(tmp_path):
    f = build_fabric(ArchParams(n=2), 6)
    save_fabric(f, tmp_path / "fab")
    g = load_fabric(*fabric_paths(tmp_path / "fab"))
    assert g.name == f.name and g.width == 6
    assert g.config_chain == f.config_chain
    assert g.netlist.key_inputs == f.netlist.key_inputs
    assert parse_chain(f.chain_text()) == f.config_chain


def test_chain_line_format():
    f = build_fabric(ArchParams(), 4)
    first = f.chain_text().splitlines()[0]
    assert first.startswith("0 ") and " tile=(" in first and " element=" in first


# -- size search and statistics ---------------------------------------------------

def test_and2_needs_the_relaxation_flag():
    design = parse_bench("INPUT(a)\nINPUT(b)\nOUTPUT(y)\ny = AND(a, b)", name="and2")
    with pytest.raises(SizeSearchError):
        size_search(design, ArchParams())
    p, stats, _ = size_search(design, ArchParams(), relax_io=True)
    assert (p.grid_w, p.grid_h, p.n, p.io_per_tile) == (1, 1, 1, 1)
    assert stats.io_utilization == 0.75


def test_pedc_profile_fits_1x1_n1():
    p, stats, _ = size_search(load_fixture("pedc_like"), ArchParams(), relax_io=True)
    assert (p.grid_w, p.grid_h, p.n) == (1, 1, 1)
    assert stats.block_utilization == 1.0


def test_utilization_arithmetic():
    assert round(20 / 21, 3) == 0.952 and 20 / 21 >= 0.9
    assert round(18 / 19, 3) == 0.947


def test_fabric_stats_definitions():
    st = implement(load_fixture("muxdc_like"), ArchParams(n=2, grid_w=2, grid_h=2, io_per_tile=2))
    stats = fabric_stats(st.fabric, st)
    assert isinstance(stats, FabricStats)
    assert stats.bitstream_size == len(st.fabric.config_chain)
    assert stats.channel_width == st.width
    assert stats.block_utilization == len(set(st.placement.clb_tile)) / 4
    assert stats.io_utilization == 15 / 16
    assert 0 <= stats.block_utilization <= 1 and 0 <= stats.io_utilization <= 1
