import random
from collections import Counter

import pytest

from efpga_redaction.cad.bitstream import Bitstream, BitstreamError, bitgen, program
from efpga_redaction.cad.flow import implement
from efpga_redaction.cad.mapping import lut_count, lut_map
from efpga_redaction.cad.packing import PackingError, pack, pack_bles
from efpga_redaction.cad.placement import PlacementError, io_names, place
from efpga_redaction.cad.routing import RoutingError, route
from efpga_redaction.fabric.arch import ArchParams
from efpga_redaction.fixtures import FIXTURES, load_fixture
from efpga_redaction.netlist import Netlist, NetlistError, parse_bench
from efpga_redaction.verify import check_equivalence, exhaustive_equiv
from oracles import all_vectors, evaluate, random_netlist

AND6 = ("\n".join(f"INPUT(a{j})" for j in range(6)) + "\nOUTPUT(y)\n"
        "t0 = AND(a0, a1)\nt1 = AND(t0, a2)\nt2 = AND(t1, a3)\nt3 = AND(t2, a4)\ny = AND(t3, a5)")

PEDC_ARCH = ArchParams(io_per_tile=2)


@pytest.fixture(scope="module")
def pedc_flow():
    return implement(load_fixture("pedc_like"), PEDC_ARCH)


# -- technology mapping ---------------------------------------------------------

def test_and6_maps_to_two_luts():
    luts = lut_map(parse_bench(AND6), 4)
    assert lut_count(luts) == 2


def test_mapping_preserves_function_and_fanin_bound():
    rng = random.Random(2)
    for t in range(40):
        k = rng.choice((2, 3, 4, 5, 6))
        n = random_netlist(rng, rng.randint(2, 7), rng.randint(1, 40), dffs=rng.randint(0, 2))
        m = lut_map(n, k)
        assert all(len(c.inputs) <= k for c in m.cells if c.kind == "LUT")
        for vec in all_vectors(list(n.scan_inputs())):
            assert evaluate(m, vec) == evaluate(n, vec)


def test_mapping_rejects_loops():
    with pytest.raises(NetlistError):
        lut_map(parse_bench("INPUT(a)\nOUTPUT(x)\nx = AND(a, y)\ny = NOT(x)"), 4)


def test_registers_get_a_private_lut():
    m = lut_map(load_fixture("omdc_like"), 4)
    readers = Counter(i for c in m.cells for i in c.inputs)
    for d in m.dffs:
        driver = m.driver(d.inputs[0])
        if driver is not None and driver.kind == "LUT":
            assert readers[d.inputs[0]] == 1 or d.inputs[0] in m.outputs


# -- packing ----------------------------------------------------------------------

@pytest.mark.parametrize("kind", ["LUT", "FLUT"])
@pytest.mark.parametrize("name", sorted(FIXTURES))
def test_packing_respects_capacity(kind, name):
    p = ArchParams(ble_kind=kind, n=3)
    luts = lut_map(load_fixture(name), 4)
    packing = pack(luts, p)
    packing.check()
    placed = Counter(s.lut for cl in packing.clusters for b in cl.bles for s in b.slots)
    assert set(placed) == {c.output for c in luts.cells if c.kind == "LUT"}
    assert max(placed.values()) == 1
    for cl in packing.clusters:
        assert len(cl.bles) <= p.n
        assert len(cl.external_inputs) <= p.i


def test_flut_pairs_small_luts():
    design = parse_bench("INPUT(a)\nINPUT(b)\nINPUT(c)\nOUTPUT(x)\nOUTPUT(y)\n"
                         "x = AND(a, b)\ny = OR(b, c)")
    lut = pack_bles(lut_map(design, 4), ArchParams(ble_kind="LUT"))
    flut = pack_bles(lut_map(design, 4), ArchParams(ble_kind="FLUT"))
    assert len(lut) == 2 and len(flut) == 1 and flut[0].fractured


def test_packing_limits_clusters():
    luts = lut_map(load_fixture("muxdc_like"), 4)
    with pytest.raises(PackingError):
        pack(luts, ArchParams(n=2), clusters=100)


# -- placement --------------------------------------------------------------------

def test_placement_is_deterministic_and_legal():
    p = ArchParams(n=2, grid_w=3, grid_h=3, io_per_tile=3)
    luts = lut_map(load_fixture("omdc_like"), 4)
    packing = pack(luts, p)
    a = place(luts, packing, p, seed=7)
    b = place(luts, packing, p, seed=7)
    assert a == b
    assert len(set(a.clb_tile)) == len(a.clb_tile)
    assert len(set(a.io_pad.values())) == len(a.io_pad)
    assert set(a.io_pad) == set(io_names(luts))


def test_placement_rejects_too_many_ios():
    luts = lut_map(load_fixture("omdc_like"), 4)
    with pytest.raises(PlacementError):
        place(luts, pack(luts, ArchParams(n=9)), ArchParams(n=9))


# -- routing ----------------------------------------------------------------------

def test_routed_width_is_minimal(pedc_flow):
    st = pedc_flow
    assert st.widths_tried[st.width]
    assert st.width == 2 or st.widths_tried.get(st.width - 2) is False
    assert st.width % 2 == 0


def test_routing_is_deterministic(pedc_flow):
    again = implement(load_fixture("pedc_like"), PEDC_ARCH)
    assert again.width == pedc_flow.width
    assert again.bitstream == pedc_flow.bitstream


def test_routes_share_no_resource(pedc_flow):
    nodes = pedc_flow.fabric.rrg.nodes
    use = Counter(nd for rn in pedc_flow.routing.values() for nd in set(rn.nodes))
    assert all(k <= nodes[nd].capacity for nd, k in use.items())
    assert all(k == 1 for nd, k in use.items() if nodes[nd].kind in ("CHANX", "CHANY", "IPIN", "OPIN"))


def test_too_narrow_fixed_width_fails(pedc_flow):
    st = pedc_flow
    with pytest.raises(RoutingError):
        route(PEDC_ARCH, st.lut_network, st.packing, st.placement, width=2)


# -- bitstream and programming --------------------------------------------------------

def test_bitstream_programs_the_design(pedc_flow):
    st = pedc_flow
    assert len(st.bitstream) == len(st.fabric.config_chain)
    assert exhaustive_equiv(st.programmed, st.design).equivalent


def test_every_used_table_bit_matters(pedc_flow):
    st = pedc_flow
    f = st.bound
    ble = next(b for site in f.clbs.values() for b in site.bles
               if any(st.bitstream.bits[i] for i in b.table_bits))
    for i in ble.table_bits:
        bits = list(st.bitstream.bits)
        bits[i] ^= 1
        assert not check_equivalence(program(f, Bitstream(tuple(bits))), st.design).equivalent


def test_all_zero_bitstream_programs():
    st = implement(load_fixture("muxdc_like"), ArchParams(n=6, io_per_tile=4))
    n = program(st.bound, Bitstream((0,) * len(st.bitstream)))
    assert isinstance(n, Netlist)
    assert not check_equivalence(n, st.design).equivalent


def test_bitstream_text_round_trip(tmp_path, pedc_flow):
    b = pedc_flow.bitstream
    b.write(tmp_path / "b.txt")
    assert Bitstream.read(tmp_path / "b.txt") == b
    assert b.text().count("\n") == len(b)
    with pytest.raises(BitstreamError):
        Bitstream.parse("0\n2\n")
    with pytest.raises(BitstreamError):
        Bitstream((0, 1)).as_keys(pedc_flow.bound)


def test_bitgen_matches_flow(pedc_flow):
    st = pedc_flow
    assert bitgen(st.fabric, st.packing, st.placement, st.routing) == st.bitstream


@pytest.mark.parametrize("kind", ["LUT", "FLUT"])
def test_multi_tile_flow(kind):
    st = implement(load_fixture("muxdc_like"), ArchParams(ble_kind=kind, n=2, grid_w=2, grid_h=2,
                                                          io_per_tile=2))
    assert check_equivalence(st.programmed, st.design).equivalent
