import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from efpga_redaction.cad.flow import implement
from efpga_redaction.fabric.arch import ArchParams
from efpga_redaction.fabric.build import build_fabric
from efpga_redaction.fixtures import load_fixture
from efpga_redaction.metrics import (AREA_WEIGHTS, OverheadReport, PpaProxy, area_proxy,
                                     configured_fabric, delay_proxy, overhead_csv, overhead_report,
                                     power_proxy, ppa)
from efpga_redaction.netlist import Cell, Netlist, NetlistError, parse_bench
from oracles import GATES, longest_path, random_netlist

INV = "INPUT(a)\nOUTPUT(y)\ny = NOT(a)"


@pytest.fixture(scope="module")
def pedc():
    return implement(load_fixture("pedc_like"), ArchParams(io_per_tile=2))


def test_area_weight_examples():
    assert area_proxy(parse_bench("INPUT(a)\nINPUT(b)\nOUTPUT(y)\ny = NAND(a, b)")) == 1.0
    lut_ff = Netlist("l", ("a", "b", "c", "d"), ("q",),
                     (Cell("LUT", ("a", "b", "c", "d"), "t", 0x8000), Cell("DFF", ("t",), "q")))
    assert area_proxy(lut_ff) == 12.0
    mux = parse_bench("INPUT(s)\nINPUT(a)\nINPUT(b)\nOUTPUT(y)\ny = MUX(s, a, b)")
    assert area_proxy(mux) == AREA_WEIGHTS["MUX2"] == 2.0


def test_delay_matches_path_enumeration():
    rng = random.Random(17)
    for _ in range(50):
        n = random_netlist(rng, rng.randint(1, 6), rng.randint(1, 30), kinds=GATES, dffs=rng.randint(0, 2))
        assert delay_proxy(n) == longest_path(n)


def test_delay_ignores_a_select_that_chooses_nothing():
    n = parse_bench("INPUT(s)\nINPUT(a)\nOUTPUT(y)\nt = NOT(s)\nu = NOT(t)\ny = MUX(u, a, a)")
    assert longest_path(n) == 3 and delay_proxy(n) == 1


def test_delay_of_a_chain():
    n = parse_bench("INPUT(a)\nOUTPUT(y)\nb = NOT(a)\nc = NOT(b)\ny = NOT(c)")
    assert delay_proxy(n) == 3


def test_inverter_power_is_one_toggle_pair():
    assert power_proxy(parse_bench(INV), vectors=10_000) == pytest.approx(1.0, abs=0.1)


def test_power_is_seeded():
    n = load_fixture("muxdc_like")
    assert power_proxy(n, 500, seed=3) == power_proxy(n, 500, seed=3)
    with pytest.raises(ValueError):
        power_proxy(n, 0)


def test_overhead_of_identical_modules_is_zero():
    n = load_fixture("owmc_like")
    r = overhead_report(n, n, vectors=200)
    assert (r.area_overhead, r.power_overhead, r.delay_overhead) == (0.0, 0.0, 0.0)


def test_overhead_arithmetic():
    a = Netlist("a", ("x",), ("y",), tuple(Cell("BUF", ("x" if j == 0 else f"t{j - 1}",),
                                                "y" if j == 9 else f"t{j}") for j in range(10)))
    # 10 buffers against 13 buffers plus a 0.3-unit pseudo gate
    b = a.replace(cells=a.cells + (Cell("BUF", ("x",), "u0"), Cell("BUF", ("u0",), "u1"),
                                   Cell("BUF", ("u1",), "u2"), Cell("XOR", ("u2", "x"), "u3")))
    w = {**AREA_WEIGHTS, "XOR": 0.3}
    r = overhead_report(a, b, vectors=50, weights=w)
    assert r.area_overhead == pytest.approx(0.33)


@settings(max_examples=25, deadline=None)
@given(scale=st.floats(0.01, 100))
def test_area_overhead_invariant_to_weight_scale(scale):
    a, b = load_fixture("pedc_like"), load_fixture("muxdc_like")
    base = overhead_report(a, b, vectors=20).area_overhead
    scaled = {k: scale * v for k, v in AREA_WEIGHTS.items()}
    assert overhead_report(a, b, vectors=20, weights=scaled).area_overhead == pytest.approx(base)


def test_zero_original_is_rejected():
    empty = parse_bench("INPUT(a)\nOUTPUT(a)")
    with pytest.raises(ValueError):
        overhead_report(empty, parse_bench(INV), vectors=10)


def test_fabric_area_grows_with_grid():
    sizes = []
    for g in (1, 2, 3):
        f = build_fabric(ArchParams(grid_w=g, grid_h=g), 6)
        sizes.append(area_proxy(f.netlist))
    assert sizes[0] < sizes[1] < sizes[2]


def test_configured_fabric_keeps_every_cell(pedc):
    n = configured_fabric(pedc.fabric, pedc.bitstream)
    assert not n.key_inputs
    assert len(n.cells) == len(pedc.fabric.netlist.cells) + pedc.fabric.bitstream_size
    assert area_proxy(n) == area_proxy(pedc.fabric.netlist)


def test_redacted_module_costs_more(pedc):
    r = overhead_report(pedc.design, configured_fabric(pedc.fabric, pedc.bitstream), "f", vectors=300)
    assert r.area_overhead > 1 and r.delay_overhead > 0 and r.power_overhead > 0
    assert r.as_dict()["denominator"] == "full original module"


def test_unprogrammed_loops_are_rejected():
    f = build_fabric(ArchParams(), 4)
    with pytest.raises(NetlistError):
        delay_proxy(f.netlist)


def test_csv_format():
    p = PpaProxy(1.0, 1, 1.0)
    r = OverheadReport("ip", "fab", 1 / 3, 0.5, 2.0, p, p)
    assert overhead_csv([r]) == ("ip,fabric,area_overhead,power_overhead,delay_overhead\n"
                                 "ip,fab,0.333333,0.500000,2.000000\n")
    assert r.csv_row() == "ip,fab,0.333333,0.500000,2.000000\n"
    with pytest.raises(ValueError):
        overhead_csv([OverheadReport("ip", "fab", math.inf, 0, 0, p, p)])


def test_ppa_bundle():
    p = ppa(parse_bench(INV), vectors=100)
    assert p.area_units == 1.0 and p.delay_levels == 1 and p.power_units > 0
