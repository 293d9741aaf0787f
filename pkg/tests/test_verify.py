import random

import pytest

from efpga_redaction.netlist import Cell, Netlist, NetlistError, parse_bench, simulate
from efpga_redaction.verify import (InterfaceError, check_equivalence, exhaustive_equiv, loop_report,
                                    random_equiv, replay, sat_equiv)
from oracles import all_vectors, evaluate, random_netlist

XOR = "INPUT(a)\nINPUT(b)\nOUTPUT(y)\ny = XOR(a, b)"
XOR_NAND = ("INPUT(a)\nINPUT(b)\nOUTPUT(y)\n"
            "n = NAND(a, b)\np = NAND(a, n)\nq = NAND(b, n)\ny = NAND(p, q)")
OR = "INPUT(a)\nINPUT(b)\nOUTPUT(y)\ny = OR(a, b)"


def oracle_equal(a: Netlist, b: Netlist) -> bool:
    for vec in all_vectors(list(a.scan_inputs())):
        ra, rb = evaluate(a, vec), evaluate(b, vec)
        if [ra[o] for o in a.outputs] != [rb[o] for o in b.outputs]:
            return False
        if any(ra[k] != rb[k] for k in ra if k.endswith(".D")):
            return False
    return True


@pytest.mark.parametrize("check", [exhaustive_equiv, sat_equiv, random_equiv])
def test_xor_two_ways(check):
    v = check(parse_bench(XOR), parse_bench(XOR_NAND))
    assert v.equivalent and v.counterexample is None


@pytest.mark.parametrize("check", [exhaustive_equiv, sat_equiv, random_equiv])
def test_xor_versus_or(check):
    a, b = parse_bench(XOR), parse_bench(OR)
    v = check(a, b)
    assert not v.equivalent
    assert v.counterexample == {"a": 1, "b": 1}
    assert v.mismatched == ["y"]
    assert replay(a, b, v.counterexample)


def test_checkers_agree_with_the_oracle_on_random_pairs():
    rng = random.Random(13)
    seen = set()
    for _ in range(100):
        ni = rng.randint(1, 5)
        a = random_netlist(rng, ni, rng.randint(1, 12), n_outputs=2, dffs=rng.randint(0, 1))
        # half the time compare against a lightly mutated copy
        if rng.random() < 0.5:
            cells = list(a.cells)
            j = rng.randrange(len(cells))
            c = cells[j]
            if c.kind not in ("DFF", "BUF", "NOT", "MUX2"):
                cells[j] = Cell("NAND" if c.kind != "NAND" else "AND", c.inputs, c.output)
            b = a.replace(cells=tuple(cells))
        else:
            b = random_netlist(rng, ni, rng.randint(1, 12), n_outputs=len(a.outputs))
            if [c.output for c in b.dffs] != [c.output for c in a.dffs] or len(b.outputs) != len(a.outputs):
                b = a
        want = oracle_equal(a, b)
        seen.add(want)
        for check in (exhaustive_equiv, sat_equiv):
            v = check(a, b)
            assert v.equivalent == want
            if not want:
                assert replay(a, b, v.counterexample)
        assert check_equivalence(a, b).equivalent == want
        if not random_equiv(a, b, 256).equivalent:
            assert not want
    assert seen == {True, False}


def test_registers_compare_next_state():
    a = parse_bench("INPUT(x)\nOUTPUT(y)\nq = DFF(d)\nd = AND(x, q)\ny = BUF(q)")
    b = parse_bench("INPUT(x)\nOUTPUT(y)\nq = DFF(d)\nd = OR(x, q)\ny = BUF(q)")
    v = exhaustive_equiv(a, b)
    assert not v.equivalent and v.mismatched == ["q.D"]


def test_x_output_is_a_mismatch():
    ring = parse_bench("INPUT(a)\nOUTPUT(y)\np = NOT(q)\nq = NOT(p)\ny = AND(a, p)")
    const = parse_bench("INPUT(a)\nOUTPUT(y)\ny = AND(a, a)")
    v = exhaustive_equiv(ring, const)
    assert not v.equivalent and v.counterexample == {"a": 1}
    assert simulate(ring, {"a": 0})["y"] == 0


def test_interface_mismatch_and_keys_rejected():
    with pytest.raises(InterfaceError):
        exhaustive_equiv(parse_bench(XOR), parse_bench("INPUT(a)\nINPUT(c)\nOUTPUT(y)\ny = OR(a, c)"))
    with pytest.raises(InterfaceError):
        exhaustive_equiv(parse_bench(XOR), parse_bench("INPUT(a)\nINPUT(keyk)\nOUTPUT(y)\ny = OR(a, keyk)"))


def test_exhaustive_limit_and_sat_fallback():
    names = [f"i{j}" for j in range(18)]
    text = "\n".join(f"INPUT({x})" for x in names) + "\nOUTPUT(y)\ny = XOR(" + ", ".join(names) + ")"
    a = parse_bench(text)
    with pytest.raises(InterfaceError):
        exhaustive_equiv(a, a)
    assert check_equivalence(a, a).method == "sat"


def test_sat_rejects_loops():
    ring = parse_bench("INPUT(a)\nOUTPUT(p)\np = NOT(q)\nq = NOT(p)")
    with pytest.raises(NetlistError):
        sat_equiv(ring, ring)


def test_loop_report_names_cycle_and_break_edges():
    n = parse_bench("INPUT(a)\nINPUT(keys)\nOUTPUT(x)\n"
                    "x = MUX(keys, a, z)\ny = NOT(x)\nz = BUF(y)")
    [entry] = loop_report(n)
    assert sorted(entry.cells) == ["x", "y", "z"]
    assert len(entry.break_edges) == 1
    assert entry.path[0] == entry.path[-1]
    assert entry.config_muxes == ["x"]
    assert "->" in entry.describe()


def test_loop_report_empty_for_dag():
    assert loop_report(parse_bench(XOR_NAND)) == []
