"""Synthetic controller benchmarks used as redaction targets.

Four small controllers with the I/O profiles of typical accelerator control
blocks.  I/O counts exclude the clock, which is implicit for every DFF.

=========  ======  =======  ====  =================================================
name       inputs  outputs  DFFs  behaviour
=========  ======  =======  ====  =================================================
pedc_like  4       1        1     sets/resets the output register of a PE
muxdc_like 9       6        2     operand-select decode with grant/busy flags
owmc_like  8       12       2     write/read strobe decode plus full/empty flags
omdc_like  16      10       4     small FSM, counter, parity and status outputs
=========  ======  =======  ====  =================================================
"""

from __future__ import annotations

from .netlist import Netlist, parse_bench

PEDC_LIKE = """\
# pedc_like: PE output-register set/reset control
INPUT(set)
INPUT(rst)
INPUT(en)
INPUT(d)
OUTPUT(q)
nrst = NOT(rst)
load = AND(en, d)
any = OR(set, load)
q_next = AND(nrst, any)
q = DFF(q_next)
"""

MUXDC_LIKE = """\
# muxdc_like: operand multiplexer decode/control
INPUT(op0)
INPUT(op1)
INPUT(valid)
INPUT(ready)
INPUT(a0)
INPUT(a1)
INPUT(b0)
INPUT(b1)
INPUT(en)
OUTPUT(y0)
OUTPUT(y1)
OUTPUT(sel_a)
OUTPUT(sel_b)
OUTPUT(grant)
OUTPUT(busy)
y0 = MUX(op0, a0, b0)
y1 = MUX(op0, a1, b1)
nop1 = NOT(op1)
sel_a = AND(valid, nop1, en)
sel_b = AND(valid, op1, en)
vr = AND(valid, ready)
nen = NOT(en)
hold = AND(grant, nen)
grant_next = OR(vr, hold)
grant = DFF(grant_next)
nready = NOT(ready)
pend = OR(valid, busy)
busy_next = AND(nready, pend)
busy = DFF(busy_next)
"""

OWMC_LIKE = """\
# owmc_like: output write-memory strobe decode and fill flags
INPUT(addr0)
INPUT(addr1)
INPUT(addr2)
INPUT(wr)
INPUT(rd)
INPUT(en)
INPUT(clr)
INPUT(mode)
OUTPUT(we0)
OUTPUT(we1)
OUTPUT(we2)
OUTPUT(we3)
OUTPUT(re0)
OUTPUT(re1)
OUTPUT(re2)
OUTPUT(re3)
OUTPUT(full)
OUTPUT(empty)
OUTPUT(ack)
OUTPUT(err)
na0 = NOT(addr0)
na1 = NOT(addr1)
wen = AND(wr, en)
ren = AND(rd, en)
we0 = AND(wen, na0, na1)
we1 = AND(wen, addr0, na1)
we2 = AND(wen, na0, addr1)
we3 = AND(wen, addr0, addr1)
re0 = AND(ren, na0, na1)
re1 = AND(ren, addr0, na1)
re2 = AND(ren, na0, addr1)
re3 = AND(ren, addr0, addr1)
nclr = NOT(clr)
top = AND(wr, addr2)
fill = OR(full, top)
full_next = AND(nclr, fill)
full = DFF(full_next)
nwr = NOT(wr)
keep = AND(empty, nwr)
empty_next = OR(clr, keep)
empty = DFF(empty_next)
acc = OR(wr, rd)
ack = AND(acc, en)
both = AND(wr, rd)
err = XOR(both, mode)
"""

OMDC_LIKE = """\
# omdc_like: operation-mode controller with state, counter and status
INPUT(d0)
INPUT(d1)
INPUT(d2)
INPUT(d3)
INPUT(d4)
INPUT(d5)
INPUT(d6)
INPUT(d7)
INPUT(c0)
INPUT(c1)
INPUT(c2)
INPUT(c3)
INPUT(start)
INPUT(stop)
INPUT(rst)
INPUT(mode)
OUTPUT(st0)
OUTPUT(st1)
OUTPUT(cnt0)
OUTPUT(cnt1)
OUTPUT(par)
OUTPUT(sel)
OUTPUT(any)
OUTPUT(ok)
OUTPUT(mx)
OUTPUT(done)
nrst = NOT(rst)
nstop = NOT(stop)
run = AND(st0, nstop)
go = OR(start, run)
st0_next = AND(nrst, go)
st0 = DFF(st0_next)
adv = XOR(st0, st1)
st1_next = AND(nrst, adv)
st1 = DFF(st1_next)
ncnt0 = NOT(cnt0)
ld = MUX(mode, ncnt0, d0)
cnt0_next = AND(nrst, ld)
cnt0 = DFF(cnt0_next)
carry = XOR(cnt1, cnt0)
cnt1_next = AND(nrst, carry)
cnt1 = DFF(cnt1_next)
par = XOR(d0, d1, d2, d3, d4, d5, d6, d7)
s01 = AND(c0, c1)
s23 = AND(c2, c3)
sel = OR(s01, s23)
any = OR(d0, d1, d2, d3, d4, d5, d6, d7)
ok = AND(st0, nstop, mode)
mx = MUX(c0, d4, d5)
nc3 = NOT(c3)
done = AND(st1, cnt1, nc3)
"""

FIXTURES = {
    "pedc_like": PEDC_LIKE,
    "muxdc_like": MUXDC_LIKE,
    "owmc_like": OWMC_LIKE,
    "omdc_like": OMDC_LIKE,
}


def load_fixture(name: str) -> Netlist:
    try:
        text = FIXTURES[name]
    except KeyError:
        raise KeyError(f"unknown fixture {name!r}; choose from {sorted(FIXTURES)}") from None
    return parse_bench(text, name=name)


def fixture_names() -> list[str]:
    return list(FIXTURES)
