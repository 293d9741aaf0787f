"""Command-line interface.

Every subcommand accepts ``--seed``, ``--out-dir`` and ``--json``.  Stages
that need an implementation (``route``, ``bitgen``) rerun the seeded flow
from the benchmark, so they are reproducible without intermediate state.
Benchmarks are built-in fixture names or .bench paths.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .cad.bitstream import Bitstream, program
from .cad.flow import FlowError, implement, report, size_search
from .cad.mapping import lut_count, lut_map
from .fabric.arch import ArchParams, dump_arch, load_arch
from .fabric.build import build_fabric, fabric_paths, load_fabric, save_fabric
from .fixtures import FIXTURES, load_fixture
from .metrics import configured_fabric, overhead_csv, overhead_report, ppa
from .netlist import Netlist, NetlistError, read_bench, write_bench
from .sat.attack import STRATEGIES, AttackConfig, attack
from .verify import exhaustive_equiv, random_equiv, sat_equiv, check_equivalence


class CliError(Exception):
    pass


def _design(source: str) -> Netlist:
    if source in FIXTURES:
        return load_fixture(source)
    if not Path(source).exists():
        raise CliError(f"{source}: no such file or fixture (fixtures: {', '.join(FIXTURES)})")
    return read_bench(source)


def _arch(args) -> ArchParams:
    p = load_arch(args.arch) if args.arch else ArchParams()
    changes = {f: getattr(args, f) for f in ("k", "ble_kind", "n", "grid_w", "grid_h", "io_per_tile",
                                            "fc_in", "fc_out", "fs", "l")
               if getattr(args, f) is not None}
    if args.width is not None:
        changes["w"] = args.width
    return p.with_(**changes)


def _fabric_files(paths: list[str]):
    """Resolve ``--fabric`` arguments: a prefix, or bench/chain(/arch) files."""
    if len(paths) == 1:
        bench, chain, arch = fabric_paths(paths[0])
    else:
        by_ext = {Path(p).suffix: p for p in paths}
        if ".bench" not in by_ext or ".chain" not in by_ext:
            raise CliError("--fabric needs a .bench and a .chain file (or a common prefix)")
        bench, chain = by_ext[".bench"], by_ext[".chain"]
        arch = by_ext.get(".arch", Path(bench).with_suffix(".arch"))
    for p in (bench, chain):
        if not Path(p).exists():
            raise CliError(f"{p}: not found")
    return load_fabric(bench, chain, arch if Path(arch).exists() else None)


def _emit(args, data: dict, text: str | None = None) -> None:
    if args.json or text is None:
        print(json.dumps(data, indent=2, sort_keys=True))
    else:
        print(text)


def _out(args) -> Path:
    d = Path(args.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


# ----------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------

def cmd_fabric_gen(args) -> int:
    p = _arch(args)
    if p.w is None:
        raise CliError("fabric-gen needs a channel width (--width or w in the arch file)")
    f = build_fabric(p)
    bench, chain, arch = save_fabric(f, _out(args) / "fabric")
    data = {"fabric": f.name, "channel_width": f.width, "bitstream_size": f.bitstream_size,
            "cells": len(f.netlist.cells), "bench": str(bench), "chain": str(chain), "arch": str(arch)}
    _emit(args, data, f"{f.name} W={f.width}: {f.bitstream_size} configuration bits -> {bench}")
    return 0


def cmd_size_search(args) -> int:
    design = _design(args.benchmark)
    p0 = ArchParams(k=args.k or 4, ble_kind=args.ble_kind or "LUT")
    kw = {} if args.io_target is None else {"io_target": args.io_target}
    p, stats, _ = size_search(design, p0, args.seed, relax_io=args.relax_io, **kw)
    path = _out(args) / f"{design.name}.arch"
    path.write_text(dump_arch(p))
    data = {"design": design.name, "fabric": p.name, "arch": p.to_dict(), **stats.as_dict(), "arch_file": str(path)}
    _emit(args, data, f"{design.name}: {p.name} W={stats.channel_width}, block {stats.block_utilization:.0%}, "
                      f"I/O {stats.io_utilization:.0%}, {stats.bitstream_size} bits -> {path}")
    return 0


def cmd_map(args) -> int:
    design = _design(args.benchmark)
    luts = lut_map(design, args.k or 4)
    path = _out(args) / f"{design.name}.luts.bench"
    path.write_text(write_bench(luts))
    data = {"design": design.name, "k": args.k or 4, "luts": lut_count(luts), "netlist": str(path)}
    _emit(args, data, f"{design.name}: {data['luts']} LUTs -> {path}")
    return 0


def _implement(args):
    design = _design(args.benchmark)
    st = implement(design, _arch(args), args.seed)
    prefix = _out(args) / f"{design.name}.redacted"
    files = save_fabric(st.bound, prefix)
    return st, {"fabric_bench": str(files[0]), "fabric_chain": str(files[1]), "fabric_arch": str(files[2])}


def cmd_route(args) -> int:
    st, files = _implement(args)
    data = {**report(st), **files}
    _emit(args, data, f"{st.design.name} on {st.params.name}: routed at W={st.width}, "
                      f"wirelength {st.wirelength} -> {files['fabric_bench']}")
    return 0


def cmd_bitgen(args) -> int:
    st, files = _implement(args)
    path = _out(args) / f"{st.design.name}.bits"
    st.bitstream.write(path)
    data = {**report(st, path), **files}
    _emit(args, data, f"{st.design.name} on {st.params.name}: {len(st.bitstream)} bits -> {path}")
    return 0


def cmd_program(args) -> int:
    f = _fabric_files(args.fabric)
    b = Bitstream.read(args.bitstream)
    n = program(f, b)
    path = _out(args) / f"{n.name}.programmed.bench"
    path.write_text(write_bench(n))
    data = {"fabric": f.name, "cells": len(n.cells), "netlist": str(path)}
    _emit(args, data, f"programmed {f.name}: {len(n.cells)} cells -> {path}")
    return 0


def cmd_verify(args) -> int:
    a, b = _design(args.a), _design(args.b)
    if args.method == "exhaustive":
        v = exhaustive_equiv(a, b)
    elif args.method == "random":
        v = random_equiv(a, b, args.vectors, args.seed)
    elif args.method == "sat":
        v = sat_equiv(a, b, args.seed)
    else:
        v = check_equivalence(a, b, seed=args.seed)
    print(json.dumps(v.as_dict(), indent=2, sort_keys=True))
    return 0 if v.equivalent else 1


def cmd_attack(args) -> int:
    f = _fabric_files(args.fabric)
    oracle = _design(args.oracle)
    cfg = AttackConfig(timeout_s=args.timeout, strategy=args.strategy, seed=args.seed,
                       max_unroll=args.max_unroll, engine=args.engine)
    r = attack(f, oracle, cfg)
    data = r.as_dict()
    if args.report:
        Path(args.report).parent.mkdir(parents=True, exist_ok=True)
        Path(args.report).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    if r.recovered_key is not None:
        key_path = Path(args.key_out) if args.key_out else _out(args) / "recovered_key.bits"
        r.recovered_key.write(key_path)
        data["key_file"] = str(key_path)
    status = "yes" if r.key_reported else "no"
    _emit(args, data, f"{r.fabric}: unroll {r.unroll}, {r.clauses} clauses, {r.time_s:.2f} s, "
                      f"{r.iterations} DIPs, key reported: {status}")
    return 0 if r.key_reported else 1


def cmd_metrics(args) -> int:
    original = _design(args.original)
    if args.fabric:
        if not args.bitstream:
            raise CliError("--fabric needs --bitstream")
        f = _fabric_files(args.fabric)
        redacted, label = configured_fabric(f, Bitstream.read(args.bitstream)), f.name
    elif args.redacted:
        redacted = _design(args.redacted)
        label = redacted.name
    else:
        m = ppa(original, args.vectors, args.seed)
        _emit(args, {"design": original.name, **m.as_dict()},
              f"{original.name}: area {m.area_units}, delay {m.delay_levels}, power {m.power_units:.3f}")
        return 0
    rep = overhead_report(original, redacted, label, args.vectors, args.seed)
    csv_text = overhead_csv([rep])
    if args.csv:
        Path(args.csv).write_text(csv_text)
    _emit(args, rep.as_dict(), csv_text.rstrip())
    return 0


def cmd_run(args) -> int:
    from .experiment import run_experiment
    bundle = run_experiment(args.manifest, args.out_dir, args.jobs)
    failed = [r["entry"]["name"] for r in bundle["experiments"]
              if any(s["status"] == "failed" for s in r["stages"].values())]
    _emit(args, {"out_dir": str(args.out_dir), "experiments": len(bundle["experiments"]), "failed": failed},
          f"{len(bundle['experiments'])} experiments -> {args.out_dir}"
          + (f" ({len(failed)} with failed stages: {', '.join(failed)})" if failed else ""))
    return 0


# ----------------------------------------------------------------------
# parser
# ----------------------------------------------------------------------

def _arch_options(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("architecture")
    g.add_argument("--arch", help="architecture file (JSON or key = value lines)")
    g.add_argument("--k", type=int)
    g.add_argument("--ble-kind", choices=("LUT", "FLUT"), type=str.upper)
    g.add_argument("--n", type=int)
    g.add_argument("--grid-w", type=int)
    g.add_argument("--grid-h", type=int)
    g.add_argument("--io-per-tile", type=int)
    g.add_argument("--fc-in", type=float)
    g.add_argument("--fc-out", type=float)
    g.add_argument("--fs", type=int)
    g.add_argument("--l", type=int)
    g.add_argument("--width", type=int, help="channel width (default: searched)")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out-dir", default=".", help="directory for output files")
    common.add_argument("--json", action="store_true", help="print a JSON summary")

    parser = argparse.ArgumentParser(prog="efpga-redact", description="eFPGA redaction toolchain")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fabric-gen", parents=[common], help="generate a key-programmable fabric")
    _arch_options(p)
    p.set_defaults(func=cmd_fabric_gen)

    p = sub.add_parser("size-search", parents=[common], help="smallest fully used fabric for a design")
    p.add_argument("benchmark")
    p.add_argument("--k", type=int)
    p.add_argument("--ble-kind", choices=("LUT", "FLUT"), type=str.upper)
    p.add_argument("--relax-io", action="store_true", help="drop the pad-utilization floor")
    p.add_argument("--io-target", type=float, help="minimum pad utilization (default 0.9)")
    p.set_defaults(func=cmd_size_search)

    p = sub.add_parser("map", parents=[common], help="technology-map a design to K-input LUTs")
    p.add_argument("benchmark")
    p.add_argument("--k", type=int)
    p.set_defaults(func=cmd_map)

    for name, func, text in (("route", cmd_route, "map, pack, place and route a design"),
                             ("bitgen", cmd_bitgen, "implement a design and write its bitstream")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("benchmark")
        _arch_options(p)
        p.set_defaults(func=func)

    p = sub.add_parser("program", parents=[common], help="program a fabric with a bitstream")
    p.add_argument("--fabric", nargs="+", required=True, help="fabric prefix or .bench/.chain files")
    p.add_argument("--bitstream", required=True)
    p.set_defaults(func=cmd_program)

    p = sub.add_parser("verify", parents=[common], help="check two netlists for equivalence")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--method", choices=("auto", "exhaustive", "random", "sat"), default="auto")
    p.add_argument("--vectors", type=int, default=1000)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("attack", parents=[common], help="oracle-guided bitstream recovery")
    p.add_argument("--fabric", nargs="+", required=True, help="fabric prefix or .bench/.chain files")
    p.add_argument("--oracle", required=True)
    p.add_argument("--timeout", type=float, default=600.0)
    p.add_argument("--strategy", choices=STRATEGIES, default=STRATEGIES[0])
    p.add_argument("--max-unroll", type=int, default=256)
    p.add_argument("--engine", default="auto", help="auto, embedded or a python-sat solver name")
    p.add_argument("--report", help="write the attack report JSON here")
    p.add_argument("--key-out", help="write the recovered key here")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("metrics", parents=[common], help="proxy PPA and overheads")
    p.add_argument("original")
    p.add_argument("--redacted", help="redacted netlist")
    p.add_argument("--fabric", nargs="+", help="fabric prefix or files, with --bitstream")
    p.add_argument("--bitstream")
    p.add_argument("--vectors", type=int, default=1000)
    p.add_argument("--csv", help="write the overhead CSV row here")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("run", parents=[common], help="run an experiment manifest")
    p.add_argument("manifest")
    p.add_argument("--jobs", type=int)
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, NetlistError, FlowError, OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
