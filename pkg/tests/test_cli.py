import json
import shutil
import subprocess

import pytest

from efpga_redaction.cli import main
from efpga_redaction.netlist import read_bench, write_bench
from efpga_redaction.fixtures import load_fixture

PEDC_ARCH = ["--io-per-tile", "2"]


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    return code, capsys.readouterr()


def test_fabric_gen_writes_three_files(tmp_path, capsys):
    code, out = run(capsys, "fabric-gen", "--width", 6, "--out-dir", tmp_path, "--json")
    assert code == 0
    data = json.loads(out.out)
    assert data["bitstream_size"] == 90
    for k in ("bench", "chain", "arch"):
        assert (tmp_path / data[k].split("/")[-1]).exists()


def test_fabric_gen_needs_width(tmp_path, capsys):
    code, out = run(capsys, "fabric-gen", "--out-dir", tmp_path)
    assert code == 2 and "channel width" in out.err


def test_map_and_size_search(tmp_path, capsys):
    code, out = run(capsys, "map", "pedc_like", "--out-dir", tmp_path, "--json")
    assert code == 0 and json.loads(out.out)["luts"] == 1
    code, out = run(capsys, "size-search", "pedc_like", "--relax-io", "--out-dir", tmp_path, "--json")
    assert code == 0 and json.loads(out.out)["fabric"] == "1x1 K4N1"
    assert (tmp_path / "pedc_like.arch").exists()


def test_size_search_failure_exits_2(tmp_path, capsys):
    code, out = run(capsys, "size-search", "pedc_like", "--out-dir", tmp_path)
    assert code == 2 and out.err.startswith("error:")


def test_bitgen_program_verify_attack(tmp_path, capsys):
    code, _ = run(capsys, "bitgen", "pedc_like", *PEDC_ARCH, "--out-dir", tmp_path)
    assert code == 0
    fabric = tmp_path / "pedc_like.redacted"
    bits = tmp_path / "pedc_like.bits"
    code, out = run(capsys, "program", "--fabric", fabric, "--bitstream", bits, "--out-dir", tmp_path, "--json")
    assert code == 0
    programmed = json.loads(out.out)["netlist"]
    code, out = run(capsys, "verify", programmed, "pedc_like")
    assert code == 0 and json.loads(out.out)["equivalent"]
    code, out = run(capsys, "attack", "--fabric", f"{fabric}.bench", f"{fabric}.chain", f"{fabric}.arch",
                    "--oracle", "pedc_like", "--report", tmp_path / "rep.json", "--out-dir", tmp_path)
    assert code == 0 and "key reported: yes" in out.out
    rep = json.loads((tmp_path / "rep.json").read_text())
    assert rep["key_reported"] and rep["fabric"] == "1x1 K4N1"
    code, out = run(capsys, "program", "--fabric", fabric, "--bitstream", tmp_path / "recovered_key.bits",
                    "--out-dir", tmp_path / "k", "--json")
    code, out = run(capsys, "verify", json.loads(out.out)["netlist"], "pedc_like")
    assert code == 0
    code, out = run(capsys, "metrics", "pedc_like", "--fabric", fabric, "--bitstream", bits,
                    "--vectors", 100, "--csv", tmp_path / "o.csv")
    assert code == 0
    assert (tmp_path / "o.csv").read_text().startswith("ip,fabric,area_overhead")


def test_verify_reports_difference(tmp_path, capsys):
    a = load_fixture("pedc_like")
    b = a.replace(cells=tuple(c if c.output != "load" else c.__class__("OR", c.inputs, c.output)
                              for c in a.cells))
    (tmp_path / "b.bench").write_text(write_bench(b))
    code, out = run(capsys, "verify", "pedc_like", tmp_path / "b.bench")
    v = json.loads(out.out)
    assert code == 1 and not v["equivalent"] and v["counterexample"]


def test_attack_timeout_exits_1(tmp_path, capsys):
    run(capsys, "route", "pedc_like", *PEDC_ARCH, "--out-dir", tmp_path)
    code, out = run(capsys, "attack", "--fabric", tmp_path / "pedc_like.redacted", "--oracle", "pedc_like",
                    "--timeout", 0.001, "--json", "--out-dir", tmp_path)
    assert code == 1 and json.loads(out.out)["key_reported"] is False


def test_metrics_of_a_single_design(capsys):
    code, out = run(capsys, "metrics", "owmc_like", "--vectors", 50, "--json")
    assert code == 0 and json.loads(out.out)["area_units"] > 0


def test_missing_benchmark_exits_2(capsys):
    code, out = run(capsys, "map", "no_such_design")
    assert code == 2 and "no such file" in out.err


def test_run_manifest(tmp_path, capsys):
    m = {"experiments": [{"name": "p", "benchmark": "pedc_like",
                          "arch": {"io_per_tile": 2}, "vectors": 50}]}
    (tmp_path / "m.json").write_text(json.dumps(m))
    code, out = run(capsys, "run", tmp_path / "m.json", "--out-dir", tmp_path / "o", "--json")
    assert code == 0 and json.loads(out.out)["failed"] == []


@pytest.mark.skipif(shutil.which("efpga-redact") is None, reason="console script not installed")
def test_console_script(tmp_path):
    (tmp_path / "d.bench").write_text(write_bench(load_fixture("muxdc_like")))
    r = subprocess.run(["efpga-redact", "map", str(tmp_path / "d.bench"), "--k", "6",
                        "--out-dir", str(tmp_path)], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert read_bench(tmp_path / "d.luts.bench").cells
