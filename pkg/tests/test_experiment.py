import csv
import json

import pytest

from efpga_redaction.cad.bitstream import Bitstream, program
from efpga_redaction.experiment import (ManifestError, check_manifest, load_manifest, run_experiment,
                                        strip_timing)
from efpga_redaction.fabric.build import fabric_paths, load_fabric
from efpga_redaction.fixtures import load_fixture
from efpga_redaction.verify import check_equivalence

PEDC = {"ble_kind": "LUT", "n": 1, "grid_w": 1, "grid_h": 1, "io_per_tile": 2}

MANIFEST = {
    "name": "small",
    "seed": 0,
    "experiments": [
        {"name": "pedc_lut", "benchmark": "pedc_like", "arch": PEDC, "attack": {"timeout_s": 120},
         "vectors": 200},
        {"name": "pedc_flut", "benchmark": "pedc_like", "arch": {**PEDC, "ble_kind": "FLUT"}, "vectors": 200},
        {"name": "muxdc_search", "benchmark": "muxdc_like", "size_search": {"ble_kind": "LUT"},
         "vectors": 200},
        {"name": "hopeless", "benchmark": "pedc_like", "size_search": {"io_target": 1.5}},
    ],
}


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def bundle_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("bundle")
    (d / "m.json").write_text(json.dumps(MANIFEST))
    bundle = run_experiment(d / "m.json", d / "out")
    return d, bundle


def test_bundle_files(bundle_dir):
    d, bundle = bundle_dir
    out = d / "out"
    for name in ("bundle.json", "fabric_characteristics.csv", "security_results.csv", "overheads.csv"):
        assert (out / name).exists()
    fab = read_csv(out / "fabric_characteristics.csv")
    assert [r["fabric"] for r in fab][:2] == ["1x1 K4N1", "1x1 K4_frac_N1"]
    assert list(fab[0]) == ["fabric", "block_utilization", "io_utilization", "bitstream_size", "channel_width"]
    sec = read_csv(out / "security_results.csv")
    assert len(sec) == 1 and sec[0]["key_reported"] == "True"
    assert list(sec[0]) == ["fabric", "unroll", "clauses", "time_s", "key_reported"]
    assert json.loads((out / "bundle.json").read_text())["name"] == "small"


def test_lut_and_flut_overheads_side_by_side(bundle_dir):
    d, _ = bundle_dir
    rows = read_csv(d / "out" / "overheads.csv")
    fabrics = [r["fabric"] for r in rows]
    assert "1x1 K4N1" in fabrics and "1x1 K4_frac_N1" in fabrics
    for r in rows:
        assert r["ip"] in ("pedc_like", "muxdc_like")
        assert float(r["area_overhead"]) > 0


def test_failure_is_recorded_and_later_stages_skipped(bundle_dir):
    _, bundle = bundle_dir
    rec = next(r for r in bundle["experiments"] if r["entry"]["name"] == "hopeless")
    assert rec["stages"]["implement"]["status"] == "failed"
    assert all(rec["stages"][s]["status"] == "skipped" for s in ("verify", "metrics", "attack"))


def test_exported_files_reprogram_the_design(bundle_dir):
    d, _ = bundle_dir
    sub = d / "out" / "pedc_lut"
    f = load_fabric(*fabric_paths(sub / "redacted"))
    for key in ("bitstream.txt", "recovered_key.txt"):
        n = program(f, Bitstream.read(sub / key))
        assert check_equivalence(n, load_fixture("pedc_like")).equivalent


def test_rerun_resumes_with_same_results(bundle_dir):
    d, bundle = bundle_dir
    again = run_experiment(d / "m.json", d / "out")
    assert strip_timing(again) == strip_timing(bundle)
    assert again["experiments"][0]["wall_s"] == bundle["experiments"][0]["wall_s"]


def test_fresh_parallel_run_matches(bundle_dir, tmp_path):
    d, bundle = bundle_dir
    m = {**MANIFEST, "experiments": MANIFEST["experiments"][1:]}
    par = run_experiment(m, tmp_path / "p", jobs=2)
    assert strip_timing(par["experiments"]) == strip_timing(bundle["experiments"][1:])


@pytest.mark.parametrize("bad", [
    [],
    {"experiments": []},
    {"experiments": [{"name": "a", "benchmark": "pedc_like"}]},
    {"experiments": [{"name": "a", "benchmark": "pedc_like", "arch": PEDC, "size_search": {}}]},
    {"experiments": [{"name": "a", "benchmark": "pedc_like", "arch": {"n": 11}}]},
    {"experiments": [{"name": "a", "benchmark": "pedc_like", "arch": PEDC, "colour": 1}]},
    {"experiments": [{"name": "a", "benchmark": "pedc_like", "arch": PEDC, "attack": {"timeout_s": -1}}]},
    {"experiments": [{"name": "a", "benchmark": "pedc_like", "arch": PEDC}] * 2},
    {"jobs": 0, "experiments": [{"name": "a", "benchmark": "pedc_like", "arch": PEDC}]},
])
def test_manifest_errors(bad):
    with pytest.raises(ManifestError):
        check_manifest(bad)


def test_manifest_paths_resolve_relative_to_file(tmp_path):
    (tmp_path / "m.json").write_text(json.dumps(
        {"experiments": [{"name": "a", "benchmark": "d.bench", "arch": PEDC}]}))
    m = load_manifest(tmp_path / "m.json")
    assert m["experiments"][0]["benchmark"] == str(tmp_path / "d.bench")
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(ManifestError):
        load_manifest(tmp_path / "bad.json")
