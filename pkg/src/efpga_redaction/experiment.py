"""Manifest-driven experiments: implement, verify, measure and attack.

A manifest is a JSON object::

    {
      "name": "demo",
      "seed": 0,
      "jobs": 1,
      "experiments": [
        {"name": "pedc_lut", "benchmark": "pedc_like",
         "arch": {"ble_kind": "LUT", "n": 1, "grid_w": 1, "grid_h": 1, "io_per_tile": 2},
         "attack": {"timeout_s": 60}},
        {"name": "owmc_flut", "benchmark": "designs/owmc.bench",
         "size_search": {"ble_kind": "FLUT", "relax_io": false}}
      ]
    }

``benchmark`` is a built-in fixture name or a path to a .bench file
(relative paths resolve against the manifest).  Each experiment gives
either ``arch`` (fixed parameters, ``w`` optional) or ``size_search``
(``ble_kind``, ``k``, ``relax_io``, ``io_target``).  ``attack`` is
optional; omit it or set it to null to skip the attack.

The bundle directory receives ``bundle.json``, ``fabric_characteristics.csv``,
``security_results.csv``, ``overheads.csv`` and one sub-directory per
experiment holding its files and a ``record.json``.  A record whose
stored entry matches the manifest is reused, so an interrupted run
resumes where it stopped.
"""

from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .cad.flow import fabric_stats, implement, size_search
from .fabric.arch import ArchError, ArchParams
from .fabric.build import save_fabric
from .fixtures import FIXTURES, load_fixture
from .metrics import configured_fabric, overhead_report
from .netlist import Netlist, read_bench
from .sat.attack import AttackConfig, attack
from .verify import check_equivalence

STAGES = ("implement", "verify", "metrics", "attack")
FABRIC_COLUMNS = ("fabric", "block_utilization", "io_utilization", "bitstream_size", "channel_width")
SECURITY_COLUMNS = ("fabric", "unroll", "clauses", "time_s", "key_reported")
TIMING_FIELDS = ("time_s", "wall_s")


class ManifestError(ValueError):
    pass


_ENTRY_KEYS = {"name", "benchmark", "arch", "size_search", "attack", "seed", "vectors"}
_SEARCH_KEYS = {"ble_kind", "k", "relax_io", "io_target"}


def load_manifest(path) -> dict:
    path = Path(path)
    try:
        m = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: not valid JSON ({exc})") from None
    return check_manifest(m, path.parent)


def check_manifest(m, base: Path | None = None) -> dict:
    """Validate and normalise a manifest; raises ManifestError."""
    if not isinstance(m, dict):
        raise ManifestError("manifest must be a JSON object")
    unknown = set(m) - {"name", "seed", "jobs", "experiments"}
    if unknown:
        raise ManifestError(f"unknown manifest fields: {sorted(unknown)}")
    exps = m.get("experiments")
    if not isinstance(exps, list) or not exps:
        raise ManifestError("manifest needs a non-empty 'experiments' list")
    seed = m.get("seed", 0)
    jobs = m.get("jobs", 1)
    if not isinstance(seed, int) or not isinstance(jobs, int) or jobs < 1:
        raise ManifestError("'seed' must be an integer and 'jobs' a positive integer")
    out = {"name": str(m.get("name", "experiment")), "seed": seed, "jobs": jobs, "experiments": []}
    names = set()
    for i, e in enumerate(exps):
        where = f"experiments[{i}]"
        if not isinstance(e, dict):
            raise ManifestError(f"{where} must be an object")
        bad = set(e) - _ENTRY_KEYS
        if bad:
            raise ManifestError(f"{where}: unknown fields {sorted(bad)}")
        name = e.get("name")
        if not isinstance(name, str) or not name or "/" in name or name in names:
            raise ManifestError(f"{where}: 'name' must be a unique non-empty string without '/'")
        names.add(name)
        bench = e.get("benchmark")
        if not isinstance(bench, str):
            raise ManifestError(f"{where}: 'benchmark' must be a fixture name or .bench path")
        if bench not in FIXTURES:
            p = Path(bench)
            if base is not None and not p.is_absolute():
                p = base / p
            bench = str(p)
        if ("arch" in e) == ("size_search" in e):
            raise ManifestError(f"{where}: give exactly one of 'arch' and 'size_search'")
        entry = {"name": name, "benchmark": bench, "seed": e.get("seed", seed),
                 "vectors": e.get("vectors", 1000), "attack": e.get("attack")}
        if "arch" in e:
            try:
                entry["arch"] = ArchParams.from_dict(e["arch"]).to_dict()
            except (ArchError, TypeError, ValueError, AttributeError) as exc:
                raise ManifestError(f"{where}: bad arch: {exc}") from None
        else:
            ss = e["size_search"]
            if not isinstance(ss, dict) or set(ss) - _SEARCH_KEYS:
                raise ManifestError(f"{where}: 'size_search' accepts only {sorted(_SEARCH_KEYS)}")
            entry["size_search"] = dict(ss)
        if entry["attack"] is not None:
            try:
                AttackConfig(**entry["attack"])
            except (TypeError, ValueError) as exc:
                raise ManifestError(f"{where}: bad attack config: {exc}") from None
        out["experiments"].append(entry)
    return out


def _load_design(bench: str) -> Netlist:
    return load_fixture(bench) if bench in FIXTURES else read_bench(bench)


def run_one(entry: dict, out_dir) -> dict:
    """Run one experiment; a failed stage is recorded and later stages skipped."""
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    rec = {"entry": entry, "stages": {s: {"status": "skipped"} for s in STAGES}}
    t0 = time.monotonic()
    seed = entry["seed"]

    def fail(stage, exc):
        rec["stages"][stage] = {"status": "failed", "error": f"{type(exc).__name__}: {exc}"}

    try:
        design = _load_design(entry["benchmark"])
        if "arch" in entry:
            st = implement(design, ArchParams.from_dict(entry["arch"]), seed)
        else:
            ss = entry["size_search"]
            p0 = ArchParams(k=ss.get("k", 4), ble_kind=ss.get("ble_kind", "LUT"))
            kw = {"io_target": ss["io_target"]} if "io_target" in ss else {}
            _, _, st = size_search(design, p0, seed, relax_io=ss.get("relax_io", False), **kw)
        stats = fabric_stats(st.fabric, st)
        st.bitstream.write(d / "bitstream.txt")
        save_fabric(st.bound, d / "redacted")
        rec["stages"]["implement"] = {"status": "ok", "fabric": st.params.name, "arch": st.params.to_dict(),
                                      **stats.as_dict()}
    except Exception as exc:        # any flow failure is part of the record
        fail("implement", exc)
        return _finish(rec, d, t0)

    try:
        verdict = check_equivalence(st.programmed, design, seed=seed)
        rec["stages"]["verify"] = {"status": "ok", **verdict.as_dict()}
        if not verdict.equivalent:
            return _finish(rec, d, t0)
    except Exception as exc:
        fail("verify", exc)
        return _finish(rec, d, t0)

    try:
        rep = overhead_report(design, configured_fabric(st.fabric, st.bitstream), st.params.name,
                              vectors=entry["vectors"], seed=seed)
        rec["stages"]["metrics"] = {"status": "ok", **rep.as_dict()}
    except Exception as exc:
        fail("metrics", exc)
        return _finish(rec, d, t0)

    if entry["attack"] is not None:
        try:
            cfg = AttackConfig(**{"seed": seed, **entry["attack"]})
            r = attack(st.bound, design, cfg)
            if r.recovered_key is not None:
                r.recovered_key.write(d / "recovered_key.txt")
            rec["stages"]["attack"] = {"status": "ok", **r.as_dict()}
        except Exception as exc:
            fail("attack", exc)
    return _finish(rec, d, t0)


def _finish(rec: dict, d: Path, t0: float) -> dict:
    rec["wall_s"] = time.monotonic() - t0
    (d / "record.json").write_text(json.dumps(rec, indent=2, sort_keys=True) + "\n")
    return rec


def _cached(entry: dict, d: Path) -> dict | None:
    p = d / "record.json"
    if not p.exists():
        return None
    try:
        rec = json.loads(p.read_text())
    except json.JSONDecodeError:
        return None
    return rec if rec.get("entry") == entry else None


def _csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def run_experiment(manifest, out_dir, jobs: int | None = None) -> dict:
    """Run every experiment of ``manifest`` (path or dict) into ``out_dir``."""
    m = load_manifest(manifest) if isinstance(manifest, (str, Path)) else check_manifest(manifest)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = jobs or m["jobs"]
    records: dict[str, dict] = {}
    todo = []
    for e in m["experiments"]:
        rec = _cached(e, out / e["name"])
        if rec is not None:
            records[e["name"]] = rec
        else:
            todo.append(e)
    if jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futs = {e["name"]: pool.submit(run_one, e, out / e["name"]) for e in todo}
            for name, fut in futs.items():
                records[name] = fut.result()
    else:
        for e in todo:
            records[e["name"]] = run_one(e, out / e["name"])

    ordered = [records[e["name"]] for e in m["experiments"]]
    fabric_rows, security_rows, overheads = [], [], []
    for rec in ordered:
        s = rec["stages"]
        if s["implement"]["status"] == "ok":
            impl = s["implement"]
            fabric_rows.append({"fabric": impl["fabric"], "block_utilization": impl["block_utilization"],
                                "io_utilization": impl["io_utilization"],
                                "bitstream_size": impl["bitstream_size"],
                                "channel_width": impl["channel_width"]})
        if s["attack"]["status"] == "ok":
            a = s["attack"]
            security_rows.append({k: a[k] for k in SECURITY_COLUMNS})
        if s["metrics"]["status"] == "ok":
            overheads.append(s["metrics"])
    (out / "fabric_characteristics.csv").write_text(_csv(FABRIC_COLUMNS, fabric_rows))
    (out / "security_results.csv").write_text(_csv(SECURITY_COLUMNS, security_rows))
    (out / "overheads.csv").write_text(_csv(("ip", "fabric", "area_overhead", "power_overhead",
                                             "delay_overhead"), overheads))
    bundle = {"name": m["name"], "seed": m["seed"], "experiments": ordered}
    (out / "bundle.json").write_text(json.dumps(bundle, indent=2, sort_keys=True) + "\n")
    return bundle


def strip_timing(obj):
    """Copy of a record or bundle without wall-clock fields."""
    if isinstance(obj, dict):
        return {k: strip_timing(v) for k, v in obj.items() if k not in TIMING_FIELDS}
    if isinstance(obj, list):
        return [strip_timing(v) for v in obj]
    return obj
