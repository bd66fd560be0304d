"""Static report: CSV tables, plot-ready JSON, per-transaction action tables, manifest.

Every output is a pure function of the input record files, which are copied
under ``inputs/`` so that :func:`verify` can re-derive the report and compare
content hashes.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import shutil
import tempfile
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

from latwar.arbdetect import ArbitrageRecord
from latwar.errors import LatwarError, OutputDirNotWritable
from latwar.failedarb import FailedArbRecord
from latwar.io import atomic_write_bytes, iter_jsonl, make_meta, read_json, sha256_hex
from latwar.latency.analyze import ArrivalRecord, analyze, read_arrivals, read_offsets
from latwar.latency.geo import Region, load_regions, shipped_regions
from latwar.metrics import (
    DEFAULT_THRESHOLDS,
    PROFIT_TOKEN,
    activity_shares,
    correlation_suite,
    distributions,
    pair_ranking,
    profit_concentration,
    profit_rate,
    searcher_shape_correlations,
    searcher_stats,
    top_table,
)
from latwar.searchers import SearcherCluster, build_graph, cluster_histograms, clusters_from_json, connected_components

log = logging.getLogger(__name__)

# pipeline files picked up from the input directory; detect_summary.json is copied but not read
INPUT_NAMES = ("arbs.jsonl", "failed.jsonl", "clusters.json", "blocks.jsonl", "arrivals.csv",
               "regions.csv", "offsets.csv", "detect_summary.json")
OWNED_DIRS = ("tables", "dist", "latency", "tx", "schemas", "inputs")
CONFIG_NAME = "report_config.json"
MANIFEST = "manifest.json"


@dataclass
class ReportConfig:
    thresholds: tuple[int, ...] = DEFAULT_THRESHOLDS
    token: str = PROFIT_TOKEN
    include_outlier_rates: bool = False
    top_n: int = 10

    def to_dict(self) -> dict:
        d = asdict(self)
        d["thresholds"] = list(self.thresholds)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ReportConfig":
        return cls(tuple(int(t) for t in d.get("thresholds", DEFAULT_THRESHOLDS)), d.get("token", PROFIT_TOKEN),
                   bool(d.get("include_outlier_rates", False)), int(d.get("top_n", 10)))


@dataclass
class ReportInputs:
    arbs: list[ArbitrageRecord] = field(default_factory=list)
    failed: list[FailedArbRecord] = field(default_factory=list)
    clusters: list[SearcherCluster] | None = None
    blocks: list[dict] | None = None
    arrivals: list[ArrivalRecord] | None = None
    regions: list[Region] | None = None
    offsets: dict[str, float] | None = None


def find_inputs(in_dir: str | Path) -> dict[str, Path]:
    """Locate known input files anywhere below ``in_dir``.

    Directories previously written by :func:`emit_report` are skipped.
    Raises ``LatwarError`` if a name occurs twice.
    """
    root = Path(in_dir)
    found: dict[str, Path] = {}
    for path in sorted(root.rglob("*")):
        if not path.is_file() or path.name not in INPUT_NAMES:
            continue
        parts = path.relative_to(root).parts
        if any((root.joinpath(*parts[:i]) / MANIFEST).exists() for i in range(1, len(parts))):
            continue
        if path.name in found:
            raise LatwarError(f"ambiguous input {path.name}: {found[path.name]} and {path}")
        found[path.name] = path
    return found


def load_inputs(files: dict[str, Path]) -> ReportInputs:
    inp = ReportInputs()
    if "arbs.jsonl" in files:
        inp.arbs = [ArbitrageRecord.from_json(r) for r in iter_jsonl(files["arbs.jsonl"])]
    if "failed.jsonl" in files:
        inp.failed = [FailedArbRecord.from_json(r) for r in iter_jsonl(files["failed.jsonl"])]
    if "clusters.json" in files:
        inp.clusters = clusters_from_json(read_json(files["clusters.json"]))
    if "blocks.jsonl" in files:
        inp.blocks = list(iter_jsonl(files["blocks.jsonl"]))
    if "arrivals.csv" in files:
        inp.arrivals = read_arrivals(files["arrivals.csv"])
        inp.regions = load_regions(files["regions.csv"]) if "regions.csv" in files else shipped_regions()
        if "offsets.csv" in files:
            inp.offsets = read_offsets(files["offsets.csv"])
    return inp


# ---------------------------------------------------------------------------
# Rendering


def _json_bytes(obj: Any) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n").encode("utf-8")


def _csv_bytes(rows: Sequence[dict], columns: Sequence[str]) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow(["" if r.get(c) is None else r.get(c) for c in columns])
    return buf.getvalue().encode("utf-8")


def _rows_bytes(rows: Sequence[Sequence]) -> bytes:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue().encode("utf-8")


def tx_file_name(rec: ArbitrageRecord) -> str:
    return f"tx/{rec.tx_hash}.json" if rec.msg_index == 0 else f"tx/{rec.tx_hash}-{rec.msg_index}.json"


def action_table(rec: ArbitrageRecord) -> dict:
    rate = profit_rate(rec)
    return {
        "tx_hash": rec.tx_hash,
        "height": rec.height,
        "index_in_block": rec.index_in_block,
        "msg_index": rec.msg_index,
        "sender": rec.sender,
        "contract": rec.contract,
        "token_start": rec.token_start,
        "amount_in": str(rec.amount_in),
        "amount_out": str(rec.amount_out),
        "profit": str(rec.profit),
        "profit_rate": {"exact": f"{rate.numerator}/{rate.denominator}", "float": float(rate)},
        "gas_used": rec.gas_used,
        "actions": [{"step": i, **a.to_json()} for i, a in enumerate(rec.actions, 1)],
    }


def build_outputs(inp: ReportInputs, cfg: ReportConfig, meta: dict) -> dict[str, bytes]:
    """Relative path -> file content for every data file of the report."""
    out: dict[str, bytes] = {}

    def dist(name: str, data: Any) -> None:
        out[f"dist/{name}.json"] = _json_bytes({"_meta": meta, "data": data})

    if inp.arbs:
        arbs, failed = inp.arbs, inp.failed
        out["tables/top_senders.csv"] = _csv_bytes(
            top_table(arbs, "sender", "contract", cfg.top_n), ["sender", "successful_arbitrages", "contracts", "pct"])
        out["tables/top_contracts.csv"] = _csv_bytes(
            top_table(arbs, "contract", "sender", cfg.top_n), ["contract", "successful_arbitrages", "senders", "pct"])
        out["tables/top_pairs.csv"] = _csv_bytes(
            pair_ranking(arbs), ["rank", "pair", "swaps", "rate", "cumulative", "tokens"])

        clusters = inp.clusters if inp.clusters is not None else connected_components(build_graph(arbs))
        att = searcher_stats(arbs, failed, clusters)
        srows = [s.to_row() for s in att.stats]
        out["tables/searchers.csv"] = _csv_bytes(srows, list(srows[0]) if srows else ["searcher_id"])
        crows = correlation_suite(att.stats, cfg.thresholds, cfg.token)
        out["tables/correlations.csv"] = _csv_bytes(crows, list(crows[0]) if crows else ["threshold"])

        for key, value in distributions(arbs, failed, inp.blocks, cfg.include_outlier_rates).items():
            dist(key, value)
        real = [s for s in att.stats if s.searcher_id != "unclustered"]
        dist("searchers", {
            **cluster_histograms(clusters),
            "shape_correlations": searcher_shape_correlations(real, cfg.token),
            "top3_profit_share": profit_concentration(real, cfg.token),
            "activity_shares": activity_shares(real),
            "n_unclustered_failed": att.n_unclustered_failed,
            "n_ambiguous_failed": att.n_ambiguous_failed,
        })
        for rec in arbs:
            out[tx_file_name(rec)] = _json_bytes(action_table(rec))

    if inp.arrivals:
        regions = inp.regions or shipped_regions()
        res = analyze(inp.arrivals, regions, inp.offsets)
        dist("first_seen", {"wins_per_region": res.first.wins_per_region(), "ties": res.first.ties,
                            "n_transactions": len(res.first.winners)})
        dist("latency_histogram", res.histogram)
        names = sorted({a.region for a in inp.arrivals})
        out["latency/heatmap.csv"] = _rows_bytes(res.matrix.to_rows(names))
        out["latency/correlation.json"] = _json_bytes({
            "_meta": meta,
            "correlation": res.correlation.to_json() if res.correlation else None,
            "pairs": [{"a": a, "b": b, "km": km, "median_ms": ms} for a, b, km, ms in res.pairs],
        })
    return out


def schema_files() -> dict[str, bytes]:
    pkg = resources.files("latwar") / "schemas"
    return {f"schemas/{p.name}": p.read_bytes() for p in sorted(pkg.iterdir(), key=lambda p: p.name)
            if p.name.endswith(".json")}


# ---------------------------------------------------------------------------
# Emission and verification


def _check_writable(out_dir: Path) -> None:
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputDirNotWritable(f"{out_dir}: {exc}") from exc
    if not os.access(out_dir, os.W_OK | os.X_OK):
        raise OutputDirNotWritable(f"{out_dir}: not writable")


def _render(files: dict[str, Path], cfg: ReportConfig) -> tuple[dict[str, bytes], dict[str, bytes], dict]:
    input_bytes = {f"inputs/{name}": files[name].read_bytes() for name in sorted(files)}
    input_bytes[f"inputs/{CONFIG_NAME}"] = _json_bytes(cfg.to_dict())
    meta = make_meta(cfg.to_dict(), None,
                     inputs={k.split("/", 1)[1]: sha256_hex(v) for k, v in sorted(input_bytes.items())})
    data = build_outputs(load_inputs(files), cfg, meta)
    return data, input_bytes, meta


def _manifest(groups: dict[str, dict[str, bytes]], meta: dict) -> dict:
    entries = []
    for kind, files in groups.items():
        for path, content in files.items():
            entries.append({"path": path, "sha256": sha256_hex(content), "bytes": len(content), "kind": kind})
    entries.sort(key=lambda e: e["path"])
    return {"_meta": meta, "files": entries}


def emit_report(in_dir: str | Path, out_dir: str | Path, cfg: ReportConfig | None = None) -> dict:
    """Write the report for the inputs found under ``in_dir``; returns the manifest."""
    cfg = cfg or ReportConfig()
    out = Path(out_dir)
    _check_writable(out)
    files = find_inputs(in_dir)
    data, inputs, meta = _render(files, cfg)
    schemas = schema_files()
    for sub in OWNED_DIRS:
        shutil.rmtree(out / sub, ignore_errors=True)
    try:
        for path, content in {**schemas, **inputs, **data}.items():
            atomic_write_bytes(out / path, content, durable=False)
        manifest = _manifest({"data": data, "schema": schemas, "input": inputs}, meta)
        atomic_write_bytes(out / MANIFEST, _json_bytes(manifest))
    except PermissionError as exc:
        raise OutputDirNotWritable(str(exc)) from exc
    log.info("report: %d data files, %d schemas, %d inputs", len(data), len(schemas), len(inputs))
    return manifest


@dataclass
class VerifyResult:
    ok: bool
    problems: list[str]


def verify(report_dir: str | Path) -> VerifyResult:
    """Check stored hashes, then re-derive the report from ``inputs/`` and diff."""
    root = Path(report_dir)
    problems: list[str] = []
    try:
        manifest = read_json(root / MANIFEST)
    except (OSError, ValueError) as exc:
        return VerifyResult(False, [f"cannot read manifest: {exc}"])
    for e in manifest["files"]:
        p = root / e["path"]
        if not p.is_file():
            problems.append(f"missing {e['path']}")
        elif sha256_hex(p.read_bytes()) != e["sha256"]:
            problems.append(f"hash mismatch {e['path']}")

    inputs_dir = root / "inputs"
    cfg_path = inputs_dir / CONFIG_NAME
    cfg = ReportConfig.from_dict(read_json(cfg_path)) if cfg_path.exists() else ReportConfig()
    with tempfile.TemporaryDirectory() as tmp:
        staged = Path(tmp) / "in"
        staged.mkdir()
        for name in INPUT_NAMES:
            if (inputs_dir / name).is_file():
                shutil.copyfile(inputs_dir / name, staged / name)
        fresh = emit_report(staged, Path(tmp) / "out", cfg)
    stored = {e["path"]: e["sha256"] for e in manifest["files"]}
    derived = {e["path"]: e["sha256"] for e in fresh["files"]}
    for path in sorted(set(stored) | set(derived)):
        if path not in derived:
            problems.append(f"not re-derivable: {path}")
        elif path not in stored:
            problems.append(f"missing from manifest: {path}")
        elif stored[path] != derived[path]:
            problems.append(f"re-derived content differs: {path}")
    if manifest.get("_meta") != fresh.get("_meta"):
        problems.append("manifest metadata differs")
    return VerifyResult(not problems, problems)
