"""Command-line entry point: ``latwar <subcommand> ...``.

Exit codes: 0 success, 1 runtime error, 2 usage error. ``LATWAR_LOG`` sets the
log level (default WARNING).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

from latwar import __version__
from latwar.arbdetect import ArbitrageRecord
from latwar.corpus import load_profile, write_corpus
from latwar.detect import detect
from latwar.errors import LatwarError
from latwar.failedarb import ANY_OF, MODES, FailedArbRecord
from latwar.ingest import (
    FixtureSource,
    NormalizeStats,
    RpcSource,
    format_time,
    iterate_blocks,
    iterate_range,
    read_checkpoint,
    read_normalized,
    write_checkpoint,
)
from latwar.io import (
    META_KEY,
    atomic_write_text,
    canonical_json,
    iter_jsonl,
    make_meta,
    read_json,
    read_jsonl_meta,
    write_json,
    write_jsonl,
)
from latwar.latency.analyze import analyze, read_arrivals, read_offsets, write_arrivals
from latwar.latency.geo import load_regions, shipped_regions, write_regions
from latwar.latency.simulate import export_arrivals, load_sim_config, simulate
from latwar.logparse import load_registry
from latwar.metrics import DEFAULT_THRESHOLDS, PROFIT_TOKEN, correlation_suite, distributions, pair_ranking, \
    searcher_stats, top_table
from latwar.report import ReportConfig, emit_report, verify
from latwar.searchers import build_graph, cluster_histograms, clusters_from_json, connected_components

log = logging.getLogger("latwar")

MULTI_MESSAGE_POLICY = "split: one record per execute message, sharing tx_hash, keyed by msg_index"
MAX_HEIGHT = 2**62


class UsageError(Exception):
    """Raised for bad flag combinations argparse cannot express."""


# ---------------------------------------------------------------------------
# ingest


def _truncate_jsonl(path: Path, last_height: int) -> None:
    if not path.exists():
        return
    kept = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            if META_KEY in rec or rec["height"] <= last_height:
                kept.append(line if line.endswith("\n") else line + "\n")
    atomic_write_text(path, "".join(kept))


def block_row(block, st: NormalizeStats) -> dict:
    return {
        "height": block.height,
        "time": format_time(block.time),
        "n_txs": st.n_txs,
        "n_execute_txs": st.n_execute_txs,
        "n_execute_msgs": st.n_execute_msgs,
        "n_non_execute": st.n_non_execute,
        "n_decode_errors": st.n_decode_errors,
        "n_multi_message": st.n_multi_message,
        "parse_warnings": st.parse_warnings,
    }


def run_ingest(out_dir, fixtures=None, endpoint=None, start=None, end=None, checkpoint=None,
               workers: int = 1, force: bool = False, max_blocks: int | None = None) -> dict:
    """Ingest a height range into ``normalized.jsonl`` and ``blocks.jsonl``.

    With a checkpoint, a rerun resumes after the last committed height and
    drops any output lines written past it, so an interrupted run followed by
    a resume produces the same files as one uninterrupted run.
    """
    if (fixtures is None) == (endpoint is None):
        raise UsageError("exactly one of --fixtures or --endpoint is required")
    if endpoint is not None and (start is None or end is None):
        raise UsageError("--from and --to are required with --endpoint")
    start = 1 if start is None else start
    end = MAX_HEIGHT if end is None else end
    if start > end:
        raise UsageError(f"--from {start} is greater than --to {end}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    norm_path, blocks_path = out / "normalized.jsonl", out / "blocks.jsonl"

    if fixtures is not None:
        source, src_cfg = FixtureSource(fixtures), {"source": "fixtures", "name": Path(fixtures).name}
    else:
        source, src_cfg = RpcSource(endpoint, workers=workers), {"source": "rpc", "endpoint": endpoint}
    config = {**src_cfg, "from": start, "to": end, "multi_message": MULTI_MESSAGE_POLICY}
    meta = make_meta(config, None, multi_message=MULTI_MESSAGE_POLICY)

    last = read_checkpoint(checkpoint, force)
    if last is not None and norm_path.exists():
        previous = read_jsonl_meta(norm_path)
        if previous is not None and previous.get("config_hash") != meta["config_hash"] and not force:
            raise LatwarError(f"{checkpoint} belongs to a run with different arguments (use --force to restart)")
        _truncate_jsonl(norm_path, last)
        _truncate_jsonl(blocks_path, last)
    else:
        if last is not None:
            log.warning("checkpoint at %d but no previous output; starting output files fresh", last)
        atomic_write_text(norm_path, canonical_json({META_KEY: meta}) + "\n")
        atomic_write_text(blocks_path, canonical_json({META_KEY: meta}) + "\n")

    n = 0
    with open(norm_path, "a", encoding="utf-8") as fn, open(blocks_path, "a", encoding="utf-8") as fb:
        for block, txs, st in iterate_blocks(source, start, end, checkpoint, force=force):
            for tx in txs:
                fn.write(canonical_json(tx.to_json()) + "\n")
            fb.write(canonical_json(block_row(block, st)) + "\n")
            fn.flush()
            fb.flush()
            n += 1
            if max_blocks is not None and n >= max_blocks:
                if checkpoint is not None:
                    write_checkpoint(checkpoint, block.height)
                break

    total = NormalizeStats()
    for row in iter_jsonl(blocks_path):
        total.n_blocks += 1
        for name in ("n_txs", "n_execute_txs", "n_execute_msgs", "n_non_execute", "n_decode_errors",
                     "n_multi_message", "parse_warnings"):
            setattr(total, name, getattr(total, name) + row[name])
    summary = {"_meta": meta, "blocks_this_run": n, **total.__dict__}
    write_json(out / "ingest_summary.json", summary)
    return summary


# ---------------------------------------------------------------------------
# detect / cluster / metrics


def _tx_source(in_dir: Path):
    norm = in_dir / "normalized.jsonl"
    if norm.exists():
        return lambda: read_normalized(norm)
    txs = list(iterate_range(in_dir, 1, MAX_HEIGHT))  # a fixture directory
    return lambda: iter(txs)


def run_detect(in_dir, out_dir, matchers=None, mode: str = ANY_OF, workers: int = 1) -> dict:
    registry = load_registry(matchers)
    arbs, failed, summary = detect(_tx_source(Path(in_dir)), registry, mode, workers)
    config = {"matchers": [m.name for m in registry], "failed_mode": mode,
              "multi_message": MULTI_MESSAGE_POLICY}
    meta = make_meta(config, None, failed_mode=mode, multi_message=MULTI_MESSAGE_POLICY)
    out = Path(out_dir)
    write_jsonl(out / "arbs.jsonl", (a.to_json() for a in arbs), meta)
    write_jsonl(out / "failed.jsonl", (f.to_json() for f in failed), meta)
    doc = {"_meta": meta, **summary.to_json()}
    write_json(out / "detect_summary.json", doc)
    return doc


def read_arbs(path) -> list[ArbitrageRecord]:
    return [ArbitrageRecord.from_json(r) for r in iter_jsonl(path)]


def read_failed(path) -> list[FailedArbRecord]:
    return [FailedArbRecord.from_json(r) for r in iter_jsonl(path)]


def _read_list(path) -> list[str]:
    return [ln.strip() for ln in Path(path).read_text(encoding="utf-8").splitlines()
            if ln.strip() and not ln.startswith("#")]


def run_cluster(arbs_path, out_path, failed_path=None, include_failed: bool = False, exclude=None) -> dict:
    if include_failed and failed_path is None:
        raise UsageError("--include-failed needs --failed")
    excluded = _read_list(exclude) if exclude else []
    failed = read_failed(failed_path) if include_failed else None
    g = build_graph(read_arbs(arbs_path), failed, excluded)
    clusters = connected_components(g)
    config = {"include_failed": include_failed, "exclude_contracts": sorted(excluded)}
    meta = make_meta(config, None)
    out = Path(out_path)
    doc = {"_meta": meta, "clusters": [c.to_json() for c in clusters],
           "histograms": cluster_histograms(clusters)}
    write_json(out, doc)
    atomic_write_text(out.with_name("graph.dot"), g.to_dot())
    write_json(out.with_name("graph.json"), {"_meta": meta, **g.to_adjacency()})
    return doc


def _write_csv(path: Path, rows: list[dict], columns: Sequence[str]) -> None:
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow(["" if r.get(c) is None else r.get(c) for c in columns])
    atomic_write_text(path, buf.getvalue())


def run_metrics(arbs_path, failed_path, clusters_path, out_dir, thresholds=DEFAULT_THRESHOLDS,
                blocks_path=None, token: str = PROFIT_TOKEN, include_outlier_rates: bool = False) -> dict:
    arbs = read_arbs(arbs_path)
    failed = read_failed(failed_path) if failed_path else []
    clusters = clusters_from_json(read_json(clusters_path))
    blocks = list(iter_jsonl(blocks_path)) if blocks_path else None
    att = searcher_stats(arbs, failed, clusters)
    rows = correlation_suite(att.stats, thresholds, token)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config = {"thresholds": list(thresholds), "token": token, "include_outlier_rates": include_outlier_rates}
    meta = make_meta(config, None)
    srows = [s.to_row() for s in att.stats]
    _write_csv(out / "searchers.csv", srows, list(srows[0]) if srows else ["searcher_id"])
    _write_csv(out / "correlations.csv", rows, list(rows[0]) if rows else ["threshold"])
    _write_csv(out / "top_senders.csv", top_table(arbs, "sender", "contract"),
               ["sender", "successful_arbitrages", "contracts", "pct"])
    _write_csv(out / "top_contracts.csv", top_table(arbs, "contract", "sender"),
               ["contract", "successful_arbitrages", "senders", "pct"])
    _write_csv(out / "top_pairs.csv", pair_ranking(arbs), ["rank", "pair", "swaps", "rate", "cumulative", "tokens"])
    write_json(out / "distributions.json", {"_meta": meta, "data": distributions(arbs, failed, blocks,
                                                                                include_outlier_rates)})
    doc = {"_meta": meta, "n_searchers": len(att.stats), "n_unclustered_failed": att.n_unclustered_failed,
           "n_ambiguous_failed": att.n_ambiguous_failed, "correlations": rows}
    write_json(out / "meta.json", doc)
    return doc


# ---------------------------------------------------------------------------
# latency


def run_latency_analyze(arrivals_path, out_dir, regions_path=None, offsets_path=None) -> dict:
    arrivals = read_arrivals(arrivals_path)
    regions = load_regions(regions_path) if regions_path else shipped_regions()
    offsets = read_offsets(offsets_path) if offsets_path else None
    res = analyze(arrivals, regions, offsets)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta = make_meta({"offsets": offsets or {}, "regions": [r.name for r in regions]}, None)
    names = sorted({a.region for a in arrivals})
    with open(out / "heatmap.csv", "w", newline="", encoding="utf-8") as fh:
        csv.writer(fh, lineterminator="\n").writerows(res.matrix.to_rows(names))
    corr = res.correlation.to_json() if res.correlation else None
    write_json(out / "correlation.json", {
        "_meta": meta, "correlation": corr,
        "pairs": [{"a": a, "b": b, "km": km, "median_ms": ms} for a, b, km, ms in res.pairs]})
    write_json(out / "first_seen.json", {"_meta": meta, "wins_per_region": res.first.wins_per_region(),
                                         "ties": res.first.ties, "n_transactions": len(res.first.winners)})
    write_json(out / "histogram.json", {"_meta": meta, **res.histogram})
    return {"correlation": corr, "ties": res.first.ties}


def run_latency_simulate(config_path, out_dir, export_path=None) -> dict:
    cfg = load_sim_config(config_path)
    outcome = simulate(cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    resolved = cfg.to_dict()
    meta = make_meta(resolved, cfg.seed)
    write_json(out / "config_resolved.json", resolved)
    write_json(out / "outcome.json", {"_meta": meta, **outcome.summary()})
    write_jsonl(out / "opportunities.jsonl", (
        {"index": o.index, "origin": o.origin, "validator": o.validator, "t0_ms": o.t0_ms, "winner": o.winner,
         "attempts": [{"searcher": a.searcher_id, "instance": a.instance, "region": a.region,
                       "recv_ms": a.recv_ms, "arrive_ms": a.arrive_ms, "won": a.won} for a in o.attempts]}
        for o in outcome.opportunities), meta)
    if export_path is not None:
        export = Path(export_path)
        export.parent.mkdir(parents=True, exist_ok=True)
        write_arrivals(export, export_arrivals(outcome))
        write_regions(export.with_name("regions.csv"), cfg.regions)
        write_json(export.with_name(export.stem + ".meta.json"), meta)
    return outcome.summary()


# ---------------------------------------------------------------------------
# argument parsing


def _thresholds(text: str) -> tuple[int, ...]:
    try:
        vals = tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid threshold list {text!r}")
    if not vals or any(v < 0 for v in vals):
        raise argparse.ArgumentTypeError("thresholds must be non-negative integers")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="latwar", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"latwar {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="fetch or load blocks into a normalized transaction stream")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--endpoint")
    src.add_argument("--fixtures")
    s.add_argument("--from", dest="start", type=int)
    s.add_argument("--to", dest="end", type=int)
    s.add_argument("--checkpoint")
    s.add_argument("--out", required=True)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--force", action="store_true", help="ignore a corrupt or foreign checkpoint")
    s.add_argument("--max-blocks", type=int, help="stop after this many blocks (resume later)")

    s = sub.add_parser("detect", help="successful and failed arbitrage detection (two passes)")
    s.add_argument("--in", dest="in_dir", required=True, help="ingest output or fixture directory")
    s.add_argument("--matchers", help="TOML/JSON file with an ordered 'matchers' list")
    s.add_argument("--mode", choices=MODES, default=ANY_OF)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out", required=True)

    s = sub.add_parser("cluster", help="searcher clusters from the sender-contract graph")
    s.add_argument("--arbs", required=True)
    s.add_argument("--failed")
    s.add_argument("--include-failed", action="store_true")
    s.add_argument("--exclude", help="file listing contracts to leave out of the graph")
    s.add_argument("--out", required=True)

    s = sub.add_parser("metrics", help="searcher statistics, distributions and correlation tables")
    s.add_argument("--arbs", required=True)
    s.add_argument("--failed")
    s.add_argument("--clusters", required=True)
    s.add_argument("--blocks")
    s.add_argument("--thresholds", type=_thresholds, default=DEFAULT_THRESHOLDS)
    s.add_argument("--token", default=PROFIT_TOKEN)
    s.add_argument("--include-outlier-rates", action="store_true")
    s.add_argument("--out", required=True)

    s = sub.add_parser("latency", help="arrival-log analysis and latency-war simulation")
    lsub = s.add_subparsers(dest="latency_command", required=True)
    a = lsub.add_parser("analyze")
    a.add_argument("--arrivals", required=True)
    a.add_argument("--regions")
    a.add_argument("--offsets")
    a.add_argument("--out", required=True)
    a = lsub.add_parser("simulate")
    a.add_argument("--config", required=True)
    a.add_argument("--out", required=True)
    a.add_argument("--export-arrivals")

    s = sub.add_parser("report", help="emit the static report, or verify one")
    s.add_argument("action", nargs="?", choices=["verify"])
    s.add_argument("--in", dest="in_dir", required=True)
    s.add_argument("--out")
    s.add_argument("--thresholds", type=_thresholds, default=DEFAULT_THRESHOLDS)
    s.add_argument("--token", default=PROFIT_TOKEN)
    s.add_argument("--include-outlier-rates", action="store_true")

    s = sub.add_parser("gen-corpus", help="synthetic fixtures with planted ground truth")
    s.add_argument("--profile")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    return p


def dispatch(args: argparse.Namespace) -> int:
    cmd = args.command
    if cmd == "ingest":
        res = run_ingest(args.out, args.fixtures, args.endpoint, args.start, args.end, args.checkpoint,
                         args.workers, args.force, args.max_blocks)
        log.info("ingested %d blocks", res["blocks_this_run"])
    elif cmd == "detect":
        res = run_detect(args.in_dir, args.out, args.matchers, args.mode, args.workers)
        log.info("%d arbitrages, %d failed attempts", res["n_success"], res["n_failed_arbs"])
    elif cmd == "cluster":
        run_cluster(args.arbs, args.out, args.failed, args.include_failed, args.exclude)
    elif cmd == "metrics":
        run_metrics(args.arbs, args.failed, args.clusters, args.out, args.thresholds, args.blocks,
                    args.token, args.include_outlier_rates)
    elif cmd == "latency":
        if args.latency_command == "analyze":
            run_latency_analyze(args.arrivals, args.out, args.regions, args.offsets)
        else:
            res = run_latency_simulate(args.config, args.out, args.export_arrivals)
            print(json.dumps(res, indent=2, sort_keys=True))
    elif cmd == "report":
        if args.action == "verify":
            res = verify(args.in_dir)
            for problem in res.problems:
                print(problem, file=sys.stderr)
            print("verify: ok" if res.ok else f"verify: {len(res.problems)} problem(s)")
            return 0 if res.ok else 1
        if not args.out:
            raise UsageError("report needs --out (or use 'report verify --in DIR')")
        cfg = ReportConfig(args.thresholds, args.token, args.include_outlier_rates)
        manifest = emit_report(args.in_dir, args.out, cfg)
        print(f"{len(manifest['files'])} files written to {args.out}")
    elif cmd == "gen-corpus":
        truth = write_corpus(load_profile(args.profile), args.seed, args.out)
        print(f"{truth['n_txs']} transactions in {truth['n_blocks']} blocks; "
              f"{len(truth['planted_arbs'])} arbitrages, {len(truth['planted_failed'])} failed attempts")
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    level = os.environ.get("LATWAR_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed the offending flag
        return int(exc.code or 0)
    try:
        return dispatch(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"latwar: error: {exc}", file=sys.stderr)
        return 2
    except (LatwarError, OSError, ValueError, KeyError) as exc:
        print(f"latwar: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
