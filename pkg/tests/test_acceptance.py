"""The ten acceptance criteria, one test each; every test records a PASS/FAIL line."""

import json
import random
import time
from collections import Counter

import pytest

from latwar.arbdetect import ArbitrageRecord, is_arbitrage
from latwar.cli import run_cluster, run_detect, run_ingest, run_metrics
from latwar.corpus import CorpusProfile, load_profile, write_corpus
from latwar.detect import detect
from latwar.errors import DegenerateInput
from latwar.failedarb import ALL_OF, ANY_OF
from latwar.ingest import read_normalized
from latwar.io import iter_jsonl, load_config
from latwar.latency.analyze import analyze, distance_latency_correlation
from latwar.latency.geo import Region, shipped_regions
from latwar.latency.simulate import export_arrivals, parse_config, simulate
from latwar.logparse import Action
from latwar.metrics import DEFAULT_THRESHOLDS, profit_rate
from latwar.report import emit_report, verify
from latwar.searchers import InteractionGraph, connected_components
from latwar.stats import pearson, spearman

from conftest import ACCEPTANCE, CONFIGS, DEMO, run_pipeline
from test_arbdetect import oracle, random_actions
from test_searchers import as_nodes, flood_fill, random_graph
from test_stats import datasets, mp_p_value, mp_pearson, mp_ranks


def record(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def detection_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("c1")
    t0 = time.perf_counter()
    truth = write_corpus(CorpusProfile(), 7, out / "corpus")
    run_ingest(out / "ingest", fixtures=out / "corpus" / "fixtures")
    run_detect(out / "ingest", out / "detect")
    elapsed = time.perf_counter() - t0
    return out, truth, elapsed


def test_criterion_1_detection(detection_run):
    out, truth, elapsed = detection_run
    found = {r["tx_hash"] for r in iter_jsonl(out / "detect" / "arbs.jsonl")}
    planted = set(truth["planted_arbs"])
    tp = len(found & planted)
    precision = tp / len(found) if found else 0.0
    recall = tp / len(planted)
    arbs = [ArbitrageRecord.from_json(r) for r in iter_jsonl(out / "detect" / "arbs.jsonl")]
    lengths = Counter(a.path_length for a in arbs)
    starts = Counter(a.token_start for a in arbs)
    ust, luna = starts["uusd"] / len(arbs), starts["uluna"] / len(arbs)
    ok = (truth["n_txs"] >= 10_000 and len(planted) == 500 and precision == 1.0 and recall == 1.0
          and set(lengths) <= set(range(2, 7)) and {2, 3, 4, 5} <= set(lengths)
          and abs(ust - 0.87) <= 0.04 and abs(luna - 0.10) <= 0.04 and elapsed < 30)
    record(1, ok, f"{truth['n_txs']} txs, K={len(planted)}, precision={precision:.3f} recall={recall:.3f}, "
                  f"lengths={dict(sorted(lengths.items()))}, UST {ust:.1%} LUNA {luna:.1%}, {elapsed:.1f}s")


def test_criterion_2_oracle_equivalence():
    rng = random.Random(2)
    n, agree, positives = 10_000, 0, 0
    for _ in range(n):
        acts = random_actions(rng, rng.randint(0, 6))
        got = is_arbitrage(acts) is not None
        agree += got == oracle(acts)
        positives += got
    record(2, agree == n, f"{agree}/{n} agree ({positives} arbitrages)")


def test_criterion_3_profit_rate():
    acts = (Action("p", "uusd", "uluna", 105, 2), Action("q", "uluna", "uusd", 2, 115))
    rate = profit_rate(ArbitrageRecord("0" * 64, 1, 0, "s", "c", acts, "uusd", 105, 115, 1))
    record(3, round(float(rate), 3) == 0.095 and rate.denominator == 21,
           f"rate = {rate.numerator}/{rate.denominator} = {float(rate):.6f}")


def test_criterion_4_clustering():
    rng = random.Random(4)
    mismatches = invariant_failures = 0
    for _ in range(1000):
        g = random_graph(rng)
        clusters = connected_components(g)
        if as_nodes(clusters) != flood_fill(g.edges, g.senders, g.contracts):
            mismatches += 1
        flat_s = [s for c in clusters for s in c.senders]
        flat_c = [x for c in clusters for x in c.contracts]
        partition = sorted(flat_s) == sorted(g.senders) and sorted(flat_c) == sorted(g.contracts)
        g2 = InteractionGraph()
        for c in clusters:
            for s in c.senders:
                for x in c.contracts:
                    g2.add(s, x)
        if not partition or connected_components(g2) != clusters:
            invariant_failures += 1
    record(4, mismatches == 0 and invariant_failures == 0,
           f"1000 graphs, {mismatches} oracle mismatches, {invariant_failures} invariant failures")


def test_criterion_5_failed_recall(detection_run):
    out, truth, _ = detection_run
    planted = set(truth["planted_failed"])
    txs = list(read_normalized(out / "ingest" / "normalized.jsonl"))
    _, any_of, _ = detect(lambda: iter(txs), mode=ANY_OF)
    _, all_of, _ = detect(lambda: iter(txs), mode=ALL_OF)
    found = {f.tx_hash for f in any_of}
    recall = len(found & planted) / len(planted)
    ratio = len(planted) / len(truth["planted_arbs"])
    monotone = {f.key for f in all_of} <= {f.key for f in any_of}
    record(5, recall == 1.0 and monotone and abs(ratio - 3.55) < 0.01,
           f"planted ratio {ratio:.2f}:1, any-of recall {recall:.3f}, all-of subset of any-of: {monotone}")


def test_criterion_6_statistics():
    worst = 0.0
    for x, y in datasets():
        for res, ref in ((pearson(x, y), mp_pearson(x, y)),
                         (spearman(x, y), mp_pearson(mp_ranks(x), mp_ranks(y)))):
            worst = max(worst, abs(res.rho - float(ref)), abs(res.p_value - float(mp_p_value(ref, len(x)))))
    rng = random.Random(6)
    bound_ok = invariant_ok = True
    for _ in range(10_000):
        n = rng.randint(3, 25)
        x = [rng.uniform(-50, 50) for _ in range(n)]
        y = [v + rng.gauss(0, rng.choice([0.1, 10, 1000])) for v in x]
        try:
            p, s = pearson(x, y), spearman(x, y)
        except DegenerateInput:
            continue
        bound_ok &= abs(p.rho) <= 1 and abs(s.rho) <= 1
        invariant_ok &= spearman([v ** 3 for v in x], [2 * v + 7 for v in y]).rho == s.rho
    record(6, worst < 1e-9 and bound_ok and invariant_ok,
           f"max oracle error {worst:.2e}, |rho|<=1 on 10000: {bound_ok}, monotone invariance: {invariant_ok}")


def test_criterion_7_correlation_signs(tmp_path):
    write_corpus(load_profile(CONFIGS / "corpus_correlation.json"), 7, tmp_path / "corpus")
    run_detect(tmp_path / "corpus" / "fixtures", tmp_path / "det")
    run_cluster(tmp_path / "det" / "arbs.jsonl", tmp_path / "clusters.json")
    doc = run_metrics(tmp_path / "det" / "arbs.jsonl", tmp_path / "det" / "failed.jsonl",
                      tmp_path / "clusters.json", tmp_path / "metrics")
    rows = doc["correlations"]
    parts, ok = [], [r["threshold"] for r in rows] == list(DEFAULT_THRESHOLDS)
    for r in rows:
        sr, rr = r["spearman_success_rate_profit_rho"], r["spearman_repeated_rate_profit_rho"]
        good = sr is not None and rr is not None and sr <= -0.3 and rr >= 0.3
        ok &= good
        parts.append(f"{r['threshold']}:n={r['n']} sr={sr if sr is None else round(sr, 2)} "
                     f"rr={rr if rr is None else round(rr, 2)}")
    record(7, ok, "; ".join(parts))


def _distance_rho(jitter, regions=None):
    raw = load_config(CONFIGS / "latency_distance.json")
    raw["latency_model"]["jitter_ms"] = jitter
    cfg = parse_config(raw, CONFIGS)
    res = analyze(export_arrivals(simulate(cfg)), regions or shipped_regions())
    return res, cfg


def test_criterion_8_latency_analyzer():
    t0 = time.perf_counter()
    noisy, cfg = _distance_rho(20.0)
    clean, _ = _distance_rho(0.0)
    regions = shipped_regions()
    coords = [(r.lat, r.lon) for r in regions]
    random.Random(8).shuffle(coords)
    shuffled = [Region(r.name, la, lo) for r, (la, lo) in zip(regions, coords)]
    rho_shuf = distance_latency_correlation(noisy.matrix, shuffled).rho
    elapsed = time.perf_counter() - t0
    n_tx = len(noisy.first.winners)
    ok = (noisy.correlation.rho >= 0.5 and clean.correlation.rho >= 0.99 and abs(rho_shuf) < 0.3
          and n_tx >= 5000 and len(cfg.regions) == 24 and elapsed < 60)
    record(8, ok, f"{n_tx} txs over {len(cfg.regions)} regions: rho(jitter 20)={noisy.correlation.rho:.4f}, "
                  f"rho(jitter 0)={clean.correlation.rho:.4f}, rho(shuffled)={rho_shuf:.4f}, {elapsed:.1f}s")


def test_criterion_9_latency_war():
    raw = load_config(CONFIGS / "latency_war.json")
    parts, ok = [], True
    for seed in (1, 2, 3):
        cfg = parse_config({**raw, "seed": seed}, CONFIGS)
        a_inst = next(s for s in cfg.searchers if s.id == "A").instance_regions
        b_inst = next(s for s in cfg.searchers if s.id == "B").instance_regions
        out = simulate(cfg)
        again = simulate(cfg)
        a, b = out.searchers["A"], out.searchers["B"]
        good = (len(a_inst) == 8 and len(b_inst) == 1 and cfg.n_opportunities == 10_000
                and cfg.opportunity_origin == "uniform" and out.win_share("A") > 0.6
                and a.success_rate < b.success_rate and a.repeated_tx_rate > 1.2
                and again.summary() == out.summary() and again.opportunities == out.opportunities)
        ok &= good
        parts.append(f"seed {seed}: A share {out.win_share('A'):.3f}, success A {float(a.success_rate):.3f} "
                     f"< B {float(b.success_rate):.3f}, A repeated {float(a.repeated_tx_rate):.2f}")
    record(9, ok, "; ".join(parts) + "; re-runs identical")


def test_criterion_10_end_to_end(tmp_path):
    manifests = []
    for run in ("a", "b"):
        stage = run_pipeline(DEMO / "fixtures", tmp_path / run)
        emit_report(stage, tmp_path / run / "report")
        manifests.append((tmp_path / run / "report" / "manifest.json").read_bytes())
    res = verify(tmp_path / "a" / "report")
    n_files = len(json.loads(manifests[0])["files"])
    record(10, manifests[0] == manifests[1] and res.ok,
           f"{n_files} files, manifests identical: {manifests[0] == manifests[1]}, verify ok: {res.ok}"
           + ("" if res.ok else f" {res.problems[:3]}"))
