import csv
import json

from latwar.io import iter_jsonl, read_json, read_jsonl_meta

from conftest import CONFIGS, cli, fixture_block, write_fixture


def test_usage_errors(tmp_path, capsys):
    assert cli("nope") == 2
    assert cli("gen-corpus", "--out", tmp_path) == 2  # --seed is required
    assert cli("ingest", "--out", tmp_path) == 2
    assert cli("ingest", "--endpoint", "http://x", "--out", tmp_path) == 2  # needs --from/--to
    assert cli("cluster", "--arbs", tmp_path / "a", "--include-failed", "--out", tmp_path / "c.json") == 2
    assert cli("metrics", "--arbs", "a", "--clusters", "c", "--thresholds", "10,x", "--out", tmp_path) == 2
    assert cli("report", "--in", tmp_path) == 2
    assert "error" in capsys.readouterr().err


def test_runtime_errors(tmp_path):
    ck = tmp_path / "ck.json"
    ck.write_text("garbage")
    fx = write_fixture(tmp_path / "fx" / "a.jsonl", [fixture_block(1, [])]).parent
    assert cli("ingest", "--fixtures", fx, "--checkpoint", ck, "--out", tmp_path / "o") == 1
    assert cli("ingest", "--fixtures", fx, "--checkpoint", ck, "--out", tmp_path / "o", "--force") == 0
    assert cli("latency", "simulate", "--config", tmp_path / "missing.json", "--out", tmp_path) == 1
    assert cli("report", "verify", "--in", tmp_path / "nothing") == 1


def test_ingest_resume_via_cli(small_corpus, tmp_path):
    corpus_dir, _ = small_corpus
    fx = corpus_dir / "fixtures"
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli("ingest", "--fixtures", fx, "--out", a) == 0
    assert cli("ingest", "--fixtures", fx, "--checkpoint", b / "ck.json", "--out", b, "--max-blocks", 120) == 0
    assert read_json(b / "ck.json")["last_height"] == 5_000_120
    assert cli("ingest", "--fixtures", fx, "--checkpoint", b / "ck.json", "--out", b) == 0
    for name in ("normalized.jsonl", "blocks.jsonl"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    sa, sb = read_json(a / "ingest_summary.json"), read_json(b / "ingest_summary.json")
    assert sa["n_txs"] == sb["n_txs"] and sb["blocks_this_run"] == 180
    assert sa["n_execute_txs"] + sa["n_non_execute"] + sa["n_decode_errors"] == sa["n_txs"]
    assert "multi_message" in json.dumps(read_jsonl_meta(a / "normalized.jsonl"))


def test_detect_on_fixture_dir_and_empty(small_corpus, tmp_path):
    corpus_dir, truth = small_corpus
    assert cli("detect", "--in", corpus_dir / "fixtures", "--out", tmp_path / "d", "--workers", 2) == 0
    hashes = sorted(r["tx_hash"] for r in iter_jsonl(tmp_path / "d" / "arbs.jsonl"))
    assert hashes == truth["planted_arbs"]
    empty = tmp_path / "empty"
    write_fixture(empty / "x.jsonl", [fixture_block(1, [])])
    assert cli("detect", "--in", empty, "--out", tmp_path / "e") == 0
    assert list(iter_jsonl(tmp_path / "e" / "arbs.jsonl")) == []
    assert read_json(tmp_path / "e" / "detect_summary.json")["n_success"] == 0


def test_detect_all_of_is_subset(pipeline_out, tmp_path):
    out, _, _ = pipeline_out
    assert cli("detect", "--in", out / "ingest", "--mode", "all-of", "--out", tmp_path / "d") == 0
    strict = {r["tx_hash"] for r in iter_jsonl(tmp_path / "d" / "failed.jsonl")}
    loose = {r["tx_hash"] for r in iter_jsonl(out / "detect" / "failed.jsonl")}
    assert strict <= loose
    assert read_jsonl_meta(tmp_path / "d" / "failed.jsonl")["failed_mode"] == "all-of"


def test_cluster_outputs(pipeline_out, tmp_path):
    out, _, truth = pipeline_out
    doc = read_json(out / "clusters" / "clusters.json")
    assert len(doc["clusters"]) == len(truth["searchers"])
    assert (out / "clusters" / "graph.dot").exists() and (out / "clusters" / "graph.json").exists()
    excl = tmp_path / "excl.txt"
    excl.write_text("# routers\n" + doc["clusters"][0]["contracts"][0] + "\n")
    assert cli("cluster", "--arbs", out / "detect" / "arbs.jsonl", "--exclude", excl,
               "--out", tmp_path / "c.json") == 0
    contracts = {c for cl in read_json(tmp_path / "c.json")["clusters"] for c in cl["contracts"]}
    assert doc["clusters"][0]["contracts"][0] not in contracts


def test_metrics_outputs(pipeline_out):
    out, _, truth = pipeline_out
    rows = list(csv.DictReader(open(out / "metrics" / "correlations.csv")))
    assert [int(r["threshold"]) for r in rows] == [10, 50, 100, 250, 500, 750]
    searchers = list(csv.DictReader(open(out / "metrics" / "searchers.csv")))
    assert sum(int(r["n_success"]) for r in searchers) == len(truth["planted_arbs"])
    dist = read_json(out / "metrics" / "distributions.json")["data"]
    assert dist["counts"]["n_success"] == len(truth["planted_arbs"])


def test_latency_cli(tmp_path, capsys):
    cfg = json.loads((CONFIGS / "latency_war.json").read_text())
    cfg["n_opportunities"] = 300
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    assert cli("latency", "simulate", "--config", tmp_path / "cfg.json", "--out", tmp_path / "sim",
               "--export-arrivals", tmp_path / "arr" / "arrivals.csv") == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["searchers"]["A"]["n_instances"] == 8
    assert (tmp_path / "sim" / "opportunities.jsonl").exists()
    assert cli("latency", "analyze", "--arrivals", tmp_path / "arr" / "arrivals.csv", "--regions",
               tmp_path / "arr" / "regions.csv", "--out", tmp_path / "an") == 0
    corr = read_json(tmp_path / "an" / "correlation.json")["correlation"]
    assert corr["rho"] > 0.5
    rows = list(csv.reader(open(tmp_path / "an" / "heatmap.csv")))
    assert rows[0][0] == "first_seen" and len(rows) == len(rows[0])


def test_gen_corpus_cli(tmp_path):
    assert cli("gen-corpus", "--profile", CONFIGS / "corpus_demo.json", "--seed", 4, "--out", tmp_path / "g") == 0
    truth = read_json(tmp_path / "g" / "truth.json")
    assert len(truth["planted_arbs"]) == 100
    assert sorted(p.name for p in (tmp_path / "g" / "fixtures").iterdir()) == [
        "blocks-0005000001-0005000100.jsonl", "blocks-0005000101-0005000200.jsonl"]


def test_report_cli(pipeline_out, tmp_path, capsys):
    _, stage, _ = pipeline_out
    assert cli("report", "--in", stage, "--out", tmp_path / "r") == 0
    assert cli("report", "verify", "--in", tmp_path / "r") == 0
    assert "verify: ok" in capsys.readouterr().out
    (tmp_path / "r" / "dist" / "counts.json").write_text("{}")
    assert cli("report", "verify", "--in", tmp_path / "r") == 1


def test_log_level_env(monkeypatch, tmp_path):
    monkeypatch.setenv("LATWAR_LOG", "debug")
    fx = write_fixture(tmp_path / "fx" / "a.jsonl", [fixture_block(1, [])]).parent
    assert cli("ingest", "--fixtures", fx, "--out", tmp_path / "o") == 0
