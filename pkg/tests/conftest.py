import hashlib
import json
from pathlib import Path

import pytest

from latwar.ingest import LogEvent, NormalizedTx

ROOT = Path(__file__).resolve().parent.parent
CONFIGS = ROOT / "configs"
DEMO = ROOT / "demo"


def h(n) -> str:
    return hashlib.sha256(str(n).encode()).hexdigest()


def swap_attrs(pair, offer, ask, amt_in, amt_out):
    return [("_contract_address", pair), ("action", "swap"), ("offer_asset", offer), ("ask_asset", ask),
            ("offer_amount", str(amt_in)), ("return_amount", str(amt_out))]


def wasm(*attr_lists, msg_index=0):
    attrs = [a for lst in attr_lists for a in lst]
    return LogEvent("wasm", tuple(attrs), msg_index)


def make_tx(n=0, sender="terra1sender", contract="terra1bot", msg=None, code=0, events=(), height=10,
            gas=100_000, msg_index=0):
    return NormalizedTx(h(n), height, 0, sender, contract, msg if msg is not None else {"run": {"x": 1}},
                        code, gas, tuple(events), msg_index)


def cycle_tx(n, hops, sender="terra1sender", contract="terra1bot", height=10, msg=None):
    """hops: [(pair, token_in, token_out, amount_in, amount_out), ...]"""
    ev = wasm(*[swap_attrs(*hop) for hop in hops])
    return make_tx(n, sender, contract, msg, 0, (ev,), height)


def fixture_block(height, txs, time="2021-11-01T00:00:00.000Z"):
    return {"height": height, "time": time, "txs": txs}


def write_fixture(path: Path, blocks):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(json.dumps(b) + "\n" for b in blocks))
    return path


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """Default-profile corpus written once per session."""
    from latwar.corpus import CorpusProfile, write_corpus

    out = tmp_path_factory.mktemp("corpus")
    prof = CorpusProfile(n_blocks=300, n_arbs=150, n_searchers=10, n_users=300,
                         noise={"user_swap": 600, "lossy_cycle": 100, "open_chain": 100, "concatenated": 30,
                                "bank_send": 200, "reverted_user": 100, "multi_message": 30,
                                "unmatched_only": 40})
    truth = write_corpus(prof, 3, out)
    return out, truth


def cli(*argv) -> int:
    from latwar.cli import main

    return main([str(a) for a in argv])


def run_pipeline(fixtures: Path, out: Path) -> Path:
    """ingest -> detect -> cluster -> metrics, then stage the report inputs; returns the staging dir."""
    import shutil

    ing, det, stage = out / "ingest", out / "detect", out / "stage"
    assert cli("ingest", "--fixtures", fixtures, "--checkpoint", ing / "ck.json", "--out", ing) == 0
    assert cli("detect", "--in", ing, "--out", det) == 0
    assert cli("cluster", "--arbs", det / "arbs.jsonl", "--failed", det / "failed.jsonl",
               "--out", out / "clusters" / "clusters.json") == 0
    assert cli("metrics", "--arbs", det / "arbs.jsonl", "--failed", det / "failed.jsonl", "--clusters",
               out / "clusters" / "clusters.json", "--blocks", ing / "blocks.jsonl", "--out", out / "metrics") == 0
    stage.mkdir(parents=True, exist_ok=True)
    for src in (det / "arbs.jsonl", det / "failed.jsonl", det / "detect_summary.json",
                out / "clusters" / "clusters.json", ing / "blocks.jsonl"):
        shutil.copy2(src, stage / src.name)
    return stage


@pytest.fixture(scope="session")
def pipeline_out(small_corpus, tmp_path_factory):
    corpus_dir, truth = small_corpus
    out = tmp_path_factory.mktemp("pipeline")
    stage = run_pipeline(corpus_dir / "fixtures", out)
    return out, stage, truth


ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
