"""Two-pass detection: successful arbitrages first, then failed attempts."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable

from latwar.arbdetect import ArbitrageRecord, Verdict, classify
from latwar.failedarb import ANY_OF, FailedArbRecord, SearcherSignatures, build_signatures, is_failed_arbitrage
from latwar.ingest import NormalizedTx
from latwar.logparse import ParseStats, default_registry


@dataclass
class DetectSummary:
    n_txs: int = 0
    n_success: int = 0
    n_non_arb: int = 0
    n_reverted: int = 0
    n_concatenated_cycles: int = 0
    n_failed_arbs: int = 0
    mode: str = ANY_OF
    parse: ParseStats = field(default_factory=ParseStats)

    def to_json(self) -> dict:
        return {
            "n_txs": self.n_txs,
            "n_success": self.n_success,
            "n_non_arb": self.n_non_arb,
            "n_reverted": self.n_reverted,
            "n_concatenated_cycles": self.n_concatenated_cycles,
            "n_failed_arbs": self.n_failed_arbs,
            "failed_mode": self.mode,
            "runs": self.parse.runs,
            "matched_runs": self.parse.matched_runs,
            "unmatched_runs": self.parse.unmatched_runs,
            "inconsistent_runs": self.parse.inconsistent_runs,
        }


def find_arbitrages(txs: Iterable[NormalizedTx], registry=None,
                    summary: DetectSummary | None = None) -> list[ArbitrageRecord]:
    registry = registry if registry is not None else default_registry()
    summary = summary if summary is not None else DetectSummary()
    out = []
    for tx in txs:
        summary.n_txs += 1
        res = classify(tx, registry, summary.parse)
        if res.verdict is Verdict.SUCCESS:
            summary.n_success += 1
            out.append(res.record)
        elif res.verdict is Verdict.REVERTED:
            summary.n_reverted += 1
        else:
            summary.n_non_arb += 1
            summary.n_concatenated_cycles += res.concatenated
    return out


def find_failed(txs: Iterable[NormalizedTx], sig: SearcherSignatures, mode: str = ANY_OF) -> list[FailedArbRecord]:
    out = []
    for tx in txs:
        if tx.code == 0:
            continue
        rec = is_failed_arbitrage(tx, sig, mode)
        if rec is not None:
            out.append(rec)
    return out


def _chunk_arbs(args):
    chunk, registry = args
    s = DetectSummary()
    return find_arbitrages(chunk, registry, s), s


def detect(
    source: Callable[[], Iterable[NormalizedTx]],
    registry=None,
    mode: str = ANY_OF,
    workers: int = 1,
    chunk_size: int = 5000,
) -> tuple[list[ArbitrageRecord], list[FailedArbRecord], DetectSummary]:
    """Run both passes over ``source()``, which must be re-iterable via a fresh call.

    With ``workers > 1`` the first pass is split into chunks; results are
    concatenated in input order so the output does not depend on the worker
    count.
    """
    summary = DetectSummary(mode=mode)
    if workers <= 1:
        arbs = find_arbitrages(source(), registry, summary)
    else:
        registry = registry if registry is not None else default_registry()
        chunks, buf = [], []
        for tx in source():
            buf.append(tx)
            if len(buf) >= chunk_size:
                chunks.append(buf)
                buf = []
        if buf:
            chunks.append(buf)
        arbs = []
        with ProcessPoolExecutor(workers) as pool:
            for part, s in pool.map(_chunk_arbs, [(c, registry) for c in chunks]):
                arbs.extend(part)
                for name in ("n_txs", "n_success", "n_non_arb", "n_reverted", "n_concatenated_cycles"):
                    setattr(summary, name, getattr(summary, name) + getattr(s, name))
                summary.parse.merge(s.parse)
    sig = build_signatures(arbs)
    failed = find_failed(source(), sig, mode)
    summary.n_failed_arbs = len(failed)
    return arbs, failed, summary
