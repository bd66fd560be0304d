"""Searcher statistics, distributions and correlation tables.

Money stays in integers and :class:`fractions.Fraction`; floats appear only
inside correlation statistics and in the plot-ready outputs.
"""

from __future__ import annotations

import logging
import math
import statistics
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from latwar.arbdetect import ArbitrageRecord
from latwar.errors import AmbiguousAssignment, DegenerateInput, NoActivity
from latwar.failedarb import FailedArbRecord
from latwar.io import canonical_json
from latwar.searchers import UNCLUSTERED, ClusterIndex, SearcherCluster
from latwar.stats import CorrelationResult, pearson, spearman

log = logging.getLogger(__name__)

DEFAULT_THRESHOLDS = (10, 50, 100, 250, 500, 750)
PROFIT_TOKEN = "uusd"
MICRO = 10**6


def profit_rate(a: ArbitrageRecord) -> Fraction:
    if a.amount_in <= 0:
        raise ValueError("amount_in must be positive")
    return Fraction(a.amount_out - a.amount_in, a.amount_in)


def repeated_tx_rate(items: Iterable[tuple[int, str]]) -> Fraction:
    """Transactions per distinct (block height, canonical message) group.

    ``items`` holds one ``(height, message_key)`` pair per transaction.
    """
    total = 0
    groups = set()
    for height, key in items:
        total += 1
        groups.add((height, key))
    if total == 0:
        raise NoActivity("no transactions")
    return Fraction(total, len(groups))


def success_rate(n_success: int, n_failed: int) -> Fraction:
    if n_success + n_failed == 0:
        raise NoActivity("no successful or failed arbitrages")
    return Fraction(n_success, n_success + n_failed)


def message_key(msg) -> str:
    return canonical_json(msg)


@dataclass
class SearcherStats:
    searcher_id: str
    n_success: int = 0
    n_failed: int = 0
    profit_by_token: dict[str, int] = field(default_factory=dict)
    n_contracts: int = 0
    n_senders: int = 0
    repeated_tx_rate: Fraction = Fraction(1)
    gas_success: int = 0
    gas_failed: int = 0

    @property
    def success_rate(self) -> Fraction:
        return success_rate(self.n_success, self.n_failed)

    def profit(self, token: str = PROFIT_TOKEN) -> int:
        return self.profit_by_token.get(token, 0)

    def to_row(self) -> dict:
        return {
            "searcher_id": self.searcher_id,
            "n_success": self.n_success,
            "n_failed": self.n_failed,
            "success_rate": float(self.success_rate) if self.n_success + self.n_failed else "",
            "n_contracts": self.n_contracts,
            "n_senders": self.n_senders,
            "repeated_tx_rate": float(self.repeated_tx_rate),
            "gas_success": self.gas_success,
            "gas_failed": self.gas_failed,
            "profit_by_token": ";".join(f"{t}={v}" for t, v in sorted(self.profit_by_token.items())),
        }


@dataclass
class Attribution:
    stats: list[SearcherStats]
    n_unclustered_failed: int = 0
    n_ambiguous_failed: int = 0


def searcher_stats(arbs: Sequence[ArbitrageRecord], failed: Sequence[FailedArbRecord],
                   clusters: Sequence[SearcherCluster]) -> Attribution:
    """Aggregate per-searcher statistics.

    A failed record whose sender and contract fall in different clusters is
    attributed to the contract's cluster and counted as ambiguous. Records
    matching no cluster go to a pseudo-searcher ``unclustered`` so totals are
    conserved; :func:`correlation_suite` skips it.
    """
    index = ClusterIndex(clusters)
    by_id = {c.searcher_id: SearcherStats(c.searcher_id, n_contracts=len(c.contracts),
                                          n_senders=len(c.senders)) for c in clusters}
    groups: dict[str, list[tuple[int, str]]] = defaultdict(list)
    out = Attribution([])

    for a in arbs:
        sid = index.assign(a.sender, a.contract)
        st = by_id.setdefault(sid, SearcherStats(sid))
        st.n_success += 1
        st.profit_by_token[a.token_start] = st.profit_by_token.get(a.token_start, 0) + a.profit
        st.gas_success += a.gas_used
        groups[sid].append((a.height, message_key(a.execute_msg)))

    for f in failed:
        try:
            sid = index.assign(f.sender, f.contract)
        except AmbiguousAssignment:
            sid = index.by_contract[f.contract]
            out.n_ambiguous_failed += 1
        if sid == UNCLUSTERED:
            out.n_unclustered_failed += 1
        st = by_id.setdefault(sid, SearcherStats(sid))
        st.n_failed += 1
        st.gas_failed += f.gas_used
        groups[sid].append((f.height, message_key(f.execute_msg)))

    for sid, items in groups.items():
        by_id[sid].repeated_tx_rate = repeated_tx_rate(items)
    out.stats = sorted(by_id.values(), key=lambda s: s.searcher_id)
    return out


def _safe(fn, x, y) -> CorrelationResult | None:
    try:
        return fn(x, y)
    except DegenerateInput:
        return None


def correlation_suite(stats: Sequence[SearcherStats], thresholds: Sequence[int] = DEFAULT_THRESHOLDS,
                      token: str = PROFIT_TOKEN) -> list[dict]:
    """One row per minimum-success threshold.

    Each row reports the number of searchers kept, the share of all searchers
    below the threshold, Spearman success-rate vs profit, Spearman repeated-rate
    vs profit, and the Pearson profit/contract/sender vs arbitrage-count
    relations. Statistics that cannot be computed (n < 3, zero variance) are
    ``None``.
    """
    rows = []
    stats = [s for s in stats if s.searcher_id != UNCLUSTERED]
    total = len(stats)
    for th in thresholds:
        if th < 0:
            raise ValueError("thresholds must be non-negative")
        kept = [s for s in stats if s.n_success >= th]
        profit = [s.profit(token) for s in kept]
        n_arbs = [s.n_success for s in kept]
        corr = {
            "spearman_success_rate_profit": _safe(spearman, [float(s.success_rate) for s in kept], profit),
            "spearman_repeated_rate_profit": _safe(spearman, [float(s.repeated_tx_rate) for s in kept], profit),
            "pearson_profit_n_arbs": _safe(pearson, profit, n_arbs),
            "pearson_contracts_n_arbs": _safe(pearson, [s.n_contracts for s in kept], n_arbs),
            "pearson_senders_n_arbs": _safe(pearson, [s.n_senders for s in kept], n_arbs),
        }
        row = {
            "threshold": th,
            "percentile": 100.0 * (total - len(kept)) / total if total else 0.0,
            "n": len(kept),
        }
        for name, res in corr.items():
            row[f"{name}_rho"] = res.rho if res else None
            row[f"{name}_p"] = res.p_value if res else None
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# Distributions


def histogram(values: Sequence[float], edges: Sequence[float]) -> dict:
    """Counts per half-open bin [edges[i], edges[i+1]); the last bin is closed."""
    counts = [0] * (len(edges) - 1)
    for v in values:
        if v < edges[0] or v > edges[-1]:
            continue
        lo, hi = 0, len(edges) - 1
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if v >= edges[mid]:
                lo = mid
            else:
                hi = mid
        counts[lo] += 1
    return {"edges": list(edges), "counts": counts}


def _summary(values: Sequence[float]) -> dict:
    if not values:
        return {"n": 0}
    vs = sorted(values)
    q = statistics.quantiles(vs, n=100, method="inclusive") if len(vs) > 1 else [vs[0]] * 99
    return {
        "n": len(vs),
        "mean": math.fsum(vs) / len(vs),
        "std": statistics.pstdev(vs) if len(vs) > 1 else 0.0,
        "median": statistics.median(vs),
        "p25": q[24],
        "p90": q[89],
        "max": vs[-1],
    }


def log_edges(lo_exp: int, hi_exp: int, per_decade: int = 4) -> list[float]:
    return [10 ** (lo_exp + i / per_decade) for i in range((hi_exp - lo_exp) * per_decade + 1)]


def top_table(arbs: Sequence[ArbitrageRecord], by: str, other: str, limit: int = 10) -> list[dict]:
    """Top ``by`` addresses (sender or contract) by successful arbitrage count."""
    counts = Counter(getattr(a, by) for a in arbs)
    partners: dict[str, set] = defaultdict(set)
    for a in arbs:
        partners[getattr(a, by)].add(getattr(a, other))
    total = len(arbs)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:limit]
    return [
        {by: k, "successful_arbitrages": n, f"{other}s": len(partners[k]),
         "pct": round(100.0 * n / total, 2)}
        for k, n in ranked
    ]


def pair_ranking(arbs: Sequence[ArbitrageRecord]) -> list[dict]:
    uses = Counter()
    tokens: dict[str, set] = defaultdict(set)
    for a in arbs:
        for act in a.actions:
            uses[act.pair_address] += 1
            tokens[act.pair_address].update((act.token_in, act.token_out))
    total = sum(uses.values())
    rows, cum = [], 0
    for rank, (pair, n) in enumerate(sorted(uses.items(), key=lambda kv: (-kv[1], kv[0])), 1):
        cum += n
        toks = sorted(tokens[pair])
        rows.append({"rank": rank, "pair": pair, "swaps": n, "rate": n / total,
                     "cumulative": cum / total, "tokens": "|".join(toks)})
    return rows


def coverage(ranking: Sequence[dict], top: int) -> float:
    if not ranking:
        return 0.0
    return ranking[min(top, len(ranking)) - 1]["cumulative"]


def distributions(arbs: Sequence[ArbitrageRecord], failed: Sequence[FailedArbRecord] = (),
                  blocks: Sequence[dict] | None = None, include_outlier_rates: bool = False) -> dict:
    """Plot-ready distribution data for the volume, token, amount, path, pair and profit figures.

    ``blocks`` are per-block ingest counters (``height``, ``n_execute_txs``);
    without them the per-block transaction distribution is omitted.
    """
    report: dict = {}
    arbs_per_height = Counter(a.height for a in arbs)
    failed_per_height = Counter(f.height for f in failed)

    if blocks:
        per_block = [int(b["n_execute_txs"]) for b in blocks]
        top = max(per_block) if per_block else 0
        report["txs_per_block"] = {
            **histogram(per_block, list(range(0, top + 2))),
            "summary": _summary(per_block),
            "n_blocks": len(per_block),
        }
        heights = [int(b["height"]) for b in blocks]
        n_with = sum(1 for h in heights if arbs_per_height.get(h))
        report["blocks_with_arbs_fraction"] = n_with / len(heights) if heights else 0.0
        s = [arbs_per_height.get(h, 0) for h in heights]
        fl = [failed_per_height.get(h, 0) for h in heights]
        res = _safe(pearson, fl, s)
        report["failed_vs_success_per_block"] = res.to_json() if res else None

    per_block_arbs = Counter(arbs_per_height.values())
    n_blocks_arb = sum(per_block_arbs.values())
    report["arbs_per_block"] = {
        "counts": {str(k): v for k, v in sorted(per_block_arbs.items())},
        "fractions": {str(k): v / n_blocks_arb for k, v in sorted(per_block_arbs.items())},
        "n_blocks_with_arbs": n_blocks_arb,
    }

    token_in = Counter(a.token_start for a in arbs)
    report["token_in"] = {
        "counts": dict(sorted(token_in.items(), key=lambda kv: (-kv[1], kv[0]))),
        "fractions": {t: n / len(arbs) for t, n in sorted(token_in.items(), key=lambda kv: (-kv[1], kv[0]))},
    }

    amounts: dict[str, list[float]] = defaultdict(list)
    for a in arbs:
        amounts[a.token_start].append(a.amount_in / MICRO)
    report["amount_in"] = {
        t: {**histogram(v, log_edges(-6, 9)), "summary": _summary(v)}
        for t, v in sorted(amounts.items())
    }

    lengths = Counter(a.path_length for a in arbs)
    report["path_length"] = {
        "counts": {str(k): v for k, v in sorted(lengths.items())},
        "percent": {str(k): 100.0 * v / len(arbs) for k, v in sorted(lengths.items())},
        "percent_2_or_3": 100.0 * (lengths.get(2, 0) + lengths.get(3, 0)) / len(arbs) if arbs else 0.0,
    }

    ranking = pair_ranking(arbs)
    report["pairs"] = {
        "n_pairs": len(ranking),
        "coverage_top10": coverage(ranking, 10),
        "coverage_top50": coverage(ranking, 50),
        "coverage_top100": coverage(ranking, 100),
    }

    rates = [profit_rate(a) for a in arbs]
    kept = [float(r) for r in rates if include_outlier_rates or r <= 1]
    report["profit_rate"] = {
        **histogram(kept, [i / 20 for i in range(21)] if not include_outlier_rates
                    else log_edges(-9, 4)),
        "n_excluded_above_1": 0 if include_outlier_rates else sum(1 for r in rates if r > 1),
        "fraction_below_1": sum(1 for r in rates if r < 1) / len(rates) if rates else 0.0,
        "max": float(max(rates)) if rates else None,
    }

    profit = Counter()
    for a in arbs:
        profit[a.token_start] += a.profit
    report["profit_by_token"] = {t: str(v) for t, v in sorted(profit.items())}
    report["gas"] = {"success": sum(a.gas_used for a in arbs), "failed": sum(f.gas_used for f in failed)}
    report["counts"] = {
        "n_success": len(arbs),
        "n_failed": len(failed),
        "failed_per_success": len(failed) / len(arbs) if arbs else None,
    }
    return report


def searcher_shape_correlations(stats: Sequence[SearcherStats], token: str = PROFIT_TOKEN) -> dict:
    """Pearson relations between searcher complexity, activity and profit."""
    contracts = [s.n_contracts for s in stats]
    senders = [s.n_senders for s in stats]
    out = {"contracts_vs_senders": _safe(pearson, contracts, senders)}
    active = [s for s in stats if s.profit_by_token.get(token)]
    out["profit_vs_n_arbs"] = _safe(pearson, [s.profit(token) for s in active], [s.n_success for s in active])
    return {k: (v.to_json() if v else None) for k, v in out.items()}


def profit_concentration(stats: Sequence[SearcherStats], token: str = PROFIT_TOKEN, top: int = 3) -> float:
    profits = sorted((s.profit(token) for s in stats), reverse=True)
    total = sum(profits)
    return sum(profits[:top]) / total if total else 0.0


def activity_shares(stats: Sequence[SearcherStats], cutoffs: Sequence[int] = (10, 100, 1000)) -> dict:
    n = len(stats)
    return {str(c): (sum(1 for s in stats if s.n_success >= c) / n if n else 0.0) for c in cutoffs}
