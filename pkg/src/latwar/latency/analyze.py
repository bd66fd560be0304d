"""First-seen analysis of multi-region mempool arrival logs."""

from __future__ import annotations

import csv
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

from latwar.errors import DegenerateInput
from latwar.latency.geo import Region, haversine_km
from latwar.stats import CorrelationResult, pearson

MAX_SKEW_MS = 15
HIST_LIMIT_MS = 7000


@dataclass(frozen=True, order=True)
class ArrivalRecord:
    t_ms: int
    tx_id: str
    region: str


def read_arrivals(path: str | Path) -> list[ArrivalRecord]:
    out = []
    seen = set()
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.DictReader(fh), 2):
            try:
                rec = ArrivalRecord(int(row["t_ms"]), row["tx_id"], row["region"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: bad arrival row: {exc}") from exc
            if (rec.tx_id, rec.region) in seen:
                raise ValueError(f"{path}:{lineno}: duplicate arrival for {rec.tx_id} at {rec.region}")
            seen.add((rec.tx_id, rec.region))
            out.append(rec)
    return out


def write_arrivals(path: str | Path, arrivals: Iterable[ArrivalRecord]) -> None:
    rows = sorted(arrivals, key=lambda a: (a.t_ms, a.tx_id, a.region))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tx_id", "region", "t_ms"])
        for a in rows:
            w.writerow([a.tx_id, a.region, a.t_ms])


def read_offsets(path: str | Path) -> dict[str, float]:
    """Per-region clock offsets (``region,offset_ms``); positive means the clock runs ahead."""
    offsets = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            off = float(row["offset_ms"])
            if abs(off) > MAX_SKEW_MS:
                raise ValueError(f"offset {off} ms for {row['region']} exceeds ±{MAX_SKEW_MS} ms")
            offsets[row["region"]] = off
    return offsets


def apply_offsets(arrivals: Iterable[ArrivalRecord], offsets: Mapping[str, float]) -> list[ArrivalRecord]:
    return [ArrivalRecord(int(round(a.t_ms - offsets.get(a.region, 0.0))), a.tx_id, a.region) for a in arrivals]


def _by_tx(arrivals: Iterable[ArrivalRecord]) -> dict[str, list[ArrivalRecord]]:
    groups: dict[str, list[ArrivalRecord]] = defaultdict(list)
    for a in arrivals:
        groups[a.tx_id].append(a)
    for recs in groups.values():
        # earliest first; equal times fall back to region name order
        recs.sort(key=lambda a: (a.t_ms, a.region))
    return groups


@dataclass
class FirstSeen:
    winners: dict[str, tuple[str, int]] = field(default_factory=dict)
    ties: int = 0

    def wins_per_region(self) -> dict[str, int]:
        counts = Counter(region for region, _ in self.winners.values())
        return dict(sorted(counts.items(), key=lambda kv: (-kv[1], kv[0])))


def first_seen(arrivals: Iterable[ArrivalRecord]) -> FirstSeen:
    out = FirstSeen()
    for tx, recs in sorted(_by_tx(arrivals).items()):
        first = recs[0]
        out.winners[tx] = (first.region, first.t_ms)
        if len(recs) > 1 and recs[1].t_ms == first.t_ms:
            out.ties += 1
    return out


def latency_deltas(arrivals: Iterable[ArrivalRecord]) -> Iterator[tuple[str, str, int]]:
    """``(first region, other region, delay ms)`` for every non-first arrival of every tx."""
    for _tx, recs in sorted(_by_tx(arrivals).items()):
        first = recs[0]
        for other in recs[1:]:
            yield first.region, other.region, other.t_ms - first.t_ms


@dataclass
class LatencyMatrix:
    medians: dict[tuple[str, str], float] = field(default_factory=dict)
    counts: dict[tuple[str, str], int] = field(default_factory=dict)

    def get(self, first: str, other: str) -> float | None:
        if first == other:
            return 0
        return self.medians.get((first, other))

    def to_rows(self, regions: Sequence[str]) -> list[list]:
        """Heat-map rows: first-seen region down, receiving region across; blanks are absent pairs."""
        rows = [["first_seen", *regions]]
        for a in regions:
            row = [a]
            for b in regions:
                v = self.get(a, b)
                row.append("" if v is None else v)
            rows.append(row)
        return rows


def lower_median(values: Sequence[float]) -> float:
    vs = sorted(values)
    return vs[(len(vs) - 1) // 2]


def median_matrix(deltas: Iterable[tuple[str, str, int]]) -> LatencyMatrix:
    samples: dict[tuple[str, str], list[int]] = defaultdict(list)
    for first, other, d in deltas:
        samples[(first, other)].append(d)
    m = LatencyMatrix()
    for pair in sorted(samples):
        m.medians[pair] = lower_median(samples[pair])
        m.counts[pair] = len(samples[pair])
    return m


def distance_latency_pairs(matrix: LatencyMatrix, regions: Sequence[Region]) -> list[tuple[str, str, float, float]]:
    """``(a, b, km, median ms)`` per unordered region pair with data; directions are averaged."""
    by_name = {r.name: r for r in regions}
    names = sorted(by_name)
    out = []
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            vals = [v for v in (matrix.medians.get((a, b)), matrix.medians.get((b, a))) if v is not None]
            if vals:
                out.append((a, b, haversine_km(by_name[a], by_name[b]), sum(vals) / len(vals)))
    return out


def distance_latency_correlation(matrix: LatencyMatrix, regions: Sequence[Region]) -> CorrelationResult:
    pairs = distance_latency_pairs(matrix, regions)
    if len(pairs) < 3:
        raise DegenerateInput(f"need at least 3 region pairs with data, got {len(pairs)}")
    return pearson([p[2] for p in pairs], [p[3] for p in pairs])


def latency_histogram(deltas: Iterable[tuple[str, str, int]], limit_ms: int = HIST_LIMIT_MS,
                      bin_ms: int = 50) -> dict:
    values = [d for _, _, d in deltas]
    edges = list(range(0, limit_ms + bin_ms, bin_ms))
    counts = [0] * (len(edges) - 1)
    for d in values:
        if 0 <= d < limit_ms:
            counts[d // bin_ms] += 1
    return {
        "edges": edges,
        "counts": counts,
        "n_total": len(values),
        "fraction_below_limit": sum(counts) / len(values) if values else 0.0,
    }


@dataclass
class LatencyAnalysis:
    first: FirstSeen
    matrix: LatencyMatrix
    histogram: dict
    correlation: CorrelationResult | None
    pairs: list


def analyze(arrivals: Sequence[ArrivalRecord], regions: Sequence[Region],
            offsets: Mapping[str, float] | None = None) -> LatencyAnalysis:
    if offsets:
        arrivals = apply_offsets(arrivals, offsets)
    deltas = list(latency_deltas(arrivals))
    matrix = median_matrix(deltas)
    try:
        corr = distance_latency_correlation(matrix, regions)
    except DegenerateInput:
        corr = None
    return LatencyAnalysis(first_seen(arrivals), matrix, latency_histogram(deltas), corr,
                           distance_latency_pairs(matrix, regions))
