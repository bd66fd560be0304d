"""Searcher attribution via connected components of the sender-contract graph."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from latwar.arbdetect import ArbitrageRecord
from latwar.errors import AmbiguousAssignment
from latwar.failedarb import FailedArbRecord

UNCLUSTERED = "unclustered"
SENDER = "sender"
CONTRACT = "contract"

Node = tuple[str, str]  # (kind, address)


@dataclass
class InteractionGraph:
    """Bipartite multigraph; ``edges`` maps (sender, contract) to a transaction count."""

    edges: Counter = field(default_factory=Counter)
    senders: set[str] = field(default_factory=set)
    contracts: set[str] = field(default_factory=set)

    def add(self, sender: str, contract: str, count: int = 1) -> None:
        self.edges[(sender, contract)] += count
        self.senders.add(sender)
        self.contracts.add(contract)

    def merge(self, other: "InteractionGraph") -> "InteractionGraph":
        g = InteractionGraph(Counter(self.edges), set(self.senders), set(self.contracts))
        g.edges.update(other.edges)
        g.senders |= other.senders
        g.contracts |= other.contracts
        return g

    @property
    def nodes(self) -> list[Node]:
        return sorted([(SENDER, s) for s in self.senders] + [(CONTRACT, c) for c in self.contracts])

    def __len__(self) -> int:
        return len(self.senders) + len(self.contracts)

    def to_adjacency(self) -> dict:
        return {
            "senders": sorted(self.senders),
            "contracts": sorted(self.contracts),
            "edges": [{"sender": s, "contract": c, "count": n} for (s, c), n in sorted(self.edges.items())],
        }

    def to_dot(self) -> str:
        lines = ["graph interactions {"]
        for s in sorted(self.senders):
            lines.append(f'  "{s}" [shape=ellipse, kind=sender];')
        for c in sorted(self.contracts):
            lines.append(f'  "{c}" [shape=box, kind=contract];')
        for (s, c), n in sorted(self.edges.items()):
            lines.append(f'  "{s}" -- "{c}" [weight={n}];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def build_graph(arbs: Iterable[ArbitrageRecord], failed: Iterable[FailedArbRecord] | None = None,
                exclude_contracts: Iterable[str] = ()) -> InteractionGraph:
    """Edges from successful arbitrages, plus failed ones when ``failed`` is given.

    Contracts in ``exclude_contracts`` (known public routers, say) contribute
    no edges, so they cannot merge unrelated searchers.
    """
    excluded = set(exclude_contracts)
    g = InteractionGraph()
    for rec in arbs:
        if rec.contract not in excluded:
            g.add(rec.sender, rec.contract)
    for rec in failed or ():
        if rec.contract not in excluded:
            g.add(rec.sender, rec.contract)
    return g


class UnionFind:
    def __init__(self):
        self.parent: dict = {}
        self.size: dict = {}

    def add(self, x) -> None:
        if x not in self.parent:
            self.parent[x] = x
            self.size[x] = 1

    def find(self, x):
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]


@dataclass(frozen=True)
class SearcherCluster:
    searcher_id: str
    senders: frozenset[str]
    contracts: frozenset[str]

    def to_json(self) -> dict:
        return {"searcher_id": self.searcher_id, "senders": sorted(self.senders),
                "contracts": sorted(self.contracts)}

    @classmethod
    def from_json(cls, obj: dict) -> "SearcherCluster":
        return cls(obj["searcher_id"], frozenset(obj["senders"]), frozenset(obj["contracts"]))


def connected_components(g: InteractionGraph) -> list[SearcherCluster]:
    uf = UnionFind()
    for node in g.nodes:
        uf.add(node)
    for s, c in g.edges:
        uf.union((SENDER, s), (CONTRACT, c))
    groups: dict = {}
    for node in g.nodes:
        groups.setdefault(uf.find(node), []).append(node)
    clusters = []
    for members in groups.values():
        senders = frozenset(a for kind, a in members if kind == SENDER)
        contracts = frozenset(a for kind, a in members if kind == CONTRACT)
        clusters.append(SearcherCluster(min(senders | contracts), senders, contracts))
    clusters.sort(key=lambda c: c.searcher_id)
    return clusters


class ClusterIndex:
    """Address-to-cluster lookup built once from a cluster list."""

    def __init__(self, clusters: Sequence[SearcherCluster]):
        self.clusters = list(clusters)
        self.by_sender = {s: c.searcher_id for c in clusters for s in c.senders}
        self.by_contract = {a: c.searcher_id for c in clusters for a in c.contracts}

    def assign(self, sender: str, contract: str) -> str:
        a, b = self.by_sender.get(sender), self.by_contract.get(contract)
        if a is not None and b is not None and a != b:
            raise AmbiguousAssignment(f"sender {sender} in {a} but contract {contract} in {b}")
        return a or b or UNCLUSTERED


def assign(tx_sender: str, tx_contract: str, clusters: Sequence[SearcherCluster] | ClusterIndex) -> str:
    index = clusters if isinstance(clusters, ClusterIndex) else ClusterIndex(clusters)
    return index.assign(tx_sender, tx_contract)


def cluster_histograms(clusters: Sequence[SearcherCluster]) -> dict:
    """Contracts-per-searcher and senders-per-searcher histograms."""
    contracts = Counter(len(c.contracts) for c in clusters)
    senders = Counter(len(c.senders) for c in clusters)
    n = len(clusters)
    return {
        "n_searchers": n,
        "contracts_per_searcher": {str(k): v for k, v in sorted(contracts.items())},
        "senders_per_searcher": {str(k): v for k, v in sorted(senders.items())},
        "frac_single_contract": contracts.get(1, 0) / n if n else 0.0,
        "frac_single_sender": senders.get(1, 0) / n if n else 0.0,
    }


def clusters_to_json(clusters: Sequence[SearcherCluster]) -> str:
    return json.dumps([c.to_json() for c in clusters], indent=2, sort_keys=True) + "\n"


def clusters_from_json(obj) -> list[SearcherCluster]:
    if isinstance(obj, dict):
        obj = obj["clusters"]
    return [SearcherCluster.from_json(c) for c in obj]
