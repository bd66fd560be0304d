"""Failed-arbitrage inference for reverted transactions.

Reverted transactions emit no wasm log, so they are matched against
signatures learned from the successful arbitrages: known senders, known
contracts, and the value-erased shape of the execute messages each contract
received.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping

from latwar.arbdetect import ArbitrageRecord
from latwar.errors import NotReverted
from latwar.ingest import NormalizedTx
from latwar.io import canonical, canonical_json

CONDITIONS = ("sender", "contract", "msg_shape")
ANY_OF = "any-of"
ALL_OF = "all-of"
MODES = (ANY_OF, ALL_OF)


def message_shape(msg: Any) -> Any:
    """Erase every scalar, keep mapping keys and list structure."""
    if isinstance(msg, dict):
        return {k: message_shape(msg[k]) for k in sorted(msg)}
    if isinstance(msg, (list, tuple)):
        return [message_shape(v) for v in msg]
    return None


def shape_fingerprint(msg: Any) -> str:
    return canonical_json(message_shape(msg))


@dataclass
class SearcherSignatures:
    arb_senders: set[str] = field(default_factory=set)
    arb_contracts: set[str] = field(default_factory=set)
    msg_shapes: set[tuple[str, str]] = field(default_factory=set)

    def add(self, sender: str, contract: str, execute_msg: Any) -> None:
        self.arb_senders.add(sender)
        self.arb_contracts.add(contract)
        self.msg_shapes.add((contract, shape_fingerprint(execute_msg)))

    def merge(self, other: "SearcherSignatures") -> "SearcherSignatures":
        return SearcherSignatures(
            self.arb_senders | other.arb_senders,
            self.arb_contracts | other.arb_contracts,
            self.msg_shapes | other.msg_shapes,
        )


TxAccessor = Mapping[tuple[str, int], NormalizedTx] | Callable[[ArbitrageRecord], NormalizedTx]


def build_signatures(arbs: Iterable[ArbitrageRecord], txs: TxAccessor | None = None) -> SearcherSignatures:
    """Collect signatures from successful arbitrages.

    The execute message comes from ``txs`` when given (a mapping keyed by
    ``(tx_hash, msg_index)`` or a callable), otherwise from the record itself.
    """
    sig = SearcherSignatures()
    for a in arbs:
        if txs is None:
            msg = a.execute_msg
        elif callable(txs):
            msg = txs(a).execute_msg
        else:
            msg = txs[a.key].execute_msg
        sig.add(a.sender, a.contract, msg)
    return sig


@dataclass(frozen=True)
class FailedArbRecord:
    tx_hash: str
    height: int
    sender: str
    contract: str
    gas_used: int
    matched_conditions: frozenset[str]
    index_in_block: int = 0
    msg_index: int = 0
    execute_msg: Any = None

    def __post_init__(self):
        if not self.matched_conditions:
            raise ValueError("a failed arbitrage must match at least one condition")

    @property
    def key(self) -> tuple[str, int]:
        return (self.tx_hash, self.msg_index)

    def to_json(self) -> dict:
        return {
            "tx_hash": self.tx_hash,
            "height": self.height,
            "index_in_block": self.index_in_block,
            "msg_index": self.msg_index,
            "sender": self.sender,
            "contract": self.contract,
            "gas_used": self.gas_used,
            "matched_conditions": [c for c in CONDITIONS if c in self.matched_conditions],
            "execute_msg": self.execute_msg,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "FailedArbRecord":
        return cls(
            tx_hash=obj["tx_hash"],
            height=int(obj["height"]),
            index_in_block=int(obj.get("index_in_block", 0)),
            msg_index=int(obj.get("msg_index", 0)),
            sender=obj["sender"],
            contract=obj["contract"],
            gas_used=int(obj["gas_used"]),
            matched_conditions=frozenset(obj["matched_conditions"]),
            execute_msg=canonical(obj.get("execute_msg")),
        )


def matched_conditions(tx: NormalizedTx, sig: SearcherSignatures) -> frozenset[str]:
    hits = set()
    if tx.sender in sig.arb_senders:
        hits.add("sender")
    if tx.contract in sig.arb_contracts:
        hits.add("contract")
    if (tx.contract, shape_fingerprint(tx.execute_msg)) in sig.msg_shapes:
        hits.add("msg_shape")
    return frozenset(hits)


def is_failed_arbitrage(tx: NormalizedTx, sig: SearcherSignatures, mode: str = ANY_OF) -> FailedArbRecord | None:
    if tx.code == 0:
        raise NotReverted(tx.tx_hash)
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    hits = matched_conditions(tx, sig)
    flagged = bool(hits) if mode == ANY_OF else len(hits) == len(CONDITIONS)
    if not flagged:
        return None
    return FailedArbRecord(
        tx_hash=tx.tx_hash,
        height=tx.height,
        index_in_block=tx.index_in_block,
        msg_index=tx.msg_index,
        sender=tx.sender,
        contract=tx.contract,
        gas_used=tx.gas_used,
        matched_conditions=hits,
        execute_msg=tx.execute_msg,
    )
