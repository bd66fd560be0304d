"""Cyclic arbitrage detection over extracted action lists."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Any, NamedTuple, Sequence

from latwar.ingest import NormalizedTx
from latwar.io import canonical
from latwar.logparse import Action, ParseStats, extract_actions

MIN_CYCLE = 2


class Cycle(NamedTuple):
    token_start: str
    amount_in: int
    amount_out: int


def is_arbitrage(actions: Sequence[Action]) -> Cycle | None:
    """Return the cycle summary when ``actions`` is a profitable closed swap chain.

    Requires at least two actions, every action's output token feeding the
    next action, strictly more of the start token out than in, and the chain
    ending in the token it started with. Fees are ignored.
    """
    if len(actions) < MIN_CYCLE:
        return None
    for prev, nxt in zip(actions, actions[1:]):
        if prev.token_out != nxt.token_in:
            return None
    first, last = actions[0], actions[-1]
    if last.token_out != first.token_in:
        return None
    if last.amount_out <= first.amount_in:
        return None
    return Cycle(first.token_in, first.amount_in, last.amount_out)


def closed_segments(actions: Sequence[Action]) -> int:
    """Number of back-to-back closed cycles ``actions`` splits into, 0 if it doesn't split.

    Used only to count transactions that bundle several cycles, which
    :func:`is_arbitrage` rejects.
    """
    count, start = 0, 0
    for i, a in enumerate(actions):
        if i > start and actions[i - 1].token_out != a.token_in:
            return 0
        if a.token_out == actions[start].token_in and i > start:
            count += 1
            start = i + 1
    return count if start == len(actions) else 0


@dataclass(frozen=True)
class ArbitrageRecord:
    tx_hash: str
    height: int
    index_in_block: int
    sender: str
    contract: str
    actions: tuple[Action, ...]
    token_start: str
    amount_in: int
    amount_out: int
    gas_used: int
    msg_index: int = 0
    execute_msg: Any = None

    def __post_init__(self):
        if self.profit <= 0:
            raise ValueError(f"{self.tx_hash}: non-positive profit")

    @property
    def profit(self) -> int:
        return self.amount_out - self.amount_in

    @property
    def path_length(self) -> int:
        return len(self.actions)

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
            "actions": [a.to_json() for a in self.actions],
            "token_start": self.token_start,
            "amount_in": str(self.amount_in),
            "amount_out": str(self.amount_out),
            "profit": str(self.profit),
            "path_length": self.path_length,
            "gas_used": self.gas_used,
            "execute_msg": self.execute_msg,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ArbitrageRecord":
        rec = cls(
            tx_hash=obj["tx_hash"],
            height=int(obj["height"]),
            index_in_block=int(obj["index_in_block"]),
            msg_index=int(obj.get("msg_index", 0)),
            sender=obj["sender"],
            contract=obj["contract"],
            actions=tuple(Action.from_json(a) for a in obj["actions"]),
            token_start=obj["token_start"],
            amount_in=int(obj["amount_in"]),
            amount_out=int(obj["amount_out"]),
            gas_used=int(obj["gas_used"]),
            execute_msg=canonical(obj.get("execute_msg")),
        )
        if "profit" in obj and int(obj["profit"]) != rec.profit:
            raise ValueError(f"{rec.tx_hash}: stored profit disagrees with amounts")
        return rec


class Verdict(enum.Enum):
    SUCCESS = "success"
    NON_ARB = "non_arb"
    REVERTED = "reverted"


class Classification(NamedTuple):
    verdict: Verdict
    record: ArbitrageRecord | None = None
    concatenated: bool = False


def classify(tx: NormalizedTx, registry=None, stats: ParseStats | None = None) -> Classification:
    if tx.code != 0:
        return Classification(Verdict.REVERTED)
    actions = extract_actions(tx, registry, stats)
    cycle = is_arbitrage(actions)
    segments = closed_segments(actions)
    if cycle is None or segments >= 2:
        # back-to-back cycles in one tx are not a single arbitrage even when the chain is unbroken
        return Classification(Verdict.NON_ARB, concatenated=segments >= 2)
    record = ArbitrageRecord(
        tx_hash=tx.tx_hash,
        height=tx.height,
        index_in_block=tx.index_in_block,
        msg_index=tx.msg_index,
        sender=tx.sender,
        contract=tx.contract,
        actions=tuple(actions),
        token_start=cycle.token_start,
        amount_in=cycle.amount_in,
        amount_out=cycle.amount_out,
        gas_used=tx.gas_used,
        execute_msg=tx.execute_msg,
    )
    return Classification(Verdict.SUCCESS, record)
