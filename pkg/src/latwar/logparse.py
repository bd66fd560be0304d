"""Action extraction from wasm log events.

A wasm event flattens every contract call of a transaction into one attribute
list; each ``_contract_address`` key opens a new *run* belonging to that
contract. Matchers look at a run (or a short sequence of adjacent runs) and
turn it into an :class:`Action`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from latwar.errors import DuplicateMatcher, InconsistentAmounts, LatwarError
from latwar.ingest import LogEvent, NormalizedTx
from latwar.io import load_config

log = logging.getLogger(__name__)

CONTRACT_KEYS = ("_contract_address", "contract_address")


@dataclass(frozen=True)
class Action:
    pair_address: str
    token_in: str
    token_out: str
    amount_in: int
    amount_out: int

    def __post_init__(self):
        if self.token_in == self.token_out:
            raise ValueError(f"token_in == token_out ({self.token_in})")
        if self.amount_in <= 0 or self.amount_out <= 0:
            raise ValueError("amounts must be strictly positive")

    def to_json(self) -> dict:
        return {
            "pair_address": self.pair_address,
            "token_in": self.token_in,
            "token_out": self.token_out,
            "amount_in": str(self.amount_in),
            "amount_out": str(self.amount_out),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Action":
        return cls(obj["pair_address"], obj["token_in"], obj["token_out"],
                   int(obj["amount_in"]), int(obj["amount_out"]))


@dataclass(frozen=True)
class Run:
    """Attributes emitted by one contract call, in log order."""

    contract: str
    attributes: tuple[tuple[str, str], ...]

    def get(self, key: str) -> str | None:
        for k, v in self.attributes:
            if k == key:
                return v
        return None

    def values(self, key: str) -> list[str]:
        return [v for k, v in self.attributes if k == key]


def split_runs(events: Sequence[LogEvent]) -> list[Run]:
    """Split every wasm event into contract runs, preserving order.

    Attributes that precede the first contract key of an event are dropped;
    Tendermint always emits the contract key first, so this only happens with
    hand-edited logs.
    """
    runs: list[Run] = []
    for ev in events:
        if ev.event_type != "wasm":
            continue
        contract, attrs = None, []
        for k, v in ev.attributes:
            if k in CONTRACT_KEYS:
                if contract is not None:
                    runs.append(Run(contract, tuple(attrs)))
                contract, attrs = v, []
            elif contract is not None:
                attrs.append((k, v))
        if contract is not None:
            runs.append(Run(contract, tuple(attrs)))
    return runs


def parse_amount(text: str | None, what: str) -> int:
    if text is None or not text.isdigit():
        raise InconsistentAmounts(f"{what} is not a non-negative integer: {text!r}")
    value = int(text)
    if value == 0:
        raise InconsistentAmounts(f"{what} is zero")
    return value


MatchResult = tuple[Action, int]


@dataclass(frozen=True)
class PatternMatcher:
    """A named rule; ``match(runs, i)`` returns ``(action, runs_consumed)`` or None."""

    name: str
    match: Callable[[Sequence[Run], int], MatchResult | None] = field(compare=False)


def match_swap(runs: Sequence[Run], i: int) -> MatchResult | None:
    run = runs[i]
    if "swap" not in run.values("action"):
        return None
    offer, ask = run.get("offer_asset"), run.get("ask_asset")
    if offer is None or ask is None:
        return None
    amount_in = parse_amount(run.get("offer_amount"), "offer_amount")
    amount_out = parse_amount(run.get("return_amount"), "return_amount")
    if offer == ask:
        raise InconsistentAmounts(f"swap offers and asks the same asset {offer}")
    return Action(run.contract, offer, ask, amount_in, amount_out), 1


def match_mint_burn(runs: Sequence[Run], i: int) -> MatchResult | None:
    """A burn on token A immediately followed by a mint on token B.

    The venue is the account that performed the burn (``by`` for burn_from,
    otherwise ``from``), i.e. the hub contract converting A into B.
    """
    if i + 1 >= len(runs):
        return None
    burn, mint = runs[i], runs[i + 1]
    burn_actions = set(burn.values("action")) & {"burn", "burn_from"}
    if not burn_actions or "mint" not in mint.values("action"):
        return None
    venue = burn.get("by") or burn.get("from")
    if venue is None:
        return None
    amount_in = parse_amount(burn.get("amount"), "burn amount")
    amount_out = parse_amount(mint.get("amount"), "mint amount")
    if burn.contract == mint.contract:
        raise InconsistentAmounts("burn and mint of the same token")
    return Action(venue, burn.contract, mint.contract, amount_in, amount_out), 2


SWAP = PatternMatcher("swap", match_swap)
MINT_BURN = PatternMatcher("mintburn", match_mint_burn)
BUILTIN_MATCHERS = {m.name: m for m in (SWAP, MINT_BURN)}

Registry = tuple[PatternMatcher, ...]


def default_registry() -> Registry:
    return (SWAP, MINT_BURN)


def register_matcher(registry: Sequence[PatternMatcher], matcher: PatternMatcher,
                     position: int | None = None) -> Registry:
    """Return a new registry with ``matcher`` inserted at ``position`` (default: last)."""
    if any(m.name == matcher.name for m in registry):
        raise DuplicateMatcher(matcher.name)
    items = list(registry)
    items.insert(len(items) if position is None else position, matcher)
    return tuple(items)


def registry_from_names(names: Sequence[str]) -> Registry:
    reg: Registry = ()
    for name in names:
        if name not in BUILTIN_MATCHERS:
            raise LatwarError(f"unknown matcher {name!r}; known: {sorted(BUILTIN_MATCHERS)}")
        reg = register_matcher(reg, BUILTIN_MATCHERS[name])
    return reg


def load_registry(path: str | Path | None) -> Registry:
    """Read ``matchers = [...]`` from a TOML or JSON file."""
    if path is None:
        return default_registry()
    cfg = load_config(path)
    names = cfg.get("matchers")
    if not isinstance(names, list):
        raise LatwarError(f"{path}: 'matchers' must be a list of names")
    return registry_from_names(names)


@dataclass
class ParseStats:
    runs: int = 0
    matched_runs: int = 0
    unmatched_runs: int = 0
    inconsistent_runs: int = 0
    warnings: list[str] = field(default_factory=list)

    def merge(self, other: "ParseStats") -> None:
        self.runs += other.runs
        self.matched_runs += other.matched_runs
        self.unmatched_runs += other.unmatched_runs
        self.inconsistent_runs += other.inconsistent_runs
        self.warnings.extend(other.warnings)


def actions_from_events(events: Sequence[LogEvent], registry: Sequence[PatternMatcher],
                        stats: ParseStats | None = None) -> list[Action]:
    runs = split_runs(events)
    st = stats if stats is not None else ParseStats()
    st.runs += len(runs)
    actions: list[Action] = []
    i = 0
    while i < len(runs):
        consumed = 0
        for matcher in registry:
            try:
                res = matcher.match(runs, i)
            except (InconsistentAmounts, ValueError) as exc:
                st.inconsistent_runs += 1
                st.warnings.append(f"{matcher.name} at run {i} ({runs[i].contract}): {exc}")
                consumed = 1
                break
            if res is not None:
                action, consumed = res
                actions.append(action)
                st.matched_runs += consumed
                break
        if consumed == 0:
            st.unmatched_runs += 1
            consumed = 1
        i += consumed
    return actions


def extract_actions(tx: NormalizedTx, registry: Sequence[PatternMatcher] | None = None,
                    stats: ParseStats | None = None) -> list[Action]:
    if tx.code != 0:
        raise ValueError(f"{tx.tx_hash}: cannot extract actions from a reverted transaction")
    if registry is None:
        registry = default_registry()
    return actions_from_events(tx.events, registry, stats)
