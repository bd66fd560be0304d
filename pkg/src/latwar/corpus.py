"""Synthetic block corpora with planted arbitrages, failed attempts and searchers.

The generator works in four phases:

1. competition: for every opportunity, a random subset of searchers submits
   one copy per participating bot instance; a searcher takes part with
   probability proportional to ``n_instances ** participation_exponent`` and
   the winner is drawn with weight ``copies ** win_exponent``. The first copy
   of the winner succeeds and every other copy reverts. Failed copies are then trimmed or padded with
   retries so the failed count is exactly ``round(failed_ratio * n_arbs)``.
2. identities: every searcher gets senders and contracts; its first wins are
   spread over a spanning set of (sender, contract) edges so that the
   searcher forms exactly one connected component.
3. synthesis: routes, amounts, execute messages and wasm logs.
4. layout: transactions are spread over blocks, a winner always precedes the
   failed copies of its own opportunity.

Noise transactions (user swaps, lossy or open chains, concatenated cycles,
bank sends, reverted user swaps, multi-message transactions, bare cw20
transfers) are mixed in; none of them is an arbitrage.
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field, fields
from datetime import timedelta
from pathlib import Path
from typing import Mapping

import numpy as np

from latwar.arbdetect import ArbitrageRecord
from latwar.errors import InvalidConfig
from latwar.ingest import format_time, parse_time
from latwar.io import atomic_write_text, canonical_json, make_meta, write_json
from latwar.logparse import Action

BECH32 = "qpzry9x8gf2tvdw0s3jn54khce6mua7l"
NATIVE = ("uusd", "uluna", "ukrw", "usdr")
CW20 = ("bluna", "lunax", "anc", "mir", "mine", "astro", "psi", "kuji", "orion", "loop")
OTHER_START = "other"
NOISE_KINDS = ("user_swap", "lossy_cycle", "open_chain", "concatenated", "bank_send",
               "reverted_user", "multi_message", "unmatched_only")


@dataclass
class CorpusProfile:
    n_blocks: int = 1000
    start_height: int = 5_000_001
    start_time: str = "2021-11-01T00:00:00.000Z"
    block_interval_ms: int = 6000
    blocks_per_file: int = 250
    n_arbs: int = 500
    failed_ratio: float = 3.55
    n_searchers: int = 24
    min_instances: int = 1
    max_instances: int = 16
    instance_participation: float = 1.0
    participation_base: float | None = None  # None: calibrated to the failed budget
    participation_exponent: float = 1.0
    win_exponent: float = 0.5
    single_contract_fraction: float = 0.5
    max_contracts: int = 5
    max_senders: int = 8
    path_lengths: dict = field(default_factory=lambda: {"2": 0.5, "3": 0.3, "4": 0.12, "5": 0.076, "6": 0.004})
    start_tokens: dict = field(default_factory=lambda: {"uusd": 0.87, "uluna": 0.10, OTHER_START: 0.03})
    amount_sigma: float = 2.0
    profit_rate_median: float = 0.003
    profit_rate_sigma: float = 1.0
    outlier_probability: float = 0.002
    mint_burn_probability: float = 0.3
    n_users: int = 2000
    noise: dict = field(default_factory=lambda: {
        "user_swap": 4000, "lossy_cycle": 700, "open_chain": 700, "concatenated": 150,
        "bank_send": 1500, "reverted_user": 600, "multi_message": 200, "unmatched_only": 250,
    })

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: Mapping) -> "CorpusProfile":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise InvalidConfig(unknown[0], "unknown profile field")
        prof = cls(**{k: raw[k] for k in raw})
        prof.validate()
        return prof

    def validate(self) -> None:
        def positive(name, minimum=1):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < minimum:
                raise InvalidConfig(name, f"must be an integer >= {minimum}")

        for name in ("n_blocks", "start_height", "block_interval_ms", "blocks_per_file",
                     "n_arbs", "n_searchers", "min_instances", "max_contracts", "max_senders", "n_users"):
            positive(name)
        if self.max_instances < self.min_instances:
            raise InvalidConfig("max_instances", "must be >= min_instances")
        if self.n_searchers > self.n_arbs:
            raise InvalidConfig("n_searchers", "cannot exceed n_arbs (every searcher wins at least once)")
        if self.failed_ratio < 0:
            raise InvalidConfig("failed_ratio", "must be >= 0")
        if self.participation_base is not None and self.participation_base <= 0:
            raise InvalidConfig("participation_base", "must be positive or null")
        for name in ("instance_participation", "single_contract_fraction", "outlier_probability",
                     "mint_burn_probability"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InvalidConfig(name, "must be in [0, 1]")
        if not self.path_lengths or any(not 2 <= int(k) <= 6 for k in self.path_lengths):
            raise InvalidConfig("path_lengths", "keys must be path lengths between 2 and 6")
        for k in self.start_tokens:
            if k not in NATIVE and k != OTHER_START:
                raise InvalidConfig(f"start_tokens.{k}", f"must be one of {NATIVE} or '{OTHER_START}'")
        for k, v in self.noise.items():
            if k not in NOISE_KINDS:
                raise InvalidConfig(f"noise.{k}", f"unknown noise kind; expected one of {NOISE_KINDS}")
            if not isinstance(v, int) or v < 0:
                raise InvalidConfig(f"noise.{k}", "must be a non-negative integer")
        try:
            parse_time(self.start_time)
        except ValueError as exc:
            raise InvalidConfig("start_time", str(exc)) from exc


def load_profile(path: str | Path | None) -> CorpusProfile:
    from latwar.io import load_config

    if path is None:
        return CorpusProfile()
    return CorpusProfile.from_dict(load_config(path))


# ---------------------------------------------------------------------------
# Helpers


def _norm(weights: Mapping[str, float]) -> tuple[list[str], np.ndarray]:
    keys = list(weights)
    w = np.array([float(weights[k]) for k in keys])
    if w.sum() <= 0:
        raise InvalidConfig("weights", "must sum to a positive value")
    return keys, w / w.sum()


class _Addresses:
    """Deterministic, unique bech32-looking addresses."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.used: set[str] = set()

    def new(self, prefix: str = "terra1", length: int = 38) -> str:
        while True:
            idx = self.rng.integers(0, len(BECH32), size=length)
            addr = prefix + "".join(BECH32[i] for i in idx)
            if addr not in self.used:
                self.used.add(addr)
                return addr


@dataclass
class _Market:
    """Token prices, cw20 contracts and pool venues."""

    rng: np.random.Generator
    addrs: _Addresses
    token_ids: dict[str, str] = field(default_factory=dict)
    prices: dict[str, float] = field(default_factory=dict)
    pools: dict[tuple[str, str], list[str]] = field(default_factory=dict)
    pool_weights: dict[tuple[str, str], np.ndarray] = field(default_factory=dict)
    hubs: dict[tuple[str, str], str] = field(default_factory=dict)
    router: str = ""

    @classmethod
    def build(cls, rng, addrs) -> "_Market":
        m = cls(rng, addrs)
        for t in NATIVE:
            m.token_ids[t] = t
        for t in CW20:
            m.token_ids[t] = addrs.new()
        m.prices = {"uusd": 1.0, "uluna": 40.0, "ukrw": 0.00085, "usdr": 1.4}
        for t in CW20:
            m.prices[m.token_ids[t]] = float(np.exp(rng.normal(0.0, 1.5)))
        m.router = addrs.new()
        return m

    @property
    def tokens(self) -> list[str]:
        return list(self.token_ids.values())

    def is_cw20(self, token: str) -> bool:
        return token not in NATIVE

    def venue(self, a: str, b: str, avoid: str | None = None) -> str:
        key = (min(a, b), max(a, b))
        if key not in self.pools:
            n = int(self.rng.integers(2, 4))
            self.pools[key] = [self.addrs.new() for _ in range(n)]
            w = 1.0 / np.arange(1, n + 1)
            self.pool_weights[key] = w / w.sum()
        venues, w = self.pools[key], self.pool_weights[key]
        if avoid is not None and avoid in venues:
            keep = [i for i, v in enumerate(venues) if v != avoid]
            ww = w[keep] / w[keep].sum()
            return venues[keep[int(self.rng.choice(len(keep), p=ww))]]
        return venues[int(self.rng.choice(len(venues), p=w))]

    def hub(self, a: str, b: str) -> str:
        key = (min(a, b), max(a, b))
        if key not in self.hubs:
            self.hubs[key] = self.addrs.new()
        return self.hubs[key]

    def convert(self, amount: int, a: str, b: str) -> int:
        factor = self.prices[a] / self.prices[b] * float(np.exp(self.rng.normal(0.0, 0.01)))
        return max(1, int(amount * factor))


# token popularity for intermediate hops: natives and a few cw20s dominate
def _hop_weights(market: _Market) -> dict[str, float]:
    w = {"uusd": 6.0, "uluna": 8.0, "ukrw": 0.6, "usdr": 0.4}
    for rank, t in enumerate(CW20, 1):
        w[market.token_ids[t]] = 3.0 / rank
    return w


@dataclass
class _Leg:
    """One hop in a synthesized chain of swaps."""

    venue: str
    token_in: str
    token_out: str
    amount_in: int
    amount_out: int
    mint_burn: bool = False


class _Synth:
    def __init__(self, prof: CorpusProfile, rng: np.random.Generator, market: _Market):
        self.prof = prof
        self.rng = rng
        self.market = market
        self.hop_w = _hop_weights(market)
        self.len_keys, self.len_p = _norm(prof.path_lengths)
        self.start_keys, self.start_p = _norm(prof.start_tokens)

    # -- routes and amounts -------------------------------------------------

    def start_token(self) -> str:
        t = self.start_keys[int(self.rng.choice(len(self.start_keys), p=self.start_p))]
        if t == OTHER_START:
            return self.market.token_ids[CW20[int(self.rng.integers(0, 3))]]
        return t

    def path_length(self) -> int:
        return int(self.len_keys[int(self.rng.choice(len(self.len_keys), p=self.len_p))])

    def pick_token(self, exclude: set[str]) -> str:
        cands = [t for t in self.hop_w if t not in exclude]
        w = np.array([self.hop_w[t] for t in cands])
        return cands[int(self.rng.choice(len(cands), p=w / w.sum()))]

    def amount(self, token: str) -> int:
        median_units = {"uusd": 1000.0, "uluna": 25.0}.get(token, 1000.0 / self.market.prices[token])
        v = median_units * 1e6 * float(np.exp(self.rng.normal(0.0, self.prof.amount_sigma)))
        return int(min(max(v, 1.0), 1e15))

    def profit_rate(self) -> float:
        if self.rng.random() < self.prof.outlier_probability:
            return float(10 ** self.rng.uniform(0.0, 3.4))
        return self.prof.profit_rate_median * float(np.exp(self.rng.normal(0.0, self.prof.profit_rate_sigma)))

    def chain(self, tokens: list[str], amount_in: int, final_out: int | None) -> list[_Leg]:
        legs: list[_Leg] = []
        amt = amount_in
        prev_venue = None
        for i in range(len(tokens) - 1):
            a, b = tokens[i], tokens[i + 1]
            last = i == len(tokens) - 2
            out = final_out if (last and final_out is not None) else self.market.convert(amt, a, b)
            mb = (self.market.is_cw20(a) and self.market.is_cw20(b)
                  and self.rng.random() < self.prof.mint_burn_probability)
            venue = self.market.hub(a, b) if mb else self.market.venue(a, b, avoid=prev_venue)
            legs.append(_Leg(venue, a, b, amt, out, mb))
            prev_venue = venue
            amt = out
        return legs

    def cycle_tokens(self, start: str, length: int) -> list[str]:
        tokens = [start]
        for i in range(1, length):
            tokens.append(self.pick_token({start, tokens[-1]}))
        return tokens + [start]

    def profitable_cycle(self, start: str | None = None, length: int | None = None) -> list[_Leg]:
        start = start or self.start_token()
        length = length or self.path_length()
        a_in = self.amount(start)
        a_out = a_in + max(1, int(a_in * self.profit_rate()))
        return self.chain(self.cycle_tokens(start, length), a_in, a_out)

    # -- logs ---------------------------------------------------------------

    def wasm_attrs(self, legs: list[_Leg], actor: str, lead: tuple[str, str] | None = None) -> list[list[str]]:
        """Flattened wasm attributes, including unmatched cw20 send/transfer runs."""
        attrs: list[list[str]] = []
        if lead is not None:
            attrs += [["_contract_address", lead[0]], ["action", lead[1]]]
        for leg in legs:
            if leg.mint_burn:
                attrs += [["_contract_address", leg.token_in], ["action", "burn_from"],
                          ["from", actor], ["by", leg.venue], ["amount", str(leg.amount_in)]]
                attrs += [["_contract_address", leg.token_out], ["action", "mint"],
                          ["to", actor], ["amount", str(leg.amount_out)]]
                continue
            if self.market.is_cw20(leg.token_in):
                attrs += [["_contract_address", leg.token_in], ["action", "send"], ["from", actor],
                          ["to", leg.venue], ["amount", str(leg.amount_in)]]
            spread = int(leg.amount_out * 0.001)
            attrs += [["_contract_address", leg.venue], ["action", "swap"], ["sender", actor],
                      ["receiver", actor], ["offer_asset", leg.token_in], ["ask_asset", leg.token_out],
                      ["offer_amount", str(leg.amount_in)], ["return_amount", str(leg.amount_out)],
                      ["tax_amount", "0"], ["spread_amount", str(spread)],
                      ["commission_amount", str(int(leg.amount_out * 0.003))]]
            if self.market.is_cw20(leg.token_out):
                attrs += [["_contract_address", leg.token_out], ["action", "transfer"], ["from", leg.venue],
                          ["to", actor], ["amount", str(leg.amount_out)]]
        return attrs

    @staticmethod
    def events(attrs: list[list[str]], sender: str, contract: str, msg_index: int = 0) -> list[dict]:
        return [
            {"type": "message", "msg_index": msg_index,
             "attributes": [["action", "/terra.wasm.v1beta1.MsgExecuteContract"], ["sender", sender]]},
            {"type": "wasm", "msg_index": msg_index, "attributes": attrs},
        ]

    # -- messages -----------------------------------------------------------

    @staticmethod
    def arb_message(style: int, legs: list[_Leg], opp: int) -> dict:
        first = legs[0]
        if style == 0:
            return {"arbitrage": {"route": [{"pair": l.venue, "offer_asset": l.token_in} for l in legs],
                                  "amount": str(first.amount_in), "min_return": str(first.amount_in + 1),
                                  "id": opp}}
        if style == 1:
            return {"execute_swaps": {"operations": [[l.venue, l.token_in, l.token_out] for l in legs],
                                      "offer": {"denom": first.token_in, "amount": str(first.amount_in)},
                                      "nonce": opp}}
        return {"run": {"path": [l.venue for l in legs], "in": str(first.amount_in), "floor": "1",
                        "seq": opp}}

    @staticmethod
    def swap_message(leg: _Leg) -> dict:
        return {"swap": {"offer_asset": {"info": {"token": leg.token_in}, "amount": str(leg.amount_in)},
                         "max_spread": "0.005"}}

    @staticmethod
    def router_message(legs: list[_Leg]) -> dict:
        return {"execute_swap_operations": {
            "operations": [{"pair": l.venue, "offer": l.token_in, "ask": l.token_out} for l in legs],
            "offer_amount": str(legs[0].amount_in), "minimum_receive": "1"}}


# ---------------------------------------------------------------------------
# Phase 1: competition


@dataclass
class _Opportunity:
    index: int
    winner: int
    copies: dict[int, int]  # searcher -> number of submissions (winner included)


def _compete(prof: CorpusProfile, rng: np.random.Generator, n_inst: np.ndarray) -> list[_Opportunity]:
    S = prof.n_searchers
    budget = int(round(prof.failed_ratio * prof.n_arbs))
    reach = n_inst.astype(float) ** prof.participation_exponent
    base = prof.participation_base
    if base is None:
        # expected submissions per opportunity ~ 1 + failed_ratio
        per_copy = np.maximum(1.0, prof.instance_participation * n_inst)
        base = (1.0 + prof.failed_ratio) / float((reach * per_copy).sum())
    part = np.minimum(1.0, base * reach)
    opps = []
    for k in range(prof.n_arbs):
        active = rng.random(S) < part
        forced = k if k < S else None  # every searcher wins at least once
        if forced is not None:
            active[forced] = True
        if not active.any():
            active[int(rng.choice(S, p=part / part.sum()))] = True
        idx = np.flatnonzero(active)
        copies = {int(j): max(1, int(rng.binomial(n_inst[j], prof.instance_participation))) for j in idx}
        if forced is not None:
            winner = forced
        else:
            w = np.array([copies[int(j)] for j in idx], dtype=float) ** prof.win_exponent
            winner = int(idx[int(rng.choice(len(idx), p=w / w.sum()))])
        opps.append(_Opportunity(k, winner, copies))

    units = [(o.index, j) for o in opps for j, c in sorted(o.copies.items())
             for _ in range(c - (1 if j == o.winner else 0))]
    surplus = len(units) - budget
    if surplus > 0:
        drop = rng.choice(len(units), size=surplus, replace=False)
        for u in sorted(drop.tolist()):
            k, j = units[u]
            opps[k].copies[j] -= 1
        for o in opps:
            o.copies = {j: c for j, c in o.copies.items() if c > 0}
    elif surplus < 0:
        # retries: duplicate existing submissions (winner copies included)
        subs = [(o.index, j) for o in opps for j, c in sorted(o.copies.items()) for _ in range(c)]
        for u in rng.choice(len(subs), size=-surplus, replace=True).tolist():
            k, j = subs[u]
            opps[k].copies[j] += 1
    return opps


# ---------------------------------------------------------------------------
# Phase 2: identities


@dataclass
class _Searcher:
    index: int
    n_instances: int
    senders: list[str]
    contracts: list[str]
    styles: dict[str, int]


def spanning_edges(senders: list[str], contracts: list[str]) -> list[tuple[str, str]]:
    """A connected set of |S|+|C|-1 sender-contract edges over all the nodes."""
    ns, nc = len(senders), len(contracts)
    out: list[tuple[str, str]] = []
    for i in range(max(ns, nc)):
        out.append((senders[min(i, ns - 1)], contracts[min(i, nc - 1)]))
        if i:
            out.append((senders[min(i, ns - 1)], contracts[min(i - 1, nc - 1)]))
    return list(dict.fromkeys(out))


def _identities(prof, rng, addrs, n_inst, wins) -> list[_Searcher]:
    out = []
    for j in range(prof.n_searchers):
        if rng.random() < prof.single_contract_fraction:
            nc = 1
        else:
            nc = int(rng.integers(2, prof.max_contracts + 1)) if prof.max_contracts >= 2 else 1
        ns = int(rng.integers(1, prof.max_senders + 1))
        while ns + nc - 1 > wins[j]:
            if ns > 1:
                ns -= 1
            else:
                nc -= 1
        senders = [addrs.new() for _ in range(ns)]
        contracts = [addrs.new() for _ in range(nc)]
        styles = {c: int(rng.integers(0, 3)) for c in contracts}
        out.append(_Searcher(j, int(n_inst[j]), senders, contracts, styles))
    return out


# ---------------------------------------------------------------------------
# Phases 3 and 4: synthesis and layout


@dataclass
class _Tx:
    body: dict
    height_slot: int
    position: float
    kind: str
    hash: str = ""


def generate(prof: CorpusProfile, seed: int) -> tuple[list[dict], dict]:
    """Build fixture block records and the ground truth for ``prof`` and ``seed``."""
    prof.validate()
    rng = np.random.default_rng(seed)
    addrs = _Addresses(rng)
    market = _Market.build(rng, addrs)
    synth = _Synth(prof, rng, market)
    users = [addrs.new() for _ in range(prof.n_users)]

    n_inst = rng.integers(prof.min_instances, prof.max_instances + 1, size=prof.n_searchers)
    opps = _compete(prof, rng, n_inst)
    wins = np.bincount([o.winner for o in opps], minlength=prof.n_searchers)
    searchers = _identities(prof, rng, addrs, n_inst, wins)

    # winner (sender, contract) per opportunity: spanning edges first
    win_edge: dict[int, tuple[str, str]] = {}
    by_winner: dict[int, list[int]] = {}
    for o in opps:
        by_winner.setdefault(o.winner, []).append(o.index)
    for j, ks in sorted(by_winner.items()):
        s = searchers[j]
        ks = [ks[i] for i in rng.permutation(len(ks))]
        edges = spanning_edges(s.senders, s.contracts)
        for n, k in enumerate(ks):
            if n < len(edges):
                win_edge[k] = edges[n]
            else:
                win_edge[k] = (s.senders[int(rng.integers(len(s.senders)))],
                               s.contracts[int(rng.integers(len(s.contracts)))])

    txs: list[_Tx] = []
    planted, planted_failed = [], []
    for o in opps:
        slot = int(rng.integers(prof.n_blocks))
        legs = synth.profitable_cycle()
        group: list[_Tx] = []
        for j, n_copies in sorted(o.copies.items()):
            s = searchers[j]
            if j == o.winner:
                sender, contract = win_edge[o.index]
            else:
                sender = s.senders[int(rng.integers(len(s.senders)))]
                contract = s.contracts[int(rng.integers(len(s.contracts)))]
            msg = synth.arb_message(s.styles[contract], legs, o.index)
            for c in range(n_copies):
                if j == o.winner and c == 0:
                    attrs = synth.wasm_attrs(legs, contract, lead=(contract, "execute_arbitrage"))
                    body = {"sender": sender, "contract": contract, "execute_msg": msg, "code": 0,
                            "gas_used": 250_000 + 90_000 * len(legs) + int(rng.integers(0, 20_000)),
                            "events": synth.events(attrs, sender, contract)}
                    group.insert(0, _Tx(body, slot, 0.0, "arb"))
                else:
                    snd = sender if c == 0 else s.senders[int(rng.integers(len(s.senders)))]
                    body = {"sender": snd, "contract": contract, "execute_msg": msg,
                            "code": int(rng.choice([5, 11, 1])), "gas_used": int(rng.integers(90_000, 240_000)),
                            "events": []}
                    group.append(_Tx(body, slot, 0.0, "failed"))
        pos = np.sort(rng.random(len(group)))
        for t, p in zip(group, pos):
            t.position = float(p)
        txs.extend(group)

    for kind in NOISE_KINDS:
        for _ in range(prof.noise.get(kind, 0)):
            txs.append(_Tx(_noise_tx(kind, synth, rng, users), int(rng.integers(prof.n_blocks)),
                           float(rng.random()), kind))

    # layout
    blocks: list[list[_Tx]] = [[] for _ in range(prof.n_blocks)]
    for t in txs:
        blocks[t.height_slot].append(t)
    t0 = parse_time(prof.start_time)
    records = []
    serial = 0
    counts: dict[str, int] = {}
    for slot, items in enumerate(blocks):
        items.sort(key=lambda t: t.position)  # stable: a winner keeps its lead over its copies
        height = prof.start_height + slot
        when = t0 + timedelta(milliseconds=slot * prof.block_interval_ms + int(rng.integers(0, 500)))
        out_txs = []
        for t in items:
            t.hash = hashlib.sha256(f"{seed}:{height}:{serial}".encode()).hexdigest()
            serial += 1
            counts[t.kind] = counts.get(t.kind, 0) + 1
            if t.kind == "arb":
                planted.append(t.hash)
            elif t.kind == "failed":
                planted_failed.append(t.hash)
            out_txs.append({"hash": t.hash, **t.body})
        records.append({"height": height, "time": format_time(when), "txs": out_txs})

    truth = {
        "n_blocks": prof.n_blocks,
        "n_txs": serial,
        "counts": dict(sorted(counts.items())),
        "planted_arbs": sorted(planted),
        "planted_failed": sorted(planted_failed),
        "searchers": [
            {"index": s.index, "n_instances": s.n_instances, "n_wins": int(wins[s.index]),
             "senders": sorted(s.senders), "contracts": sorted(s.contracts)}
            for s in searchers
        ],
    }
    return records, truth


def _noise_tx(kind: str, synth: _Synth, rng: np.random.Generator, users: list[str]) -> dict:
    market = synth.market
    user = users[int(rng.integers(len(users)))]
    if kind == "bank_send":
        to = users[int(rng.integers(len(users)))]
        return {"type": "bank_send", "from_address": user, "to_address": to,
                "amount": [{"denom": "uusd", "amount": str(int(rng.integers(1, 10**9)))}],
                "code": 0, "gas_used": int(rng.integers(60_000, 90_000))}
    if kind in ("user_swap", "reverted_user"):
        a = synth.pick_token(set())
        leg = synth.chain([a, synth.pick_token({a})], synth.amount(a), None)[0]
        if leg.mint_burn:
            leg.venue, leg.mint_burn = market.venue(leg.token_in, leg.token_out), False
        body = {"sender": user, "contract": leg.venue, "execute_msg": synth.swap_message(leg)}
        if kind == "reverted_user":
            return {**body, "code": 5, "gas_used": int(rng.integers(80_000, 160_000)), "events": []}
        attrs = synth.wasm_attrs([leg], user)
        return {**body, "code": 0, "gas_used": int(rng.integers(150_000, 260_000)),
                "events": synth.events(attrs, user, leg.venue)}
    if kind == "lossy_cycle":
        start = synth.start_token()
        a_in = synth.amount(start)
        a_out = a_in if rng.random() < 0.25 else max(1, a_in - int(rng.integers(1, max(2, a_in // 50))))
        legs = synth.chain(synth.cycle_tokens(start, synth.path_length()), a_in, a_out)
    elif kind == "open_chain":
        start = synth.start_token()
        tokens = [start]
        for _ in range(int(rng.integers(2, 5))):
            tokens.append(synth.pick_token({tokens[-1], start}))
        legs = synth.chain(tokens, synth.amount(start), None)
    elif kind == "concatenated":
        first = synth.profitable_cycle("uusd", int(rng.integers(2, 4)))
        second = synth.profitable_cycle("uluna", int(rng.integers(2, 4)))
        legs = first + second
    elif kind == "multi_message":
        msgs, events = [], []
        for i in range(2):
            a = synth.pick_token(set())
            leg = synth.chain([a, synth.pick_token({a})], synth.amount(a), None)[0]
            if leg.mint_burn:
                leg.venue, leg.mint_burn = market.venue(leg.token_in, leg.token_out), False
            msgs.append({"sender": user, "contract": leg.venue, "execute_msg": synth.swap_message(leg)})
            events += synth.events(synth.wasm_attrs([leg], user), user, leg.venue, msg_index=i)
        return {"msgs": msgs, "code": 0, "gas_used": int(rng.integers(300_000, 500_000)), "events": events}
    elif kind == "unmatched_only":
        token = market.token_ids[CW20[int(rng.integers(len(CW20)))]]
        to = users[int(rng.integers(len(users)))]
        amount = str(int(rng.integers(1, 10**10)))
        attrs = [["_contract_address", token], ["action", "transfer"], ["from", user], ["to", to],
                 ["amount", amount]]
        return {"sender": user, "contract": token,
                "execute_msg": {"transfer": {"recipient": to, "amount": amount}},
                "code": 0, "gas_used": int(rng.integers(100_000, 140_000)),
                "events": synth.events(attrs, user, token)}
    else:
        raise ValueError(f"unknown noise kind {kind}")
    attrs = synth.wasm_attrs(legs, market.router, lead=(market.router, "execute_swap_operations"))
    return {"sender": user, "contract": market.router, "execute_msg": synth.router_message(legs),
            "code": 0, "gas_used": int(rng.integers(300_000, 900_000)),
            "events": synth.events(attrs, user, market.router)}


def write_corpus(prof: CorpusProfile, seed: int, out_dir: str | Path) -> dict:
    """Write ``fixtures/*.jsonl``, ``truth.json`` and ``profile.json``; returns the truth."""
    out = Path(out_dir)
    records, truth = generate(prof, seed)
    fx = out / "fixtures"
    fx.mkdir(parents=True, exist_ok=True)
    for stale in fx.glob("*.jsonl"):
        stale.unlink()
    step = prof.blocks_per_file
    for i in range(0, len(records), step):
        chunk = records[i:i + step]
        name = f"blocks-{chunk[0]['height']:010d}-{chunk[-1]['height']:010d}.jsonl"
        atomic_write_text(fx / name, "".join(canonical_json(r) + "\n" for r in chunk))
    meta = make_meta(prof.to_dict(), seed)
    truth = {"_meta": meta, **truth}
    write_json(out / "truth.json", truth)
    write_json(out / "profile.json", prof.to_dict())
    return truth


# ---------------------------------------------------------------------------
# Record-level population at fixed cardinalities


def cardinality_records(seed: int, n_records: int = 188_564, n_senders: int = 517, n_contracts: int = 167,
                        n_searchers: int = 56, single_contract_fraction: float = 0.5
                        ) -> tuple[list[ArbitrageRecord], list[dict]]:
    """Successful-arbitrage records over a planted searcher population.

    Only sender, contract and amounts vary; every record reuses one of a few
    shared action tuples, which keeps very large populations cheap to build.
    Returns the records and the planted searchers.
    """
    rng = np.random.default_rng(seed)
    addrs = _Addresses(rng)
    n_single = int(round(single_contract_fraction * n_searchers))
    n_multi = n_searchers - n_single
    if n_contracts < n_single + 2 * n_multi or n_senders < n_searchers:
        raise InvalidConfig("cardinality", "not enough addresses for the requested searchers")
    c_sizes = [1] * n_single + [2] * n_multi
    for j in rng.choice(n_multi, size=n_contracts - sum(c_sizes), replace=True).tolist() if n_multi else []:
        c_sizes[n_single + j] += 1
    s_sizes = [1] * n_searchers
    weights = rng.pareto(1.5, size=n_searchers) + 1.0
    for j in rng.choice(n_searchers, size=n_senders - n_searchers, replace=True, p=weights / weights.sum()).tolist():
        s_sizes[j] += 1
    pops = []
    for j in range(n_searchers):
        pops.append({"senders": [addrs.new() for _ in range(s_sizes[j])],
                     "contracts": [addrs.new() for _ in range(c_sizes[j])]})

    pair, luna = addrs.new(), "uluna"
    templates = [
        (Action(pair, "uusd", luna, 1_000_000, 25_000), Action(addrs.new(), luna, "uusd", 25_000, 1_000_500)),
        (Action(pair, "uusd", luna, 2_000_000, 50_000), Action(addrs.new(), luna, "uusd", 50_000, 2_000_900)),
    ]
    plan: list[tuple[str, str]] = []
    for p in pops:
        plan += spanning_edges(p["senders"], p["contracts"])
    if len(plan) > n_records:
        raise InvalidConfig("n_records", f"need at least {len(plan)} records to connect every searcher")
    activity = rng.pareto(1.2, size=n_searchers) + 1.0
    owners = rng.choice(n_searchers, size=n_records - len(plan), p=activity / activity.sum())
    for j in owners.tolist():
        p = pops[j]
        plan.append((p["senders"][int(rng.integers(len(p["senders"])))],
                     p["contracts"][int(rng.integers(len(p["contracts"])))]))

    records = []
    for i, (sender, contract) in enumerate(plan):
        acts = templates[i % len(templates)]
        records.append(ArbitrageRecord(
            tx_hash=f"{i:064x}", height=1 + i // 4, index_in_block=i % 4, sender=sender, contract=contract,
            actions=acts, token_start="uusd", amount_in=acts[0].amount_in, amount_out=acts[-1].amount_out,
            gas_used=300_000,
        ))
    searchers = [{"senders": sorted(p["senders"]), "contracts": sorted(p["contracts"])} for p in pops]
    return records, searchers
