"""Block and transaction-result ingestion.

Two sources feed the same pipeline: a Tendermint v0.34 RPC endpoint
(``/block`` + ``/block_results``) and a directory of newline-delimited JSON
fixtures. Both yield ``(RawBlock, [TxResult])`` pairs in ascending height
order; :func:`normalize` turns a pair into execute-contract transactions and
:func:`iterate_range` adds resumable checkpointing on top.
"""

from __future__ import annotations

import base64
import binascii
import hashlib
import json
import logging
import re
import socket
import time
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Any, Callable, Iterator, Protocol

from latwar.errors import (
    CheckpointCorrupt,
    DecodeError,
    EndpointUnreachable,
    FixtureSchemaError,
    HeightOutOfRange,
    MalformedResponse,
    ResultCountMismatch,
)
from latwar.io import atomic_write_text, canonical, canonical_json, iter_jsonl

log = logging.getLogger(__name__)

HEX64 = re.compile(r"^[0-9a-f]{64}$")
_RFC3339 = re.compile(
    r"^(\d{4}-\d{2}-\d{2})[T ](\d{2}:\d{2}:\d{2})(?:\.(\d+))?(Z|[+-]\d{2}:\d{2})?$"
)

MAX_RETRIES = 5
BACKOFF_S = 0.5


# ---------------------------------------------------------------------------
# Domain types


@dataclass(frozen=True)
class LogEvent:
    event_type: str
    attributes: tuple[tuple[str, str], ...]
    msg_index: int = 0

    def to_json(self) -> dict:
        return {
            "type": self.event_type,
            "msg_index": self.msg_index,
            "attributes": [[k, v] for k, v in self.attributes],
        }

    @classmethod
    def from_json(cls, obj: dict, msg_index: int = 0) -> "LogEvent":
        attrs = []
        for a in obj.get("attributes") or []:
            if isinstance(a, dict):
                attrs.append((str(a["key"]), str(a.get("value", ""))))
            else:
                k, v = a
                attrs.append((str(k), str(v)))
        return cls(str(obj["type"]), tuple(attrs), int(obj.get("msg_index", msg_index)))


@dataclass(frozen=True)
class RawBlock:
    height: int
    time: datetime
    txs: tuple[str, ...]
    tx_hashes: tuple[str, ...]

    def __post_init__(self):
        if self.height < 1:
            raise ValueError(f"height must be >= 1, got {self.height}")
        if len(self.txs) != len(self.tx_hashes):
            raise ValueError("txs and tx_hashes differ in length")


@dataclass(frozen=True)
class TxResult:
    tx_hash: str
    code: int
    gas_used: int
    raw_log: str = ""
    events: tuple[LogEvent, ...] = ()
    parse_warning: str | None = None

    def __post_init__(self):
        if self.code != 0 and self.events:
            raise ValueError("reverted transactions carry no events")


@dataclass(frozen=True)
class NormalizedTx:
    tx_hash: str
    height: int
    index_in_block: int
    sender: str
    contract: str
    execute_msg: Any
    code: int
    gas_used: int
    events: tuple[LogEvent, ...] = ()
    msg_index: int = 0

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
            "execute_msg": self.execute_msg,
            "code": self.code,
            "gas_used": self.gas_used,
            "events": [e.to_json() for e in self.events],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "NormalizedTx":
        return cls(
            tx_hash=obj["tx_hash"],
            height=int(obj["height"]),
            index_in_block=int(obj["index_in_block"]),
            msg_index=int(obj.get("msg_index", 0)),
            sender=obj["sender"],
            contract=obj["contract"],
            execute_msg=canonical(obj["execute_msg"]),
            code=int(obj["code"]),
            gas_used=int(obj["gas_used"]),
            events=tuple(LogEvent.from_json(e) for e in obj.get("events", [])),
        )


@dataclass
class NormalizeStats:
    """Per-range counters; ``n_execute_txs + n_non_execute + n_decode_errors == n_txs``."""

    n_blocks: int = 0
    n_txs: int = 0
    n_execute_txs: int = 0
    n_execute_msgs: int = 0
    n_non_execute: int = 0
    n_decode_errors: int = 0
    n_multi_message: int = 0
    parse_warnings: int = 0

    def merge(self, other: "NormalizeStats") -> None:
        for name in self.__dataclass_fields__:
            setattr(self, name, getattr(self, name) + getattr(other, name))


# ---------------------------------------------------------------------------
# Parsing helpers


def parse_time(text: str) -> datetime:
    """Parse an RFC3339 timestamp (nanosecond fractions allowed) to UTC, millisecond precision."""
    m = _RFC3339.match(text.strip())
    if not m:
        raise ValueError(f"not an RFC3339 timestamp: {text!r}")
    date, clock, frac, tz = m.groups()
    ms = int((frac or "0")[:3].ljust(3, "0"))
    dt = datetime.fromisoformat(f"{date}T{clock}").replace(microsecond=ms * 1000)
    if tz and tz != "Z":
        sign = 1 if tz[0] == "+" else -1
        hh, mm = int(tz[1:3]), int(tz[4:6])
        dt = dt - sign * timedelta(hours=hh, minutes=mm)
    return dt.replace(tzinfo=timezone.utc)


def format_time(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.") + f"{dt.microsecond // 1000:03d}Z"


def parse_raw_log(raw_log: str) -> tuple[LogEvent, ...]:
    """Parse the JSON ``log`` string of a successful transaction.

    Raises ``ValueError`` if the text is not the expected list of per-message
    entries.
    """
    data = json.loads(raw_log)
    if not isinstance(data, list):
        raise ValueError("log is not a list")
    events = []
    for pos, entry in enumerate(data):
        if not isinstance(entry, dict):
            raise ValueError("log entry is not an object")
        msg_index = int(entry.get("msg_index", pos))
        for ev in entry.get("events") or []:
            events.append(LogEvent.from_json(ev, msg_index))
    return tuple(events)


def result_from_log(tx_hash: str, code: int, gas_used: int, raw_log: str) -> TxResult:
    if code != 0:
        return TxResult(tx_hash, code, gas_used, raw_log, ())
    try:
        events = parse_raw_log(raw_log)
    except (ValueError, KeyError, TypeError) as exc:
        warning = f"unparseable log for {tx_hash}: {exc}"
        log.warning(warning)
        return TxResult(tx_hash, code, gas_used, raw_log, (), warning)
    return TxResult(tx_hash, code, gas_used, raw_log, events)


# ---------------------------------------------------------------------------
# Transaction decoding


@dataclass(frozen=True)
class ExecuteMessage:
    sender: str
    contract: str
    execute_msg: Any


class TxDecoder(Protocol):
    def decode(self, payload: str) -> list[ExecuteMessage]:
        """Return the execute-contract messages in ``payload`` ([] for other kinds).

        Raises :class:`DecodeError` when the payload cannot be decoded.
        """


def _decode_msg_body(value: Any) -> Any:
    # execute_msg is sometimes base64 JSON (amino encoding) or a JSON string
    if isinstance(value, str):
        for attempt in (lambda s: base64.b64decode(s, validate=True), lambda s: s.encode()):
            try:
                return json.loads(attempt(value))
            except (ValueError, binascii.Error):
                continue
        raise DecodeError("execute_msg is neither JSON nor base64 JSON")
    if isinstance(value, dict):
        return value
    raise DecodeError(f"execute_msg has unsupported type {type(value).__name__}")


class JsonTxDecoder:
    """Reference decoder for base64-wrapped JSON transactions.

    Accepts three shapes: the Cosmos decoded-tx form ``{"body": {"messages": [...]}}``
    (only ``MsgExecuteContract`` entries are kept), a ``{"msgs": [...]}`` list, and a
    flat ``{"sender", "contract", "execute_msg"}`` object. Binary protobuf payloads
    need a chain-specific decoder implementing the same ``decode`` method.
    """

    def decode(self, payload: str) -> list[ExecuteMessage]:
        try:
            obj = json.loads(base64.b64decode(payload, validate=True))
        except (ValueError, binascii.Error, UnicodeDecodeError) as exc:
            raise DecodeError(f"payload is not base64 JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise DecodeError("payload is not a JSON object")

        if isinstance(obj.get("body"), dict):
            msgs = [
                m for m in obj["body"].get("messages") or []
                if "MsgExecuteContract" in str(m.get("@type", m.get("type", "")))
            ]
        elif isinstance(obj.get("msgs"), list):
            msgs = [m for m in obj["msgs"] if isinstance(m, dict) and ("execute_msg" in m or "msg" in m)]
        elif "execute_msg" in obj:
            msgs = [obj]
        else:
            return []

        out = []
        for m in msgs:
            try:
                sender, contract = m["sender"], m["contract"]
            except KeyError as exc:
                raise DecodeError(f"execute message missing {exc}") from exc
            body = m["execute_msg"] if "execute_msg" in m else m["msg"]
            out.append(ExecuteMessage(str(sender), str(contract), canonical(_decode_msg_body(body))))
        return out


def encode_payload(obj: dict) -> str:
    return base64.b64encode(canonical_json(obj).encode("utf-8")).decode("ascii")


# ---------------------------------------------------------------------------
# Normalization


def normalize(
    block: RawBlock,
    results: list[TxResult],
    decoder: TxDecoder | None = None,
    stats: NormalizeStats | None = None,
) -> list[NormalizedTx]:
    """Keep the execute-contract messages of a block, one record per message.

    Multi-message transactions produce several records sharing ``tx_hash`` and
    distinguished by ``msg_index``; each record receives only the log events of
    its own message.
    """
    if len(results) != len(block.txs):
        raise ResultCountMismatch(
            f"height {block.height}: {len(results)} results for {len(block.txs)} txs"
        )
    decoder = decoder or JsonTxDecoder()
    local = NormalizeStats(n_blocks=1, n_txs=len(block.txs))
    out: list[NormalizedTx] = []
    for idx, (payload, tx_hash, res) in enumerate(zip(block.txs, block.tx_hashes, results)):
        if res.parse_warning:
            local.parse_warnings += 1
        try:
            msgs = decoder.decode(payload)
        except DecodeError as exc:
            log.warning("height %d tx %d: %s", block.height, idx, exc)
            local.n_decode_errors += 1
            continue
        if not msgs:
            local.n_non_execute += 1
            continue
        local.n_execute_txs += 1
        local.n_execute_msgs += len(msgs)
        if len(msgs) > 1:
            local.n_multi_message += 1
        for msg_index, m in enumerate(msgs):
            events = tuple(e for e in res.events if e.msg_index == msg_index)
            out.append(
                NormalizedTx(
                    tx_hash=tx_hash,
                    height=block.height,
                    index_in_block=idx,
                    msg_index=msg_index,
                    sender=m.sender,
                    contract=m.contract,
                    execute_msg=m.execute_msg,
                    code=res.code,
                    gas_used=res.gas_used,
                    events=events,
                )
            )
    if stats is not None:
        stats.merge(local)
    return out


# ---------------------------------------------------------------------------
# RPC source


class RpcClient:
    """Minimal Tendermint v0.34 JSON-RPC client over HTTP GET.

    Transient failures (connection errors, timeouts, HTTP 5xx without a
    JSON-RPC error body) are retried ``MAX_RETRIES`` times with exponential
    backoff starting at ``BACKOFF_S``.
    """

    def __init__(self, endpoint: str, timeout: float = 10.0, retries: int = MAX_RETRIES,
                 backoff: float = BACKOFF_S, sleep: Callable[[float], None] = time.sleep):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self._sleep = sleep

    def _get(self, path: str, height: int) -> dict:
        url = f"{self.endpoint}/{path}?height={height}"
        delay = self.backoff
        last_exc: Exception | None = None
        for attempt in range(self.retries + 1):
            try:
                with urllib.request.urlopen(url, timeout=self.timeout) as resp:
                    body = resp.read()
                return self._decode(body, height)
            except urllib.error.HTTPError as exc:
                body = exc.read()
                try:
                    return self._decode(body, height)
                except MalformedResponse:
                    if exc.code < 500 and exc.code != 429:
                        raise MalformedResponse(f"{url}: HTTP {exc.code}") from exc
                last_exc = exc
            except (urllib.error.URLError, socket.timeout, ConnectionError, OSError) as exc:
                last_exc = exc
            if attempt < self.retries:
                log.info("retrying %s in %.1fs (%s)", url, delay, last_exc)
                self._sleep(delay)
                delay *= 2
        raise EndpointUnreachable(f"{url}: {last_exc}")

    @staticmethod
    def _decode(body: bytes, height: int) -> dict:
        try:
            doc = json.loads(body)
        except ValueError as exc:
            raise MalformedResponse(f"response is not JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise MalformedResponse("response is not a JSON object")
        if doc.get("error"):
            err = doc["error"]
            text = f"{err.get('message', '')} {err.get('data', '')}" if isinstance(err, dict) else str(err)
            if "height" in text.lower():
                raise HeightOutOfRange(f"height {height}: {text.strip()}")
            raise MalformedResponse(text.strip())
        if not isinstance(doc.get("result"), dict):
            raise MalformedResponse("response has no result object")
        return doc["result"]

    def fetch_block(self, height: int) -> RawBlock:
        result = self._get("block", height)
        try:
            blk = result["block"]
            header = blk["header"]
            txs = tuple(blk["data"].get("txs") or ())
            got_height = int(header["height"])
            when = parse_time(header["time"])
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedResponse(f"block {height}: {exc}") from exc
        if got_height != height:
            raise MalformedResponse(f"asked for height {height}, got {got_height}")
        hashes = []
        for tx in txs:
            try:
                raw = base64.b64decode(tx, validate=True)
            except binascii.Error as exc:
                raise MalformedResponse(f"block {height}: tx is not base64") from exc
            hashes.append(hashlib.sha256(raw).hexdigest())
        return RawBlock(height, when, txs, tuple(hashes))

    def fetch_block_results(self, height: int, block: RawBlock | None = None) -> list[TxResult]:
        if block is None:
            block = self.fetch_block(height)
        result = self._get("block_results", height)
        raw = result.get("txs_results") or []
        if not isinstance(raw, list):
            raise MalformedResponse(f"block_results {height}: txs_results is not a list")
        if len(raw) != len(block.txs):
            raise ResultCountMismatch(f"height {height}: {len(raw)} results for {len(block.txs)} txs")
        out = []
        for tx_hash, r in zip(block.tx_hashes, raw):
            try:
                code = int(r.get("code") or 0)
                gas = int(r.get("gas_used") or 0)
            except (TypeError, ValueError, AttributeError) as exc:
                raise MalformedResponse(f"block_results {height}: {exc}") from exc
            out.append(result_from_log(tx_hash, code, gas, str(r.get("log") or "")))
        return out


def fetch_block(endpoint: str, height: int, **kwargs) -> RawBlock:
    return RpcClient(endpoint, **kwargs).fetch_block(height)


def fetch_block_results(endpoint: str, height: int, **kwargs) -> list[TxResult]:
    return RpcClient(endpoint, **kwargs).fetch_block_results(height)


class RpcSource:
    def __init__(self, endpoint: str, workers: int = 1, **client_kwargs):
        self.client = RpcClient(endpoint, **client_kwargs)
        self.workers = max(1, workers)

    def _one(self, height: int):
        block = self.client.fetch_block(height)
        return block, self.client.fetch_block_results(height, block)

    def blocks(self, start: int, end: int) -> Iterator[tuple[RawBlock, list[TxResult]]]:
        heights = range(start, end + 1)
        if self.workers == 1:
            for h in heights:
                yield self._one(h)
            return
        # Executor.map keeps submission order, so the stream stays sorted by height.
        window = self.workers * 4
        with ThreadPoolExecutor(self.workers) as pool:
            for lo in range(0, len(heights), window):
                yield from pool.map(self._one, heights[lo:lo + window])


# ---------------------------------------------------------------------------
# Fixture source


def _fixture_tx(tx: Any, path: Path, line: int, i: int) -> tuple[str, str, TxResult]:
    def bad(msg):
        return FixtureSchemaError(path, line, f"txs[{i}]: {msg}")

    if not isinstance(tx, dict):
        raise bad("not an object")
    tx_hash = tx.get("hash")
    if not isinstance(tx_hash, str) or not HEX64.match(tx_hash):
        raise bad("hash must be 64 lowercase hex chars")
    code, gas = tx.get("code", 0), tx.get("gas_used", 0)
    if not isinstance(code, int) or not isinstance(gas, int) or gas < 0:
        raise bad("code and gas_used must be integers, gas_used >= 0")
    if "events" in tx:
        if code != 0 and tx["events"]:
            raise bad("reverted transaction must have no events")
        try:
            events = tuple(LogEvent.from_json(e) for e in tx["events"])
        except (KeyError, TypeError, ValueError) as exc:
            raise bad(f"malformed events: {exc}") from exc
        result = TxResult(tx_hash, code, gas, "", events)
    elif "raw_log" in tx:
        result = result_from_log(tx_hash, code, gas, str(tx["raw_log"]))
    else:
        result = TxResult(tx_hash, code, gas, "", ())
    body = {k: v for k, v in tx.items() if k not in ("hash", "code", "gas_used", "events", "raw_log")}
    return encode_payload(body), tx_hash, result


def parse_fixture_line(text: str, path: Path, line: int) -> tuple[RawBlock, list[TxResult]]:
    try:
        rec = json.loads(text)
    except ValueError as exc:
        raise FixtureSchemaError(path, line, f"invalid JSON: {exc}") from exc
    if not isinstance(rec, dict):
        raise FixtureSchemaError(path, line, "record is not an object")
    height = rec.get("height")
    if not isinstance(height, int) or isinstance(height, bool) or height < 1:
        raise FixtureSchemaError(path, line, "height must be an integer >= 1")
    try:
        when = parse_time(rec["time"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FixtureSchemaError(path, line, f"bad time: {exc}") from exc
    txs = rec.get("txs")
    if not isinstance(txs, list):
        raise FixtureSchemaError(path, line, "txs must be a list")
    payloads, hashes, results = [], [], []
    for i, tx in enumerate(txs):
        p, h, r = _fixture_tx(tx, path, line, i)
        payloads.append(p)
        hashes.append(h)
        results.append(r)
    return RawBlock(height, when, tuple(payloads), tuple(hashes)), results


def fixture_files(path: str | Path) -> list[Path]:
    path = Path(path)
    return sorted(p for p in path.iterdir() if p.suffix in (".jsonl", ".ndjson") and p.is_file())


def load_fixtures(path: str | Path) -> Iterator[tuple[RawBlock, list[TxResult]]]:
    """Yield every fixture block in ascending height order.

    Heights must be unique across all files in the directory.
    """
    seen: dict[int, tuple[Path, int]] = {}
    records = []
    for f in fixture_files(path):
        with open(f, encoding="utf-8") as fh:
            for lineno, text in enumerate(fh, 1):
                if not text.strip():
                    continue
                block, results = parse_fixture_line(text, f, lineno)
                if block.height in seen:
                    pf, pl = seen[block.height]
                    raise FixtureSchemaError(
                        f, lineno, f"duplicate height {block.height} (first at {pf.name}:{pl})"
                    )
                seen[block.height] = (f, lineno)
                records.append((block, results))
    records.sort(key=lambda r: r[0].height)
    yield from records


class FixtureSource:
    def __init__(self, path: str | Path):
        self.path = Path(path)

    def blocks(self, start: int, end: int) -> Iterator[tuple[RawBlock, list[TxResult]]]:
        for block, results in load_fixtures(self.path):
            if block.height > end:
                break
            if block.height >= start:
                yield block, results


# ---------------------------------------------------------------------------
# Resumable iteration


def read_checkpoint(path: str | Path | None, force: bool = False) -> int | None:
    if path is None or not Path(path).exists():
        return None
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        last = doc["last_height"]
        if not isinstance(last, int) or isinstance(last, bool) or last < 0:
            raise ValueError("last_height must be a non-negative integer")
        return last
    except (ValueError, KeyError, TypeError) as exc:
        if force:
            log.warning("ignoring corrupt checkpoint %s: %s", path, exc)
            return None
        raise CheckpointCorrupt(f"{path}: {exc}") from exc


def write_checkpoint(path: str | Path, last_height: int) -> None:
    atomic_write_text(path, json.dumps({"last_height": last_height}) + "\n")


def iterate_blocks(
    source,
    start: int,
    end: int,
    checkpoint: str | Path | None = None,
    decoder: TxDecoder | None = None,
    force: bool = False,
) -> Iterator[tuple[RawBlock, list[NormalizedTx], NormalizeStats]]:
    """Yield ``(block, normalized txs, per-block stats)`` for heights in ``[start, end]``.

    A block's height is committed to ``checkpoint`` only when the consumer asks
    for the next block, i.e. after it has finished with the previous one. A
    restart therefore resumes at the first block not fully consumed.
    """
    if start > end:
        raise ValueError(f"start {start} > end {end}")
    if isinstance(source, (str, Path)):
        source = FixtureSource(source)
    last = read_checkpoint(checkpoint, force)
    if last is not None and last >= start:
        start = last + 1
    if start > end:
        return
    for block, results in source.blocks(start, end):
        st = NormalizeStats()
        txs = normalize(block, results, decoder, st)
        yield block, txs, st
        if checkpoint is not None:
            write_checkpoint(checkpoint, block.height)


def iterate_range(
    source,
    start: int,
    end: int,
    checkpoint: str | Path | None = None,
    decoder: TxDecoder | None = None,
    force: bool = False,
    stats: NormalizeStats | None = None,
) -> Iterator[NormalizedTx]:
    for _block, txs, st in iterate_blocks(source, start, end, checkpoint, decoder, force):
        if stats is not None:
            stats.merge(st)
        yield from txs


def read_normalized(path: str | Path) -> Iterator[NormalizedTx]:
    for rec in iter_jsonl(path):
        yield NormalizedTx.from_json(rec)

