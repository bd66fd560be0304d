import base64
import hashlib
import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer
from urllib.parse import parse_qs, urlparse

import pytest
from hypothesis import given, strategies as st

from latwar.errors import (
    CheckpointCorrupt,
    EndpointUnreachable,
    FixtureSchemaError,
    HeightOutOfRange,
    ResultCountMismatch,
)
from latwar.ingest import (
    NormalizeStats,
    NormalizedTx,
    RawBlock,
    RpcClient,
    RpcSource,
    TxResult,
    encode_payload,
    iterate_blocks,
    iterate_range,
    load_fixtures,
    normalize,
    parse_time,
    read_checkpoint,
    write_checkpoint,
)
from latwar.io import canonical_json

from conftest import fixture_block, h, write_fixture


def exec_tx(n, code=0, events=None, **extra):
    tx = {"hash": h(n), "sender": "terra1sender", "contract": "terra1pair", "execute_msg": {"swap": {"n": n}},
          "code": code, "gas_used": 1000 + n}
    if events is not None:
        tx["events"] = events
    tx.update(extra)
    return tx


def bank_tx(n):
    return {"hash": h(n), "bank_send": {"to": "terra1x", "amount": "1uusd"}, "code": 0, "gas_used": 50}


# --- fixtures ----------------------------------------------------------------


def test_fixture_ordering_across_files(tmp_path):
    write_fixture(tmp_path / "b.jsonl", [fixture_block(12, [exec_tx(3)])])
    write_fixture(tmp_path / "a.jsonl", [fixture_block(11, []), fixture_block(10, [exec_tx(1), exec_tx(2)])])
    heights = [b.height for b, _ in load_fixtures(tmp_path)]
    assert heights == [10, 11, 12]


def test_duplicate_height(tmp_path):
    write_fixture(tmp_path / "a.jsonl", [fixture_block(10, [])])
    write_fixture(tmp_path / "b.jsonl", [fixture_block(10, [])])
    with pytest.raises(FixtureSchemaError) as err:
        list(load_fixtures(tmp_path))
    assert "b.jsonl" in str(err.value) and ":1" in str(err.value)


@pytest.mark.parametrize("bad", [
    "{not json",
    json.dumps({"height": 0, "time": "2021-11-01T00:00:00Z", "txs": []}),
    json.dumps({"height": 5, "time": "yesterday", "txs": []}),
    json.dumps({"height": 5, "time": "2021-11-01T00:00:00Z", "txs": [{"hash": "XYZ"}]}),
    json.dumps({"height": 5, "time": "2021-11-01T00:00:00Z",
                "txs": [exec_tx(1, code=3, events=[{"type": "wasm", "attributes": [["a", "b"]]}])]}),
])
def test_fixture_schema_errors(tmp_path, bad):
    (tmp_path / "x.jsonl").write_text("\n" + bad + "\n")
    with pytest.raises(FixtureSchemaError) as err:
        list(load_fixtures(tmp_path))
    assert "x.jsonl:2" in str(err.value)


def test_malformed_raw_log_keeps_result(tmp_path):
    write_fixture(tmp_path / "a.jsonl", [fixture_block(10, [exec_tx(1, raw_log="garbage[")])])
    (_, results), = load_fixtures(tmp_path)
    assert results[0].events == () and results[0].parse_warning


def test_normalize_counts(tmp_path):
    multi = {"hash": h(9), "msgs": [{"sender": "s", "contract": "c1", "execute_msg": {"a": 1}},
                                    {"sender": "s", "contract": "c2", "execute_msg": {"b": 2}}],
             "code": 0, "gas_used": 1,
             "events": [{"type": "wasm", "msg_index": 1, "attributes": [["_contract_address", "c2"]]}]}
    write_fixture(tmp_path / "a.jsonl", [fixture_block(10, [exec_tx(1), bank_tx(2), exec_tx(3, code=5), bank_tx(4),
                                                            multi])])
    (block, results), = load_fixtures(tmp_path)
    st_ = NormalizeStats()
    txs = normalize(block, results, stats=st_)
    assert len(block.txs) == 5
    assert [t.contract for t in txs] == ["terra1pair", "terra1pair", "c1", "c2"]
    assert [t.msg_index for t in txs] == [0, 0, 0, 1]
    assert txs[2].events == () and len(txs[3].events) == 1
    assert st_.n_execute_txs + st_.n_non_execute + st_.n_decode_errors == st_.n_txs == 5
    assert (st_.n_execute_msgs, st_.n_multi_message) == (4, 1)


def test_decode_error_is_counted_not_fatal():
    block = RawBlock(1, parse_time("2021-01-01T00:00:00Z"), ("%%%", encode_payload({"sender": "s", "contract": "c",
                                                                                     "execute_msg": {"x": 1}})),
                     (h(1), h(2)))
    st_ = NormalizeStats()
    txs = normalize(block, [TxResult(h(1), 0, 1), TxResult(h(2), 0, 1)], stats=st_)
    assert len(txs) == 1 and st_.n_decode_errors == 1


def test_normalize_result_mismatch():
    block = RawBlock(1, parse_time("2021-01-01T00:00:00Z"), ("a",), (h(1),))
    with pytest.raises(ResultCountMismatch):
        normalize(block, [])


json_trees = st.recursive(st.one_of(st.integers(), st.text(max_size=5), st.booleans(), st.none()),
                          lambda c: st.one_of(st.lists(c, max_size=3),
                                              st.dictionaries(st.text(max_size=4), c, max_size=4)), max_leaves=12)


@given(st.dictionaries(st.text(min_size=1, max_size=4), json_trees, min_size=1, max_size=5))
def test_canonical_key_order_insensitive(msg):
    reordered = dict(reversed(list(msg.items())))
    a = normalize_one(msg)
    b = normalize_one(reordered)
    assert canonical_json(a.execute_msg) == canonical_json(b.execute_msg)
    assert canonical_json(json.loads(canonical_json(a.execute_msg))) == canonical_json(a.execute_msg)


def normalize_one(msg):
    payload = encode_payload({"sender": "s", "contract": "c", "execute_msg": msg})
    block = RawBlock(1, parse_time("2021-01-01T00:00:00Z"), (payload,), (h(1),))
    return normalize(block, [TxResult(h(1), 0, 1)])[0]


def test_parse_time_variants():
    a = parse_time("2021-11-01T00:00:00.123456789Z")
    b = parse_time("2021-11-01T02:00:00.123+02:00")
    assert a == b and a.microsecond == 123000


# --- checkpointing -------------------------------------------------------------


def corpus(tmp_path, n=20):
    blocks = [fixture_block(100 + i, [exec_tx(i * 10 + j) for j in range(i % 3)]) for i in range(n)]
    return write_fixture(tmp_path / "fx" / "blocks.jsonl", blocks).parent


def test_resume_equals_uninterrupted(tmp_path):
    fx = corpus(tmp_path)
    full = [t.to_json() for t in iterate_range(fx, 100, 119)]
    ck = tmp_path / "ck.json"
    out = []
    for i, (block, txs, _) in enumerate(iterate_blocks(fx, 100, 119, ck)):
        out.extend(t.to_json() for t in txs)
        if i == 9:
            break  # killed while block 109 is in flight; it was consumed above
    assert read_checkpoint(ck) == 108
    # the consumer persisted block 109, so drop what the restart will redo
    out = [t for t in out if t["height"] <= 108]
    out.extend(t.to_json() for t in iterate_range(fx, 100, 119, ck))
    assert out == full
    assert read_checkpoint(ck) == 119
    assert list(iterate_range(fx, 100, 119, ck)) == []


def test_single_height(tmp_path):
    fx = corpus(tmp_path)
    blocks = list(iterate_blocks(fx, 105, 105))
    assert [b.height for b, _, _ in blocks] == [105]


def test_bad_range(tmp_path):
    with pytest.raises(ValueError):
        list(iterate_range(corpus(tmp_path), 5, 4))


def test_corrupt_checkpoint(tmp_path):
    ck = tmp_path / "ck.json"
    ck.write_text("{\"last_height\": \"ten\"}")
    with pytest.raises(CheckpointCorrupt):
        read_checkpoint(ck)
    assert read_checkpoint(ck, force=True) is None
    write_checkpoint(ck, 7)
    assert read_checkpoint(ck) == 7


def test_stream_determinism(tmp_path):
    fx = corpus(tmp_path)
    a = [canonical_json(t.to_json()) for t in iterate_range(fx, 1, 10**9)]
    b = [canonical_json(t.to_json()) for t in iterate_range(fx, 1, 10**9)]
    assert a == b and NormalizedTx.from_json(json.loads(a[0])).to_json() == json.loads(a[0])


# --- RPC -----------------------------------------------------------------------


def rpc_txs(n):
    return [base64.b64encode(json.dumps({"sender": "s", "contract": "c", "execute_msg": {"i": i}}).encode()).decode()
            for i in range(n)]


class ChainHandler(BaseHTTPRequestHandler):
    chain: dict = {}
    fail_first: dict = {}

    def log_message(self, *args):
        pass

    def _send(self, code, doc):
        body = json.dumps(doc).encode()
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        url = urlparse(self.path)
        height = int(parse_qs(url.query)["height"][0])
        key = (url.path, height)
        if self.fail_first.get(key, 0) > 0:
            self.fail_first[key] -= 1
            self._send(503, {"oops": True})
            return
        if height not in self.chain:
            self._send(500, {"jsonrpc": "2.0", "id": -1, "error": {
                "code": -32603, "message": "Internal error",
                "data": f"height {height} must be less than or equal to the current blockchain height 3"}})
            return
        txs, results = self.chain[height]
        if url.path == "/block":
            self._send(200, {"jsonrpc": "2.0", "id": -1, "result": {"block": {
                "header": {"height": str(height), "time": "2021-11-01T00:00:06.5Z"}, "data": {"txs": txs}}}})
        else:
            self._send(200, {"jsonrpc": "2.0", "id": -1, "result": {"height": str(height), "txs_results": results}})


@pytest.fixture
def server():
    ok_log = json.dumps([{"msg_index": 0, "events": [{"type": "wasm", "attributes": [
        {"key": "_contract_address", "value": "c"}, {"key": "action", "value": "swap"}]}]}])
    ChainHandler.chain = {
        1: ([], None),
        2: (rpc_txs(3), [{"code": 0, "gas_used": "10", "log": ok_log},
                         {"code": 5, "gas_used": "20", "log": "out of gas"},
                         {"code": 0, "gas_used": "30", "log": "not json"}]),
        3: (rpc_txs(2), [{"code": 0, "gas_used": "1", "log": "[]"}]),
    }
    ChainHandler.fail_first = {}
    srv = HTTPServer(("127.0.0.1", 0), ChainHandler)
    t = threading.Thread(target=srv.serve_forever, daemon=True)
    t.start()
    yield f"http://127.0.0.1:{srv.server_port}"
    srv.shutdown()


def client(url, **kw):
    return RpcClient(url, sleep=lambda s: None, **kw)


def test_rpc_block(server):
    c = client(server)
    assert c.fetch_block(1).txs == ()
    b = c.fetch_block(2)
    assert len(b.txs) == 3
    assert b.tx_hashes[0] == hashlib.sha256(base64.b64decode(b.txs[0])).hexdigest()


def test_rpc_results(server):
    c = client(server)
    assert c.fetch_block_results(1) == []
    res = c.fetch_block_results(2)
    assert [r.code for r in res] == [0, 5, 0]
    assert res[0].events[0].attributes[1] == ("action", "swap")
    assert res[2].events == () and res[2].parse_warning
    with pytest.raises(ResultCountMismatch):
        c.fetch_block_results(3)


def test_rpc_height_out_of_range(server):
    with pytest.raises(HeightOutOfRange):
        client(server).fetch_block(99)


def test_rpc_retries(server):
    sleeps = []
    ChainHandler.fail_first = {("/block", 2): 2}
    c = RpcClient(server, sleep=sleeps.append)
    assert len(c.fetch_block(2).txs) == 3
    assert sleeps == [0.5, 1.0]
    ChainHandler.fail_first = {("/block", 2): 10}
    sleeps.clear()
    with pytest.raises(EndpointUnreachable):
        c.fetch_block(2)
    assert sleeps == [0.5, 1.0, 2.0, 4.0, 8.0]


def test_rpc_unreachable():
    with pytest.raises(EndpointUnreachable):
        client("http://127.0.0.1:9", retries=1).fetch_block(1)


def test_rpc_source_parallel_order(server):
    ChainHandler.chain.pop(3)
    ChainHandler.chain.update({h_: ([], None) for h_ in range(3, 30)})
    src = RpcSource(server, workers=4, sleep=lambda s: None)
    assert [b.height for b, _ in src.blocks(1, 29)] == list(range(1, 30))
