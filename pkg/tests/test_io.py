import json

from hypothesis import given, strategies as st

from latwar.io import (
    atomic_write_text,
    canonical_json,
    config_hash,
    iter_jsonl,
    load_config,
    make_meta,
    read_jsonl_meta,
    write_jsonl,
)


def test_jsonl_meta_round_trip(tmp_path):
    meta = make_meta({"a": 1}, 7, extra="x")
    write_jsonl(tmp_path / "f.jsonl", [{"n": 1}, {"n": 2}], meta)
    assert list(iter_jsonl(tmp_path / "f.jsonl")) == [{"n": 1}, {"n": 2}]
    assert read_jsonl_meta(tmp_path / "f.jsonl") == meta
    assert meta["seed"] == 7 and meta["extra"] == "x"


def test_config_hash_key_order():
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})


def test_atomic_write_replaces(tmp_path):
    p = tmp_path / "sub" / "x.txt"
    atomic_write_text(p, "one")
    atomic_write_text(p, "two")
    assert p.read_text() == "two"
    assert [q.name for q in p.parent.iterdir()] == ["x.txt"]


def test_load_config_toml_and_json(tmp_path):
    (tmp_path / "c.toml").write_text('seed = 3\n[latency_model]\nbase_ms = 5.0\n')
    (tmp_path / "c.json").write_text(json.dumps({"seed": 3, "latency_model": {"base_ms": 5.0}}))
    assert load_config(tmp_path / "c.toml") == load_config(tmp_path / "c.json")


trees = st.recursive(st.one_of(st.integers(), st.text(max_size=4), st.none()),
                     lambda c: st.one_of(st.lists(c, max_size=3), st.dictionaries(st.text(max_size=3), c, max_size=3)),
                     max_leaves=10)


@given(trees)
def test_canonical_json_idempotent(obj):
    once = canonical_json(obj)
    assert canonical_json(json.loads(once)) == once
