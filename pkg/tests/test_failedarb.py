import pytest
from hypothesis import given, strategies as st

from latwar.errors import NotReverted
from latwar.failedarb import (
    ALL_OF,
    ANY_OF,
    FailedArbRecord,
    SearcherSignatures,
    is_failed_arbitrage,
    matched_conditions,
    message_shape,
    shape_fingerprint,
)

from conftest import make_tx


def sig():
    s = SearcherSignatures()
    s.add("terra1bot_sender", "terra1bot", {"arb": {"route": [{"pair": "p1"}, {"pair": "p2"}], "min": "100"}})
    return s


def test_shape_erases_values():
    a = {"arb": {"route": [{"pair": "p1"}], "min": "100"}}
    b = {"arb": {"min": "7", "route": [{"pair": "zzz"}]}}
    assert message_shape(a) == message_shape(b)
    assert shape_fingerprint(a) != shape_fingerprint({"arb": {"route": [], "min": "1"}})


def test_conditions():
    msg = {"arb": {"route": [{"pair": "x"}, {"pair": "y"}], "min": "5"}}
    tx = make_tx(1, "terra1someone", "terra1bot", msg, code=5)
    assert matched_conditions(tx, sig()) == {"contract", "msg_shape"}
    tx = make_tx(2, "terra1bot_sender", "terra1other", msg, code=5)
    assert matched_conditions(tx, sig()) == {"sender"}  # shape is scoped to the contract


def test_modes():
    msg = {"arb": {"route": [{"pair": "x"}, {"pair": "y"}], "min": "5"}}
    partial = make_tx(1, "terra1someone", "terra1bot", msg, code=5)
    full = make_tx(2, "terra1bot_sender", "terra1bot", msg, code=5)
    assert is_failed_arbitrage(partial, sig(), ANY_OF) is not None
    assert is_failed_arbitrage(partial, sig(), ALL_OF) is None
    rec = is_failed_arbitrage(full, sig(), ALL_OF)
    assert rec.matched_conditions == {"sender", "contract", "msg_shape"}
    assert FailedArbRecord.from_json(rec.to_json()) == rec


def test_unrelated_and_successful():
    assert is_failed_arbitrage(make_tx(1, "a", "b", code=3), sig()) is None
    with pytest.raises(NotReverted):
        is_failed_arbitrage(make_tx(2, code=0), sig())
    with pytest.raises(ValueError):
        is_failed_arbitrage(make_tx(3, code=1), sig(), "most-of")


@given(st.sampled_from(["terra1bot_sender", "x"]), st.sampled_from(["terra1bot", "y"]),
       st.sampled_from([{"arb": {"route": [], "min": "1"}}, {"swap": {}}]))
def test_all_of_implies_any_of(sender, contract, msg):
    tx = make_tx(9, sender, contract, msg, code=1)
    if is_failed_arbitrage(tx, sig(), ALL_OF) is not None:
        assert is_failed_arbitrage(tx, sig(), ANY_OF) is not None
