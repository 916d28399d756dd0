import json

import pytest
from hypothesis import given

from bytescam.errors import (DuplicateAddress, InvalidAddress, MalformedResponse, NetworkError, NotAContract,
                             ParseError)
from bytescam.ingest import (BytecodeCache, ContractRecord, Dataset, ScamKind, fetch_bytecode, load_dataset,
                             normalize_address, read_address_list, save_dataset)

from .conftest import datasets

ADDR = "01ade83a7ac7d13ab01f322d68bc2f8fe371ed27"


@given(datasets())
def test_dataset_roundtrip(tmp_path_factory, ds):
    path = tmp_path_factory.mktemp("ds") / "d.jsonl"
    save_dataset(ds, path)
    assert load_dataset(path) == ds


def test_dataset_file_layout(tmp_path, toy_dataset):
    path = tmp_path / "d.jsonl"
    save_dataset(toy_dataset, path)
    lines = path.read_text().splitlines()
    assert json.loads(lines[0]) == {"format": "contract-dataset/1", "provenance": "toy"}
    assert json.loads(lines[1]) == {"address": ADDR, "bytecode_hex": "6080604052", "label": 1, "scam_kind": "ponzi"}
    assert len(lines) == 4


def test_address_normalization():
    assert normalize_address("0x" + ADDR.upper()) == ADDR
    assert normalize_address(f"  {ADDR}\n") == ADDR
    for bad in ("", "0x", ADDR[:-2], ADDR + "00", "zz" * 20):
        with pytest.raises(InvalidAddress):
            normalize_address(bad)


def test_record_validation():
    rec = ContractRecord(ADDR, "", 0, "honeypot")
    assert rec.scam_kind is ScamKind.HONEYPOT
    for bad in ({"bytecode_hex": "abc"}, {"bytecode_hex": "AB"}, {"label": 2}, {"label": True}):
        kwargs = {"address": ADDR, "bytecode_hex": "00", **bad}
        with pytest.raises(ValueError):
            ContractRecord(**kwargs)


def _write(tmp_path, rows, header=True):
    path = tmp_path / "d.jsonl"
    lines = [json.dumps({"format": "contract-dataset/1", "provenance": ""})] if header else []
    lines += [r if isinstance(r, str) else json.dumps(r) for r in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.mark.parametrize("row", [
    {"address": ADDR, "bytecode_hex": "00", "label": 2},
    {"address": ADDR, "bytecode_hex": "abc", "label": 1},
    {"address": ADDR, "bytecode_hex": "00", "extra": 1},
    {"address": "nope", "bytecode_hex": "00"},
    "{not json",
    "[1, 2]",
])
def test_load_rejects_bad_rows_with_line_number(tmp_path, row):
    good = {"address": "ab" * 20, "bytecode_hex": "00", "label": 0}
    with pytest.raises(ParseError) as info:
        load_dataset(_write(tmp_path, [good, row]))
    assert info.value.line == 3


def test_load_duplicate_address(tmp_path):
    rows = [{"address": ADDR, "bytecode_hex": "00"}, {"address": "0x" + ADDR.upper(), "bytecode_hex": "01"}]
    with pytest.raises(DuplicateAddress):
        load_dataset(_write(tmp_path, rows))
    with pytest.raises(DuplicateAddress):
        Dataset([ContractRecord(ADDR, "00"), ContractRecord(ADDR, "01")])


def test_load_without_header(tmp_path):
    ds = load_dataset(_write(tmp_path, [{"address": ADDR, "bytecode_hex": "00"}], header=False))
    assert ds.provenance == "" and ds.records[0].label is None


def test_read_address_list(tmp_path):
    path = tmp_path / "a.txt"
    path.write_text(f"# comment\n0x{ADDR.upper()},1,ponzi\n\n{'ab' * 20}  # trailing\n{'cd' * 20},0\n")
    assert read_address_list(path) == [(ADDR, 1, ScamKind.PONZI), ("ab" * 20, None, None), ("cd" * 20, 0, None)]
    path.write_text(f"{ADDR}\nnot-an-address\n")
    with pytest.raises(InvalidAddress, match="line 2"):
        read_address_list(path)
    path.write_text(f"{ADDR},7\n")
    with pytest.raises(ParseError):
        read_address_list(path)
    path.write_text(f"{ADDR},1,rugpull\n")
    with pytest.raises(ParseError):
        read_address_list(path)


# -- fetching -------------------------------------------------------------------------


@pytest.mark.parametrize("style", ["rpc", "explorer"])
def test_fetch_and_cache(tmp_path, fake_node, style):
    cache = BytecodeCache(tmp_path / "cache")
    code = fetch_bytecode("0x" + "11" * 20, fake_node.url, "k3y", cache=cache, style=style)
    assert code == "6080604052348015600f57600080fd5b"
    assert cache.path_for("11" * 20).read_text() == code + "\n"
    assert fake_node.requests == ["0x" + "11" * 20]
    if style == "explorer":
        assert fake_node.last_query["apikey"] == ["k3y"]
    assert fetch_bytecode("11" * 20, fake_node.url, cache=cache, style=style) == code
    assert len(fake_node.requests) == 1


def test_fetch_api_key_from_env(tmp_path, fake_node, monkeypatch):
    monkeypatch.setenv("SCS_API_KEY", "from-env")
    fetch_bytecode("22" * 20, fake_node.url, cache=BytecodeCache(tmp_path), style="explorer")
    assert fake_node.last_query["apikey"] == ["from-env"]


def test_fetch_eoa(tmp_path, fake_node):
    cache = BytecodeCache(tmp_path)
    with pytest.raises(NotAContract):
        fetch_bytecode("33" * 20, fake_node.url, cache=cache)
    assert not cache.path_for("33" * 20).exists()


@pytest.mark.parametrize("reply", [b"<html>", b"[]", b'{"result": 5}', b'{"result": "0xzz"}',
                                   b'{"error": {"code": -32000, "message": "boom"}}'])
def test_fetch_malformed(tmp_path, fake_node, reply):
    fake_node.raw_reply = reply
    with pytest.raises(MalformedResponse):
        fetch_bytecode("11" * 20, fake_node.url, cache=BytecodeCache(tmp_path))


def test_fetch_network_error(tmp_path):
    with pytest.raises(NetworkError) as info:
        fetch_bytecode("11" * 20, "http://127.0.0.1:9/", cache=BytecodeCache(tmp_path), timeout=2)
    assert info.value.exit_code == 3


def test_fetch_rejects_bad_address_before_network(tmp_path):
    with pytest.raises(InvalidAddress):
        fetch_bytecode("0x1234", "http://127.0.0.1:9/", cache=BytecodeCache(tmp_path))
