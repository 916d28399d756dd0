import pytest
from hypothesis import given
from hypothesis import strategies as st

from bytescam.errors import EmptyInput, NonHexCharacter, OddLength
from bytescam.tokenizer import normalize_hex, opcode_name, render_mnemonics, tokenize
from .conftest import hex_bytes


def pair_oracle(h):
    out, i = [], 0
    while i < len(h):
        out.append(h[i] + h[i + 1])
        i += 2
    return out


def test_normalize_strips_prefix():
    assert normalize_hex("0x6080604052") == "6080604052"
    assert normalize_hex("0X6080") == "6080"
    assert normalize_hex("  0xABcd \n") == "abcd"


def test_normalize_drops_inner_whitespace():
    assert normalize_hex("6080 60\n40") == "60806040"


def test_normalize_errors():
    with pytest.raises(OddLength):
        normalize_hex("608")
    with pytest.raises(NonHexCharacter) as exc:
        normalize_hex("60zz")
    assert exc.value.offset == 2


def test_tokenize_examples():
    assert tokenize("6080604052") == ("60", "80", "60", "40", "52")
    assert tokenize("11") == ("11",)
    with pytest.raises(EmptyInput):
        tokenize("")


@given(hex_bytes)
def test_tokenize_matches_pair_oracle(h):
    toks = tokenize(h)
    assert list(toks) == pair_oracle(h)
    assert len(toks) == len(h) // 2
    assert "".join(toks) == h


@given(st.binary(min_size=1, max_size=32))
def test_normalize_then_tokenize_roundtrip(raw):
    h = raw.hex()
    assert "".join(tokenize(normalize_hex("0x" + h.upper()))) == h


@pytest.mark.parametrize("byte,name", [
    (0x11, "GT"), (0x00, "STOP"), (0x0C, "INVALID"), (0x20, "KECCAK256"),
    (0x5F, "PUSH0"), (0x60, "PUSH1"), (0x7F, "PUSH32"), (0x80, "DUP1"), (0x9F, "SWAP16"),
    (0xA4, "LOG4"), (0xF3, "RETURN"), (0xFE, "INVALID"), (0xFF, "SELFDESTRUCT"), (0xEF, "INVALID"),
])
def test_opcode_name(byte, name):
    assert opcode_name(byte) == name


def test_opcode_name_total():
    names = [opcode_name(b) for b in range(256)]
    assert all(isinstance(n, str) and n for n in names)
    assert names == [opcode_name(b) for b in range(256)]
    with pytest.raises(ValueError):
        opcode_name(256)


def test_render_mnemonics():
    assert render_mnemonics("1157") == "GT JUMPI"
    assert render_mnemonics("6080") == "PUSH1 DUP1"
