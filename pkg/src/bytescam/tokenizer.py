"""Bytecode normalization, byte tokenization and the EVM opcode table."""

import re
import string

from .errors import EmptyInput, NonHexCharacter, OddLength

_HEX = set(string.hexdigits.lower())
_TOKEN_RE = re.compile(r"[0-9a-f]{2}")

# Mnemonics follow the yellow paper's opcode appendix (Cancun edition).
# Anything missing from this table is unassigned and renders as INVALID.
OPCODES = {
    0x00: "STOP", 0x01: "ADD", 0x02: "MUL", 0x03: "SUB", 0x04: "DIV",
    0x05: "SDIV", 0x06: "MOD", 0x07: "SMOD", 0x08: "ADDMOD", 0x09: "MULMOD",
    0x0A: "EXP", 0x0B: "SIGNEXTEND",
    0x10: "LT", 0x11: "GT", 0x12: "SLT", 0x13: "SGT", 0x14: "EQ",
    0x15: "ISZERO", 0x16: "AND", 0x17: "OR", 0x18: "XOR", 0x19: "NOT",
    0x1A: "BYTE", 0x1B: "SHL", 0x1C: "SHR", 0x1D: "SAR",
    0x20: "KECCAK256",
    0x30: "ADDRESS", 0x31: "BALANCE", 0x32: "ORIGIN", 0x33: "CALLER",
    0x34: "CALLVALUE", 0x35: "CALLDATALOAD", 0x36: "CALLDATASIZE",
    0x37: "CALLDATACOPY", 0x38: "CODESIZE", 0x39: "CODECOPY",
    0x3A: "GASPRICE", 0x3B: "EXTCODESIZE", 0x3C: "EXTCODECOPY",
    0x3D: "RETURNDATASIZE", 0x3E: "RETURNDATACOPY", 0x3F: "EXTCODEHASH",
    0x40: "BLOCKHASH", 0x41: "COINBASE", 0x42: "TIMESTAMP", 0x43: "NUMBER",
    0x44: "PREVRANDAO", 0x45: "GASLIMIT", 0x46: "CHAINID",
    0x47: "SELFBALANCE", 0x48: "BASEFEE", 0x49: "BLOBHASH",
    0x4A: "BLOBBASEFEE",
    0x50: "POP", 0x51: "MLOAD", 0x52: "MSTORE", 0x53: "MSTORE8",
    0x54: "SLOAD", 0x55: "SSTORE", 0x56: "JUMP", 0x57: "JUMPI", 0x58: "PC",
    0x59: "MSIZE", 0x5A: "GAS", 0x5B: "JUMPDEST", 0x5C: "TLOAD",
    0x5D: "TSTORE", 0x5E: "MCOPY", 0x5F: "PUSH0",
    0xA0: "LOG0", 0xA1: "LOG1", 0xA2: "LOG2", 0xA3: "LOG3", 0xA4: "LOG4",
    0xF0: "CREATE", 0xF1: "CALL", 0xF2: "CALLCODE", 0xF3: "RETURN",
    0xF4: "DELEGATECALL", 0xF5: "CREATE2", 0xFA: "STATICCALL",
    0xFD: "REVERT", 0xFE: "INVALID", 0xFF: "SELFDESTRUCT",
}
OPCODES.update({0x60 + i: f"PUSH{i + 1}" for i in range(32)})
OPCODES.update({0x80 + i: f"DUP{i + 1}" for i in range(16)})
OPCODES.update({0x90 + i: f"SWAP{i + 1}" for i in range(16)})


def normalize_hex(raw):
    """Return the canonical form of a bytecode string.

    Whitespace anywhere is dropped, an optional ``0x`` prefix is stripped and
    the result is lowercased. Offsets in ``NonHexCharacter`` refer to the
    whitespace-free string after prefix removal.
    """
    s = "".join(raw.split())
    if s[:2] in ("0x", "0X"):
        s = s[2:]
    s = s.lower()
    for i, ch in enumerate(s):
        if ch not in _HEX:
            raise NonHexCharacter(ch, i)
    if len(s) % 2:
        raise OddLength(f"hex string has odd length {len(s)}")
    return s


def tokenize(hex_str):
    """Split canonical hex into two-character byte tokens.

    PUSH immediates are not special-cased: every byte becomes a token.
    """
    if not hex_str:
        raise EmptyInput("cannot tokenize empty bytecode")
    if len(hex_str) % 2:
        raise OddLength(f"hex string has odd length {len(hex_str)}")
    tokens = tuple(hex_str[i:i + 2] for i in range(0, len(hex_str), 2))
    for i, tok in enumerate(tokens):
        if not _TOKEN_RE.fullmatch(tok):
            bad = next(c for c in tok if c not in _HEX)
            raise NonHexCharacter(bad, 2 * i + tok.index(bad))
    return tokens


def opcode_name(byte):
    if not 0 <= byte <= 255:
        raise ValueError(f"byte out of range: {byte}")
    return OPCODES.get(byte, "INVALID")


def render_mnemonics(ngram):
    """``"1157"`` -> ``"GT JUMPI"``: one mnemonic per byte of an n-gram string."""
    return " ".join(opcode_name(int(ngram[i:i + 2], 16)) for i in range(0, len(ngram), 2))
