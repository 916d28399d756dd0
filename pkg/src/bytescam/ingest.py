"""Contract records, line-delimited dataset files, and bytecode fetching.

Dataset files are UTF-8 JSON Lines. The first line may be a header object
``{"format": "contract-dataset/1", "provenance": "..."}``; every other line is
one record with the keys ``address``, ``bytecode_hex``, ``label`` and
``scam_kind`` (the last two may be ``null``).
"""

import enum
import json
import os
import re
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import requests

from .errors import (
    DuplicateAddress,
    InvalidAddress,
    MalformedResponse,
    NetworkError,
    NotAContract,
    ParseError,
)
from .tokenizer import normalize_hex

DATASET_FORMAT = "contract-dataset/1"
DEFAULT_CACHE_DIR = ".scs-cache"
API_KEY_ENV = "SCS_API_KEY"

_ADDRESS_RE = re.compile(r"[0-9a-f]{40}")
_BYTECODE_RE = re.compile(r"(?:[0-9a-f]{2})*")


class ScamKind(str, enum.Enum):
    PONZI = "ponzi"
    HONEYPOT = "honeypot"
    PHISHING = "phishing"
    OTHER = "other"


def normalize_address(address):
    s = address.strip().lower()
    if s.startswith("0x"):
        s = s[2:]
    if not _ADDRESS_RE.fullmatch(s):
        raise InvalidAddress(f"not a 20-byte hex address: {address!r}")
    return s


@dataclass(frozen=True)
class ContractRecord:
    address: str
    bytecode_hex: str
    label: int | None = None
    scam_kind: ScamKind | None = None

    def __post_init__(self):
        object.__setattr__(self, "address", normalize_address(self.address))
        if not isinstance(self.bytecode_hex, str) or not _BYTECODE_RE.fullmatch(self.bytecode_hex):
            raise ValueError("bytecode_hex must be even-length lowercase hex")
        if self.label is not None and (type(self.label) is not int or self.label not in (0, 1)):
            raise ValueError(f"label must be 0 or 1, got {self.label!r}")
        if self.scam_kind is not None:
            object.__setattr__(self, "scam_kind", ScamKind(self.scam_kind))

    def to_json(self):
        return {
            "address": self.address,
            "bytecode_hex": self.bytecode_hex,
            "label": self.label,
            "scam_kind": self.scam_kind.value if self.scam_kind else None,
        }


@dataclass(frozen=True)
class Dataset:
    records: tuple = ()
    provenance: str = ""

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        seen = set()
        for r in self.records:
            if r.address in seen:
                raise DuplicateAddress(f"duplicate address {r.address}")
            seen.add(r.address)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def labels(self):
        return [r.label for r in self.records]


def save_dataset(ds, path):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(json.dumps({"format": DATASET_FORMAT, "provenance": ds.provenance}) + "\n")
        for r in ds.records:
            f.write(json.dumps(r.to_json()) + "\n")


def load_dataset(path):
    records, provenance, seen = [], "", set()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})", lineno) from exc
            if not isinstance(obj, dict):
                raise ParseError("expected a JSON object", lineno)
            if "format" in obj and lineno == 1:
                if obj["format"] != DATASET_FORMAT:
                    raise ParseError(f"unsupported format {obj['format']!r}", lineno)
                provenance = obj.get("provenance", "")
                continue
            unknown = set(obj) - {"address", "bytecode_hex", "label", "scam_kind"}
            if unknown or "address" not in obj or "bytecode_hex" not in obj:
                raise ParseError(f"bad record keys {sorted(obj)}", lineno)
            try:
                rec = ContractRecord(obj["address"], obj["bytecode_hex"], obj.get("label"), obj.get("scam_kind"))
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from exc
            if rec.address in seen:
                raise DuplicateAddress(f"line {lineno}: duplicate address {rec.address}")
            seen.add(rec.address)
            records.append(rec)
    return Dataset(records, provenance)


def read_address_list(path):
    """Parse ``address[,label[,scam_kind]]`` lines; ``#`` starts a comment.

    Returns a list of ``(address, label, scam_kind)`` with the address
    normalized. Raises ``InvalidAddress`` before anything touches the network.
    """
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = [p.strip() for p in line.split(",")]
            try:
                addr = normalize_address(parts[0])
            except InvalidAddress as exc:
                raise InvalidAddress(f"line {lineno}: {exc}") from None
            label = parts[1] if len(parts) > 1 and parts[1] else None
            if label not in (None, "0", "1"):
                raise ParseError(f"label must be 0 or 1, got {label!r}", lineno)
            try:
                kind = ScamKind(parts[2]) if len(parts) > 2 and parts[2] else None
            except ValueError:
                raise ParseError(f"unknown scam kind {parts[2]!r}", lineno) from None
            out.append((addr, None if label is None else int(label), kind))
    return out


# -- fetching -----------------------------------------------------------------


@dataclass
class BytecodeCache:
    """One ``<address>.hex`` file per contract. Writes are atomic renames."""

    root: Path = field(default_factory=lambda: Path(DEFAULT_CACHE_DIR))

    def __post_init__(self):
        self.root = Path(self.root)

    def path_for(self, address):
        return self.root / f"{address}.hex"

    def get(self, address):
        p = self.path_for(address)
        if p.exists():
            return p.read_text(encoding="ascii").strip()
        return None

    def put(self, address, bytecode_hex):
        self.root.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=self.root, prefix=f".{address}.", suffix=".tmp")
        with os.fdopen(fd, "w", encoding="ascii") as f:
            f.write(bytecode_hex + "\n")
        os.replace(tmp, self.path_for(address))


def _request_code(address, endpoint, api_key, style, timeout, session):
    try:
        if style == "rpc":
            payload = {"jsonrpc": "2.0", "id": 1, "method": "eth_getCode", "params": ["0x" + address, "latest"]}
            resp = session.post(endpoint, json=payload, timeout=timeout)
        elif style == "explorer":
            params = {"module": "proxy", "action": "eth_getCode", "address": "0x" + address, "tag": "latest"}
            if api_key:
                params["apikey"] = api_key
            resp = session.get(endpoint, params=params, timeout=timeout)
        else:
            raise ValueError(f"unknown endpoint style {style!r}")
        resp.raise_for_status()
    except requests.RequestException as exc:
        raise NetworkError(f"{address}: {exc}") from exc
    try:
        body = resp.json()
    except ValueError as exc:
        raise MalformedResponse(f"{address}: response is not JSON") from exc
    if not isinstance(body, dict):
        raise MalformedResponse(f"{address}: unexpected response {body!r}")
    if body.get("error"):
        raise MalformedResponse(f"{address}: endpoint error {body['error']!r}")
    return body.get("result")


def fetch_bytecode(address, endpoint, api_key=None, *, cache=None, style="rpc", timeout=30.0, session=None):
    """Deployed code for ``address`` as canonical hex, cache first.

    ``style`` is ``"rpc"`` for a node's JSON-RPC ``eth_getCode`` or
    ``"explorer"`` for an explorer proxy API (``module=proxy``). The API key
    falls back to the ``SCS_API_KEY`` environment variable.
    """
    address = normalize_address(address)
    cache = cache if cache is not None else BytecodeCache()
    hit = cache.get(address)
    if hit is not None:
        return hit
    if api_key is None:
        api_key = os.environ.get(API_KEY_ENV)
    result = _request_code(address, endpoint, api_key, style, timeout, session or requests.Session())
    if not isinstance(result, str) or not result.lower().startswith("0x"):
        raise MalformedResponse(f"{address}: unexpected result {result!r}")
    try:
        code = normalize_hex(result)
    except ValueError as exc:
        raise MalformedResponse(f"{address}: {exc}") from exc
    if not code:
        raise NotAContract(f"{address} has no code (externally owned account?)")
    cache.put(address, code)
    return code
