"""Planted-marker synthetic corpora for end-to-end checks.

Contracts mimic compiler output: a common preamble followed by basic blocks
drawn (Zipf-weighted) from a fixed snippet library shared by both classes, so
n-grams recur across contracts and the background carries no class signal.
Scam contracts get a marker bigram inserted between two blocks with
probability ``p_scam``, benign ones with ``p_benign``. The marker always sits
between the same two flanking opcodes, the way a fixed gadget would, so the
n-grams that span it recur instead of scattering over every block boundary.
The snippet alphabet excludes the marker bytes, so unmarked contracts never
contain the marker.
"""

import numpy as np

from .ingest import ContractRecord, Dataset, ScamKind
from .numcore import make_rng

PREAMBLE = "6080604052"
MARKER = "ff31"  # SELFDESTRUCT BALANCE
FLANK = ("5b", "00")  # JUMPDEST .. STOP

# PUSH1 DUP1 MSTORE SWAP1 JUMPI JUMPDEST ADD CALLDATALOAD ISZERO POP JUMP EQ
# AND DUP2 SWAP2 SLOAD SSTORE CALLVALUE PUSH2 PUSH4 SUB LT GT DUP3 MLOAD
# RETURN REVERT CALLER SHR PUSH20 EXP MUL DIV NOT STOP
BACKGROUND = bytes.fromhex("60805290575b0135155056141681915455346163031011825162f3fd331c730a02041900")


def snippet_library(n_snippets=48, min_len=3, max_len=8, alphabet=len(BACKGROUND), seed=12345):
    """Fixed pool of byte blocks; independent of the dataset seed by default."""
    rng = make_rng(seed)
    symbols = np.frombuffer(BACKGROUND[:alphabet], dtype=np.uint8)
    weights = 1.0 / np.arange(1, len(symbols) + 1)
    weights /= weights.sum()
    return [bytes(rng.choice(symbols, size=int(rng.integers(min_len, max_len + 1)), p=weights)).hex()
            for _ in range(n_snippets)]


def _has_marker(code, marker):
    return any(code[i:i + len(marker)] == marker for i in range(0, len(code) - len(marker) + 1, 2))


def make_synthetic_dataset(n_benign=600, n_scam=200, seed=0, marker=MARKER,
                           p_scam=0.95, p_benign=0.05, min_blocks=6, max_blocks=12, library=None, flank=FLANK):
    library = snippet_library() if library is None else library
    if any(_has_marker(s, marker) for s in library):
        raise ValueError("snippet library contains the marker")
    rng = make_rng(seed)
    weights = 1.0 / np.arange(1, len(library) + 1)
    weights /= weights.sum()
    labels = np.array([0] * n_benign + [1] * n_scam)
    records, seen = [], set()
    for label in labels[rng.permutation(len(labels))]:
        plant = rng.random() < (p_scam if label else p_benign)
        blocks = [library[i] for i in rng.choice(len(library), size=int(rng.integers(min_blocks, max_blocks + 1)), p=weights)]
        if plant:
            blocks.insert(int(rng.integers(0, len(blocks) + 1)), flank[0] + marker + flank[1])
        code = PREAMBLE + "".join(blocks)
        if not plant and _has_marker(code, marker):
            raise AssertionError("marker formed across a block boundary")
        while True:
            addr = rng.integers(0, 256, size=20, dtype=np.uint8).tobytes().hex()
            if addr not in seen:
                seen.add(addr)
                break
        records.append(ContractRecord(addr, code, int(label), ScamKind.OTHER if label else None))
    note = (f"synthetic: seed={seed} marker={marker} p_scam={p_scam} p_benign={p_benign} "
            f"n_benign={n_benign} n_scam={n_scam}")
    return Dataset(records, note)


# Training settings used for the synthetic end-to-end and ablation runs. The
# library defaults (E=32, d=64, lr=1e-3, no clipping) memorize individual
# contracts on a corpus this small; see README.
SYNTH_SETTINGS = {
    "epochs": 40,
    "lr": 1e-2,
    "clip_norm": 1.0,
    "lam": 1e-2,
    "embed_dim": 16,
    "hidden_dim": 32,
}


def synth_cli_flags(settings=None):
    """``SYNTH_SETTINGS`` as command-line flags for ``train`` / ``ablation``."""
    settings = SYNTH_SETTINGS if settings is None else settings
    return [tok for k, v in settings.items() for tok in (f"--{k.replace('_', '-')}", str(v))]
