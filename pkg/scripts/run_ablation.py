"""Embedding and architecture ablations plus the logistic-regression row on the synthetic corpus.

Usage: python3 scripts/run_ablation.py [out_dir] [extra ablation flags...]
"""

import sys
import time
from pathlib import Path

from bytescam.cli import main as cli
from bytescam.ingest import save_dataset
from bytescam.synthetic import make_synthetic_dataset, synth_cli_flags


def main():
    out = Path(sys.argv[1] if len(sys.argv) > 1 else "runs/ablation")
    out.mkdir(parents=True, exist_ok=True)
    data = out / "synthetic.jsonl"
    save_dataset(make_synthetic_dataset(600, 200, seed=0), data)
    t0 = time.time()
    code = cli(["ablation", "--dataset", str(data), "--out-dir", str(out), *synth_cli_flags(), *sys.argv[2:]])
    print(f"finished in {time.time() - t0:.0f}s; table in {out / 'ablation.tsv'}")
    return code


if __name__ == "__main__":
    sys.exit(main())
