"""Write the planted-marker synthetic corpus as a dataset file."""

import argparse

from bytescam.ingest import save_dataset
from bytescam.synthetic import MARKER, make_synthetic_dataset


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("out")
    p.add_argument("--benign", type=int, default=600)
    p.add_argument("--scam", type=int, default=200)
    p.add_argument("--p-scam", type=float, default=0.95)
    p.add_argument("--p-benign", type=float, default=0.05)
    p.add_argument("--marker", default=MARKER)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    ds = make_synthetic_dataset(args.benign, args.scam, seed=args.seed, marker=args.marker,
                                p_scam=args.p_scam, p_benign=args.p_benign)
    save_dataset(ds, args.out)
    print(f"wrote {len(ds)} records to {args.out} ({ds.provenance})")


if __name__ == "__main__":
    main()
