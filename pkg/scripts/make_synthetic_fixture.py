"""Regenerate tests/fixtures/synthetic_ratings.csv (small low-rank rating matrix)."""
import argparse
from pathlib import Path

from mwgp.data import synthetic_low_rank


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "tests/fixtures/synthetic_ratings.csv"))
    ap.add_argument("--users", type=int, default=40)
    ap.add_argument("--items", type=int, default=30)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    task = synthetic_low_rank(args.users, args.items, rank=2, observed=0.35, noise=0.1,
                              seed=args.seed, offset=3.0)
    d = task.train
    with open(args.out, "w") as fh:
        fh.write("userId,movieId,rating,timestamp\n")
        for k, (u, i, y) in enumerate(zip(d.users, d.items, d.ratings)):
            fh.write(f"{u + 1},{i + 101},{y:.4f},{978300000 + k}\n")
    print(f"wrote {len(d)} ratings to {args.out}")


if __name__ == "__main__":
    main()
