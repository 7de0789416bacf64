"""5-fold cross-validation on MovieLens-100K (u.data) at the default hyperparameters.

Writes per-fold and aggregate metrics under --out and checks the
RMSE <= 0.97 / d_0.8 < d_1.0 targets.
"""
import argparse
import json
import os
import time

from mwgp.data import parse_ratings
from mwgp.pipeline import RunConfig, crossval


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--data", default="data/ml-100k/u.data")
    ap.add_argument("--format", default="movielens-tsv")
    ap.add_argument("--epochs", type=int, default=500)
    ap.add_argument("--folds", type=int, default=5)
    ap.add_argument("--parallel-folds", action="store_true")
    ap.add_argument("--out", default="runs/ml100k")
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)

    data = parse_ratings(args.data, args.format)
    cfg = RunConfig(rank=8, inducing=128, batch_size=2**16, epochs=args.epochs, lr=0.01, folds=args.folds,
                    validation_fraction=0.0, log_every=0)
    t0 = time.perf_counter()
    reports, agg = crossval(data, cfg, parallel=args.parallel_folds)
    agg["minutes"] = (time.perf_counter() - t0) / 60
    with open(os.path.join(args.out, "metrics.json"), "w") as fh:
        json.dump({"folds": reports, "aggregate": agg}, fh, indent=2)
    for r in reports:
        q = r["quantiles"]
        print(f"fold {r['fold']}: rmse {r['rmse']:.4f} mae {r['mae']:.4f} "
              f"d_0.8 {q['0.8']['rmse']:.4f} d_0.9 {q['0.9']['rmse']:.4f}")
    ok = agg["rmse"]["mean"] <= 0.97 and all(r["quantiles"]["0.8"]["rmse"] < r["rmse"] for r in reports)
    print(f"mean rmse {agg['rmse']['mean']:.4f} +/- {agg['rmse']['std']:.4f}; "
          f"{'PASS' if ok else 'FAIL'}; {agg['minutes']:.1f} min")


if __name__ == "__main__":
    main()
