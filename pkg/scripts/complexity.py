"""Per-epoch wall time as a function of inducing pairs m and observed triples n."""
import argparse
import time

import numpy as np

from mwgp.data import Dataset
from mwgp.model import ModelConfig, init_model
from mwgp.trainer import TrainOptions, train


def epoch_seconds(n, m, rank=8, batch_size=8192, reps=5):
    rng = np.random.default_rng(0)
    data = Dataset.from_arrays(rng.integers(0, 300, n), rng.integers(0, 300, n), rng.normal(size=n), 300, 300)
    state = init_model(ModelConfig(300, 300, rank, m))
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        train(state, data, TrainOptions(batch_size=batch_size, epochs=1, log_every=0))
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, nargs="+", default=[8192, 16384, 32768, 65536])
    ap.add_argument("--m", type=int, nargs="+", default=[32, 64, 128, 256, 512])
    ap.add_argument("--fixed-n", type=int, default=16384)
    ap.add_argument("--fixed-m", type=int, default=128)
    args = ap.parse_args()

    print("m,n,seconds")
    ms = [(m, epoch_seconds(args.fixed_n, m)) for m in args.m]
    for m, s in ms:
        print(f"{m},{args.fixed_n},{s:.4f}")
    ns = [(n, epoch_seconds(n, args.fixed_m)) for n in args.n]
    for n, s in ns:
        print(f"{args.fixed_m},{n},{s:.4f}")
    slope_m = np.polyfit(np.log([m for m, _ in ms]), np.log([s for _, s in ms]), 1)[0]
    slope_n = np.polyfit(np.log([n for n, _ in ns]), np.log([s for _, s in ns]), 1)[0]
    print(f"# log-log slope in m: {slope_m:.2f} (quadratic cost -> 2), in n: {slope_n:.2f} (linear -> 1)")


if __name__ == "__main__":
    main()
