"""Empirical miss rate of the sampled cost estimate against the 1/(5L) target.

    python scripts/concentration.py --side 4 --reps 2000
"""

import argparse

import numpy as np

from qkmeans.cli import generate_points
from qkmeans.core import exact_cost, normalize_dataset
from qkmeans.estimator import estimate_cost, sample_count_m
from qkmeans.oracle import DistanceOracle, OracleConfig


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--side", type=int, default=4)
    p.add_argument("--reps", type=int, default=2000)
    p.add_argument("--eps", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    data = normalize_dataset(generate_points("grid", 0, 0, 2, side=args.side))
    oracle = DistanceOracle(OracleConfig(), data.eta)
    rng = np.random.default_rng(args.seed)
    C = data.points[[0]]
    phi = exact_cost(data, C)
    for L in (1, 4, 16, 64):
        for frac in (1.0, 0.1, 0.01):
            m = max(1, int(frac * sample_count_m(oracle.eta_tilde, L, args.eps)))
            miss = np.mean([abs(estimate_cost(data, C, m, oracle, rng).alpha_m - phi) > args.eps * phi for _ in range(args.reps)])
            print(f"L={L:<3} m={m:<6} miss={miss:.4f} target={1 / (5 * L):.4f}")


if __name__ == "__main__":
    main()
