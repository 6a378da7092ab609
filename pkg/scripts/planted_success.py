"""Success rate of the solver on the planted two-blob instance, per oracle.

    python scripts/planted_success.py --seeds 20 --deltas 0,0.1,0.25,0.5
"""

import argparse
import json
import time

from qkmeans.cli import generate_points
from qkmeans.core import normalize_dataset
from qkmeans.oracle import OracleConfig
from qkmeans.scheme import SchemeParams, brute_force_opt, solve


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--separation", type=float, default=10.0)
    p.add_argument("--spread", type=float, default=0.1)
    p.add_argument("--eps", type=float, default=0.5)
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--deltas", default="0,0.25")
    args = p.parse_args()

    data = normalize_dataset(generate_points("gaussian-mixture", 0, args.n, 2, 2, args.separation, args.spread))
    opt = brute_force_opt(data, 2).cost
    print(f"N={data.n} eta={data.eta:.1f} OPT={opt:.6g}")
    for delta in (float(x) for x in args.deltas.split(",")):
        cfg = OracleConfig.delta_close(delta) if delta > 0 else OracleConfig.exact()
        t0 = time.perf_counter()
        ratios = []
        for seed in range(args.seeds):
            _, report = solve(data, 2, args.eps, cfg, seed, SchemeParams.desk(2, args.eps, delta))
            ratios.append(report["cost"] / opt)
        wins = sum(r <= 1 + args.eps for r in ratios)
        print(json.dumps({"delta": delta, "success": wins, "runs": args.seeds, "worst_ratio": max(ratios), "seconds": round(time.perf_counter() - t0, 1)}))


if __name__ == "__main__":
    main()
