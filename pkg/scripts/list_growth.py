"""Closed-form candidate-list sizes for both presets over a (k, eps, delta) grid.

Nothing is enumerated; this shows where the paper preset stops being runnable.
"""

import argparse

from qkmeans.scheme import SchemeParams


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--ks", default="1,2,3")
    p.add_argument("--eps-grid", default="0.5,0.3,0.1")
    p.add_argument("--deltas", default="0,0.25,0.5")
    args = p.parse_args()

    print(f"{'preset':6} {'k':>2} {'eps':>5} {'delta':>5} {'rho':>9} {'tau':>4} {'|M|':>9} {'|L|':>12}")
    for preset in ("desk", "paper"):
        for k in (int(x) for x in args.ks.split(",")):
            for eps in (float(x) for x in args.eps_grid.split(",")):
                for delta in (float(x) for x in args.deltas.split(",")):
                    params = SchemeParams.preset_for(preset, k, eps, delta)
                    size = params.list_size(2 * k)
                    print(f"{preset:6} {k:>2} {eps:>5} {delta:>5} {params.rho:>9} {params.tau:>4} {params.multiset_size(2 * k):>9} {size:>12.3e}")


if __name__ == "__main__":
    main()
