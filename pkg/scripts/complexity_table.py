"""Covering-number and switching-count bounds across manifolds and resolutions."""

import argparse

from densitysteer import complexity as cx


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--max-dim", type=int, default=6)
    ap.add_argument("--r", type=float, nargs="+", default=[0.5, 0.1, 0.01])
    args = ap.parse_args()

    manifolds = [cx.sphere(n) for n in range(1, args.max_dim + 1)] + [cx.flat_torus()]
    print(f"{'M':>4} {'n':>2} {'r':>6} {'N_low':>11} {'N_high':>11} {'k_low':>11} "
          f"{'log10 k_low':>12}")
    for m in manifolds:
        for r in args.r:
            rep = cx.complexity_report(m, r, m.intrinsic_dim)
            print(f"{m.name:>4} {m.intrinsic_dim:2d} {r:6.3g} {rep.N_low:11.4g} "
                  f"{rep.N_high:11.4g} {rep.k_low:11.4g} {rep.log10_k_low:12.3f}")


if __name__ == "__main__":
    main()
