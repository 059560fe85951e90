"""Empirical tube-deviation probabilities against the Gaussian-tail bound over an (a, gamma, delta) grid."""
import argparse

from fvlab.paths import PathConfig, fw_deviation_check
from fvlab.sampling import RngStream


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--beta", type=float, default=3.0)
    ap.add_argument("--reps", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--a", type=float, nargs="+", default=[0.001, 0.01, 0.1, 1.0])
    ap.add_argument("--gamma", type=float, nargs="+", default=[0.5, 0.95])
    args = ap.parse_args()

    b = args.beta
    print(f"{'a':>7} {'gamma':>6} {'delta':>10} {'empirical':>10} {'bound':>8} {'holds':>6}")
    k = 0
    for a in args.a:
        for g in args.gamma:
            dmax = min(0.5 * a * (g / 2) ** (1 / b), a)
            for delta in (dmax, dmax / 2):
                horizon = (1 - g / 2) * a**b
                r = fw_deviation_check(a, b, g, delta, args.reps, PathConfig(dt_base=horizon / 1000),
                                       RngStream(args.seed, k))
                k += 1
                print(f"{a:7g} {g:6g} {delta:10.4g} {r.empirical_prob:10.4f} {r.bound:8.4f} {str(r.holds):>6}")


if __name__ == "__main__":
    main()
