"""Sweep nu and compare the Monte Carlo mean of ln alpha^2 with I(nu) and 2 I(nu)."""
import argparse
import math

import numpy as np

from fvlab.sampling import RngStream, sample_alpha_sq
from fvlab.specfun import i_of_nu


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--draws", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--nus", type=float, nargs="+", default=[-4, -2, -1, -0.5, 0, 0.5, 1, 1.5])
    args = ap.parse_args()

    print(f"{'nu':>6} {'mean ln a^2':>12} {'se':>8} {'I(nu)':>10} {'2 I(nu)':>10} {'z vs 2I':>8}")
    for k, nu in enumerate(args.nus):
        y = np.log(sample_alpha_sq(nu, RngStream(args.seed, k), args.draws))
        m, se = y.mean(), y.std(ddof=1) / math.sqrt(y.size)
        i = i_of_nu(nu)
        print(f"{nu:6.2f} {m:12.5f} {se:8.5f} {i:10.5f} {2 * i:10.5f} {(m - 2 * i) / se:8.2f}")


if __name__ == "__main__":
    main()
