#!/usr/bin/env python3
"""Escape probability q_d by quadrature and by Monte Carlo."""
from __future__ import annotations

import argparse
import time

from annealed_lyapunov import lattice_walk, oracle


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dims", type=int, nargs="+", default=[3, 4, 5])
    ap.add_argument("--walks", type=int, default=1_000_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    print(f"closed form 1/G(0) in d=3: {1 / oracle.watson_G0_d3():.12f}")
    print("d,q_quadrature,q_mc,q_mc_se,seconds")
    for d in args.dims:
        t0 = time.perf_counter()
        q = lattice_walk.escape_prob(d)
        mc = lattice_walk.escape_prob_mc(d, n_walks=args.walks, seed=args.seed)
        print(f"{d},{q:.10f},{mc.value:.6f},{mc.stderr:.6f},{time.perf_counter() - t0:.1f}")


if __name__ == "__main__":
    main()
