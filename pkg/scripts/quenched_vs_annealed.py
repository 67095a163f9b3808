#!/usr/bin/env python3
"""Annealed estimate versus the quenched mean of log u(0) on slabs."""
from __future__ import annotations

import argparse

import numpy as np

from annealed_lyapunov import fk_mc, theory
from annealed_lyapunov.environment import Pareto


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--beta", type=float, nargs="+", default=[0.05, 0.1])
    ap.add_argument("--n", type=int, nargs="+", default=[4, 8])
    ap.add_argument("--envs", type=int, default=16)
    ap.add_argument("--samples", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=13)
    args = ap.parse_args()
    mu = Pareto(0.5, 1.0)
    print("beta,n,log_e_annealed,se,mean_log_u,se,median_log_u")
    for beta in args.beta:
        tilt = fk_mc.make_tilt(theory.frak_I(beta, mu), 3)
        for n in args.n:
            qp = fk_mc.estimate_quenched(beta, n, mu, n_env=args.envs, seed=args.seed)
            ep = fk_mc.estimate_e(beta, n, mu, None, args.samples, tilt, None, args.seed)
            print(f"{beta},{n},{ep.log_e:.4f},{ep.se_log:.4f},{qp.mean_log:.4f},{qp.mean_log_se:.4f},"
                  f"{float(np.median(qp.log_values)):.4f}")


if __name__ == "__main__":
    main()
