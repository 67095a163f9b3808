#!/usr/bin/env python3
"""Rate integrals, truncation level and case label over a range of beta.

For a finite-mean law the ratio frak_I / (beta E[V]) should approach 1 as
beta decreases; for Pareto(alpha < 1) it grows without bound.
"""
from __future__ import annotations

import argparse
import math
import warnings

import numpy as np

from annealed_lyapunov import theory
from annealed_lyapunov.environment import Exponential, Pareto


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--alpha", type=float, default=0.5)
    ap.add_argument("--epsilon", type=float, default=0.1)
    ap.add_argument("--betas", type=float, nargs="+", default=list(np.logspace(-1, -8, 8)))
    args = ap.parse_args()
    par, exp = Pareto(args.alpha, 1.0), Exponential(1.0)
    print("beta,frak_I,frak_I_bar,M_beta,case,cost_star,exp_ratio_to_beta_mean")
    for beta in args.betas:
        F = theory.frak_I(beta, par)
        Fb = theory.frak_I_bar(beta, par)
        _, M = theory.m_beta(beta, par, args.epsilon)
        case = theory.classify_case(beta, par, args.epsilon, M_beta=M).case.value
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            ratio = theory.frak_I(beta, exp) / (beta * exp.mean)
        print(f"{beta:.3g},{F:.10g},{Fb:.10g},{M:.6g},{case},{math.sqrt(6 * F):.6g},{ratio:.6f}")


if __name__ == "__main__":
    main()
