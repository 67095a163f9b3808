"""Brute-force reference values at tiny scale.

Nothing here calls the compiled walk kernels or the quadrature helpers of
the main modules, so agreement with them is a genuine cross-check.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import mpmath
import numpy as np
from numba import njit
from scipy import optimize

from .environment import Atoms, PotentialSpec

__all__ = [
    "EnumerationBudget",
    "BudgetExceeded",
    "Bracket",
    "exact_e_small",
    "exact_binomial_tail",
    "psi_p_variational",
    "enumerate_surgeries",
    "watson_G0_d3",
    "pareto_rate_integral_mp",
    "pareto_laplace_mp",
    "brute_annealed_weight",
    "dense_green",
    "killed_walk_occupation_mc",
]


class BudgetExceeded(ValueError):
    pass


@dataclass(frozen=True)
class EnumerationBudget:
    max_len: int = 11
    max_states: int = 5**3
    max_paths: float = 1e9

    def check_paths(self, d: int, length: int) -> None:
        if length > self.max_len or float(2 * d) ** length > self.max_paths:
            raise BudgetExceeded(f"(2d)^L = {(2 * d) ** length:.3g} paths exceeds the budget")

    def check_states(self, n: int) -> None:
        if n > self.max_states:
            raise BudgetExceeded(f"{n} states exceeds the dense budget {self.max_states}")


@dataclass(frozen=True)
class Bracket:
    """``lower <= e_{beta,n} <= upper`` from paths of length at most ``max_len``."""

    lower: float
    upper: float
    p_finished: float
    p_unfinished: float
    finished_by_length: np.ndarray
    max_len: int

    def contains(self, x: float, slack: float = 0.0) -> bool:
        return self.lower - slack <= x <= self.upper + slack


@njit(cache=True)
def _enumerate(d, L, proj, thr, loglap):
    W = 2 * L + 3
    off = L + 1
    counts = np.zeros(W**d, np.int64)
    pos = np.zeros((L + 1, d), np.int64)
    pj = np.zeros(L + 1, np.int64)
    lw = np.zeros(L + 1)
    nxt = np.zeros(L + 1, np.int64)
    fin_len = np.zeros(L + 1)
    inv = 1.0 / (2 * d)
    lower = 0.0
    upper_extra = 0.0
    p_unf = 0.0

    idx = 0
    for i in range(d):
        idx = idx * W + off
    lw[0] = loglap[1] - loglap[0]
    counts[idx] += 1
    depth = 0
    while depth >= 0:
        if depth == L:
            pr = inv**L
            p_unf += pr
            upper_extra += np.exp(lw[L]) * pr
        else:
            j = nxt[depth]
            if j < 2 * d:
                nxt[depth] = j + 1
                ax = j // 2
                step = 1 if j % 2 == 0 else -1
                s = pj[depth] + proj[j]
                if s >= 0 and s * s >= thr:
                    pr = inv ** (depth + 1)
                    lower += np.exp(lw[depth]) * pr
                    fin_len[depth + 1] += pr
                    continue
                for i in range(d):
                    pos[depth + 1, i] = pos[depth, i]
                pos[depth + 1, ax] += step
                pj[depth + 1] = s
                idx = 0
                for i in range(d):
                    idx = idx * W + pos[depth + 1, i] + off
                c = counts[idx]
                lw[depth + 1] = lw[depth] + loglap[c + 1] - loglap[c]
                counts[idx] = c + 1
                nxt[depth + 1] = 0
                depth += 1
                continue
        # leave this node
        idx = 0
        for i in range(d):
            idx = idx * W + pos[depth, i] + off
        counts[idx] -= 1
        depth -= 1
    return lower, upper_extra, p_unf, fin_len


def _atom_log_laplace(spec: PotentialSpec, t: float) -> float:
    if isinstance(spec, Atoms):
        terms = [mpmath.mpf(m) * mpmath.exp(-mpmath.mpf(t) * z) for z, m in spec.points]
        return float(mpmath.log(mpmath.fsum(terms)))
    return spec.log_laplace(t)


def exact_e_small(beta: float, n: int, spec: PotentialSpec, ell=None, max_len: int = 10, d: int = 3,
                  budget: EnumerationBudget | None = None) -> Bracket:
    """Enumerate every path of length at most ``max_len`` from the origin.

    Paths crossing ``x . ell >= n`` add their exact annealed weight to the
    lower bound.  Paths still short of the plane at ``max_len`` add their
    prefix weight (local times at ``0..max_len``) to the upper bound, since
    extending a path can only lower its weight.  ``ell`` must be a lattice
    axis or diagonal direction.
    """
    budget = budget or EnumerationBudget()
    budget.check_paths(d, max_len)
    if n < 0:
        raise ValueError("n must be non-negative")
    m = np.zeros(d, np.int64)
    if ell is None:
        m[0] = 1
    else:
        v = np.asarray(ell, float)
        r = np.rint(v / np.abs(v[v != 0]).min())
        if not np.allclose(r / np.linalg.norm(r), v, atol=1e-12):
            raise ValueError("direction must be a small-integer lattice direction")
        m = r.astype(np.int64)
    if n == 0:
        return Bracket(1.0, 1.0, 1.0, 0.0, np.array([1.0]), 0)
    proj = np.array([(1 if j % 2 == 0 else -1) * m[j // 2] for j in range(2 * d)], np.int64)
    thr = int(n) ** 2 * int(m @ m)
    loglap = np.array([_atom_log_laplace(spec, beta * k) if beta > 0 else 0.0 for k in range(max_len + 2)])
    lower, extra, p_unf, fin = _enumerate(d, max_len, proj, thr, loglap)
    return Bracket(float(lower), float(lower + extra), float(fin.sum()), float(p_unf), fin, max_len)


def exact_binomial_tail(n: int, p: float, k: int, side: str = "upper") -> float:
    """P[Bin(n, p) >= k] (``upper``) or P[Bin(n, p) <= k] (``lower``), summed in exact rationals."""
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1]")
    if n > 1000:
        raise ValueError("n is limited to 1000")
    P = Fraction(p)
    if side == "upper":
        ks = range(max(k, 0), n + 1)
    elif side == "lower":
        ks = range(0, min(k, n) + 1)
    else:
        raise ValueError("side must be 'upper' or 'lower'")
    total = sum((math.comb(n, i) * P**i * (1 - P) ** (n - i) for i in ks), Fraction(0))
    return float(total)


def psi_p_variational(p: float, eta: float) -> float:
    """sup over lambda of lambda (p + eta) - log(1 - p + p e^lambda), by bounded Brent search."""
    if not -p <= eta <= 1 - p:
        return math.inf

    def neg(lam):
        return -(lam * (p + eta) - (math.log1p(-p + p * math.exp(lam)) if lam < 30 else lam + math.log(p)
                                    + math.log1p((1 - p) * math.exp(-lam) / p)))

    res = optimize.minimize_scalar(neg, bounds=(-60.0, 60.0), method="bounded",
                                   options={"xatol": 1e-12, "maxiter": 2000})
    return max(-float(res.fun), 0.0)


def enumerate_surgeries(K: int, j: int) -> int:
    """Number of chains 0 = g_0 <= h_1 <= g_1 <= ... <= g_j <= h_{j+1} = K.

    Brute force over nondecreasing tuples when small, otherwise a
    counting recursion over the last value.
    """
    if K < 0 or j < 0:
        raise ValueError("K and j must be non-negative")
    if K > 20 or j > 8:
        raise BudgetExceeded("K <= 20 and j <= 8 required")
    m = 2 * j
    if m == 0:
        return 1
    if math.comb(K + m, m) <= 2_000_000:
        return sum(1 for _ in itertools.combinations_with_replacement(range(K + 1), m))
    ways = [1] * (K + 1)
    for _ in range(m - 1):
        acc, new = 0, []
        for w in ways:
            acc += w
            new.append(acc)
        ways = new
    return sum(ways)


def watson_G0_d3() -> float:
    """Closed form of the cubic-lattice Green function at the origin."""
    g = mpmath.gamma
    val = mpmath.sqrt(6) / (32 * mpmath.pi**3) * g(mpmath.mpf(1) / 24) * g(mpmath.mpf(5) / 24) \
        * g(mpmath.mpf(7) / 24) * g(mpmath.mpf(11) / 24)
    return float(val)


def pareto_rate_integral_mp(beta: float, alpha: float, z_min: float, q: float, kind: str = "f") -> float:
    """Tanh-sinh integral of f(beta z) (or of f(log(1 + beta z)) with ``kind="fbar"``) against Pareto."""
    mpmath.mp.dps = 30
    a, zm, b, qq = map(mpmath.mpf, (alpha, z_min, beta, q))

    def f(x):
        u = -mpmath.expm1(-x)
        return qq * u / (qq + (1 - qq) * u)

    def integrand(z):
        x = b * z if kind == "f" else mpmath.log1p(b * z)
        return f(x) * a * zm**a * z ** (-a - 1)

    brk = [zm, zm * 10, 1 / b, 10 / b, 1000 / b, mpmath.inf]
    brk = sorted(set(x for x in brk if x >= zm), key=lambda x: float(x))
    val = mpmath.quad(integrand, brk)
    mpmath.mp.dps = 15
    return float(val)


def pareto_laplace_mp(t: float, alpha: float, z_min: float) -> float:
    mpmath.mp.dps = 30
    a, zm, tt = map(mpmath.mpf, (alpha, z_min, t))
    val = mpmath.quad(lambda z: mpmath.exp(-tt * z) * a * zm**a * z ** (-a - 1),
                      [zm, zm + 1 / tt, zm + 10 / tt, zm + 100 / tt, mpmath.inf])
    mpmath.mp.dps = 15
    return float(val)


def brute_annealed_weight(counts: dict, atoms: Atoms, beta: float) -> float:
    """Average of exp(-beta sum_x l_x V_x) over every joint atom assignment."""
    sites = list(counts)
    total = 0.0
    terms = []
    for combo in itertools.product(atoms.points, repeat=len(sites)):
        w = 1.0
        s = 0.0
        for (z, m), x in zip(combo, sites):
            w *= m
            s += counts[x] * z
        terms.append(w * math.exp(-beta * s))
    total = math.fsum(terms)
    return total


def dense_green(values: np.ndarray, beta: float, budget: EnumerationBudget | None = None) -> np.ndarray:
    """Inverse of (1 + beta V) - P on a box, assembled with explicit loops."""
    shape = values.shape
    d = len(shape)
    N = int(np.prod(shape))
    (budget or EnumerationBudget(max_states=4096)).check_states(N)
    H = np.zeros((N, N))
    for i, x in enumerate(itertools.product(*[range(s) for s in shape])):
        H[i, i] = 1.0 + beta * values[x]
        for ax in range(d):
            for sgn in (-1, 1):
                y = list(x)
                y[ax] += sgn
                if 0 <= y[ax] < shape[ax]:
                    H[i, np.ravel_multi_index(tuple(y), shape)] = -1.0 / (2 * d)
    return np.linalg.inv(H)


def killed_walk_occupation_mc(shape: tuple[int, ...], source: tuple[int, ...], n_walks: int,
                              rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Mean and standard error of visit counts of a walk killed on leaving the box."""
    d = len(shape)
    N = int(np.prod(shape))
    s1 = np.zeros(N)
    s2 = np.zeros(N)
    for _ in range(n_walks):
        visits: dict[int, int] = {}
        x = list(source)
        while all(0 <= x[i] < shape[i] for i in range(d)):
            k = int(np.ravel_multi_index(tuple(x), shape))
            visits[k] = visits.get(k, 0) + 1
            j = int(rng.integers(2 * d))
            x[j // 2] += 1 if j % 2 == 0 else -1
        for k, c in visits.items():
            s1[k] += c
            s2[k] += c * c
    mean = s1 / n_walks
    var = s2 / n_walks - mean**2
    return mean.reshape(shape), np.sqrt(np.maximum(var, 0) / n_walks).reshape(shape)
