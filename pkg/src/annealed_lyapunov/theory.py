"""Closed-form quantities, Riemann splittings and scale bookkeeping.

All potentials live in physical units; ``beta * z`` is the dimensionless
strength.  ``q`` is the escape probability of the walk (``q_3`` unless a
caller passes another value).
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
from scipy import optimize, special

from .environment import PotentialSpec
from .lattice_walk import escape_prob, green_constant

__all__ = [
    "default_q",
    "f_eval",
    "f_alt",
    "f_inverse",
    "frak_I",
    "frak_I_bar",
    "mobility_edge_integral",
    "mobility_edge_via_f",
    "SplitResult",
    "riemann_split",
    "rho_grid_split",
    "MBeta",
    "m_beta",
    "z0_root",
    "Case",
    "CaseResult",
    "classify_case",
    "psi_p",
    "chernoff_upper",
    "surgery_count_bound",
    "surgery_binomial",
    "CostProfile",
    "optimal_speed",
    "cd_constant",
    "delta_admissible",
    "ScaleSet",
    "scales",
    "MAX_KAPPA_PRIME",
]

MAX_KAPPA_PRIME = 10_000


def default_q(d: int = 3) -> float:
    return escape_prob(d, "quadrature")


def _check_q(q: float) -> None:
    if not 0 < q < 1:
        raise ValueError(f"q must lie in (0, 1), got {q!r}")


# ---------------------------------------------------------------------------
# the function f
# ---------------------------------------------------------------------------


def f_eval(z, q: float | None = None):
    """f(z) = q (1 - e^{-z}) / (1 - (1 - q) e^{-z}) for z >= 0.

    Evaluated as ``q u / (q + (1-q) u)`` with ``u = 1 - e^{-z}``, which
    keeps full relative accuracy for small ``z``.
    """
    q = default_q() if q is None else q
    _check_q(q)
    za = np.asarray(z, dtype=float)
    if np.any(za < 0) or np.any(np.isnan(za)):
        raise ValueError("f is defined for z >= 0 only")
    u = -np.expm1(-za)
    out = q * u / (q + (1.0 - q) * u)
    return float(out) if out.ndim == 0 else out


def f_alt(z, q: float | None = None):
    """The same function written as q (e^z - 1) / (e^z - 1 + q)."""
    q = default_q() if q is None else q
    _check_q(q)
    za = np.asarray(z, dtype=float)
    if np.any(za < 0):
        raise ValueError("f is defined for z >= 0 only")
    w = np.expm1(np.minimum(za, 700.0))
    out = np.where(np.isinf(za), q, q * w / (w + q))
    return float(out) if out.ndim == 0 else out


def f_inverse(y: float, q: float | None = None) -> float:
    """The z >= 0 with f(z) = y, for 0 <= y < q."""
    q = default_q() if q is None else q
    _check_q(q)
    if not 0 <= y < q:
        raise ValueError("f takes values in [0, q)")
    # e^z = (q - y(1-q)) / (q - y)
    return math.log1p(y / (q - y) * q) if y > 0 else 0.0


def frak_I(beta: float, mu: PotentialSpec, q: float | None = None) -> float:
    """Rate integral: the integral of f(beta z) against mu."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    q = default_q() if q is None else q
    return mu.expect(lambda z: f_eval(beta * z, q), scale=1.0 / beta)


def mobility_edge_integral(beta: float, mu: PotentialSpec, q: float | None = None) -> float:
    """Integral of (1/q + 1/(beta z))^{-1} against mu."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    q = default_q() if q is None else q
    _check_q(q)
    return mu.expect(lambda z: q * beta * z / (beta * z + q), scale=q / beta)


def mobility_edge_via_f(beta: float, mu: PotentialSpec, q: float | None = None) -> float:
    """Integral of f(log(1 + beta z)), i.e. the rate integral of V_beta = log(1 + beta V)/beta."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    q = default_q() if q is None else q
    return mu.expect(lambda z: f_eval(math.log1p(beta * z), q), scale=q / beta)


frak_I_bar = mobility_edge_via_f


# ---------------------------------------------------------------------------
# splittings
# ---------------------------------------------------------------------------


@dataclass
class SplitResult:
    """Riemann splitting of the important range, optionally with the rho-grid part.

    ``intervals`` are the retained ``(a_l, b_l)`` in units of ``beta z``
    with weights ``p_l``.  ``rho_cells`` rows are ``(l, lo, hi, p_tilde)``
    with the cell clipped to ``[beta M, a)``.
    """

    beta: float
    epsilon: float
    a: float
    q: float
    grid: list[float]
    cell_weights: list[float]
    intervals: list[tuple[float, float]]
    weights: list[float]
    I_beta: float
    riemann_sum: float
    important_integral: float
    degenerate: bool = False
    M_beta: float | None = None
    rho_cells: list[tuple[int, float, float, float]] = field(default_factory=list)
    l0: int | None = None
    l_beta: int | None = None
    retained_l: list[int] = field(default_factory=list)
    I_prime: float = 0.0
    intermediate_integral: float = 0.0
    frak_I: float | None = None
    rho_empty: bool = False

    @property
    def kappa(self) -> int:
        return len(self.intervals)

    @property
    def kappa_prime(self) -> int:
        return len(self.grid) - 1

    @property
    def p_important(self) -> float:
        """P[0 is an important site] = sum of retained weights."""
        return math.fsum(self.weights)

    @property
    def I_tilde(self) -> float:
        return self.I_beta + self.I_prime

    def postconditions(self) -> dict[str, bool]:
        eps = self.epsilon
        tol = 1e-12
        out = {
            "important_lower_bound": self.I_beta >= (1 - eps) ** 2 * self.important_integral - tol,
            "weights_in_unit_interval": all(0 <= w <= 1 for w in self.weights),
        }
        if self.weights:
            fa = f_eval(self.a, self.q)
            thr = eps * fa / self.kappa_prime * self.p_important
            out["retained_weight_floor"] = min(self.weights) >= thr * (1 - 1e-12)
        if self.M_beta is not None and self.frak_I is not None:
            rho = 1 - eps
            out["retained_cells"] = all(
                p >= rho ** (-l / 2) * self.frak_I for l, _, _, p in self.rho_cells if l in self.retained_l)
            out["intermediate_lower_bound"] = (self.I_prime >= (1 - eps) * self.intermediate_integral
                                   - eps * self.frak_I - tol)
        return out


def _f_grid(a: float, epsilon: float, q: float) -> list[float]:
    grid = [a]
    while True:
        target = f_eval(grid[-1], q) / (1 - epsilon)
        if target >= q:
            grid.append(math.inf)
            return grid
        grid.append(f_inverse(target, q))
        if len(grid) - 1 > MAX_KAPPA_PRIME:
            raise ValueError(f"splitting grid exceeds {MAX_KAPPA_PRIME} cells; increase a or epsilon")


def riemann_split(beta: float, mu: PotentialSpec, epsilon: float, a: float,
                  q: float | None = None) -> SplitResult:
    """Split ``[a/beta, inf)`` into cells on which f varies by at most a factor 1/(1-eps).

    Cells whose mass falls below ``(eps/kappa') f(a) mu([a/beta, inf))`` are
    dropped; ``I_beta`` is the Riemann sum over the rest.
    """
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    if not (a > 0 and beta > 0):
        raise ValueError("a and beta must be positive")
    q = default_q() if q is None else q
    grid = _f_grid(a, epsilon, q)
    kp = len(grid) - 1
    cell_w = [mu.mass(lo / beta, hi / beta) for lo, hi in zip(grid[:-1], grid[1:])]
    total = mu.tail(a / beta)
    important = mu.expect(lambda z: f_eval(beta * z, q), a / beta, math.inf, scale=1.0 / beta)
    riemann = math.fsum(f_eval(lo, q) * w for lo, w in zip(grid[:-1], cell_w))
    if total <= 0.0:
        return SplitResult(beta, epsilon, a, q, grid, cell_w, [], [], 0.0, riemann, important, degenerate=True)
    thr = epsilon / kp * f_eval(a, q) * total
    keep = [i for i, w in enumerate(cell_w) if w > 0 and w >= thr]
    intervals = [(grid[i], grid[i + 1]) for i in keep]
    weights = [cell_w[i] for i in keep]
    I_beta = math.fsum(f_eval(lo, q) * w for (lo, _), w in zip(intervals, weights))
    return SplitResult(beta, epsilon, a, q, grid, cell_w, intervals, weights, I_beta, riemann, important)


def _rho_bounds(rho: float, a: float, bm: float) -> tuple[int, int]:
    l0 = math.floor(math.log(a) / math.log(rho))
    while rho ** (l0 + 1) >= a:
        l0 += 1
    while rho**l0 < a:
        l0 -= 1
    lb = math.floor(math.log(bm) / math.log(rho)) + 2
    while rho ** (lb - 2) < bm:
        lb -= 1
    while rho ** (lb - 1) >= bm:
        lb += 1
    return l0, lb


def rho_grid_split(beta: float, mu: PotentialSpec, epsilon: float, a: float, M_beta: float,
                   q: float | None = None, split: SplitResult | None = None) -> SplitResult:
    """Geometric splitting of the intermediate range ``beta z in [beta M, a)``.

    Cells ``[rho^l, rho^{l-1})`` with ``rho = 1 - eps`` run over
    ``l0 <= l <= l_beta``; each is clipped to ``[beta M, a)`` so that no mass
    is shared with the important range.  Cells with
    ``p_l >= rho^{-l/2} frak_I`` are retained and ``I_prime`` is their
    ``sum rho^l p_l``.  When ``split`` is given its important part is kept.
    """
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    if not M_beta > 0:
        raise ValueError("M_beta must be positive")
    q = default_q() if q is None else q
    if split is None:
        split = riemann_split(beta, mu, epsilon, a, q)
    rho = 1 - epsilon
    bm = beta * M_beta
    fI = frak_I(beta, mu, q)
    inter = mu.expect(lambda z: f_eval(beta * z, q), M_beta, a / beta, scale=1.0 / beta) if bm < a else 0.0
    if bm >= a:
        return replace(split, M_beta=M_beta, rho_cells=[], l0=None, l_beta=None, retained_l=[],
                       I_prime=0.0, intermediate_integral=0.0, frak_I=fI, rho_empty=True)
    l0, lb = _rho_bounds(rho, a, bm)
    cells = []
    for l in range(l0, lb + 1):
        lo = max(rho**l, bm)
        hi = min(rho ** (l - 1), a)
        p = mu.mass(lo / beta, hi / beta) if hi > lo else 0.0
        cells.append((l, lo, hi, p))
    retained = [l for l, _, _, p in cells if p > 0 and p >= rho ** (-l / 2) * fI]
    I_prime = math.fsum(rho**l * p for l, _, _, p in cells if l in retained)
    return replace(split, M_beta=M_beta, rho_cells=cells, l0=l0, l_beta=lb, retained_l=retained,
                   I_prime=I_prime, intermediate_integral=inter, frak_I=fI, rho_empty=False)


# ---------------------------------------------------------------------------
# truncation level and the three cases
# ---------------------------------------------------------------------------


class MBeta(NamedTuple):
    z0: float
    M_beta: float


def z0_root(q: float | None = None) -> float:
    """Positive root of f(z) = z/2 (f is concave with slope 1 at 0)."""
    q = default_q() if q is None else q
    return optimize.bisect(lambda z: f_eval(z, q) - z / 2, 1e-12, 2.0, xtol=1e-15, rtol=4 * np.finfo(float).eps,
                           maxiter=200)


def m_beta(beta: float, mu: PotentialSpec, epsilon: float, q: float | None = None) -> MBeta:
    """Truncation level ``M = eps E[V 1{beta V <= z0}]`` below which sites are negligible.

    Warns when mu has a finite mean, in which case M stays bounded as
    beta -> 0.  Checks that the mass of f(beta V) below M is at most
    ``2 eps frak_I``.
    """
    q = default_q() if q is None else q
    z0 = z0_root(q)
    M = epsilon * mu.truncated_mean(z0 / beta)
    if math.isfinite(mu.mean):
        warnings.warn("mu has a finite mean: M_beta stays bounded and the infinite-mean machinery does not apply",
                      RuntimeWarning, stacklevel=2)
    if M > 0:
        low = mu.expect(lambda z: f_eval(beta * z, q), 0.0, M, scale=1.0 / beta, hi_inclusive=True)
        fI = frak_I(beta, mu, q)
        if low > 2 * epsilon * fI * (1 + 1e-9) + 1e-15:
            raise RuntimeError(f"low-potential mass {low:.6g} exceeds 2 eps frak_I = {2 * epsilon * fI:.6g}")
    return MBeta(z0, M)


class Case(enum.Enum):
    ONLY_IMPORTANT = "OnlyImportant"
    BOTH = "Both"
    ONLY_INTERMEDIATE = "OnlyIntermediate"
    DEGENERATE = "Degenerate"

    @property
    def number(self) -> int | None:
        return {"OnlyImportant": 1, "Both": 2, "OnlyIntermediate": 3}.get(self.value)


class CaseResult(NamedTuple):
    case: Case
    important: float
    intermediate: float


def classify_case(beta: float, mu: PotentialSpec, epsilon: float, a: float | None = None,
                  q: float | None = None, M_beta: float | None = None) -> CaseResult:
    """Compare the important and intermediate integrals (``a = eps^8`` by default)."""
    q = default_q() if q is None else q
    a = epsilon**8 if a is None else a
    if M_beta is None:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            M_beta = m_beta(beta, mu, epsilon, q).M_beta
    g = lambda z: f_eval(beta * z, q)  # noqa: E731
    imp = mu.expect(g, a / beta, math.inf, scale=1.0 / beta)
    mid = mu.expect(g, M_beta, a / beta, scale=1.0 / beta) if beta * M_beta < a else 0.0
    if imp == 0 and mid == 0:
        case = Case.DEGENERATE
    elif mid < epsilon * imp:
        case = Case.ONLY_IMPORTANT
    elif imp <= epsilon * mid:
        case = Case.ONLY_INTERMEDIATE
    else:
        case = Case.BOTH
    return CaseResult(case, imp, mid)


# ---------------------------------------------------------------------------
# Bernoulli large deviations and counting
# ---------------------------------------------------------------------------


def psi_p(p: float, eta):
    """Bernoulli rate function (p+eta) log((p+eta)/p) + (1-p-eta) log((1-p-eta)/(1-p)).

    Equal to ``+inf`` outside ``[-p, 1-p]``; ``0 log 0 = 0`` at the ends.
    """
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    e = np.asarray(eta, dtype=float)
    x = p + e
    y = 1 - p - e
    # eta = 1 - p or -p up to rounding of p + eta
    tiny = 4 * np.finfo(float).eps
    x = np.where(np.abs(x) <= tiny, 0.0, x)
    y = np.where(np.abs(y) <= tiny, 0.0, y)
    with np.errstate(invalid="ignore", divide="ignore"):
        val = special.xlogy(x, x / p) + special.xlogy(y, y / (1 - p))
    val = np.where((x < 0) | (y < 0), np.inf, np.maximum(val, 0.0))
    return float(val) if val.ndim == 0 else val


def chernoff_upper(n: int, p: float, eta: float, side: str = "upper") -> float:
    """Bound on P[S_n >= n(p + eta)] (``side="upper"``) or P[S_n <= n(p - eta)] (``"lower"``)."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if eta < 0:
        raise ValueError("eta must be non-negative; pick the side instead")
    if side == "upper":
        return math.exp(-n * psi_p(p, eta))
    if side == "lower":
        return math.exp(-n * psi_p(p, -eta))
    raise ValueError("side must be 'upper' or 'lower'")


def surgery_count_bound(c: float, c_prime: float, n: int) -> float:
    """Log of the bound exp([2c' log(1 + c/(2c')) + 2c'] n) on surgeries of {0..cn} with <= c'n cuts."""
    if n < 1 or c <= 0 or c_prime < 0:
        raise ValueError("need c > 0, c' >= 0 and n >= 1")
    if c_prime == 0:
        return 0.0
    return (2 * c_prime * math.log1p(c / (2 * c_prime)) + 2 * c_prime) * n


def surgery_binomial(K: int, m: int) -> int:
    """Number of nondecreasing length-``m`` sequences in {0..K}: C(K + m, m)."""
    return math.comb(K + m, m)


# ---------------------------------------------------------------------------
# speed, constants, scales
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CostProfile:
    """Travel cost ``d v / 2 + I / v`` per unit distance and its minimiser."""

    I: float
    d: int
    v_star: float
    cost_star: float
    degenerate: bool = False

    def cost(self, v):
        v = np.asarray(v, dtype=float)
        return self.d * v / 2 + self.I / v


def optimal_speed(I: float, d: int = 3) -> CostProfile:
    if I < 0:
        raise ValueError("I must be non-negative")
    if d < 3:
        raise ValueError("d must be at least 3")
    if I == 0:
        return CostProfile(0.0, d, 0.0, 0.0, degenerate=True)
    return CostProfile(I, d, math.sqrt(2 * I / d), math.sqrt(2 * d * I))


cd_constant = green_constant


def delta_admissible(d: int, delta: float) -> bool:
    """d(2/d + delta) - (d-2)(2/d - delta) < 2(1 - delta)."""
    return d * (2 / d + delta) - (d - 2) * (2 / d - delta) < 2 * (1 - delta)


@dataclass(frozen=True)
class ScaleSet:
    beta: float
    epsilon: float
    delta: float
    d: int
    L_hat: float
    L: float
    r_prime: float
    r: float
    R: float
    eta_b: float
    M_beta: float | None
    case: Case | None

    @property
    def ordered(self) -> bool:
        """1 < r' < L^{2/d} < r < R < L."""
        return 1 < self.r_prime < self.L ** (2 / self.d) < self.r < self.R < self.L


def scales(beta: float, split: SplitResult, epsilon: float, delta: float, d: int = 3,
           M_beta: float | None = None, case: Case | None = None) -> ScaleSet:
    """Reference lengths from the important-site density and the mesoscopic choices."""
    if not delta_admissible(d, delta):
        raise ValueError(f"delta = {delta} violates d(2/d+delta) - (d-2)(2/d-delta) < 2(1-delta)")
    p = split.p_important
    if not p > 0:
        raise ValueError("split has no retained intervals")
    L_hat = p ** -0.5
    L = L_hat / math.sqrt(f_eval(split.a, split.q))
    return ScaleSet(beta, epsilon, delta, d, L_hat, L,
                    L ** (2 / d - delta), L ** (2 / d + delta), L ** (1 - delta), L ** (-5 * delta / 2),
                    M_beta if M_beta is not None else split.M_beta, case)
