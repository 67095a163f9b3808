"""Monte Carlo estimation of the annealed point-to-hyperplane weight.

Given a path, the environment average of ``exp(-beta sum_{k<T} V(S_k))``
factorises over sites as ``prod_x L(beta l_x)`` with ``L`` the Laplace
transform of the law and ``l_x`` the local times, so only the walk is
simulated.  An exponential tilt towards the target hyperplane keeps the
variance manageable at large ``n``.
"""
from __future__ import annotations

import math
import threading
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import logsumexp

from . import _kernels
from ._lattice import SolverError, cg_solve, masked_transition
from .environment import Box, LazyField, PotentialSpec
from .lattice_walk import integer_direction, unit_direction
from .theory import optimal_speed

__all__ = [
    "LocalTimeProfile",
    "AnnealedWeight",
    "annealed_weight",
    "TiltPolicy",
    "make_tilt",
    "DecayPoint",
    "estimate_e",
    "QuenchedPoint",
    "estimate_quenched",
    "RateFit",
    "fit_rate",
    "DecayEstimate",
    "decay_series",
    "log_laplace_table",
]


@dataclass
class LocalTimeProfile:
    """Visit counts of one path over times ``0..T-1``."""

    counts: dict[tuple[int, ...], int]
    T: int

    @classmethod
    def from_path(cls, path) -> "LocalTimeProfile":
        return cls(dict(path.local_times), int(path.stopping_index))


@dataclass(frozen=True)
class AnnealedWeight:
    value: float
    log_value: float


def annealed_weight(profile: LocalTimeProfile, beta: float, spec: PotentialSpec) -> AnnealedWeight:
    """Environment average of exp(-beta sum V) along the profiled path."""
    lv = math.fsum(spec.log_laplace(beta * k) for k in profile.counts.values())
    return AnnealedWeight(math.exp(lv), lv)


# ---------------------------------------------------------------------------
# Laplace tables
# ---------------------------------------------------------------------------

_TABLES: dict[tuple, np.ndarray] = {}
_TABLE_LOCK = threading.Lock()


def log_laplace_table(spec: PotentialSpec, beta: float, kmax: int) -> np.ndarray:
    """``[log L(beta k) for k = 0..kmax]``, cached and grown on demand."""
    key = (spec, float(beta))
    with _TABLE_LOCK:
        tab = _TABLES.get(key)
        if tab is None or tab.size <= kmax:
            start = 0 if tab is None else tab.size
            ext = np.array([spec.log_laplace(beta * k) for k in range(start, kmax + 1)])
            tab = ext if tab is None else np.concatenate([tab, ext])
            _TABLES[key] = tab
        return tab[: kmax + 1]


# ---------------------------------------------------------------------------
# tilting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TiltPolicy:
    """Step law proportional to exp(lambda e_j . ell) and its exact per-step likelihood ratio."""

    lam: float
    ell: tuple[float, ...]
    probs: tuple[float, ...]
    step_loglr: tuple[float, ...]
    log_norm: float

    @property
    def d(self) -> int:
        return len(self.ell)

    @property
    def drift(self) -> float:
        proj = _projections(np.asarray(self.ell))
        return float(np.dot(self.probs, proj))


def _projections(ell: np.ndarray) -> np.ndarray:
    d = ell.size
    return np.array([(1.0 if j % 2 == 0 else -1.0) * ell[j // 2] for j in range(2 * d)])


def tilt_from_lambda(lam: float, ell) -> TiltPolicy:
    v = unit_direction(ell)
    proj = _projections(v)
    m = 2 * v.size
    x = lam * proj
    log_norm = float(logsumexp(x) - math.log(m))
    if not math.isfinite(log_norm):
        raise ValueError(f"tilt lambda = {lam} overflows the step normalisation")
    logp = x - math.log(m) - log_norm
    probs = np.exp(logp)
    probs /= probs.sum()
    return TiltPolicy(float(lam), tuple(v), tuple(probs), tuple(-math.log(m) - logp), log_norm)


def make_tilt(I: float, d: int = 3, ell=None) -> TiltPolicy:
    """Tilt with ``lambda = d v*``, ``v* = sqrt(2 I / d)`` the optimal speed."""
    if ell is None:
        ell = np.eye(d)[0]
    lam = 0.0 if I == 0 else d * optimal_speed(I, d).v_star
    return tilt_from_lambda(lam, ell)


# ---------------------------------------------------------------------------
# annealed estimator
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DecayPoint:
    """Estimate of e_{beta,n} with a batch-means interval on log scale."""

    beta: float
    n: int
    e_hat: float
    log_e: float
    se_log: float
    ci_low: float
    ci_high: float
    censored_frac: float
    n_samples: int
    mean_steps: float
    lam: float
    seed: int

    @property
    def neg_log_e(self) -> float:
        return -self.log_e


def _batch_seeds(seed: int, n: int, n_batches: int) -> list[int]:
    ss = np.random.SeedSequence(seed, spawn_key=(n,))
    return [int(c.generate_state(1, dtype=np.uint32)[0]) for c in ss.spawn(n_batches)]


def _run_batch(args):
    return _kernels.annealed_paths(*args)


def _geometry(ell, n: int):
    v = unit_direction(ell)
    d = v.size
    m = integer_direction(v)
    proj_f = _projections(v)
    if m is not None:
        proj_int = _projections(m.astype(float)).astype(np.int64)
        thr = int(n) ** 2 * int(m @ m)
        return d, True, proj_int, thr, proj_f
    return d, False, np.zeros(2 * d, np.int64), 0, proj_f


def estimate_e(beta: float, n: int, spec: PotentialSpec, ell=None, n_samples: int = 100_000,
               tilt: TiltPolicy | None = None, cap: int | None = None, seed: int = 0,
               n_batches: int = 32, workers: int = 1, d: int = 3) -> DecayPoint:
    """Estimate ``e_{beta,n} = E E_0[exp(-beta sum_{k<T_n} V(S_k))]``.

    Without ``tilt`` the walk is simple; otherwise paths follow the tilted
    law and carry the likelihood ratio.  Censored paths (``T`` reaching
    ``cap``, default ``200 n^2 d``) contribute zero.  Batch seeds depend on
    ``(seed, n)`` only.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if beta < 0:
        raise ValueError("beta must be non-negative")
    ell = np.eye(d)[0] if ell is None else np.asarray(ell, float)
    d, exact, proj_int, thr, proj_f = _geometry(ell, n)
    if tilt is None:
        tilt = tilt_from_lambda(0.0, ell)
    if len(tilt.ell) != d or not np.allclose(tilt.ell, unit_direction(ell)):
        raise ValueError("tilt direction differs from ell")
    cap = 200 * n * n * d if cap is None else int(cap)
    if beta == 0 and tilt.lam == 0:
        # every weight is 1 and T_n is a.s. finite, so simulating would only add censoring
        return DecayPoint(beta, n, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, n_samples, math.nan, 0.0, seed)
    cum = np.cumsum(tilt.probs)
    cum[-1] = 1.0
    loglr = np.asarray(tilt.step_loglr)
    per = [n_samples // n_batches + (1 if b < n_samples % n_batches else 0) for b in range(n_batches)]
    seeds = _batch_seeds(seed, n, n_batches)
    kmax = 256
    while True:
        loglap = log_laplace_table(spec, beta, kmax) if beta > 0 else np.zeros(kmax + 1)
        jobs = [(m, d, cum, loglr, proj_int, thr, proj_f, float(n), exact, loglap, cap, s)
                for m, s in zip(per, seeds) if m > 0]
        if workers > 1:
            with ProcessPoolExecutor(workers) as ex:
                outs = list(ex.map(_run_batch, jobs))
        else:
            outs = [_run_batch(j) for j in jobs]
        top = max(o[3] for o in outs)
        if top <= kmax:
            break
        kmax = int(2 ** math.ceil(math.log2(top)))
    logw = [o[0] for o in outs]
    allw = np.concatenate(logw)
    steps = np.concatenate([o[1] for o in outs])
    cens = float(np.mean(np.concatenate([o[2] for o in outs])))
    N = allw.size
    log_e = float(logsumexp(allw) - math.log(N))
    if not math.isfinite(log_e):
        return DecayPoint(beta, n, 0.0, -math.inf, math.inf, 0.0, 0.0, cens, N, float(steps.mean()), tilt.lam, seed)
    bm = np.array([np.exp(logsumexp(w) - math.log(w.size) - log_e) for w in logw])
    se_log = float(bm.std(ddof=1) / math.sqrt(bm.size) / bm.mean())
    return DecayPoint(beta, n, math.exp(log_e), log_e, se_log, math.exp(log_e - 1.96 * se_log),
                      math.exp(log_e + 1.96 * se_log), cens, N, float(steps.mean()), tilt.lam, seed)


# ---------------------------------------------------------------------------
# quenched slab solve
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuenchedPoint:
    """Per-environment exact weights ``u(0)`` on a slab, aggregated two ways."""

    beta: float
    n: int
    log_values: np.ndarray
    annealed_mean: float
    annealed_se: float
    mean_log: float
    mean_log_se: float
    n_failed: int
    back: int
    period: int

    @property
    def values(self) -> np.ndarray:
        return np.exp(self.log_values)

    @property
    def rate_proxy(self) -> float:
        return -self.mean_log / self.n


def slab_log_weight(beta: float, n: int, field_values: np.ndarray, back: int, period: int,
                    d: int = 3, solver: str = "cg", tol: float = 1e-10) -> float:
    """Exact ``log E_0[exp(-beta sum_{k<T_n} V(S_k))]`` on a slab along ``e_1``.

    Unknowns are sites with ``-back <= x_1 <= n-1``, periodic with period
    ``period`` in the other coordinates.  The walk is killed below
    ``x_1 = -back`` and scores 1 on reaching ``x_1 = n``.  Multiplying the
    fixed-point equation ``u = e^{-beta V} P u`` by ``e^{beta V}`` gives a
    symmetric positive-definite system; ``beta V`` is capped at 600 there,
    while the origin's own factor is applied exactly afterwards.
    """
    shape = (n + back,) + (period,) * (d - 1)
    mask = np.ones(shape, dtype=bool)
    flat, P = masked_transition(mask, periodic=tuple(range(1, d)))
    bv_full = beta * field_values.reshape(shape).ravel()[flat]
    bv = np.minimum(bv_full, 600.0)
    A = (sp.diags(np.exp(bv)) - P).tocsr()
    b = np.zeros(shape)
    b[-1] = 1.0 / (2 * d)
    b = b.ravel()[flat]
    origin = int(np.ravel_multi_index((back,) + (period // 2,) * (d - 1), shape))
    if solver == "direct":
        from scipy.sparse.linalg import spsolve

        u = spsolve(A.tocsc(), b)
    else:
        u, _, _ = cg_solve(A, b, tol=tol)
    pu = float((P[origin] @ u).item()) + float(b[origin])
    return -float(bv_full[origin]) + math.log(pu)


def slab_box(n: int, back: int, period: int, d: int = 3) -> Box:
    lo = (-back,) + (-(period // 2),) * (d - 1)
    hi = (n - 1,) + (period - 1 - period // 2,) * (d - 1)
    return Box(lo, hi)


def estimate_quenched(beta: float, n: int, spec: PotentialSpec, n_env: int = 16, seed: int = 0,
                      back: int | None = None, period: int | None = None, d: int = 3,
                      solver: str = "cg", tol: float = 1e-10) -> QuenchedPoint:
    """Solve the slab problem in ``n_env`` environments (direction ``e_1``).

    Returns the environment mean of ``u(0)`` (an annealed estimate) and the
    mean of ``log u(0)`` (the quenched proxy).  Environment ``i`` uses the
    hash-keyed field with seed ``seed + i``.
    """
    back = 4 * n if back is None else back
    period = 4 * n if period is None else period
    box = slab_box(n, back, period, d)
    sites = box.sites()
    logs, failed = [], 0
    for i in range(n_env):
        field_vals = LazyField(spec, seed + i).values(sites)
        try:
            logs.append(slab_log_weight(beta, n, field_vals, back, period, d, solver, tol))
        except SolverError:
            failed += 1
    lu = np.array(logs)
    if lu.size == 0:
        raise SolverError("every environment failed", math.nan, 0)
    k = lu.size
    u = np.exp(lu)
    se = float(u.std(ddof=1) / math.sqrt(k)) if k > 1 else math.inf
    lse = float(lu.std(ddof=1) / math.sqrt(k)) if k > 1 else math.inf
    mean = float(np.exp(logsumexp(lu) - math.log(k)))
    return QuenchedPoint(beta, n, lu, mean, se, float(lu.mean()), lse, failed, back, period)


# ---------------------------------------------------------------------------
# rate fitting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RateFit:
    alpha: float
    alpha_se: float
    intercept: float
    alpha_upper: float
    sensitivity: float
    unstable: bool
    n_used: tuple[int, ...]

    def ci(self, z: float = 1.96) -> tuple[float, float]:
        return self.alpha - z * self.alpha_se, self.alpha + z * self.alpha_se


def _wls(x: np.ndarray, y: np.ndarray, s: np.ndarray) -> tuple[float, float, float]:
    w = 1.0 / s**2
    xm = np.sum(w * x) / np.sum(w)
    ym = np.sum(w * y) / np.sum(w)
    sxx = np.sum(w * (x - xm) ** 2)
    slope = float(np.sum(w * (x - xm) * (y - ym)) / sxx)
    return slope, float(ym - slope * xm), float(math.sqrt(1.0 / sxx))


def fit_rate(ns, neg_log_e, se=None, n_min: float | None = None) -> RateFit:
    """Weighted least squares of ``-log e_hat`` on ``n``.

    ``se`` are standard errors of ``-log e_hat`` (equal weights if omitted;
    the slope error is then scaled by the residuals).  ``n_min`` restricts
    the fit to the large-n window.  ``sensitivity`` compares the slope with
    the fit over the upper half of the window, and ``unstable`` flags a
    decrease of ``-log e_hat`` by more than two combined standard errors.
    """
    x = np.asarray(ns, dtype=float)
    y = np.asarray(neg_log_e, dtype=float)
    if n_min is not None:
        keep = x >= n_min
        x, y = x[keep], y[keep]
        se = None if se is None else np.asarray(se, float)[keep]
    if np.unique(x).size < 4:
        raise ValueError("need at least 4 distinct n values")
    if not np.all(np.isfinite(y)):
        raise ValueError("every estimate must be positive")
    order = np.argsort(x)
    x, y = x[order], y[order]
    known = se is not None and bool(np.all(np.isfinite(np.asarray(se, float))))
    s = np.asarray(se, float)[order] if known else np.ones_like(x)
    s = np.where(s > 0, s, max(float(s[s > 0].min()) if np.any(s > 0) else 1.0, 1e-300))
    slope, icpt, sse = _wls(x, y, s)
    if not known:
        resid = y - (icpt + slope * x)
        sse *= math.sqrt(float(resid @ resid) / max(x.size - 2, 1))
    half = x >= x[x.size // 2 - (1 if x.size % 2 == 0 else 0)]
    if np.unique(x[half]).size < 2:
        half = x >= x[-2]
    up, _, _ = _wls(x[half], y[half], s[half])
    sens = abs(up - slope) / abs(slope) if slope != 0 else math.inf
    dy = np.diff(y)
    comb = np.sqrt(s[1:] ** 2 + s[:-1] ** 2) if known else np.zeros_like(dy)
    unstable = bool(np.any(dy < -2 * comb - 1e-12 * (1 + np.abs(y[1:]))))
    return RateFit(slope, sse, icpt, up, sens, unstable, tuple(int(v) for v in x))


@dataclass
class DecayEstimate:
    points: list[DecayPoint]
    fit: RateFit | None = None
    extra: dict = field(default_factory=dict)

    @property
    def censored_frac(self) -> float:
        return max((p.censored_frac for p in self.points), default=0.0)


def decay_series(beta: float, ns, spec: PotentialSpec, I: float | None = None, n_samples: int = 100_000,
                 seed: int = 0, d: int = 3, ell=None, cap: int | None = None, workers: int = 1,
                 tilted: bool = True) -> DecayEstimate:
    """``estimate_e`` over ``ns`` with a tilt tuned to ``I`` and a rate fit."""
    from .theory import frak_I

    ell = np.eye(d)[0] if ell is None else np.asarray(ell, float)
    tilt = None
    if tilted:
        I = frak_I(beta, spec) if I is None else I
        tilt = make_tilt(I, d, ell)
    pts = [estimate_e(beta, int(n), spec, ell, n_samples, tilt, cap, seed, workers=workers, d=d) for n in ns]
    fit = fit_rate([p.n for p in pts], [p.neg_log_e for p in pts], [p.se_log for p in pts])
    return DecayEstimate(pts, fit)
