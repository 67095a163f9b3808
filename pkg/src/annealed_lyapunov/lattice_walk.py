"""Simple-random-walk primitives on Z^d.

Move ``j`` in ``0..2d-1`` is the unit step along axis ``j // 2``, positive
for even ``j``.  Ball exits use the strict rule ``|S_k - S_0| > R``.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from . import _kernels
from ._lattice import cg_solve, masked_transition, neighbour_fraction
from .environment import quad

__all__ = [
    "WalkPath",
    "EscapeEstimate",
    "unit_direction",
    "integer_direction",
    "crossed",
    "first_passage",
    "lattice_green_origin",
    "escape_prob",
    "escape_prob_mc",
    "green_constant",
    "hitting_prob_exact",
    "exit_ball",
    "exit_ball_samples",
    "coarse_grain",
    "substep_counts",
    "step_vector",
]


def step_vector(j: int, d: int) -> np.ndarray:
    e = np.zeros(d, dtype=np.int64)
    e[j // 2] = 1 if j % 2 == 0 else -1
    return e


def unit_direction(ell) -> np.ndarray:
    """Validate and return ``ell`` as a float vector of unit Euclidean norm."""
    v = np.asarray(ell, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("direction must be a non-empty 1-d vector")
    if not np.all(np.isfinite(v)):
        raise ValueError("direction has non-finite entries")
    norm = math.sqrt(math.fsum(x * x for x in v))
    if abs(norm - 1.0) > 1e-12:
        raise ValueError(f"direction must have unit norm, got |ell| = {norm!r}")
    return v


def integer_direction(ell) -> np.ndarray | None:
    """Smallest integer vector ``m`` with ``ell`` parallel to ``m``, if one exists.

    Only axis and lattice-diagonal directions of the form ``m/|m|`` with
    small integer ``m`` are recognised; otherwise ``None``.
    """
    v = unit_direction(ell)
    big = np.max(np.abs(v))
    for scale in range(1, 13):
        m = v / big * scale
        r = np.rint(m)
        if np.all(np.abs(m - r) < 1e-9):
            m = r.astype(np.int64)
            g = np.gcd.reduce(np.abs(m[m != 0]))
            m = m // g
            if abs(np.linalg.norm(m) * v - m).max() < 1e-9 * np.linalg.norm(m):
                return m
    return None


def crossed(pos, ell, n: float) -> bool:
    """Whether ``pos . ell >= n``, exactly when ``ell`` is an integer direction."""
    m = integer_direction(ell)
    pos = np.asarray(pos, dtype=np.int64)
    if m is not None and float(n) == int(n):
        s = int(pos @ m)
        return s >= 0 and s * s >= int(n) ** 2 * int(m @ m)
    return math.fsum(np.asarray(pos, float) * unit_direction(ell)) >= n


@dataclass
class WalkPath:
    """A finite nearest-neighbour path with its stopping data.

    ``local_times`` counts visits at times ``0..N-1``, so it totals the
    stopping index ``N``.
    """

    start: tuple[int, ...]
    positions: np.ndarray
    stopping_index: int
    reason: str
    local_times: dict[tuple[int, ...], int] = field(default_factory=dict)

    @property
    def censored(self) -> bool:
        return self.reason == "cap"

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.positions, axis=0)

    def check(self) -> None:
        if np.any(np.abs(self.steps).sum(axis=1) != 1):
            raise AssertionError("path has a non-unit step")
        if sum(self.local_times.values()) != self.stopping_index:
            raise AssertionError("local times do not total the stopping index")


def _local_times(positions: np.ndarray) -> dict[tuple[int, ...], int]:
    out: dict[tuple[int, ...], int] = {}
    for p in map(tuple, positions.tolist()):
        out[p] = out.get(p, 0) + 1
    return out


def first_passage(start, ell, n: int, rng: np.random.Generator, cap: int | None = None) -> WalkPath:
    """Run a walk from ``start`` until ``S_k . ell >= n`` or ``cap`` steps.

    ``n = 0`` with ``start . ell >= 0`` stops at once.  Local times cover
    ``k < T``.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    v = unit_direction(ell)
    d = v.size
    start = tuple(int(x) for x in start)
    if len(start) != d:
        raise ValueError("start and ell have different dimensions")
    if cap is None:
        cap = 200 * max(n, 1) ** 2 * d
    m = integer_direction(v)
    exact = m is not None
    nn = int(n)
    thr = nn * nn * int(m @ m) if exact else 0

    def hit(p):
        if exact:
            s = int(p @ m)
            return s >= 0 and s * s >= thr
        return math.fsum(p * v) >= n

    pos = np.array(start, dtype=np.int64)
    traj = [pos.copy()]
    reason = "hyperplane"
    while not hit(pos):
        if len(traj) - 1 >= cap:
            reason = "cap"
            break
        j = int(rng.integers(2 * d))
        pos[j // 2] += 1 if j % 2 == 0 else -1
        traj.append(pos.copy())
    positions = np.array(traj)
    N = len(traj) - 1
    return WalkPath(start, positions, N, reason, _local_times(positions[:N]))


@functools.lru_cache(maxsize=None)
def lattice_green_origin(d: int) -> float:
    """G(0,0) = sum_n P[S_n = 0] for the simple random walk on Z^d.

    Uses G(0,0) = int_0^inf (e^{-t/d} I_0(t/d))^d dt, the heat-kernel form
    of the torus integral, with a three-term asymptotic tail beyond T.
    """
    if d < 3:
        raise ValueError("the walk is recurrent for d <= 2")
    T = 4000.0 * d
    body = quad(lambda t: special.ive(0, t / d) ** d, 0.0, T,
                points=[1.0, 10.0, 100.0, 1000.0], epsabs=1e-14, epsrel=1e-13)
    # e^{-x} I_0(x) ~ (2 pi x)^{-1/2} (1 + 1/(8x) + 9/(128x^2)), x = t/d
    a1, a2 = 1.0 / 8.0, 9.0 / 128.0
    coef = [1.0, d * a1 * d, (d * a2 + d * (d - 1) / 2 * a1 * a1) * d * d]
    pref = (2 * math.pi / d) ** (-d / 2)
    tail = pref * math.fsum(c * T ** (1 - d / 2 - k) / (d / 2 + k - 1) for k, c in enumerate(coef))
    return body + tail


def green_constant(d: int) -> float:
    """c_d with G(0,x) ~ c_d |x|^{2-d}: (d/2) Gamma(d/2 - 1) pi^{-d/2}."""
    if d < 3:
        raise ValueError("d must be at least 3")
    return d / 2 * math.gamma(d / 2 - 1) * math.pi ** (-d / 2)


@dataclass(frozen=True)
class EscapeEstimate:
    value: float
    stderr: float
    raw_fraction: float
    n_walks: int
    stop_radius: float


def escape_prob_mc(d: int, n_walks: int = 10**6, stop_radius: float = 20.0, seed: int = 0,
                   chunk: int = 250_000) -> EscapeEstimate:
    """Monte Carlo escape probability with an analytic return correction.

    Walks run until they come back to 0 or leave the ball of radius
    ``stop_radius``.  A walk that leaves at ``x`` still returns with
    probability about ``q c_d |x|^{2-d}``, so with ``A`` the non-return
    fraction and ``B`` the mean of ``1{left} c_d |x|^{2-d}`` one has
    ``q = A - qB`` and ``q = A / (1 + B)``.
    """
    if d < 3:
        raise ValueError("the walk is recurrent for d <= 2")
    cd = green_constant(d)
    ss = np.random.SeedSequence(seed)
    tot = np.zeros(5)
    done = 0
    kids = ss.spawn((n_walks + chunk - 1) // chunk)
    for k, kid in enumerate(kids):
        m = min(chunk, n_walks - k * chunk)
        s = int(kid.generate_state(1, dtype=np.uint32)[0])
        tot += np.array(_kernels.escape_walks(d, m, int(stop_radius**2), s))
        done += m
    sx, sy, sxx, syy, sxy = tot
    sy, syy, sxy = sy * cd, syy * cd * cd, sxy * cd
    N = float(done)
    A, B = sx / N, sy / N
    q = A / (1 + B)
    vxx = sxx / N - A * A
    vyy = syy / N - B * B
    vxy = sxy / N - A * B
    ga, gb = 1 / (1 + B), -A / (1 + B) ** 2
    var = (ga * ga * vxx + 2 * ga * gb * vxy + gb * gb * vyy) / N
    return EscapeEstimate(q, math.sqrt(max(var, 0.0)), A, done, stop_radius)


def escape_prob(d: int, method: str = "quadrature", **kwargs) -> float:
    """Probability q_d that the walk never returns to its start."""
    if d < 3:
        raise ValueError("the walk is recurrent for d <= 2")
    if method == "quadrature":
        return 1.0 / lattice_green_origin(d)
    if method == "monte_carlo":
        return escape_prob_mc(d, **kwargs).value
    raise ValueError(f"unknown method {method!r}")


def hitting_prob_exact(y, R: float, *, tol: float = 1e-11, return_info: bool = False):
    """P_0[walk visits y before leaving the closed ball D(0, R)].

    Solves h = P h off ``y`` inside the ball, ``h(y) = 1`` and ``h = 0``
    outside, by conjugate gradients.
    """
    y = np.asarray(y, dtype=np.int64)
    d = y.size
    r2 = float(y @ y)
    if not 0 < r2 < R * R:
        raise ValueError("need 0 < |y| < R")
    r = int(math.floor(R))
    axes = np.arange(-r, r + 1)
    grids = np.meshgrid(*([axes] * d), indexing="ij")
    dist2 = sum(g.astype(float) ** 2 for g in grids)
    ball = dist2 <= R * R
    ymask = np.ones_like(ball)
    for g, c in zip(grids, y):
        ymask &= g == c
    free = ball & ~ymask
    flat, P = masked_transition(free)
    b = neighbour_fraction(free, ymask).ravel()[flat]
    import scipy.sparse as sp

    A = (sp.identity(flat.size, format="csr") - P).tocsr()
    h, iters, res = cg_solve(A, b, tol=tol)
    centre = np.ravel_multi_index(tuple([r] * d), ball.shape)
    idx = int(np.searchsorted(flat, centre))
    val = float(h[idx])
    if return_info:
        return val, {"iterations": iters, "residual": res, "unknowns": int(flat.size)}
    return val


def exit_ball(start, R: float, rng: np.random.Generator) -> tuple[tuple[int, ...], int]:
    """First site with ``|S_k - start| > R`` and the time it is reached."""
    if R < 1:
        raise ValueError("R must be at least 1")
    pos = np.array(start, dtype=np.int64)
    origin = pos.copy()
    d = pos.size
    R2 = R * R
    t = 0
    while True:
        j = int(rng.integers(2 * d))
        pos[j // 2] += 1 if j % 2 == 0 else -1
        t += 1
        diff = pos - origin
        if float(diff @ diff) > R2:
            return tuple(int(x) for x in pos), t


def exit_ball_samples(d: int, R: float, n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised ``exit_ball`` from the origin: (displacements, exit times)."""
    if R < 1:
        raise ValueError("R must be at least 1")
    return _kernels.exit_ball_walks(d, int(math.floor(R * R)), int(n), int(seed))


def substep_counts(d: int, R: float, R_small: float, n: int, seed: int) -> np.ndarray:
    """Completed radius-``R_small`` coarse steps before the walk leaves D(0, R)."""
    if not 1 <= R_small <= R:
        raise ValueError("need 1 <= R_small <= R")
    return _kernels.substep_counts(d, int(math.floor(R * R)), int(math.floor(R_small**2)), int(n), int(seed))


def coarse_grain(positions, R: float) -> list[int]:
    """Indices j_0 = 0 < j_1 < ... where j_{i+1} is the first exit from D(S_{j_i}, R)."""
    p = np.asarray(positions, dtype=np.int64)
    if p.ndim != 2 or p.shape[0] == 0:
        raise ValueError("path must be a non-empty (N+1, d) array")
    R2 = R * R
    out = [0]
    anchor = p[0]
    for k in range(1, p.shape[0]):
        diff = p[k] - anchor
        if float(diff @ diff) > R2:
            out.append(k)
            anchor = p[k]
    return out

