"""Potential laws on [0, inf), i.i.d. fields over finite boxes, and the log transform.

Every law exposes the same small surface: ``tail``, ``mass``, ``quantile``,
``sample``, ``expect``, ``truncated_mean``, ``log_laplace``/``laplace`` and
``mean``.  Atoms are always summed exactly; continuous parts go through
adaptive quadrature (``scipy.integrate.quad``) in a variable adapted to the
tail of the law.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import integrate
from scipy.special import logsumexp

QUAD_EPSABS = 1e-10
QUAD_EPSREL = 1e-8


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""

    def __init__(self, message: str, value: float, abserr: float):
        super().__init__(f"{message} (value={value!r}, achieved abserr={abserr:.3g})")
        self.value = value
        self.abserr = abserr


class FieldTooLarge(ValueError):
    pass


def quad(func: Callable[[float], float], lo: float, hi: float, *,
         points: Sequence[float] | None = None,
         epsabs: float = QUAD_EPSABS, epsrel: float = QUAD_EPSREL,
         limit: int = 400) -> float:
    """``scipy.integrate.quad`` with explicit failure reporting.

    Breakpoints are honoured on infinite intervals too, by splitting the
    range at them before calling quad.
    """
    if not hi > lo:
        return 0.0
    cuts = sorted(p for p in (points or ()) if lo < p < hi)
    edges = [lo, *cuts, hi]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, err, info, *rest = integrate.quad(
                func, a, b, epsabs=epsabs, epsrel=epsrel, limit=limit, full_output=1
            )
        tol = max(epsabs, epsrel * abs(val))
        if not math.isfinite(val) or err > 100 * tol:
            raise QuadratureError(f"quadrature on [{a}, {b}] did not converge", val, err)
        total += val
    return total


def _in_range(z: float, lo: float, hi: float, hi_inclusive: bool) -> bool:
    return lo <= z and (z <= hi if hi_inclusive else z < hi)


# ---------------------------------------------------------------------------
# laws
# ---------------------------------------------------------------------------


class PotentialSpec:
    """A probability law on [0, inf)."""

    family: str = ""

    # -- subclass hooks ----------------------------------------------------
    def atoms(self) -> tuple[tuple[float, float], ...]:
        return ()

    def _density_expect(self, g, lo, hi, scale, epsabs) -> float:
        return 0.0

    # -- shared surface ----------------------------------------------------
    def tail(self, z: float) -> float:
        """P[V >= z]."""
        raise NotImplementedError

    def mass(self, lo: float, hi: float) -> float:
        """P[lo <= V < hi]."""
        if not hi > lo:
            return 0.0
        return max(self.tail(lo) - self.tail(hi), 0.0)

    def quantile(self, u):
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        return self.quantile(rng.random(size))

    def expect(self, g: Callable[[float], float], lo: float = 0.0, hi: float = math.inf, *,
               scale: float | None = None, hi_inclusive: bool = False,
               epsabs: float = QUAD_EPSABS) -> float:
        """Integral of ``g`` against the law restricted to [lo, hi) (or [lo, hi]).

        ``scale`` is a hint for where ``g`` varies (used as a breakpoint).
        """
        total = math.fsum(m * g(z) for z, m in self.atoms() if _in_range(z, lo, hi, hi_inclusive))
        return total + self._density_expect(g, lo, hi, scale, epsabs)

    def truncated_mean(self, M: float) -> float:
        """E[V 1{V <= M}]."""
        return self.expect(lambda z: z, 0.0, M, hi_inclusive=True)

    def log_laplace(self, t: float) -> float:
        if t < 0:
            raise ValueError("Laplace transform needs t >= 0")
        if t == 0:
            return 0.0
        return math.log(self.expect(lambda z: math.exp(-t * z), scale=1.0 / t, epsabs=0.0))

    def laplace(self, t: float) -> float:
        """E[exp(-t V)]."""
        return math.exp(self.log_laplace(t))

    @property
    def mean(self) -> float:
        raise NotImplementedError

    def to_config(self) -> dict[str, str]:
        raise NotImplementedError


@dataclass(frozen=True)
class Atoms(PotentialSpec):
    """Finitely many atoms ``((z, mass), ...)``."""

    points: tuple[tuple[float, float], ...]
    family = "atoms"

    def __post_init__(self):
        pts = tuple(sorted((float(z), float(m)) for z, m in self.points if m > 0))
        if not pts:
            raise ValueError("need at least one atom with positive mass")
        if any(z < 0 or not math.isfinite(z) for z, _ in pts):
            raise ValueError("atoms must lie in [0, inf)")
        total = math.fsum(m for _, m in pts)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"atom masses sum to {total}, not 1")
        object.__setattr__(self, "points", pts)

    def atoms(self):
        return self.points

    def tail(self, z):
        return math.fsum(m for v, m in self.points if v >= z)

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        cum = np.cumsum([m for _, m in self.points])
        idx = np.minimum(np.searchsorted(cum, u, side="right"), len(self.points) - 1)
        return np.asarray([z for z, _ in self.points])[idx]

    def log_laplace(self, t):
        if t < 0:
            raise ValueError("Laplace transform needs t >= 0")
        zs = np.array([z for z, _ in self.points])
        ms = np.array([m for _, m in self.points])
        return float(logsumexp(-t * zs, b=ms))

    def truncated_mean(self, M):
        return math.fsum(z * m for z, m in self.points if z <= M)

    @property
    def mean(self):
        return math.fsum(z * m for z, m in self.points)

    def to_config(self):
        return {"family": self.family,
                "atoms": ", ".join(f"{z!r}:{m!r}" for z, m in self.points)}


class PointMass(Atoms):
    """The deterministic potential ``v0``."""

    family = "point_mass"

    def __init__(self, v0: float):
        object.__setattr__(self, "v0", float(v0))
        object.__setattr__(self, "points", ((float(v0), 1.0),))
        Atoms.__post_init__(self)

    def __repr__(self):
        return f"PointMass(v0={self.v0!r})"

    def to_config(self):
        return {"family": self.family, "v0": repr(self.v0)}


@dataclass(frozen=True)
class Pareto(PotentialSpec):
    """Density ``alpha z_min^alpha z^(-alpha-1)`` on [z_min, inf); infinite mean iff alpha <= 1."""

    alpha: float
    z_min: float = 1.0
    family = "pareto"

    def __post_init__(self):
        if not (self.alpha > 0 and self.z_min > 0):
            raise ValueError("Pareto needs alpha > 0 and z_min > 0")

    def tail(self, z):
        if z <= self.z_min:
            return 1.0
        if math.isinf(z):
            return 0.0
        return (self.z_min / z) ** self.alpha

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        return self.z_min * (1.0 - u) ** (-1.0 / self.alpha)

    def _density_expect(self, g, lo, hi, scale, epsabs):
        # z = z_min e^u, dmu = alpha e^{-alpha u} du
        a = self.alpha
        u_lo = math.log(max(lo, self.z_min) / self.z_min)
        u_hi = math.inf if math.isinf(hi) else math.log(hi / self.z_min) if hi > self.z_min else -1.0
        if not u_hi > u_lo:
            return 0.0
        points = []
        if scale is not None and scale > 0:
            us = math.log(scale / self.z_min)
            points = [us - 4.0, us, us + 4.0]

        def integrand(u):
            z = self.z_min * math.exp(min(u, 700.0))
            return g(z) * a * math.exp(-a * u)

        return quad(integrand, u_lo, u_hi, points=points, epsabs=epsabs)

    def truncated_mean(self, M):
        a, zm = self.alpha, self.z_min
        if M < zm:
            return 0.0
        if math.isinf(M):
            return self.mean
        if a == 1.0:
            return zm * math.log(M / zm)
        return a * zm**a * (M ** (1.0 - a) - zm ** (1.0 - a)) / (1.0 - a)

    def log_laplace(self, t):
        if t < 0:
            raise ValueError("Laplace transform needs t >= 0")
        if t == 0:
            return 0.0
        # factor out exp(-t z_min) so that large t keeps full relative accuracy
        a, x = self.alpha, t * self.z_min

        def inner(u):
            return math.exp(-x * math.expm1(min(u, 700.0)) - a * u) * a

        pts = [max(0.0, -math.log(x)), max(0.0, -math.log(x)) + 5.0]
        val = quad(inner, 0.0, math.inf, points=pts, epsabs=0.0, epsrel=1e-11)
        return -x + math.log(val)

    @property
    def mean(self):
        return math.inf if self.alpha <= 1 else self.alpha * self.z_min / (self.alpha - 1)

    def to_config(self):
        return {"family": self.family, "alpha": repr(self.alpha), "z_min": repr(self.z_min)}


@dataclass(frozen=True)
class Exponential(PotentialSpec):
    rate: float = 1.0
    family = "exponential"

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("rate must be positive")

    def tail(self, z):
        return 1.0 if z <= 0 else math.exp(-self.rate * z)

    def quantile(self, u):
        return -np.log1p(-np.asarray(u, dtype=float)) / self.rate

    def _density_expect(self, g, lo, hi, scale, epsabs):
        r = self.rate
        lo = max(lo, 0.0)
        hi = min(hi, lo + 750.0 / r)
        pts = [1.0 / r, 10.0 / r]
        if scale is not None and scale > 0:
            pts += [scale, 10 * scale]
        return quad(lambda z: g(z) * r * math.exp(-r * z), lo, hi, points=pts, epsabs=epsabs)

    def truncated_mean(self, M):
        r = self.rate
        if M <= 0:
            return 0.0
        if math.isinf(M):
            return 1.0 / r
        return (-math.expm1(-r * M) - r * M * math.exp(-r * M)) / r

    def log_laplace(self, t):
        if t < 0:
            raise ValueError("Laplace transform needs t >= 0")
        return math.log(self.rate) - math.log(self.rate + t)

    @property
    def mean(self):
        return 1.0 / self.rate

    def to_config(self):
        return {"family": self.family, "rate": repr(self.rate)}


@dataclass(frozen=True)
class TransformedLog(PotentialSpec):
    """Law of ``log(1 + beta V) / beta`` for ``V`` distributed as ``base``."""

    base: PotentialSpec
    beta: float
    family = "transformed_log"

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")

    def forward(self, z):
        return np.log1p(self.beta * np.asarray(z, dtype=float)) / self.beta

    def inverse(self, y: float) -> float:
        if math.isinf(y):
            return math.inf
        return math.expm1(min(self.beta * y, 709.0)) / self.beta

    def atoms(self):
        return tuple((float(self.forward(z)), m) for z, m in self.base.atoms())

    def tail(self, z):
        return self.base.tail(self.inverse(z)) if z > 0 else 1.0

    def quantile(self, u):
        return self.forward(self.base.quantile(u))

    def expect(self, g, lo=0.0, hi=math.inf, *, scale=None, hi_inclusive=False, epsabs=QUAD_EPSABS):
        fwd = lambda z: math.log1p(self.beta * z) / self.beta
        return self.base.expect(lambda z: g(fwd(z)), self.inverse(lo), self.inverse(hi),
                                scale=None if scale is None else self.inverse(scale),
                                hi_inclusive=hi_inclusive, epsabs=epsabs)

    def log_laplace(self, t):
        if t < 0:
            raise ValueError("Laplace transform needs t >= 0")
        if t == 0:
            return 0.0
        k = t / self.beta
        return math.log(self.base.expect(lambda z: math.exp(-k * math.log1p(self.beta * z)),
                                         scale=1.0 / self.beta, epsabs=0.0))

    @property
    def mean(self):
        return self.truncated_mean(math.inf)

    def truncated_mean(self, M):
        fwd = lambda z: math.log1p(self.beta * z) / self.beta
        return self.base.expect(fwd, 0.0, self.inverse(M), hi_inclusive=True,
                                scale=1.0 / self.beta)

    def to_config(self):
        out = {"family": self.family, "beta": repr(self.beta)}
        out.update({f"base.{k}": v for k, v in self.base.to_config().items()})
        return out


@dataclass(frozen=True)
class Mixture(PotentialSpec):
    """Convex combination ``((weight, law), ...)``; integrals split linearly."""

    components: tuple[tuple[float, PotentialSpec], ...]
    family = "mixture"

    def __post_init__(self):
        comps = tuple((float(w), c) for w, c in self.components if w > 0)
        if not comps:
            raise ValueError("empty mixture")
        total = math.fsum(w for w, _ in comps)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"mixture weights sum to {total}, not 1")
        object.__setattr__(self, "components", comps)

    def atoms(self):
        return tuple((z, w * m) for w, c in self.components for z, m in c.atoms())

    def tail(self, z):
        return math.fsum(w * c.tail(z) for w, c in self.components)

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        weights = np.array([w for w, _ in self.components])
        cum = np.cumsum(weights)
        k = np.minimum(np.searchsorted(cum, u, side="right"), len(weights) - 1)
        start = cum[k] - weights[k]
        v = np.clip((u - start) / weights[k], 0.0, np.nextafter(1.0, 0.0))
        out = np.empty_like(u)
        for i, (_, c) in enumerate(self.components):
            sel = k == i
            if np.any(sel):
                out[sel] = c.quantile(v[sel])
        return out

    def expect(self, g, lo=0.0, hi=math.inf, *, scale=None, hi_inclusive=False, epsabs=QUAD_EPSABS):
        return math.fsum(w * c.expect(g, lo, hi, scale=scale, hi_inclusive=hi_inclusive, epsabs=epsabs)
                         for w, c in self.components)

    def truncated_mean(self, M):
        return math.fsum(w * c.truncated_mean(M) for w, c in self.components)

    def log_laplace(self, t):
        return float(logsumexp([math.log(w) + c.log_laplace(t) for w, c in self.components]))

    @property
    def mean(self):
        return math.fsum(w * c.mean for w, c in self.components)

    def to_config(self):
        out = {"family": self.family}
        for i, (w, c) in enumerate(self.components):
            out[f"component.{i}.weight"] = repr(w)
            out.update({f"component.{i}.{k}": v for k, v in c.to_config().items()})
        return out


# ---------------------------------------------------------------------------
# config round trip
# ---------------------------------------------------------------------------


def _parse_atoms(text: str) -> tuple[tuple[float, float], ...]:
    pts = []
    for item in text.replace(";", ",").split(","):
        item = item.strip()
        if item:
            z, m = item.split(":")
            pts.append((float(z), float(m)))
    return tuple(pts)


def spec_from_config(cfg: dict[str, str]) -> PotentialSpec:
    """Build a law from flat ``key=value`` pairs (see ``to_config``)."""
    family = cfg.get("family", "").strip().lower()
    if family == "point_mass":
        return PointMass(float(cfg["v0"]))
    if family == "atoms":
        return Atoms(_parse_atoms(cfg["atoms"]))
    if family == "pareto":
        return Pareto(float(cfg["alpha"]), float(cfg.get("z_min", 1.0)))
    if family == "exponential":
        return Exponential(float(cfg.get("rate", 1.0)))
    if family == "transformed_log":
        base = {k[5:]: v for k, v in cfg.items() if k.startswith("base.")}
        return TransformedLog(spec_from_config(base), float(cfg["beta"]))
    if family == "mixture":
        idx = sorted({int(k.split(".")[1]) for k in cfg if k.startswith("component.")})
        comps = []
        for i in idx:
            prefix = f"component.{i}."
            sub = {k[len(prefix):]: v for k, v in cfg.items() if k.startswith(prefix)}
            comps.append((float(sub.pop("weight")), spec_from_config(sub)))
        return Mixture(tuple(comps))
    raise ValueError(f"unknown potential family {family!r}")


# ---------------------------------------------------------------------------
# fields
# ---------------------------------------------------------------------------

_M64 = np.uint64(0xFFFFFFFFFFFFFFFF)


def _splitmix64(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = x + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def site_uniforms(seed: int, sites: np.ndarray) -> np.ndarray:
    """Uniforms in (0, 1) keyed by ``(seed, site)``; identical however the sites are batched."""
    sites = np.atleast_2d(np.asarray(sites, dtype=np.int64))
    key = _splitmix64(np.full(sites.shape[0], np.uint64(seed & 0xFFFFFFFFFFFFFFFF)))
    for j in range(sites.shape[1]):
        key = _splitmix64(key ^ sites[:, j].view(np.uint64))
    return ((key >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``lower <= x <= upper`` (inclusive) in Z^d."""

    lower: tuple[int, ...]
    upper: tuple[int, ...]

    def __post_init__(self):
        if len(self.lower) != len(self.upper) or any(u < l for l, u in zip(self.lower, self.upper)):
            raise ValueError("bad box corners")

    @classmethod
    def centered(cls, radius: int, d: int) -> "Box":
        return cls((-radius,) * d, (radius,) * d)

    @property
    def d(self) -> int:
        return len(self.lower)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(u - l + 1 for l, u in zip(self.lower, self.upper))

    @property
    def size(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64))

    def contains(self, site) -> bool:
        return all(l <= x <= u for x, l, u in zip(site, self.lower, self.upper))

    def index(self, site) -> tuple[int, ...]:
        return tuple(x - l for x, l in zip(site, self.lower))

    def sites(self) -> np.ndarray:
        """All sites, C order, as an (N, d) integer array."""
        axes = [np.arange(l, u + 1) for l, u in zip(self.lower, self.upper)]
        grid = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grid], axis=1)


@dataclass(frozen=True, eq=False)
class EnvironmentField:
    spec: PotentialSpec
    region: Box
    values: np.ndarray
    seed: int

    def __getitem__(self, site) -> float:
        if not self.region.contains(site):
            raise KeyError(f"site {site} outside {self.region}")
        return float(self.values[self.region.index(site)])

    def items(self) -> Iterable[tuple[tuple[int, ...], float]]:
        for site, v in zip(self.region.sites(), self.values.ravel()):
            yield tuple(int(x) for x in site), float(v)


MAX_FIELD_SITES = 50_000_000


def sample_field(spec: PotentialSpec, region: Box, seed: int, *,
                 max_sites: int = MAX_FIELD_SITES) -> EnvironmentField:
    """Dense i.i.d. field on ``region``; value at x depends only on (seed, x)."""
    n = region.size
    if n > max_sites:
        raise FieldTooLarge(f"region has {n} sites ({8 * n / 2**20:.0f} MiB); limit is {max_sites}")
    u = site_uniforms(seed, region.sites())
    vals = np.asarray(spec.quantile(u), dtype=float).reshape(region.shape)
    return EnvironmentField(spec, region, vals, seed)


@dataclass(frozen=True)
class LazyField:
    """Per-site generation for unbounded walks; agrees with ``sample_field`` site by site."""

    spec: PotentialSpec
    seed: int

    def values(self, sites) -> np.ndarray:
        return np.asarray(self.spec.quantile(site_uniforms(self.seed, sites)), dtype=float)

    def __getitem__(self, site) -> float:
        return float(self.values(np.asarray([site]))[0])


def laplace_mu(spec: PotentialSpec, t: float) -> float:
    return spec.laplace(t)


def transform_log(spec: PotentialSpec, beta: float) -> PotentialSpec:
    """Law of ``log(1 + beta V) / beta``.  Discrete laws stay discrete."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    if isinstance(spec, PointMass):
        return PointMass(math.log1p(beta * spec.v0) / beta)
    if isinstance(spec, Atoms):
        return Atoms(tuple((math.log1p(beta * z) / beta, m) for z, m in spec.points))
    return TransformedLog(spec, beta)
