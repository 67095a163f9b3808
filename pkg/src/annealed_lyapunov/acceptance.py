"""The acceptance battery: one function per criterion, each returning a ``CriterionResult``.

Used by ``tests/test_acceptance.py`` and by the ``selftest`` subcommand.
Tolerances and sample sizes are fixed; runtime
budgets are part of each check.
"""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from . import fk_mc, green, lattice_walk, oracle, theory
from .environment import Atoms, Box, Exponential, Mixture, Pareto, PointMass, sample_field

__all__ = ["CriterionResult", "CRITERIA", "run_all"]


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0
    budget: float = math.inf
    values: dict = field(default_factory=dict)

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] criterion {self.number:2d} {self.name}: {self.detail} ({self.seconds:.1f}s / {self.budget:.0f}s)"


def _timed(number: int, name: str, budget: float):
    def wrap(fn: Callable[..., tuple[bool, str, dict]]):
        def run(**kw) -> CriterionResult:
            t0 = time.perf_counter()
            ok, detail, values = fn(**kw)
            dt = time.perf_counter() - t0
            within = dt <= budget
            if not within:
                detail += f"; runtime {dt:.0f}s over budget"
            return CriterionResult(number, name, bool(ok and within), detail, dt, budget, values)

        run.__name__ = fn.__name__
        run.number = number
        return run

    return wrap


PARETO = Pareto(0.5, 1.0)


@_timed(1, "escape probability", 120)
def escape_probability(n_walks: int = 10**7, seed: int = 11):
    q3 = lattice_walk.escape_prob(3)
    mc = lattice_walk.escape_prob_mc(3, n_walks=n_walks, seed=seed)
    ok = abs(q3 - 0.6595) <= 1e-3 and abs(mc.value - q3) <= 3e-3
    return ok, (f"q3 = {q3:.10f}, MC = {mc.value:.5f} +/- {mc.stderr:.5f} "
                f"(|diff| = {abs(mc.value - q3):.2e})"), {"q3": q3, "mc": mc.value, "mc_se": mc.stderr}


@_timed(2, "f-function suite", 1)
def f_suite():
    q = theory.default_q()
    z = np.logspace(-6, 3, 1000)
    fz = theory.f_eval(z, q)
    mono = bool(np.all(np.diff(fz) >= 0))
    dz = np.diff(z)
    slopes = np.diff(fz) / dz
    # slopes are only resolved to the rounding of f near its plateau
    noise = 4 * np.finfo(float).eps * q * (1 / dz[:-1] + 1 / dz[1:])
    concave = bool(np.all(np.diff(slopes) <= noise))
    bounded = bool(np.all(fz <= np.minimum(z, q)))
    small = z <= 1e-3
    ratio = bool(np.all(np.abs(fz[small] / z[small] - 1) <= z[small] / q))
    ok = mono and concave and bounded and ratio
    return ok, f"monotone={mono} concave={concave} f<=min(z,q)={bounded} small-z ratio={ratio}", {}


@_timed(3, "psi_p and Chernoff bounds", 10)
def psi_and_chernoff():
    worst = 0.0
    for p in np.linspace(0.05, 0.95, 20):
        for k in range(20):
            eta = -p + (k + 0.5) / 20
            worst = max(worst, abs(theory.psi_p(p, eta) - oracle.psi_p_variational(p, eta)))
    sup_ok = worst <= 1e-9
    chern_ok, checked = True, 0
    etas = [Fraction(i, 20) for i in range(0, 19)]
    for n in range(1, 31):
        for pi in range(1, 10):
            P = Fraction(pi, 10)
            p = float(P)
            pmf = [math.comb(n, i) * P**i * (1 - P) ** (n - i) for i in range(n + 1)]
            for E in etas:
                if E <= 1 - P:
                    k = math.ceil(n * (P + E))
                    exact = float(sum(pmf[k:], Fraction(0)))
                    bound = theory.chernoff_upper(n, p, float(E), "upper")
                    chern_ok &= exact <= bound * (1 + 1e-12)
                    checked += 1
                if E <= P:
                    k = math.floor(n * (P - E))
                    exact = float(sum(pmf[: k + 1], Fraction(0)))
                    bound = theory.chernoff_upper(n, p, float(E), "lower")
                    chern_ok &= exact <= bound * (1 + 1e-12)
                    checked += 1
    obs = True
    for p in np.linspace(0.05, 0.95, 19):
        for eta in np.linspace(0, p, 25):
            obs &= theory.psi_p(p, -eta) >= eta**2 / (2 * p) * (1 - 1e-12)
    ok = sup_ok and chern_ok and obs
    return ok, (f"max |closed - sup| = {worst:.2e}; {checked} binomial tails under Chernoff: {chern_ok}; "
                f"psi_p(-eta) >= eta^2/2p: {obs}"), {"max_sup_gap": worst}


@_timed(4, "surgery counting", 10)
def surgery_counting():
    ok = True
    for K in range(1, 13):
        for j in range(0, 5):
            count = oracle.enumerate_surgeries(K, j)
            ok &= count == theory.surgery_binomial(K, 2 * j)
            ok &= math.log(count) <= theory.surgery_count_bound(K, j, 1) + 1e-12
    return ok, "exact counts equal C(K+2j,2j) and stay below the log bound for K<=12, j<=4", {}


def case2_instance(rng: np.random.Generator, eps: float, q: float, beta: float = 1e-30):
    """Pareto background plus one important and one intermediate atom with comparable integrals."""
    a = eps**8
    alpha = rng.uniform(0.3, 0.9)
    w_p = rng.uniform(0.5, 0.9)
    base = Pareto(alpha, 1.0)
    z_imp = a * math.exp(rng.uniform(0.5, math.log(10.0 / a))) / beta
    ratio = math.exp(rng.uniform(math.log(3 * eps), math.log(1 / (3 * eps))))
    # intermediate atom in the upper part of [M, a/beta); the important mass follows from the ratio
    bz_mid = a * math.exp(-rng.uniform(0.5, 3.0))
    m_mid = 10 ** rng.uniform(-3, -1.5)
    m_imp = m_mid * theory.f_eval(bz_mid, q) / ratio / theory.f_eval(beta * z_imp, q)
    rest = 1 - m_imp - m_mid
    mix = Mixture(((w_p * rest, base), ((1 - w_p) * rest, PointMass(1.0)), (m_imp, PointMass(z_imp)),
                   (m_mid, PointMass(bz_mid / beta))))
    return mix, a


@_timed(5, "Riemann splitting", 30)
def riemann_splitting(n_per_eps: int = 8, seed: int = 5):
    q = theory.default_q()
    rng = np.random.default_rng(seed)
    beta = 1e-30
    worst_ib, worst_it, count, ok = math.inf, math.inf, 0, True
    for eps in (0.05, 0.1, 0.2):
        made = 0
        while made < n_per_eps:
            mu, a = case2_instance(rng, eps, q, beta)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                M = theory.m_beta(beta, mu, eps, q).M_beta
            case = theory.classify_case(beta, mu, eps, a, q, M)
            if case.case is not theory.Case.BOTH:
                continue
            made += 1
            sp_ = theory.rho_grid_split(beta, mu, eps, a, M, q)
            r_ib = sp_.I_beta / ((1 - eps) ** 2 * sp_.important_integral)
            # at eps = 0.2 the right side is 0, so compare the excess over (1 - 5 eps)
            r_it = sp_.I_tilde / sp_.frak_I - (1 - 5 * eps) + 1
            worst_ib, worst_it = min(worst_ib, r_ib), min(worst_it, r_it)
            ok &= r_ib >= 1 - 1e-9 and r_it >= 1 - 1e-9
            count += 1
    return ok, (f"{count} Case-2 instances; min I_beta/((1-eps)^2 I_imp) = {worst_ib:.4f}, "
                f"min I_tilde/F - (1-5eps) = {worst_it - 1:.4f}"), {"instances": count}


@_timed(6, "hitting probability", 120)
def hitting_probability(R: float = 40.0):
    q = lattice_walk.escape_prob(3)
    c3 = lattice_walk.green_constant(3)
    ys = [(k, 0, 0) for k in range(8, 21, 2)] + [(6, 6, 0), (8, 8, 8), (10, 5, 3)]
    worst = 0.0
    for y in ys:
        r = math.sqrt(sum(c * c for c in y))
        if not 8 <= r <= 20:
            continue
        h = lattice_walk.hitting_prob_exact(y, R)
        pred = c3 * q * (1 / r - 1 / R)
        worst = max(worst, abs(h / pred - 1))
    return worst <= 0.15, f"max relative deviation {worst:.4f} over {len(ys)} targets", {"worst": worst}


@_timed(7, "exit geometry", 180)
def exit_geometry(seed: int = 7):
    disp, _ = lattice_walk.exit_ball_samples(3, 50, 10**5, seed)
    m2 = float(np.mean(disp[:, 0].astype(float) ** 2)) / 2500
    counts = lattice_walk.substep_counts(3, 60, 12, 20000, seed + 1)
    ratio = float(counts.mean()) / 25.0
    ok = abs(m2 * 3 - 1) <= 0.05 and abs(ratio - 1) <= 0.1
    return ok, f"E[(X.l)^2]/R^2 = {m2:.4f} (target 1/3); sub-steps / (R/r)^2 = {ratio:.4f}", {"m2": m2, "ratio": ratio}


@_timed(8, "mobility-edge identity and Green/series agreement", 60)
def mobility_identity(seed: int = 8):
    q = theory.default_q()
    rng = np.random.default_rng(seed)
    worst_atoms = 0.0
    for _ in range(20):
        k = int(rng.integers(1, 5))
        z = rng.exponential(5.0, k)
        m = rng.dirichlet(np.ones(k))
        mu = Atoms(tuple(zip(z.tolist(), m.tolist())))
        beta = 10 ** rng.uniform(-3, 1)
        a = theory.mobility_edge_integral(beta, mu, q)
        b = theory.mobility_edge_via_f(beta, mu, q)
        worst_atoms = max(worst_atoms, abs(a - b) / a)
    worst_p = 0.0
    for beta in (0.01, 0.05, 0.1, 1.0):
        a = theory.mobility_edge_integral(beta, PARETO, q)
        b = theory.mobility_edge_via_f(beta, PARETO, q)
        worst_p = max(worst_p, abs(a - b) / a)
    mu = Atoms(((0.0, 0.3), (1.0, 0.4), (5.0, 0.3)))
    worst_g = 0.0
    for s in range(5):
        env = sample_field(mu, Box.centered(1, 3), seed + s)
        chk = green.fk_equivalence_check(env, 0.5, (0, 0, 0))
        worst_g = max(worst_g, chk.max_deviation)
    ok = worst_atoms <= 1e-8 and worst_p <= 1e-6 and worst_g <= 1e-6
    return ok, (f"atoms rel. gap {worst_atoms:.1e}, Pareto rel. gap {worst_p:.1e}, "
                f"Green vs series {worst_g:.1e}"), {}


@_timed(9, "estimator vs exact enumeration", 120)
def estimator_ground_truth(seed: int = 9, max_len: int = 11, n_samples: int = 400_000):
    mu = Atoms(((0.0, 0.5), (1.0, 0.5)))
    beta, n = 0.5, 2
    br = oracle.exact_e_small(beta, n, mu, max_len=max_len)
    tilt = fk_mc.make_tilt(theory.frak_I(beta, mu), 3)
    lines, ok = [], True
    for name, t in (("untilted", None), ("tilted", tilt)):
        full = fk_mc.estimate_e(beta, n, mu, None, n_samples, t, None, seed)
        sd = full.e_hat * full.se_log
        inside = br.contains(full.e_hat, 3 * sd)
        trunc = fk_mc.estimate_e(beta, n, mu, None, n_samples, t, max_len, seed + 1)
        sd_t = trunc.e_hat * trunc.se_log
        z = (trunc.e_hat - br.lower) / sd_t
        ok &= inside and abs(z) <= 3
        lines.append(f"{name}: {full.e_hat:.5f} in [{br.lower:.5f}, {br.upper:.5f}] = {inside}, "
                     f"capped-at-{max_len} z = {z:+.2f}")
    return ok, "; ".join(lines), {"lower": br.lower, "upper": br.upper}


@_timed(10, "annealed rate, infinite mean", 600)
def annealed_rate_check(n_samples: int = 100_000, seed: int = 10):
    beta = 0.05
    F = theory.frak_I(beta, PARETO)
    target = 0.75 * math.sqrt(6 * F)
    ds = fk_mc.decay_series(beta, range(8, 41, 4), PARETO, I=F, n_samples=n_samples, seed=seed)
    fit = ds.fit
    cens = ds.censored_frac
    ok = fit.alpha >= target and cens < 0.01 and fit.sensitivity < 0.10
    return ok, (f"alpha_hat = {fit.alpha:.4f} +/- {fit.alpha_se:.4f} vs 0.75 sqrt(6F) = {target:.4f}; "
                f"censoring {cens:.2%}; window sensitivity {fit.sensitivity:.2%}"), \
        {"alpha": fit.alpha, "target": target, "F": F}


@_timed(11, "finite-mean sanity", 600)
def finite_mean(n_samples: int = 100_000, seed: int = 11):
    mu = Exponential(1.0)
    ratios = {}
    for beta in (0.05, 0.02):
        ds = fk_mc.decay_series(beta, range(16, 65, 8), mu, n_samples=n_samples, seed=seed)
        ratios[beta] = ds.fit.alpha / math.sqrt(6 * beta)
    in_band = all(0.7 <= r <= 1.3 for r in ratios.values())
    toward = abs(ratios[0.02] - 1) < abs(ratios[0.05] - 1)
    return in_band and toward, (f"ratio at beta=0.05: {ratios[0.05]:.4f}, at beta=0.02: {ratios[0.02]:.4f}; "
                                f"moves toward 1: {toward}"), {"ratios": ratios}


@_timed(12, "averaged Green decay", 900)
def green_decay(n_env: int = 256, seed: int = 12):
    beta = 0.05
    Fbar = theory.frak_I_bar(beta, PARETO)
    target = 0.75 * math.sqrt(6 * Fbar)
    de = green.averaged_green_decay(PARETO, beta, [4, 8, 12, 16, 20, 24], n_env=n_env, seed=seed)
    fit = de.fit
    shift = de.extra["margin_shift"]
    ok = fit.alpha >= target and not de.extra["truncation_flag"]
    return ok, (f"rate {fit.alpha:.4f} +/- {fit.alpha_se:.4f} vs 0.75 sqrt(6 Fbar) = {target:.4f}; "
                f"margin-doubling shift {shift:+.4f} (CI half-width {1.96 * fit.alpha_se:.4f})"), \
        {"alpha": fit.alpha, "target": target, "Fbar": Fbar}


@_timed(13, "annealed vs quenched ordering", 300)
def jensen_ordering(seed: int = 13, n_env: int = 16, n_samples: int = 100_000):
    lines, ok = [], True
    for beta in (0.05, 0.1):
        F = theory.frak_I(beta, PARETO)
        tilt = fk_mc.make_tilt(F, 3)
        for n in (4, 8):
            qp = fk_mc.estimate_quenched(beta, n, PARETO, n_env=n_env, seed=seed)
            ep = fk_mc.estimate_e(beta, n, PARETO, None, n_samples, tilt, None, seed)
            # compare on log scale: log e_hat >= mean log u
            sd = math.hypot(ep.se_log, qp.mean_log_se)
            z = (ep.log_e - qp.mean_log) / sd
            ok &= z >= -3
            lines.append(f"b={beta} n={n}: log e={ep.log_e:.3f}, mean log u={qp.mean_log:.3f} (z={z:+.1f})")
    return ok, "; ".join(lines), {}


CRITERIA = [escape_probability, f_suite, psi_and_chernoff, surgery_counting, riemann_splitting,
            hitting_probability, exit_geometry, mobility_identity, estimator_ground_truth, annealed_rate_check,
            finite_mean, green_decay, jensen_ordering]


def run_all(only: list[int] | None = None, echo: Callable[[str], None] | None = print) -> list[CriterionResult]:
    out = []
    for crit in CRITERIA:
        if only and crit.number not in only:
            continue
        res = crit()
        if echo:
            echo(res.line())
        out.append(res)
    return out
