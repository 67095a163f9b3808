"""Command-line experiment runner.

Subcommands ``theory | qd | mc | green | oracle | selftest`` read a
sectioned ``key = value`` config (see ``default.ini``) and write CSV
(plus JSON lines for ``selftest``) into ``--out``.  Every row carries the
config hash, the seed and the package version.

Exit status: 0 success, 1 usage error, 2 failed checks, 3 numerical
non-convergence.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import hashlib
import io
import json
import math
import sys
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from . import __version__
from ._lattice import SolverError
from .environment import PotentialSpec, QuadratureError, spec_from_config

EXIT_OK, EXIT_USAGE, EXIT_FAIL, EXIT_NONCONV = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.replace(";", ",").split(",") if x.strip()]


def _ints(text: str) -> list[int]:
    out: list[int] = []
    for part in text.replace(";", ",").split(","):
        part = part.strip()
        if not part:
            continue
        if ":" in part:
            lo, hi, *step = (int(x) for x in part.split(":"))
            out.extend(range(lo, hi + 1, step[0] if step else 1))
        else:
            out.append(int(part))
    return out


@dataclass
class TheoryConfig:
    beta: list[float] = field(default_factory=lambda: [0.05])
    epsilon: float = 0.1
    delta: float = 0.05
    d: int = 3
    a: float | None = None
    f_grid: int = 25


@dataclass
class QdConfig:
    d: list[int] = field(default_factory=lambda: [3, 4])
    walks: int = 1_000_000
    stop_radius: float = 20.0


@dataclass
class McConfig:
    beta: list[float] = field(default_factory=lambda: [0.05])
    n: list[int] = field(default_factory=lambda: list(range(8, 41, 4)))
    samples: int = 100_000
    tilt: bool = True
    cap: int | None = None
    epsilon: float = 0.25
    d: int = 3


@dataclass
class GreenConfig:
    beta: list[float] = field(default_factory=lambda: [0.05])
    n: list[int] = field(default_factory=lambda: [4, 8, 12, 16, 20, 24])
    n_env: int = 64
    margin: int = 12
    tol: float = 1e-10
    epsilon: float = 0.25
    fk_checks: int = 3


@dataclass
class OracleConfig:
    beta: float = 0.5
    n: int = 2
    max_len: int = 10
    samples: int = 200_000
    atoms: str = "0:0.5, 1:0.5"


@dataclass
class SelftestConfig:
    criteria: list[int] = field(default_factory=lambda: list(range(1, 14)))


@dataclass
class ExperimentConfig:
    potential: dict[str, str]
    theory: TheoryConfig
    qd: QdConfig
    mc: McConfig
    green: GreenConfig
    oracle: OracleConfig
    selftest: SelftestConfig
    seed: int = 0
    workers: int = 1

    @property
    def spec(self) -> PotentialSpec:
        return spec_from_config(self.potential)

    def canonical(self) -> str:
        body = dataclasses.asdict(self)
        return json.dumps(body, sort_keys=True, separators=(",", ":"))

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:12]


_PARSERS = {float: float, int: int, bool: lambda s: s.strip().lower() in ("1", "true", "yes", "on"),
            str: str}


def _fill(cls, section: dict[str, str]):
    obj = cls()
    for f in dataclasses.fields(cls):
        if f.name not in section:
            continue
        raw = section[f.name].strip()
        t = f.type
        try:
            if t in ("list[float]",):
                val = _floats(raw)
            elif t in ("list[int]",):
                val = _ints(raw)
            elif t in ("float | None", "int | None"):
                val = None if raw.lower() in ("", "none") else (float(raw) if t.startswith("float") else int(raw))
            else:
                val = _PARSERS[{"float": float, "int": int, "bool": bool, "str": str}[t]](raw)
        except (ValueError, KeyError) as exc:
            raise UsageError(f"bad value for {f.name}: {raw!r}") from exc
        setattr(obj, f.name, val)
    unknown = set(section) - {f.name for f in dataclasses.fields(cls)}
    if unknown:
        raise UsageError(f"unknown keys in [{cls.__name__}]: {sorted(unknown)}")
    return obj


def default_config_text() -> str:
    return resources.files(__package__).joinpath("default.ini").read_text(encoding="utf-8")


def load_config(path: str | None) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.read_string(default_config_text())
    if path:
        p = Path(path)
        if not p.is_file():
            raise UsageError(f"config file {path} not found")
        user = configparser.ConfigParser(interpolation=None)
        user.read(p, encoding="utf-8")
        if user.has_section("potential"):
            cp.remove_section("potential")
            cp.add_section("potential")
        for sec in user.sections():
            if not cp.has_section(sec):
                cp.add_section(sec)
            for k, v in user.items(sec):
                cp.set(sec, k, v)
    sec = {s: dict(cp.items(s)) for s in cp.sections()}
    run = sec.get("run", {})
    try:
        spec_from_config(sec.get("potential", {}))
    except (KeyError, ValueError) as exc:
        raise UsageError(f"bad [potential] section: {exc}") from exc
    return ExperimentConfig(
        potential=sec.get("potential", {}),
        theory=_fill(TheoryConfig, sec.get("theory", {})),
        qd=_fill(QdConfig, sec.get("qd", {})),
        mc=_fill(McConfig, sec.get("mc", {})),
        green=_fill(GreenConfig, sec.get("green", {})),
        oracle=_fill(OracleConfig, sec.get("oracle", {})),
        selftest=_fill(SelftestConfig, sec.get("selftest", {})),
        seed=int(run.get("seed", 0)),
        workers=int(run.get("workers", 1)),
    )


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def _fmt(v):
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    if v is None:
        return ""
    return str(v)


def module_versions() -> str:
    import numba
    import numpy
    import scipy

    return f"numpy={numpy.__version__};scipy={scipy.__version__};numba={numba.__version__}"


class Writer:
    def __init__(self, out: Path, cfg: ExperimentConfig):
        self.out = out
        self.cfg = cfg
        out.mkdir(parents=True, exist_ok=True)

    def stamp(self, row: dict) -> dict:
        return {"config_hash": self.cfg.hash, "seed": self.cfg.seed, "version": __version__,
                "module_versions": module_versions(), **row}

    def csv(self, name: str, rows: list[dict]) -> Path:
        path = self.out / name
        rows = [self.stamp(r) for r in rows]
        cols: list[str] = []
        for r in rows:
            cols.extend(k for k in r if k not in cols)
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\r\n", quoting=csv.QUOTE_MINIMAL)
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r.get(k)) for k in cols})
        path.write_text(buf.getvalue(), encoding="utf-8")
        return path

    def jsonl(self, name: str, rows: list[dict]) -> Path:
        path = self.out / name
        with path.open("w", encoding="utf-8") as fh:
            for r in rows:
                fh.write(json.dumps(self.stamp(r), sort_keys=True, default=str) + "\n")
        return path


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_theory(cfg: ExperimentConfig, w: Writer) -> int:
    from . import theory

    t = cfg.theory
    if not t.beta:
        raise UsageError("theory needs a non-empty beta list")
    spec = cfg.spec
    q = theory.default_q(t.d)
    rows = [{"table": "f", "z": z, "f": theory.f_eval(z, q)}
            for z in [10 ** (-6 + 9 * i / (t.f_grid - 1)) for i in range(t.f_grid)]]
    for beta in t.beta:
        a = t.epsilon**8 if t.a is None else t.a
        F = theory.frak_I(beta, spec, q)
        Fbar = theory.mobility_edge_integral(beta, spec, q)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            z0, M = theory.m_beta(beta, spec, t.epsilon, q)
        case = theory.classify_case(beta, spec, t.epsilon, a, q, M)
        split = theory.riemann_split(beta, spec, t.epsilon, a, q)
        if M > 0 and beta * M < a:
            split = theory.rho_grid_split(beta, spec, t.epsilon, a, M, q, split)
        cost = theory.optimal_speed(F, t.d)
        row = {"table": "summary", "beta": beta, "epsilon": t.epsilon, "a": a, "q": q, "frak_I": F,
               "frak_I_bar": Fbar, "z0": z0, "M_beta": M, "case": case.case.value,
               "important_integral": case.important, "intermediate_integral": case.intermediate,
               "kappa_prime": split.kappa_prime, "kappa": split.kappa, "I_beta": split.I_beta,
               "I_prime": split.I_prime, "I_tilde": split.I_tilde, "v_star": cost.v_star,
               "cost_star": cost.cost_star}
        if split.kappa > 0:
            sc = theory.scales(beta, split, t.epsilon, t.delta, t.d, M, case.case)
            row.update(L_hat=sc.L_hat, L=sc.L, r_prime=sc.r_prime, r=sc.r, R=sc.R, eta_b=sc.eta_b,
                       scales_ordered=sc.ordered)
        rows.append(row)
        print(f"beta={beta:g}: frak_I={F:.6g} frak_I_bar={Fbar:.6g} case={case.case.value} "
              f"I_beta={split.I_beta:.6g} I_tilde={split.I_tilde:.6g} cost*={cost.cost_star:.6g}")
    w.csv("theory.csv", rows)
    return EXIT_OK


def cmd_qd(cfg: ExperimentConfig, w: Writer) -> int:
    from . import lattice_walk

    rows = []
    for d in cfg.qd.d:
        quad = lattice_walk.escape_prob(d)
        mc = lattice_walk.escape_prob_mc(d, n_walks=cfg.qd.walks, stop_radius=cfg.qd.stop_radius, seed=cfg.seed)
        rows.append({"d": d, "q_quadrature": quad, "q_mc": mc.value, "q_mc_se": mc.stderr,
                     "raw_no_return": mc.raw_fraction, "walks": mc.n_walks, "stop_radius": mc.stop_radius})
        print(f"d={d}: quadrature {quad:.10f}  Monte Carlo {mc.value:.5f} +/- {mc.stderr:.5f}")
    w.csv("qd.csv", rows)
    return EXIT_OK


def cmd_mc(cfg: ExperimentConfig, w: Writer) -> int:
    from . import fk_mc, theory

    m = cfg.mc
    if not m.beta or not m.n:
        raise UsageError("mc needs non-empty beta and n lists")
    spec = cfg.spec
    rows = []
    for beta in m.beta:
        F = theory.frak_I(beta, spec)
        tilt = fk_mc.make_tilt(F, m.d) if m.tilt else None
        pts = [fk_mc.estimate_e(beta, n, spec, None, m.samples, tilt, m.cap, cfg.seed, workers=cfg.workers, d=m.d)
               for n in m.n]
        for p in pts:
            rows.append({"kind": "point", "beta": beta, "n": p.n, "e_hat": p.e_hat, "log_e": p.log_e,
                         "se_log": p.se_log, "ci_low": p.ci_low, "ci_high": p.ci_high,
                         "censored": p.censored_frac, "mean_steps": p.mean_steps, "lambda": p.lam})
        fit = fk_mc.fit_rate(m.n, [p.neg_log_e for p in pts], [p.se_log for p in pts]) if len(m.n) >= 4 else None
        target = (1 - m.epsilon) * math.sqrt(2 * m.d * F)
        mean = spec.mean
        kmz = math.sqrt(2 * m.d * beta * mean) if math.isfinite(mean) else math.nan
        if fit is not None:
            rows.append({"kind": "fit", "beta": beta, "alpha_hat": fit.alpha, "alpha_se": fit.alpha_se,
                         "window_sensitivity": fit.sensitivity, "unstable": fit.unstable,
                         "target_frak_I": target, "sqrt_2d_beta_mean": kmz})
            print(f"beta={beta:g}: alpha_hat={fit.alpha:.5f} +/- {fit.alpha_se:.5f}  "
                  f"(1-eps) sqrt(2d F)={target:.5f}  sqrt(2d beta E V)={kmz:.5f}")
    w.csv("mc.csv", rows)
    return EXIT_OK


def cmd_green(cfg: ExperimentConfig, w: Writer) -> int:
    from . import green, theory
    from .environment import Box, sample_field

    g = cfg.green
    if not g.beta or not g.n:
        raise UsageError("green needs non-empty beta and n lists")
    spec = cfg.spec
    rows = []
    for beta in g.beta:
        Fbar = theory.frak_I_bar(beta, spec)
        de = green.averaged_green_decay(spec, beta, g.n, n_env=g.n_env, box_margin=g.margin,
                                        seed=cfg.seed, tol=g.tol)
        for p in de.points:
            rows.append({"kind": "point", "beta": beta, "n": p.n, "mean_g": p.e_hat, "se_log": p.se_log,
                         "ci_low": p.ci_low, "ci_high": p.ci_high})
        target = (1 - g.epsilon) * math.sqrt(6 * Fbar)
        rows.append({"kind": "fit", "beta": beta, "alpha_hat": de.fit.alpha, "alpha_se": de.fit.alpha_se,
                     "margin_shift": de.extra["margin_shift"], "truncation_flag": de.extra["truncation_flag"],
                     "target_frak_I_bar": target})
        print(f"beta={beta:g}: rate={de.fit.alpha:.5f} +/- {de.fit.alpha_se:.5f}  target={target:.5f}  "
              f"margin shift={de.extra['margin_shift']:+.5f}")
        for s in range(g.fk_checks):
            env = sample_field(spec, Box.centered(1, 3), cfg.seed + s)
            chk = green.fk_equivalence_check(env, beta, (0, 0, 0))
            rows.append({"kind": "fk_check", "beta": beta, "env_seed": cfg.seed + s,
                         "max_deviation": chk.max_deviation, "tail_bound": chk.tail_bound,
                         "spectral_radius": chk.spectral_radius, "ok": chk.ok})
    w.csv("green.csv", rows)
    return EXIT_OK


def cmd_oracle(cfg: ExperimentConfig, w: Writer) -> int:
    from . import fk_mc, oracle, theory
    from .environment import Atoms, _parse_atoms

    o = cfg.oracle
    mu = Atoms(_parse_atoms(o.atoms))
    br = oracle.exact_e_small(o.beta, o.n, mu, max_len=o.max_len)
    rows = [{"kind": "bracket", "beta": o.beta, "n": o.n, "max_len": o.max_len, "lower": br.lower,
             "upper": br.upper, "p_finished": br.p_finished}]
    tilt = fk_mc.make_tilt(theory.frak_I(o.beta, mu), 3)
    for name, t in (("untilted", None), ("tilted", tilt)):
        p = fk_mc.estimate_e(o.beta, o.n, mu, None, o.samples, t, None, cfg.seed)
        rows.append({"kind": name, "beta": o.beta, "n": o.n, "e_hat": p.e_hat, "se": p.e_hat * p.se_log,
                     "inside": br.contains(p.e_hat, 3 * p.e_hat * p.se_log), "censored": p.censored_frac})
    print(f"bracket [{br.lower:.6f}, {br.upper:.6f}]; " +
          ", ".join(f"{r['kind']} {r['e_hat']:.6f}" for r in rows[1:]))
    w.csv("oracle.csv", rows)
    return EXIT_OK if all(r["inside"] for r in rows[1:]) else EXIT_FAIL


def cmd_selftest(cfg: ExperimentConfig, w: Writer) -> int:
    from . import acceptance

    results = acceptance.run_all(cfg.selftest.criteria)
    w.jsonl("selftest.jsonl", [dataclasses.asdict(r) for r in results])
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    for r in failed:
        print(f"  failed: criterion {r.number} {r.name}")
    return EXIT_FAIL if failed else EXIT_OK


COMMANDS = {"theory": cmd_theory, "qd": cmd_qd, "mc": cmd_mc, "green": cmd_green, "oracle": cmd_oracle,
            "selftest": cmd_selftest}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="annealed-lyapunov", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="sectioned key=value file overriding the defaults")
        sp.add_argument("--seed", type=int, help="base seed (overrides [run] seed)")
        sp.add_argument("--out", default="results", help="output directory")
        sp.add_argument("--workers", type=int, help="worker processes for Monte Carlo batches")
        if name in ("theory", "mc", "green"):
            sp.add_argument("--beta", help="comma-separated beta list (overrides the config)")
        if name in ("mc", "green"):
            sp.add_argument("--n", help="comma-separated n list or lo:hi:step")
        if name == "selftest":
            sp.add_argument("--criteria", help="comma-separated criterion numbers")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0 or args.seed >= 2**64:
                raise UsageError("seed must be an unsigned 64-bit integer")
            cfg.seed = args.seed
        if args.workers is not None:
            if args.workers < 1:
                raise UsageError("workers must be at least 1")
            cfg.workers = args.workers
        section = getattr(cfg, args.command, None)
        if getattr(args, "beta", None) is not None:
            section.beta = _floats(args.beta)
        if getattr(args, "n", None) is not None:
            section.n = _ints(args.n)
        if getattr(args, "criteria", None) is not None:
            cfg.selftest.criteria = _ints(args.criteria)
        writer = Writer(Path(args.out), cfg)
        return COMMANDS[args.command](cfg, writer)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SolverError, QuadratureError) as exc:
        print(f"numerical non-convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONV


if __name__ == "__main__":
    sys.exit(main())
