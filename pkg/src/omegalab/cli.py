"""Command-line front end: configuration, orchestration, caching, reports.

Usage::

    python3 -m omegalab --config run.json --out results/
    python3 -m omegalab shift-verify --refine 1 --ray -0.35 --out results/

The run writes ``residuals.csv`` (one row per identity and probe),
``report.json`` and ``summary.txt`` into the output directory; the
``omega-eval`` and ``full-report`` modes add ``omega_plot.csv``.  The exit
status is 0 when every residual is within tolerance, 1 when some are not,
2 for an invalid configuration and 3 when a computation fails.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import continuum as ct
from . import kernels as kn
from . import lattice as lt
from . import nlie
from .errors import OmegaLabError, ParameterError

log = logging.getLogger("omegalab")

MODES = ("lattice-verify", "nlie-solve", "omega-eval", "shift-verify", "full-report")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_COMPUTE = 0, 1, 2, 3

DEFAULT_TOLERANCES = {
    # lattice
    "P-symmetry": 1e-9,
    "psi-equivalence": 1e-9,
    "G_right": 1e-10,
    "g_left": 1e-10,
    "moment": 1e-10,
    "X-vanishing": 1e-10,
    "X-pol": 1e-8,
    "dual-omega": 1e-9,
    "residue-contour": 1e-10,
    # nlie
    "ddv": 1e-10,
    "asR-exponent": 0.02,
    "tail-parity": 1e-6,
    # continuum
    "2int": 1e-4,
    "tau": 1e-3,
    "sigma": 1e-3,
    "final1": 1e-3,
    "zeroT": 1e-3,
    "alphashift": 1e-3,
    "FFF": 1e-3,
    "corr": 1e-3,
    "mainR": 1e-3,
    "main": 1e-3,
    "Uprime": 1e-3,
    "omega1_forms": 1e-10,
    "ray-robustness": 0.3,
}

# the free pipeline is held to the tighter closed-form targets
FREE_TOLERANCES = {"FFF": 1e-6, "corr": 1e-6, "alphashift": 1e-5}

MIN_FACTOR = 4.0
# below this a residual is roundoff, and neither its refinement factor nor its
# ray dependence carries information
NOISE_FLOOR = 1e-11

SCHEMA = {
    "mode": str,
    "params": dict,
    "free": bool,
    "grid": dict,
    "probes": dict,
    "lattice": dict,
    "refine": int,
    "include_omega0": bool,
    "quarter_u": bool,
    "tolerances": dict,
    "out": str,
    "cache": (str, type(None)),
}
PARAM_KEYS = {"p", "alpha", "MR", "kappa", "kappa_prime"}
GRID_KEYS = {"Theta", "N0", "gamma"}
PROBE_KEYS = {"ray", "pairs"}
LATTICE_KEYS = {"sizes", "draws", "probes", "seed"}


class ConfigError(OmegaLabError, ValueError):
    """The run configuration is malformed or violates a model invariant."""


@dataclass
class RunConfig:
    mode: str = "shift-verify"
    params: Dict[str, float] = field(default_factory=lambda: {
        "p": 0.3, "alpha": 0.4, "MR": 0.1, "kappa": 0.0, "kappa_prime": 0.05})
    free: bool = False
    grid: Dict[str, float] = field(default_factory=lambda: {"Theta": 12.0, "N0": 512, "gamma": 0.12})
    probes: Dict[str, object] = field(default_factory=lambda: {
        "ray": ct.DEFAULT_RAYS[0], "pairs": [list(p) for p in ct.DEFAULT_PAIRS]})
    lattice: Dict[str, object] = field(default_factory=lambda: {"sizes": [4], "draws": 5, "probes": 5, "seed": 1})
    refine: int = 1
    include_omega0: bool = False
    quarter_u: bool = False
    tolerances: Dict[str, float] = field(default_factory=dict)
    out: str = "omegalab-out"
    cache: Optional[str] = None

    @property
    def rays(self):
        ray = float(self.probes["ray"])
        return (ray, 2.0 * ray)

    @property
    def pairs(self):
        return [tuple(float(v) for v in pair) for pair in self.probes["pairs"]]

    @property
    def kappa_prime(self):
        return self.params["kappa"] if self.free else self.params["kappa_prime"]

    def tolerance(self, identity: str, scale: float = 1.0) -> float:
        tol = dict(DEFAULT_TOLERANCES)
        if self.free:
            tol.update(FREE_TOLERANCES)
        tol.update(self.tolerances)
        return tol[identity] * scale

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {', '.join(MODES)}; got {self.mode!r}")
        for name, allowed in (("params", PARAM_KEYS), ("grid", GRID_KEYS), ("probes", PROBE_KEYS),
                              ("lattice", LATTICE_KEYS)):
            extra = set(getattr(self, name)) - allowed
            if extra:
                raise ConfigError(f"unknown key(s) in {name}: {', '.join(sorted(extra))}")
        unknown = set(self.tolerances) - set(DEFAULT_TOLERANCES)
        if unknown:
            raise ConfigError(f"unknown tolerance key(s): {', '.join(sorted(unknown))}")
        pr = self.params
        try:
            kn.ModelParams(p=pr["p"], alpha=pr["alpha"], MR=pr["MR"], kappa=pr["kappa"],
                           kappa_prime=self.kappa_prime)
            for n in self.lattice["sizes"]:
                kn.ModelParams(p=pr["p"], alpha=pr["alpha"], n=n)
        except ParameterError as exc:
            raise ConfigError(f"invalid parameters: {exc}") from exc
        except KeyError as exc:
            raise ConfigError(f"missing parameter {exc}") from exc
        ray = float(self.probes["ray"])
        if not -math.pi / 2 < 2 * ray < 0:
            raise ConfigError("ray angle must satisfy -pi/4 < ray < 0 so that the doubled ray stays admissible")
        if self.refine < 0:
            raise ConfigError("refine must be non-negative")
        if int(self.grid["N0"]) < 16:
            raise ConfigError("grid N0 must be at least 16")
        return self

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        unknown = set(data) - set(SCHEMA)
        if unknown:
            raise ConfigError(f"unknown configuration key(s): {', '.join(sorted(unknown))}")
        cfg = cls()
        for key, value in data.items():
            if not isinstance(value, SCHEMA[key]) or (SCHEMA[key] is int and isinstance(value, bool)):
                raise ConfigError(f"configuration key {key!r} has the wrong type")
            if isinstance(value, dict) and key != "tolerances":
                merged = dict(getattr(cfg, key))
                merged.update(value)
                value = merged
            setattr(cfg, key, value)
        return cfg


# ---------------------------------------------------------------------------
# result rows


@dataclass
class Row:
    identity: str
    residual: float
    tolerance: float
    Z: Optional[complex] = None
    X: Optional[complex] = None
    alpha: Optional[float] = None
    factor: float = math.nan
    need_factor: bool = False

    @property
    def passed(self) -> bool:
        if not (np.isfinite(self.residual) and self.residual <= self.tolerance):
            return False
        if self.need_factor:
            return self.factor >= MIN_FACTOR
        return True


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, complex):
        return f"{x.real:.16e}{x.imag:+.16e}j"
    return f"{x:.16e}"


def write_csv(rows: Sequence[Row], path: Path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["identity", "Z", "X", "alpha", "residual", "refinement_factor"])
        for r in rows:
            w.writerow([r.identity, _fmt(r.Z), _fmt(r.X), _fmt(r.alpha), _fmt(r.residual), _fmt(r.factor)])


# ---------------------------------------------------------------------------
# lattice


def _draw_params(rng, n, equivalence=False, s=0, s_prime=0):
    p = rng.uniform(0.15, 0.45)
    zeta0 = rng.uniform(1.3, 2.2)
    kappa = rng.uniform(-0.3, 0.3)
    alpha = rng.uniform(0.1, 0.7)
    kappa_prime = alpha + kappa + s_prime - s if equivalence else rng.uniform(-0.3, 0.3)
    return kn.ModelParams(p=p, alpha=alpha, n=n, zeta0=zeta0, kappa=kappa, kappa_prime=kappa_prime,
                          s=s, s_prime=s_prime, strict_alpha=not equivalence)


def _pair(params: kn.ModelParams, variant=kn.PSI_PLUS):
    ad = lt.ADSpec.staggered(params.n, params.zeta0)
    st = lt.solve_bethe(params, lt.TwistSector(params.kappa, params.s), ad)
    stp = lt.solve_bethe(params, lt.TwistSector(params.kappa_prime, params.s_prime), ad)
    return lt.LatticePair(st, stp, params.alpha, variant)


def lattice_rows(cfg: RunConfig, scale: float = 1.0) -> List[Row]:
    lat = cfg.lattice
    rng = np.random.default_rng(int(lat["seed"]))
    tol = lambda k: cfg.tolerance(k, scale)  # noqa: E731
    rows: List[Row] = []
    for n in lat["sizes"]:
        for _ in range(int(lat["draws"])):
            pair = _pair(_draw_params(rng, n))
            swapped = pair.swapped()
            for Lz, Lx in lt.generic_probes(rng, int(lat["probes"])):
                w = pair.omega(Lz, Lx)
                res = abs(w - pair.rho(Lz) * pair.rho(Lx) * swapped.omega(Lz, Lx)) / abs(w)
                Z, X = complex(np.exp(Lz)), complex(np.exp(Lx))
                rows.append(Row("P-symmetry", res, tol("P-symmetry"), Z, X, pair.alpha))
                if n <= 4:
                    dual = abs(pair.omega_inside(Lz, Lx) - w) / abs(w)
                    rows.append(Row("dual-omega", dual, tol("dual-omega"), Z, X, pair.alpha))
            Lz, Lx = lt.generic_probes(rng, 1)[0]
            rc = pair.residue_vs_contour(lambda L: pair.V_left(Lz, L) * pair.V_right(L, Lx), singular=(Lz, Lx))[0]
            rows.append(Row("residue-contour", rc, tol("residue-contour"), alpha=pair.alpha))
        # psi0/psi+ equivalence and the g_left/moment identities on alpha = kappa' - kappa - s' + s
        for s, s_prime in ((0, 0), (0, 1)) if n >= 2 else ((0, 0),):
            params = _draw_params(rng, n, equivalence=True, s=s, s_prime=s_prime)
            plus = _pair(params)
            zero = plus.with_variant(kn.PSI0)
            for Lz, Lx in lt.generic_probes(rng, int(lat["probes"])):
                w = plus.omega(Lz, Lx)
                Z, X = complex(np.exp(Lz)), complex(np.exp(Lx))
                rows.append(Row("psi-equivalence", abs(w - zero.omega(Lz, Lx)) / abs(w), tol("psi-equivalence"),
                                Z, X, params.alpha))
                Le = np.array([complex(rng.normal(0, 0.4), rng.uniform(-0.6, 0.6))])
                a, b = plus.G_right(Le, Lx), zero.G_right(Le, Lx)
                rows.append(Row("G_right", float(np.max(np.abs(a - b)) / np.max(np.abs(a))), tol("G_right"),
                                X=X, alpha=params.alpha))
                gc = zero.g_left_closed(Lx)
                rows.append(Row("g_left", float(np.max(np.abs(gc - zero.g_left_solve(Lx))) / np.max(np.abs(gc))),
                                tol("g_left"), X=X, alpha=params.alpha))
                rows.append(Row("moment", float(zero.moment_residual(Lx)[0]), tol("moment"), X=X, alpha=params.alpha))
        # X diagnostics
        pair = _pair(_draw_params(rng, n))
        Lx = lt.generic_probes(rng, 1)[0][1]
        for variant in (kn.PSI_PLUS, kn.PSI0):
            diag = lt.x_diagnostics(pair.with_variant(variant), Lx)
            rows.append(Row(f"X-vanishing[{variant}]", float(np.max(diag.relative_root_values(), initial=0.0)),
                            tol("X-vanishing"), X=complex(np.exp(Lx)), alpha=pair.alpha))
            if variant == kn.PSI_PLUS:
                coef = float(np.max(np.abs(diag.coefficients)) / diag.scale)
                rows.append(Row("X-pol[psiPlus]", coef, tol("X-pol"), X=complex(np.exp(Lx)), alpha=pair.alpha))
            else:
                rows.append(Row("X-degree[psi0]", float(np.max(np.abs(diag.beyond_bound), initial=0.0) / diag.scale), tol("X-pol"),
                                X=complex(np.exp(Lx)), alpha=pair.alpha))
    return rows


# ---------------------------------------------------------------------------
# continuum


def _grid(cfg: RunConfig, level: int):
    g = cfg.grid
    return nlie.default_grid(level, float(g["Theta"]), int(g["N0"]))


def nlie_rows(cfg: RunConfig, cache, out: Path, scale: float = 1.0):
    pr = cfg.params
    grid = _grid(cfg, cfg.refine)
    gamma = float(cfg.grid["gamma"])
    sol = nlie.cached_solve_ddv(pr["p"], pr["MR"], pr["kappa"], grid, gamma, cache_dir=cache)
    sol_p = nlie.cached_solve_ddv(pr["p"], pr["MR"], cfg.kappa_prime, grid, gamma, cache_dir=cache)
    for tag, s in (("kappa", sol), ("kappa_prime", sol_p)):
        (out / f"nlie_{tag}.json").write_text(json.dumps(s.to_json()))
    rows = [Row("ddv", s.residual, cfg.tolerance("ddv", scale)) for s in (sol, sol_p)]
    R = nlie.RFunction(sol, sol_p)
    info = {"deltaI": [ct._cplx(v) for v in R.deltaI], "deltaIbar": [ct._cplx(v) for v in R.deltaIbar],
            "iterations": [sol.iterations, sol_p.iterations], "free": R.free}
    if not R.free:
        for direction, fit in R.tail_check(cfg.rays[0]).items():
            rows.append(Row(f"asR-exponent[{'+' if direction > 0 else '-'}]", abs(fit["exponent"] - 1.0),
                            cfg.tolerance("asR-exponent", scale)))
            rows.append(Row(f"tail-parity[{'+' if direction > 0 else '-'}]", fit["even_over_odd"],
                            cfg.tolerance("tail-parity", scale)))
    return rows, info


def _system_kw(cfg: RunConfig):
    return {"include_omega0": cfg.include_omega0, "u_scale": 0.25 if cfg.quarter_u else 1.0}


def shift_rows(cfg: RunConfig, cache, scale: float = 1.0):
    pr = cfg.params
    levels = list(range(cfg.refine + 1)) if cfg.refine else [0]
    levels = levels[-2:]
    study = ct.refinement_study(pr["p"], pr["MR"], pr["kappa"], cfg.kappa_prime, pr["alpha"], levels, cfg.rays,
                                cfg.pairs, float(cfg.grid["Theta"]), int(cfg.grid["N0"]), float(cfg.grid["gamma"]),
                                cache, **_system_kw(cfg))
    rows: List[Row] = []
    alpha = float(pr["alpha"])
    for ray in cfg.rays:
        fine = study.finest(ray)
        keys = [k for k in fine.per_pair[0][2] if k in DEFAULT_TOLERANCES]
        for key in keys:
            factors = study.factors(ray, key) if key in ct.CONVERGENT_IDENTITIES else [math.nan] * len(fine.per_pair)
            coarse = study.suites[levels[0]][ray].per_pair
            for i, (tZ, tX, res) in enumerate(fine.per_pair):
                need = len(levels) > 1 and key in ct.CONVERGENT_IDENTITIES and coarse[i][2][key] > NOISE_FLOOR
                rows.append(Row(key, float(res[key]), cfg.tolerance(key, scale), complex(np.exp(tZ)),
                                complex(np.exp(tX)), alpha, factors[i], need))
        for key in ("mainR", "main"):
            fac = study.factors(ray, key)[0] if len(levels) > 1 else math.nan
            coarse_r = study.suites[levels[0]][ray].residuals[key]
            rows.append(Row(key, fine.residuals[key], cfg.tolerance(key, scale), alpha=alpha, factor=fac,
                            need_factor=len(levels) > 1 and coarse_r > NOISE_FLOOR))
    # ray robustness: relative change of the worst residual when the ray angle
    # doubles, on the coarsest level where residuals stand clear of roundoff
    r1, r2 = (study.suites[levels[0]][r].residuals for r in cfg.rays)
    for key in ("2int", "tau", "sigma", "final1", "zeroT", "alphashift"):
        a, b = r1[key], r2[key]
        change = abs(a - b) / max(a, b) if min(a, b) > NOISE_FLOOR else 0.0
        rows.append(Row(f"ray-robustness[{key}]", change, cfg.tolerance("ray-robustness", scale), alpha=alpha))
    return rows, study


def omega_outputs(cfg: RunConfig, cache, out: Path, study=None):
    pr = cfg.params
    if study is not None:
        system = study.systems[study.levels[-1]]
    else:
        data = ct.ContinuumData(pr["p"], pr["MR"], pr["kappa"], cfg.kappa_prime, _grid(cfg, cfg.refine),
                                float(cfg.grid["gamma"]), cache)
        system = ct.ShiftSystem(data, pr["alpha"], **_system_kw(cfg))
    probes = [pair for ray in cfg.rays for pair in ct.probe_pairs(ray, cfg.pairs)]
    report = ct.omega_report(system, probes)
    with open(out / "omega_plot.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["Z", "X", "Re_Omega", "Im_Omega"])
        for s in report["samples"]:
            w.writerow([_fmt(complex(*s["Z"])), _fmt(complex(*s["X"])), _fmt(s["Omega"][0]), _fmt(s["Omega"][1])])
    return report


# ---------------------------------------------------------------------------
# driver


def run(cfg: RunConfig, tolerance_scale: float = 1.0) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    cache = os.environ.get("OMEGALAB_CACHE", cfg.cache)
    rows: List[Row] = []
    report: Dict[str, object] = {"mode": cfg.mode, "free": cfg.free, "params": cfg.params, "refine": cfg.refine}
    mode = cfg.mode
    try:
        if mode in ("lattice-verify", "full-report"):
            rows += lattice_rows(cfg, tolerance_scale)
        if mode in ("nlie-solve", "full-report"):
            nrows, info = nlie_rows(cfg, cache, out, tolerance_scale)
            rows += nrows
            report["nlie"] = info
        study = None
        if mode in ("shift-verify", "full-report"):
            srows, study = shift_rows(cfg, cache, tolerance_scale)
            rows += srows
        if mode in ("omega-eval", "full-report"):
            omega = omega_outputs(cfg, cache, out, study)
            report["omega"] = omega
            for s in omega["samples"]:
                for key in ("2int", "tau", "sigma", "omega1_forms"):
                    rows.append(Row(key, s["residuals"][key], cfg.tolerance(key, tolerance_scale),
                                    complex(*s["Z"]), complex(*s["X"]), cfg.params["alpha"]))
    except OmegaLabError as exc:
        log.error("computation failed in %s: %s: %s", type(exc).__module__, type(exc).__name__, exc)
        (out / "summary.txt").write_text(f"FAILED: {type(exc).__name__}: {exc}\n")
        return EXIT_COMPUTE
    write_csv(rows, out / "residuals.csv")
    failed = [r for r in rows if not r.passed]
    report["rows"] = len(rows)
    report["failed"] = [{"identity": r.identity, "residual": r.residual, "tolerance": r.tolerance,
                         "factor": r.factor} for r in failed]
    (out / "report.json").write_text(json.dumps(report, indent=1, default=_json_default))
    lines = _summary(rows)
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_OK if not failed else EXIT_FAIL


def _json_default(obj):
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(type(obj).__name__)


def _summary(rows: Sequence[Row]) -> List[str]:
    groups: Dict[str, List[Row]] = {}
    for r in rows:
        groups.setdefault(r.identity, []).append(r)
    lines = []
    for name, grp in groups.items():
        worst = max(r.residual for r in grp)
        facs = [r.factor for r in grp if np.isfinite(r.factor)]
        fac = f"  min factor {min(facs):8.3g}" if facs else ""
        ok = all(r.passed for r in grp)
        lines.append(f"{'PASS' if ok else 'FAIL'}  {name:28s} worst {worst:9.3e} (tol {grp[0].tolerance:.1e}){fac}")
    npass = sum(r.passed for r in rows)
    lines.append(f"{npass}/{len(rows)} rows within tolerance")
    return lines


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="omegalab", description=__doc__.split("\n\n")[0])
    ap.add_argument("mode", nargs="?", choices=MODES, help="overrides the mode of the config file")
    ap.add_argument("--config", type=Path, help="JSON run configuration")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--cache", help="directory for cached NLIE solutions (OMEGALAB_CACHE overrides)")
    ap.add_argument("--refine", type=int, help="finest grid-doubling level; factors compare it with the level below")
    ap.add_argument("--ray", type=float, help="ray angle delta; probes use delta and 2 delta")
    ap.add_argument("--tolerance-scale", type=float, default=1.0, help="multiply every tolerance")
    ap.add_argument("--free", action="store_true", help="force R = 1 (kappa' = kappa)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def load_config(args) -> RunConfig:
    data = {}
    if args.config is not None:
        try:
            data = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
    cfg = RunConfig.from_dict(data)
    if args.mode:
        cfg.mode = args.mode
    if args.out:
        cfg.out = args.out
    if args.cache:
        cfg.cache = args.cache
    if args.refine is not None:
        cfg.refine = args.refine
    if args.ray is not None:
        cfg.probes = dict(cfg.probes, ray=args.ray)
    if args.free:
        cfg.free = True
    if not args.tolerance_scale > 0:
        raise ConfigError("--tolerance-scale must be positive")
    return cfg.validate()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg, args.tolerance_scale)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
