"""Experiment runner: preset-driven sweeps with CSV/JSON reports.

Every run embeds the configuration hash in its reports and formats floats
with 17 significant digits, so fixed seeds reproduce identical bytes.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np


@dataclass
class ExperimentConfig:
    domain: str = "flat"
    field: str = "identity"
    window: tuple[float, float] = (-8.0, 8.0)
    nx: int = 96
    s_min: float = 1e-3
    s_max: float = 4.0
    per_decade: int = 8
    aperture: float = 1.0
    cap: float = 2.0
    p_list: tuple[float, ...] = (7.0 / 6.0, 2.0, 17.0 / 6.0)
    seed: int = 0
    out: str = "out"
    tolerances: dict = dc_field(default_factory=lambda: {
        "tol_weak": 1e-3, "tol_sym": 1e-3, "tol_conj": 1e-3,
        "tol_loop": 1e-6, "tol_rep": 1e-2, "tol_trace": 1e-6})

    @classmethod
    def load(cls, path: str | None, overrides: dict) -> "ExperimentConfig":
        data = {}
        if path:
            with open(path) as fh:
                data = json.load(fh)
        data.update({k: v for k, v in overrides.items() if v is not None})
        known = {f.name for f in dataclasses.fields(cls)}
        bad = set(data) - known
        if bad:
            raise ConfigError(f"unknown config keys: {sorted(bad)}")
        cfg = cls(**data)
        if cfg.window[0] >= cfg.window[1] or cfg.nx < 8:
            raise ConfigError("degenerate window or mesh")
        if any(t <= 0 for t in cfg.tolerances.values()):
            raise ConfigError("tolerances must be positive")
        return cfg

    def digest(self) -> str:
        blob = json.dumps(dataclasses.asdict(self), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


class ConfigError(Exception):
    pass


def _fmt(v) -> str:
    if isinstance(v, float) or isinstance(v, np.floating):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1, default=_json_default)
        fh.write("\n")


def _json_default(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, bool):
        return v
    return str(v)


MANIFEST = {
    "greens.csv": "check,field,quantity,value",
    "cz_samples.csv": "preset,C_size,alpha,C_holder_x,C_holder_y,samples",
    "solution.csv": "x,t,u,ux,ut",
    "functionals.csv": "q,nt_max,nt_max_avg,square,hl_maximal",
    "sunrise_levels.csv": "level,lo,hi,branch,measure_ratio,bound_ratio,pieces",
    "counterexample.csv": "eps,norm,fitted_exponent",
}


def _emit_manifest(outdir: Path, cfg: ExperimentConfig) -> None:
    lines = [f"config_hash: {cfg.digest()}"]
    for name, schema in MANIFEST.items():
        lines.append(f"{name}: {schema}")
    (outdir / "MANIFEST").write_text("\n".join(lines) + "\n")


# ----------------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------------

def cmd_greens(cfg: ExperimentConfig, outdir: Path) -> int:
    from .coefficients import make_field
    from .greenfn import (fit_gradient_constant, fit_log_bounds, make_green,
                          verify_symmetry, weak_identity_residual)

    rng = np.random.default_rng(cfg.seed)
    f = make_field(cfg.field)
    G = make_green(f)
    Gt = make_green(f.transpose())
    rows = []
    worst = 0.0
    for i in range(6):
        X = np.array([rng.uniform(-1, 1), rng.uniform(0, 1)])
        c = X + rng.uniform(-0.4, 0.4, 2)
        r = rng.uniform(0.5, 0.8)
        res = weak_identity_residual(G, f, X, c, r, n_theta=96)
        worst = max(worst, res)
        rows.append(("weak_identity", cfg.field, f"bump{i}", res))
    pairs = [(np.array([rng.uniform(-1, 1), 0.4]),
              np.array([rng.uniform(-1, 1), -0.7])) for _ in range(8)]
    sym = verify_symmetry(G, Gt, pairs)
    rows.append(("symmetry", cfg.field, "max_rel", sym["max_rel"]))
    lb = fit_log_bounds(G, np.array([0.1, 0.2]))
    rows.append(("log_bounds", cfg.field, "near_C1", lb["near"]["C1"]))
    rows.append(("log_bounds", cfg.field, "far_C1", lb["far"]["C1"]))
    c3 = fit_gradient_constant(G, np.array([0.1, 0.2]))
    rows.append(("gradient_bound", cfg.field, "C3", c3))
    write_csv(outdir / "greens.csv", ["check", "field", "quantity", "value"], rows)
    passed = (worst <= cfg.tolerances["tol_weak"]
              and sym["max_rel"] <= cfg.tolerances["tol_sym"] and lb["pass"])
    write_json(outdir / "greens.json", {
        "config_hash": cfg.digest(), "field": cfg.field,
        "weak_worst": worst, "symmetry": sym["max_rel"],
        "log_bounds": lb, "C3": c3, "pass": bool(passed)})
    return 0 if passed else 1


def cmd_potentials(cfg: ExperimentConfig, outdir: Path) -> int:
    from . import potentials as pot
    from .coefficients import make_field
    from .geometry import make_profile
    from .greenfn import make_green

    rng = np.random.default_rng(cfg.seed)
    g = make_profile(cfg.domain, window=cfg.window)
    f = make_field(cfg.field)
    G = make_green(f)
    kern = pot._green_kernel(g, G)
    fit = pot.cz_constants(kern, rng, n_pairs=800, h=1e-3)
    B = pot.build_B(g, f, g.slope_center)
    inv = B.invertibility()
    write_csv(outdir / "cz_samples.csv",
              ["preset", "C_size", "alpha", "C_holder_x", "C_holder_y", "samples"],
              [(f"{cfg.domain}/{cfg.field}", fit["C_size"], fit["alpha"],
                fit["C_holder_x"], fit["C_holder_y"], fit["samples"])])
    payload = {"config_hash": cfg.digest(), "preset":
               {"domain": cfg.domain, "field": cfg.field},
               "constants": {"C_cz": fit["C_size"], "alpha": fit["alpha"],
                             "holder_x": fit["C_holder_x"],
                             "holder_y": fit["C_holder_y"]},
               "frame_invertibility": inv,
               "pass_flags": {"cz": bool(0 < fit["alpha"] <= 1.0),
                              "frames": bool(inv["pass"])}}
    write_json(outdir / "potentials.json", payload)
    return 0 if all(payload["pass_flags"].values()) else 1


def cmd_solve(cfg: ExperimentConfig, outdir: Path, problem: str = "dirichlet") -> int:
    from .bvpsolver import solve_dirichlet, solve_neumann, trace
    from .coefficients import make_field
    from .geometry import make_profile

    g = make_profile(cfg.domain, window=cfg.window)
    f = make_field(cfg.field)
    data = lambda x: np.exp(-np.asarray(x) ** 2)
    if problem == "dirichlet":
        u = solve_dirichlet(f, g, data, nx=cfg.nx, s_min=cfg.s_min,
                            s_max=cfg.s_max, per_decade=cfg.per_decade)
    else:
        mean_zero = lambda x: np.asarray(x) * np.exp(-np.asarray(x) ** 2)
        u = solve_neumann(f, g, mean_zero, nx=cfg.nx, s_min=cfg.s_min,
                          s_max=cfg.s_max, per_decade=cfg.per_decade)
    pts = u.mesh.points(g)
    rows = zip(pts[:, 0], pts[:, 1], u.values, u.grad_x, u.grad_t)
    write_csv(outdir / "solution.csv", ["x", "t", "u", "ux", "ut"], rows)
    write_json(outdir / "solution.json", {
        "config_hash": cfg.digest(), "problem": problem,
        "mesh": list(u.mesh.shape), "energy_norm": u.energy_norm(),
        "weighted_l2": u.weighted_l2_norm(), "meta": u.meta,
        "trace_l2": trace(u).lp_norm(2.0)})
    return 0


def cmd_functionals(cfg: ExperimentConfig, outdir: Path) -> int:
    from .bvpsolver import poisson_extend, trace
    from .funcestim import hl_maximal, nt_max, nt_max_avg, square_function

    data = lambda x: 1.0 / (np.pi * (1.0 + np.asarray(x) ** 2))
    u = poisson_extend(data, window=cfg.window,
                       n=max(1024, 2 ** int(np.ceil(np.log2(cfg.nx * 8)))))
    tr = trace(u)
    qs = np.linspace(0.6 * cfg.window[0], 0.6 * cfg.window[1], 25)
    rows = []
    for q in qs:
        rows.append((q, nt_max(u, q, cfg.aperture, cfg.cap),
                     nt_max_avg(u, q, cfg.aperture, cfg.cap),
                     square_function(u, q, cfg.aperture, cfg.cap),
                     hl_maximal(tr, q)))
    write_csv(outdir / "functionals.csv",
              ["q", "nt_max", "nt_max_avg", "square", "hl_maximal"], rows)
    write_json(outdir / "functionals.json", {
        "config_hash": cfg.digest(), "aperture": cfg.aperture,
        "cap": cfg.cap, "count": len(rows)})
    return 0


def cmd_sunrise(cfg: ExperimentConfig, outdir: Path) -> int:
    from .geometry import make_profile
    from .sunrise import build_schedule, corona_decompose, tree_stats

    g = make_profile(cfg.domain, window=cfg.window)
    k = max(g.lipschitz_k, 0.125)
    sch = build_schedule(1, max(g.oscillation / 8.0, 1e-3))
    root = corona_decompose(g, k, sch, interval_budget=31)
    rows = [(r["level"], r["lo"], r["hi"], r["branch"], r["measure_ratio"],
             r["bound_ratio"], r["pieces"]) for r in tree_stats(root)]
    write_csv(outdir / "sunrise_levels.csv",
              ["level", "lo", "hi", "branch", "measure_ratio", "bound_ratio",
               "pieces"], rows)

    def node_json(node):
        return {"level": node.level, "interval": list(node.interval),
                "branch": node.step.branch,
                "retained": [list(p) for p in node.step.retained],
                "measure_ratio": node.step.measure_ratio,
                "children": [node_json(c) for c in node.children]}

    write_json(outdir / "sunrise_tree.json", {
        "config_hash": cfg.digest(), "schedule_m": sch.m,
        "a0": str(sch.a0), "theta": sch.theta, "tree": node_json(root)})
    ok = all(r["measure_ratio"] >= r["bound_ratio"] - 1e-9 for r in tree_stats(root))
    return 0 if ok else 1


def cmd_counterexample(cfg: ExperimentConfig, outdir: Path, a: float = 0.4,
                       p: float = 2.0, eps_min: float = 1e-8) -> int:
    from . import counterexample as ce

    op = ce.make_operator(a)
    eps_grid = np.geomspace(eps_min, 1e-3, 9)
    bp = op.b * p
    if abs(bp - 1.0) > 1e-12:
        rep = ce.regularity_failure_rate(op, p, eps_grid=eps_grid)
        rows = [(e, n, rep["fitted_exponent"])
                for e, n in zip(rep["eps_grid"], rep["norms"])]
        rp_fails = rep["diverges"]
    else:
        norms = [ce.boundary_t_derivative_norm(op, p, e) for e in eps_grid]
        rows = [(e, n, float("nan")) for e, n in zip(eps_grid, norms)]
        rp_fails = True
    nf = ce.neumann_failure(op, p)
    write_csv(outdir / "counterexample.csv",
              ["eps", "norm", "fitted_exponent"], rows)
    write_json(outdir / "counterexample.json", {
        "config_hash": cfg.digest(), "a": a, "p": p, "b": op.b, "h": op.h,
        "bp": bp, "Rp_fails": bool(rp_fails), "Np_fails": bool(nf["fails"])})
    return 0


def cmd_verify_all(cfg: ExperimentConfig, outdir: Path, only=None) -> int:
    from .acceptance import run_all

    verdicts = run_all(names=only)
    write_json(outdir / "acceptance.json", {
        "config_hash": cfg.digest(),
        "criteria": [{"name": v.name, "passed": v.passed,
                      "seconds": v.seconds, "details": v.details}
                     for v in verdicts]})
    return 0 if all(v.passed for v in verdicts) else 1


# ----------------------------------------------------------------------------
# argument parsing
# ----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="layerlab",
                                 description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="JSON config file")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--seed", type=int, help="seed for randomized batteries")
    ap.add_argument("--domain", help="boundary profile preset")
    ap.add_argument("--field", help="coefficient field preset")
    sub = ap.add_subparsers(dest="cmd", required=True)
    for name in ("greens", "potentials", "functionals", "sunrise"):
        sub.add_parser(name)
    sp = sub.add_parser("solve")
    sp.add_argument("--problem", choices=["dirichlet", "neumann"],
                    default="dirichlet")
    sc = sub.add_parser("counterexample")
    sc.add_argument("--a", type=float, default=0.4)
    sc.add_argument("--p", type=float, default=2.0)
    sc.add_argument("--eps-min", type=float, default=1e-8)
    sv = sub.add_parser("verify-all")
    sv.add_argument("--only", nargs="*", default=None,
                    help="subset of criteria keys")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {k: getattr(args, k) for k in
                 ("out", "seed", "domain", "field") if getattr(args, k, None)
                 is not None}
    try:
        cfg = ExperimentConfig.load(args.config, overrides)
    except (ConfigError, FileNotFoundError, json.JSONDecodeError, TypeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    outdir = Path(cfg.out)
    outdir.mkdir(parents=True, exist_ok=True)
    _emit_manifest(outdir, cfg)
    if args.cmd == "greens":
        rc = cmd_greens(cfg, outdir)
    elif args.cmd == "potentials":
        rc = cmd_potentials(cfg, outdir)
    elif args.cmd == "solve":
        rc = cmd_solve(cfg, outdir, args.problem)
    elif args.cmd == "functionals":
        rc = cmd_functionals(cfg, outdir)
    elif args.cmd == "sunrise":
        rc = cmd_sunrise(cfg, outdir)
    elif args.cmd == "counterexample":
        rc = cmd_counterexample(cfg, outdir, args.a, args.p, args.eps_min)
    elif args.cmd == "verify-all":
        rc = cmd_verify_all(cfg, outdir, args.only)
    else:  # pragma: no cover
        return 2
    return rc


if __name__ == "__main__":
    sys.exit(main())
