"""Command-line entry point: ``mcflab <subcommand> ...``.

Exit codes: 0 success (a detected blow-up counts as success), 1 numerical
failure or a failed verification, 2 invalid input.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import diagnostics, functional, oracles, output
from .config import CRITERIA, ConfigError, ExperimentConfig, load_config
from .flow import FlowParams, FlowRun, Tracking, detect_singularity, evolve
from .mesh import HypersurfaceMesh, MeshError, dumbbell, geodesic_sphere, icosphere, read_mesh, write_off
from .space_forms import AmbientSpaceForm

log = logging.getLogger("mcflab")

EXIT_OK, EXIT_FAIL, EXIT_INVALID = 0, 1, 2
NUMERICAL_FAILURES = ("solver_failure", "degenerate_mesh")

SERIES_COLUMNS = {
    "t": "time",
    "dt": "step size that produced the snapshot (time)",
    "area": "surface area (length^n)",
    "volume": "enclosed volume, Euclidean only (length^(n+1)); nan otherwise",
    "radius": "mean distance of the vertices from the centre (length, geodesic when curved)",
    "max_A2": "max |A|^2 (1/length^2)",
    "sup_A": "max |A| (1/length)",
    "sup_Abar": "max |H||A| (1/length^2)",
    "min_eig": "smallest principal curvature (1/length)",
    "mean_H": "mean of vertex H (1/length)",
    "cv_H": "coefficient of variation of vertex H",
    "int_H2": "integral of H^2 (length^(n-2))",
    "min_edge": "shortest edge (length)",
    "consistency": "max relative gap between Laplacian H and quadric-fit trace",
}


def describe_column(name: str) -> str:
    if name in SERIES_COLUMNS:
        return SERIES_COLUMNS[name]
    if name.startswith("intA_"):
        return f"integral of |A|^{name[5:]} over the surface"
    if name.startswith("intH_"):
        return f"integral of |H|^{name[5:]} over the surface"
    if name.startswith("G_"):
        a, b = name[3:].split("_b")
        return f"integral of |A|^(n+2) / log({a} + |A|^{b}) over the surface"
    if name.startswith("acc_"):
        return f"time integral from 0 to t of: {describe_column(name[4:])}"
    return name


# ----------------------------------------------------------------- helpers
def build_space(cfg: ExperimentConfig) -> AmbientSpaceForm:
    return AmbientSpaceForm.from_config(cfg.ambient, cfg.curvature, cfg.n)


def build_mesh(cfg: ExperimentConfig, space: AmbientSpaceForm) -> HypersurfaceMesh:
    if cfg.mesh is not None:
        mesh = read_mesh(cfg.mesh)
        if mesh.vertices.shape[1] != space.embed_dim:
            raise ConfigError(f"mesh has {mesh.vertices.shape[1]} coordinates, the ambient chart needs {space.embed_dim}")
        return mesh
    if cfg.generator == "dumbbell":
        return dumbbell(cfg.level)
    if space.curved or cfg.generator == "geodesic_sphere":
        return geodesic_sphere(space, cfg.radius, cfg.level)
    return icosphere(cfg.level, cfg.radius)


def exact_solution_for(cfg: ExperimentConfig, space: AmbientSpaceForm):
    """Exact solution matching the initial surface, or None."""
    if cfg.mesh is not None or cfg.generator == "dumbbell":
        return None
    return oracles.solution_for(space, cfg.radius)


def tracking_for(cfg: ExperimentConfig) -> Tracking:
    base = Tracking.default(cfg.n)
    weights = tuple(dict.fromkeys(tuple(map(float, w)) for w in list(base.subcritical) + list(cfg.log_weights)))
    powers = tuple(sorted(set(base.A_powers) | set(map(float, cfg.alphas or ()))))
    hpowers = tuple(sorted(set(base.H_powers) | set(map(float, cfg.alphas or ()))))
    return Tracking(A_powers=powers, H_powers=hpowers, subcritical=weights)


def flow_params(cfg: ExperimentConfig) -> FlowParams:
    return FlowParams(
        scheme=cfg.scheme,
        cfl=cfg.cfl,
        A2_ceiling=cfg.A2_ceiling,
        t_max=cfg.t_max,
        max_steps=cfg.max_steps,
        mesh_every=cfg.snapshot_every,
        tracking=tracking_for(cfg),
        fixed_dt=cfg.fixed_dt,
        smoothing=cfg.smoothing,
    )


def criteria_config(cfg: ExperimentConfig) -> diagnostics.CriteriaConfig:
    return diagnostics.CriteriaConfig(
        ceilings=tuple(float(c) for c in cfg.ceilings),
        alphas=tuple(map(float, cfg.alphas)) if cfg.alphas else None,
        log_weights=tuple(tuple(map(float, w)) for w in cfg.log_weights),
        enabled=tuple(cfg.criteria),
    )


def write_series(path, run: FlowRun) -> None:
    header = list(run.records[0])
    comments = ["per-step snapshot summaries of a mean curvature flow run", "columns:"]
    comments += [f"  {h}: {describe_column(h)}" for h in header]
    output.write_csv(path, comments, header, ([r[h] for h in header] for r in run.records))


def load_run(run_dir) -> tuple:
    """FlowRun (series only) and the stored configuration of a run directory."""
    run_dir = Path(run_dir)
    series, report = run_dir / "series.csv", run_dir / "report.json"
    if not series.is_file() or not report.is_file():
        raise ConfigError(f"{run_dir} is not a complete run directory (need series.csv and report.json)")
    try:
        rep = output.read_json(report)
        cfg = load_config(None, rep["config"])
        cols = output.read_csv_columns(series)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{run_dir}: corrupt run directory ({exc})") from None
    if "t" not in cols or len(cols["t"]) == 0:
        raise ConfigError(f"{run_dir}: series.csv has no snapshots")
    space = build_space(cfg)
    try:
        run = FlowRun.from_series(space, cols, rep.get("reason", ""), tracking_for(cfg), {})
    except ValueError as exc:
        raise ConfigError(f"{run_dir}: corrupt series ({exc})") from None
    return run, cfg, rep


def _singularity(run: FlowRun):
    try:
        return detect_singularity(run)
    except ValueError:
        return math.inf, False


# ------------------------------------------------------------- subcommands
def cmd_flow(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    space = build_space(cfg)
    mesh = build_mesh(cfg, space)
    out = cfg.output_dir()
    out.mkdir(parents=True, exist_ok=True)
    run = evolve(mesh, space, flow_params(cfg))
    T_est, blew_up = _singularity(run)
    write_series(out / "series.csv", run)
    snaps = []
    if cfg.write_snapshots:
        sdir = out / "snapshots"
        sdir.mkdir(exist_ok=True)
        for s in run.states:
            name = f"step_{s.step_index:07d}.off"
            write_off(s.mesh, sdir / name, s.field)
            snaps.append({"file": f"snapshots/{name}", "step": s.step_index, "t": s.t})
    report = {
        "config": cfg.as_dict(),
        "reason": run.reason,
        "steps": len(run) - 1,
        "t_last": float(run.t[-1]),
        "T_est": T_est,
        "blew_up": blew_up,
        "numerical_failure": run.reason in NUMERICAL_FAILURES,
        "remesh_steps": run.meta.get("remesh_steps", []),
        "initial": run.records[0],
        "final": run.records[-1],
        "snapshots": snaps,
    }
    sol = exact_solution_for(cfg, space)
    if sol is not None:
        try:
            report["comparison"] = oracles.compare(run, sol, T_est=T_est).as_dict()
        except ValueError as exc:
            report["comparison"] = {"error": str(exc)}
    output.write_json(
        out / "report.json",
        report,
        "flow run summary; times in units of length^2, curvatures in 1/length; T_est is the fitted singular time",
    )
    print(f"{out}: {run.reason} at t={output.fmt(run.t[-1])}, blew_up={blew_up}, T_est={output.fmt(T_est)}")
    return EXIT_FAIL if run.reason in NUMERICAL_FAILURES else EXIT_OK


def analysis(run: FlowRun, cfg: ExperimentConfig) -> dict:
    rep = diagnostics.extension_report(run, criteria_config(cfg))
    extras = {}
    try:
        extras["gronwall"] = diagnostics.gronwall_bound(run, a=cfg.log_weights[0][0], b=cfg.log_weights[0][1]).as_dict()
    except (ValueError, diagnostics.DiagnosticsError) as exc:
        extras["gronwall"] = {"skipped": str(exc)}
    try:
        sm = diagnostics.smallness_ratios(run)
        extras["smallness"] = {"window": list(sm.window), "scale": sm.scale, "integral_n3": sm.integral_n3, "sup_late": sm.sup_late}
    except (ValueError, diagnostics.DiagnosticsError) as exc:
        extras["smallness"] = {"skipped": str(exc)}
    rep["supporting"] = extras
    return rep


def cmd_analyze(args) -> int:
    run, cfg, _ = load_run(args.run_dir)
    overrides = {k: v for k, v in {"ceilings": args.ceilings, "criteria": args.criteria}.items() if v}
    if overrides:
        cfg = load_config(None, {**cfg.as_dict(), **overrides})
    out = Path(args.out) if args.out else Path(args.run_dir)
    out.mkdir(parents=True, exist_ok=True)
    rep = analysis(run, cfg)
    output.write_json(
        out / "criteria.json",
        rep,
        "extension-criterion verdicts; evidence lists the first time each ceiling is crossed (null: never)",
    )
    ledger = diagnostics.IntegralLedger.from_run(run)
    rows = list(ledger.rows())
    header = rows[0][0] if rows else ["t"]
    output.write_csv(
        out / "ledger.csv",
        ["running space-time integrals along the run", "columns:"] + [f"  {h}: {describe_column(h)}" for h in header],
        header,
        (r for _, r in rows),
    )
    print(f"{out / 'criteria.json'}: verdict {rep.get('verdict')}")
    return EXIT_OK


def cmd_verify_sobolev(args) -> int:
    if args.run_dir:
        _, cfg, _ = load_run(args.run_dir)
        cfg = load_config(None, {**cfg.as_dict(), **_overrides(args)})
    else:
        cfg = load_config(args.config, _overrides(args))
    space = build_space(cfg)
    mesh = build_mesh(cfg, space)
    if cfg.corpus:
        bumps = functional.read_corpus(cfg.corpus)
    else:
        bumps = functional.generate_corpus(mesh.n_vertices, cfg.corpus_size, cfg.seed, radius_range=_bump_radii(space))
    report = functional.verify_corpus(mesh, space, bumps, cfg.Q)
    n = space.n
    report["constants"] = {
        "alpha_free": functional.optimal_alpha(n),
        "c_n": functional.sobolev_cn(n, functional.default_Q(n, cfg.Q)),
        "c_n_formula": "(gamma c(n, alpha))^2, gamma = Q for n = 2 and 2(n-1)/(n-2) otherwise",
        "sobolev_constant": functional.sobolev_constant(n),
        "Q": functional.default_Q(n, cfg.Q),
    }
    out = cfg.output_dir()
    out.mkdir(parents=True, exist_ok=True)
    output.write_json(
        out / "sobolev.json",
        report,
        "Sobolev inequality ratios (left side over right side, <= 1 means the inequality holds) per test function",
    )
    print(f"{out / 'sobolev.json'}: pass={report['pass']} entries={len(report['entries'])}")
    return EXIT_OK if report["pass"] else EXIT_FAIL


def _bump_radii(space: AmbientSpaceForm):
    # supports on the unit 3-sphere must stay small for the volume condition
    return (0.1, 0.35) if space.kind.value == "sphere" else (0.15, 0.6)


def cmd_constants(args) -> int:
    n = args.n
    q = args.q if args.q is not None else (n + 3) / 2
    beta = args.beta if args.beta is not None else (n + 3) / 2
    alpha = args.alpha if args.alpha is not None else functional.optimal_alpha(n)
    Q = functional.default_Q(n, args.Q)
    cn = functional.sobolev_cn(n, Q, alpha)
    res = {
        "n": n,
        "alpha_free": alpha,
        "sobolev_constant": functional.sobolev_constant(n, alpha),
        "Q": Q,
        "c_n": cn,
        "moser": functional.moser_ledger(n, q, beta, args.C, cn, args.p, args.f_norm, args.H_norm).as_dict(),
    }
    text = output.dumps(res, "explicit constants of the Sobolev and Moser estimates")
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_oracle(args) -> int:
    space = AmbientSpaceForm.from_config(args.ambient, args.curvature, args.n)
    sol = oracles.solution_for(space, args.radius)
    t_end = args.t_end if args.t_end is not None else 0.9 * sol.T
    if not 0 < t_end < sol.T:
        raise ConfigError(f"t_end must lie in (0, {sol.T!r})")
    ts = np.linspace(0.0, t_end, args.samples)
    n = args.n
    quantities = [("acc_A_pow", oracles.a_pow(float(n + 2))), ("acc_subcritical_a1_b1", oracles.subcritical(1.0, 1.0))]
    header = ["t", "radius", "H", "A2", "area"] + [q[0] for q in quantities]
    rows = []
    for t in ts:
        row = [t, float(sol.radius(t)), float(sol.H(t)), float(sol.A2(t)), float(sol.area(t))]
        row += [oracles.oracle_integral(sol, q, float(t)) if t > 0 else 0.0 for _, q in quantities]
        rows.append(row)
    comments = [
        f"exact solution {sol.kind.value}, radius0={output.fmt(args.radius)}, n={n}, K={output.fmt(space.K)}, T={output.fmt(sol.T)}",
        "radius: Euclidean or geodesic radius (length); H: mean curvature (1/length); A2: |A|^2 (1/length^2); area (length^n)",
        f"acc_A_pow: time integral of the integral of |A|^{n + 2}; acc_subcritical_a1_b1: same with the weight 1/log(1+|A|)",
    ]
    text = output.csv_text(comments, header, rows)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_compare(args) -> int:
    run, cfg, rep = load_run(args.run_dir)
    space = build_space(cfg)
    sol = exact_solution_for(cfg, space)
    if sol is None:
        raise ConfigError("the run has no exact solution to compare against (mesh file or dumbbell)")
    res = oracles.compare(run, sol, upto=args.upto, T_est=rep.get("T_est")).as_dict()
    res["T_exact"] = sol.T
    out = Path(args.out) if args.out else Path(args.run_dir) / "compare.json"
    output.write_json(out, res, "relative errors of the run against the exact solution over the window")
    sys.stdout.write(output.dumps(res))
    return EXIT_OK


# ------------------------------------------------------------------ parser
def _overrides(args) -> dict:
    keys = ("ambient", "curvature", "generator", "mesh", "level", "radius", "scheme", "cfl", "smoothing", "fixed_dt",
            "A2_ceiling", "t_max", "max_steps", "snapshot_every", "write_snapshots", "ceilings", "corpus", "corpus_size",
            "seed", "output", "name", "Q")
    return {k: getattr(args, k, None) for k in keys if getattr(args, k, None) is not None}


def _add_config_flags(p: argparse.ArgumentParser, flow: bool = True) -> None:
    p.add_argument("--config", help="TOML experiment config")
    p.add_argument("--name")
    p.add_argument("--ambient", choices=("euclidean", "sphere", "hyperbolic"))
    p.add_argument("--curvature", type=float)
    p.add_argument("--generator", choices=("icosphere", "geodesic_sphere", "dumbbell"))
    p.add_argument("--mesh", help="OFF or OBJ file with the initial surface")
    p.add_argument("--level", type=int, help="subdivision level of the generated mesh")
    p.add_argument("--radius", type=float, help="initial (geodesic) radius of generated spheres")
    p.add_argument("--seed", type=int)
    p.add_argument("--output", "--out", dest="output", help="output directory")
    if flow:
        p.add_argument("--scheme")
        p.add_argument("--cfl", type=float)
        p.add_argument("--smoothing", type=float)
        p.add_argument("--fixed-dt", dest="fixed_dt", type=float)
        p.add_argument("--ceiling", dest="A2_ceiling", type=float, help="halt once max |A|^2 exceeds this")
        p.add_argument("--t-max", dest="t_max", type=float)
        p.add_argument("--max-steps", dest="max_steps", type=int)
        p.add_argument("--snapshot-every", dest="snapshot_every", type=int)
        p.add_argument("--write-snapshots", dest="write_snapshots", action="store_true", default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mcflab", description="Mean curvature flow experiments and extension criteria.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("flow", help="run the flow and write series.csv, report.json")
    _add_config_flags(p)
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("analyze", help="evaluate extension criteria on a run directory")
    p.add_argument("run_dir")
    p.add_argument("--ceilings", type=float, nargs="+")
    p.add_argument("--criteria", nargs="+", choices=CRITERIA)
    p.add_argument("--out")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("verify-sobolev", help="check the Sobolev inequalities on a bump corpus")
    _add_config_flags(p, flow=False)
    p.add_argument("--run-dir", dest="run_dir", help="take ambient and mesh from a run directory")
    p.add_argument("--corpus", help="CSV of bumps: center,radius,amplitude[,alpha_free]")
    p.add_argument("--corpus-size", dest="corpus_size", type=int)
    p.add_argument("--Q", type=float)
    p.set_defaults(func=cmd_verify_sobolev)

    p = sub.add_parser("constants", help="print the explicit constants")
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--alpha", type=float)
    p.add_argument("--Q", type=float)
    p.add_argument("--q", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--C", type=float, default=0.0, help="ambient constant of the subsolution inequality")
    p.add_argument("--p", type=int, default=2)
    p.add_argument("--f-norm", dest="f_norm", type=float, default=1.0)
    p.add_argument("--H-norm", dest="H_norm", type=float, default=0.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_constants)

    p = sub.add_parser("oracle", help="print an exact solution and its integrals as CSV")
    p.add_argument("--ambient", choices=("euclidean", "sphere", "hyperbolic"), default="euclidean")
    p.add_argument("--curvature", type=float)
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--radius", type=float, default=1.0)
    p.add_argument("--t-end", dest="t_end", type=float)
    p.add_argument("--samples", type=int, default=11)
    p.add_argument("--out")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("compare", help="compare a run directory against its exact solution")
    p.add_argument("run_dir")
    p.add_argument("--upto", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, MeshError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
