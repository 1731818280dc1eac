"""``ucp-lab`` command line: one subcommand per module plus campaigns.

Machine-readable JSON goes to stdout (or ``--out``); diagnostics go to stderr.
Exit codes: 0 success, 1 a check failed, 2 usage or configuration error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io as _io
import json
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import bounds
from . import io as uio
from .campaign import run_campaign
from .config import build_domain, build_obstacles, grid_levels, load_geometry_config, truncation_of
from .discretize import assemble_laplacian, classify_grid
from .errors import ConfigError, InvalidParams, UCPLabError
from .geometry import certified_radius, check_relative_denseness, inradius_estimate
from .spectral import HeatActionParams, apply_heat, smallest_eigs, spectral_projector_apply

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


def set_threads(n=None):
    """Cap numba worker threads from ``n`` or ``UCP_LAB_THREADS``; returns the cap used."""
    if n is None:
        env = os.environ.get("UCP_LAB_THREADS")
        if not env:
            return None
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"UCP_LAB_THREADS must be an integer, got {env!r}", field="UCP_LAB_THREADS") from None
    if n < 1:
        raise ConfigError("thread count must be positive", field="threads")
    import numba

    n = min(n, numba.config.NUMBA_NUM_THREADS)
    numba.set_num_threads(n)
    return n


# ---------------------------------------------------------------------------
# output helpers


def _emit(obj, args, rows=None):
    """Write ``obj`` as JSON, or ``rows`` (list of dicts) as CSV with ``--format csv``."""
    if args.format == "csv" and rows is not None:
        buf = _io.StringIO()
        keys = list(rows[0]) if rows else []
        w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _cell(v) for k, v in r.items()})
        text = buf.getvalue()
    else:
        text = uio.dumps(obj)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _cell(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple, dict)):
        return json.dumps(uio._jsonable(v), sort_keys=True)
    return v


def _number(s):
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        pass
    if s.startswith("["):
        return json.loads(s)
    raise InvalidParams(f"not a number: {s!r}")


# ---------------------------------------------------------------------------
# geometry/operator from a config


def _load(args):
    if not args.config:
        raise ConfigError("this subcommand needs --config", field="config")
    cfg, _ = load_geometry_config(args.config)
    G = build_domain(cfg["domain"])
    S, fat = build_obstacles(cfg.get("obstacles", {"kind": "none"}), G, Path(args.config).resolve().parent)
    B = S.fattened(fat) if fat else None
    return cfg, G, S, B


def _operator(cfg, G, S, B, beta=0.0):
    g = cfg.get("grid")
    if not g:
        raise ConfigError("missing [grid] section", field="grid")
    h = grid_levels(g, G)[0]
    grid = classify_grid(G, S if len(S) else None, h, truncation_of(g))
    H = assemble_laplacian(grid, beta, B) if beta else assemble_laplacian(grid)
    return grid, H


def _solver(cfg, args):
    s = cfg.get("solver", {})
    seed = args.seed if args.seed is not None else int(s.get("seed", 0))
    return float(s.get("tol", 1e-10)), seed, int(s.get("k", 1))


def export_matrix(config_path, out_path, beta=0.0):
    """Assemble the operator described by a geometry config and write Matrix Market."""
    cfg, _ = load_geometry_config(config_path)
    G = build_domain(cfg["domain"])
    S, fat = build_obstacles(cfg.get("obstacles", {"kind": "none"}), G, Path(config_path).resolve().parent)
    B = S.fattened(fat) if fat else None
    grid, H = _operator(cfg, G, S, B, beta)
    try:
        uio.write_matrix_market(out_path, H, comment=f"n_dofs {grid.n_dofs} h {grid.h!r}")
    except OSError as exc:
        raise ConfigError(f"cannot write {out_path}: {exc}", field="out") from exc
    return H


# ---------------------------------------------------------------------------
# subcommands


def cmd_bounds(args, extra):
    if args.list:
        sys.stdout.write("\n".join(f"{k} {' '.join(v[1])}" for k, v in sorted(bounds.REGISTRY.items())) + "\n")
        return EXIT_OK
    if not args.name:
        raise ConfigError("bounds needs a bound name (see --list)", field="name")
    if args.batch:
        with open(args.batch, newline="") as fh:
            rows = list(csv.DictReader(fh))
        out = []
        for row in rows:
            inputs = {k: _number(v) for k, v in row.items() if v not in (None, "")}
            rep = bounds.evaluate(args.name, **inputs)
            out.append({**row, "value": rep.value, "units": rep.units})
        args.format = "csv"
        _emit(out, args, out)
        return EXIT_OK
    inputs = {}
    it = iter(extra)
    for tok in it:
        if not tok.startswith("--"):
            raise ConfigError(f"unexpected argument {tok!r}", field="bounds")
        key, eq, val = tok[2:].partition("=")
        if not eq:
            val = next(it, None)
            if val is None:
                raise ConfigError(f"missing value for --{key}", field=key)
        inputs[key] = _number(val)
    rep = bounds.evaluate(args.name, **inputs)
    if args.format == "csv":
        _emit(None, args, [{**rep.inputs, "name": rep.name, "value": rep.value, "units": rep.units}])
    else:
        text = json.dumps(uio._jsonable(rep.to_dict()), sort_keys=True) + "\n"
        (Path(args.out).write_text(text) if args.out else sys.stdout.write(text))
    return EXIT_OK


def cmd_geom(args, extra):
    cfg, G, S, B = _load(args)
    info = {"domain": G.to_dict(), "n_obstacles": len(S), "obstacles": S.to_dict()}
    if B is not None:
        info["fattening"] = B.to_dict()
    if G.is_bounded or G.kind == "whole_space":
        info["inradius"] = inradius_estimate(G)
    v = cfg.get("verify", {})
    if "delta" in v and len(S):
        delta = float(v["delta"])
        spacing = float(v.get("sample_spacing", delta / 2))
        if v.get("R", "certified") == "certified":
            info["certified_R"] = certified_radius(S, G, delta, spacing)
        else:
            info["denseness"] = check_relative_denseness(S, G, float(v["R"]), delta, spacing).to_dict()
    _emit(info, args)
    return EXIT_OK


def cmd_assemble(args, extra):
    cfg, G, S, B = _load(args)
    grid, H = _operator(cfg, G, S, B, args.beta)
    info = {"n_dofs": grid.n_dofs, "h": grid.h, "shape": list(grid.shape), "counts": grid.counts(), "norm1": H.norm1(), "nnz": H.matrix.nnz}
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        uio.write_matrix_market(out / "operator.mtx", H)
        uio.write_mask(out / "grid.mask", grid)
        (out / "assemble.json").write_text(uio.dumps(info))
    else:
        _emit(info, args)
    return EXIT_OK


def cmd_eig(args, extra):
    cfg, G, S, B = _load(args)
    tol, seed, k = _solver(cfg, args)
    k = args.k or k
    grid, H = _operator(cfg, G, S, B, args.beta)
    res = smallest_eigs(H, k, tol=tol, seed=seed)
    if args.out:
        uio.write_spectral_result(args.out, res)
    head = res.header()
    sys.stdout.write(uio.dumps(head))
    return EXIT_OK if res.converged else EXIT_NUMERIC


def cmd_heat(args, extra):
    cfg, G, S, B = _load(args)
    tol, seed, _ = _solver(cfg, args)
    grid, H = _operator(cfg, G, S, B, args.beta)
    f = np.ones(grid.n_dofs)
    u, info = apply_heat(H, HeatActionParams(args.t, args.tolerance), f, return_info=True)
    summary = {**info, "t": args.t, "n_dofs": grid.n_dofs, "norm": float(np.linalg.norm(u)), "min": float(u.min()), "max": float(u.max())}
    _emit(summary, args, [{"dof": i, "value": float(v)} for i, v in enumerate(u)])
    return EXIT_OK


def cmd_projector(args, extra):
    cfg, G, S, B = _load(args)
    tol, seed, _ = _solver(cfg, args)
    grid, H = _operator(cfg, G, S, B, args.beta)
    f = np.ones(grid.n_dofs)
    u, info = spectral_projector_apply(H, (0.0, args.E), f, via=args.via, tol=args.tolerance, gap=args.gap, seed=seed, return_info=True)
    summary = {**info, "E": args.E, "via": args.via, "n_dofs": grid.n_dofs, "norm": float(np.linalg.norm(u))}
    _emit(summary, args, [{"dof": i, "value": float(v)} for i, v in enumerate(u)])
    return EXIT_OK


def cmd_mc(args, extra):
    from .stochastic import PathConfig, estimate_hit_and_run, estimate_semigroup_gap, feynman_kac, simulate_paths

    cfg, G, S, B = _load(args)
    m = cfg.get("mc", {})
    seed = args.seed if args.seed is not None else int(m.get("seed", 0))
    start = m.get("start") or (m.get("starts") or [[0.0] * G.dim])[0]
    pc = PathConfig(float(m.get("dt", 1e-3)), int(m.get("n_paths", 10000)), seed, start, float(m.get("horizon", 1.0)))
    rho = args.rho if args.rho is not None else float(cfg.get("obstacles", {}).get("fattening", 1.0))
    if args.kind == "hitrun":
        ests = estimate_hit_and_run(G, S, B, rho, args.alpha, pc)
        obj = [e.to_dict() for e in ests]
        rows = [{"alpha": e.extras["alpha"], "value": e.value, "ci_halfwidth": e.ci_halfwidth, "bound": e.extras["bound"], "n": e.n} for e in ests]
    elif args.kind == "fk":
        est = feynman_kac(G, S, B, args.beta, lambda x: np.ones(len(x)), start, pc, killed=args.killed)
        obj, rows = est.to_dict(), [{"value": est.value, "ci_halfwidth": est.ci_halfwidth, "n": est.n}]
    else:
        starts = m.get("starts") or [start]
        est = estimate_semigroup_gap(G, S, B, rho, args.beta, starts, pc)
        obj = est.to_dict()
        rows = [{"start": json.dumps(list(map(float, x))), "value": v, "ci_halfwidth": c} for x, v, c in zip(starts, est.extras["per_point"], est.extras["per_point_ci"])]
    if args.paths_csv:
        simulate_paths(G, S, B, pc).to_csv(args.paths_csv)
    _emit(obj, args, rows)
    return EXIT_OK


def cmd_verify(args, extra):
    from .campaign import run_verify

    cfg, _ = load_geometry_config(args.config) if args.config else (None, None)
    if cfg is None:
        raise ConfigError("verify needs --config", field="config")
    e = {"name": Path(args.config).stem, **cfg}
    seed = args.seed if args.seed is not None else int(cfg.get("solver", {}).get("seed", 0))
    result, checks = run_verify(e, seed, Path(args.config).resolve().parent)
    rep = result["report"]
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(uio.dumps(rep))
        with open(out / "rows.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["lambda", "mass_ratio", "threshold", "pass"], lineterminator="\n")
            w.writeheader()
            for r in rep["rows"]:
                w.writerow({k: _cell(v) for k, v in r.items()})
    elif args.format == "csv":
        args.out = None
        _emit(rep, args, rep["rows"] or [{"lambda": "", "mass_ratio": "", "threshold": "", "pass": ""}])
    else:
        sys.stdout.write(uio.dumps(rep))
    failed = [k for k, v in rep["flags"].items() if not v]
    if failed:
        print("failed flags: " + ", ".join(failed), file=sys.stderr)
    return EXIT_OK if rep["passed"] else EXIT_CHECK


def cmd_campaign(args, extra):
    if not args.config:
        raise ConfigError("campaign needs --config", field="config")
    out = args.out or "campaign_out"
    code, summary = run_campaign(args.config, out, seed=args.seed, only=set(args.only) if args.only else None, log=lambda s: print(s, file=sys.stderr))
    n_fail = sum(1 for r in summary if not r["passed"])
    print(f"{len(summary)} checks, {n_fail} failed; reports in {out}", file=sys.stderr)
    return EXIT_OK if code == 0 else EXIT_CHECK


def cmd_export(args, extra):
    if not args.config or not args.out:
        raise ConfigError("export needs --config and --out", field="out")
    H = export_matrix(args.config, args.out, args.beta)
    print(f"wrote {args.out} ({H.n} dofs, {H.matrix.nnz} nonzeros)", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    common.add_argument("--config", help="TOML config file")
    common.add_argument("--out", help="output file or directory")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--threads", type=int, help="cap worker threads (default: UCP_LAB_THREADS or all cores)")
    common.add_argument("--format", choices=("json", "csv"), default="json")

    p = argparse.ArgumentParser(prog="ucp-lab", allow_abbrev=False, description="Spectral uncertainty-principle lab for perforated domains.")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bounds", parents=[common], allow_abbrev=False, help="evaluate a closed-form bound: bounds NAME --param value ...")
    b.add_argument("name", nargs="?")
    b.add_argument("--batch", help="CSV of parameter rows; emits a CSV with a value column")
    b.add_argument("--list", action="store_true", help="list bound names and their inputs")

    sub.add_parser("geom", parents=[common], help="describe a geometry; certify denseness when [verify] gives delta")

    for name, helptext in (("assemble", "assemble the operator; --out DIR writes operator.mtx and grid.mask"), ("export", "write the operator as Matrix Market")):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("--beta", type=float, default=0.0, help="coupling on the fattened set B")

    e = sub.add_parser("eig", parents=[common], help="smallest eigenpairs; --out writes the binary spectral result")
    e.add_argument("--k", type=int)
    e.add_argument("--beta", type=float, default=0.0)

    h = sub.add_parser("heat", parents=[common], help="apply exp(-tH) to the constant vector")
    h.add_argument("--t", type=float, default=1.0)
    h.add_argument("--tolerance", type=float, default=1e-10)
    h.add_argument("--beta", type=float, default=0.0)

    pr = sub.add_parser("projector", parents=[common], help="apply the spectral projector onto [0, E] to the constant vector")
    pr.add_argument("--E", type=float, required=True)
    pr.add_argument("--via", choices=("eigenpairs", "polynomial_filter"), default="eigenpairs")
    pr.add_argument("--gap", type=float)
    pr.add_argument("--tolerance", type=float, default=1e-8)
    pr.add_argument("--beta", type=float, default=0.0)

    m = sub.add_parser("mc", parents=[common], help="Monte Carlo estimators")
    m.add_argument("kind", choices=("hitrun", "fk", "gap"))
    m.add_argument("--rho", type=float)
    m.add_argument("--alpha", type=float, nargs="+", default=[0.01])
    m.add_argument("--beta", type=float, default=0.0)
    m.add_argument("--killed", action="store_true")
    m.add_argument("--paths-csv", help="also write one row per path")

    sub.add_parser("verify", parents=[common], help="run the uncertainty-principle pipeline; exit 0 iff every flag passes")

    c = sub.add_parser("campaign", parents=[common], help="run a campaign; exit 0 iff every check passes")
    c.add_argument("--only", nargs="+", help="run only these experiments")
    return p


COMMANDS = {
    "bounds": cmd_bounds,
    "geom": cmd_geom,
    "assemble": cmd_assemble,
    "eig": cmd_eig,
    "heat": cmd_heat,
    "projector": cmd_projector,
    "mc": cmd_mc,
    "verify": cmd_verify,
    "campaign": cmd_campaign,
    "export": cmd_export,
}


def main(argv=None):
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    if extra and args.command != "bounds":
        parser.error(f"unrecognized arguments: {' '.join(extra)}")
    try:
        set_threads(args.threads)
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return COMMANDS[args.command](args, extra)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InvalidParams as exc:
        print(f"invalid parameters: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except UCPLabError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
