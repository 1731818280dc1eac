"""Campaigns: sequences of named experiments with pass/fail checks.

Each experiment writes ``<name>.json`` into the output directory. ``summary.csv``
lists every check. Wall-clock data goes to ``run_info.json`` only, so the
per-experiment reports are byte-identical across reruns with the same seed.
"""

from __future__ import annotations

import csv
import math
import platform
import re
import time
import traceback
import warnings
from pathlib import Path

import numpy as np

from . import bounds, io
from .config import (
    _locate,
    build_domain,
    build_obstacles,
    grid_levels,
    load_toml,
    truncation_of,
    validate_section,
)
from .discretize import (
    assemble_divergence_form,
    assemble_laplacian,
    checkerboard_field,
    classify_grid,
    richardson,
)
from .errors import ConfigError, UCPLabError
from .geometry import certified_radius
from .spectral import semigroup_diff_norm, smallest_eigs
from .stochastic import PathConfig, estimate_hit_and_run, estimate_semigroup_gap
from .ucp import _check_shape, lambda_beta_values, verify_bls, verify_main

EXPERIMENT_KEYS = ("name", "type", "domain", "obstacles", "grid", "solver", "mc", "verify", "params", "checks")
_NAME = re.compile(r"^[A-Za-z0-9_.-]+$")


def load_campaign(path):
    """Parse and validate a campaign file; returns ``(campaign_table, experiments)``."""
    data, text = load_toml(path)
    for key in data:
        if key not in ("campaign", "experiment"):
            raise ConfigError("unknown top-level key", field=key, line=_locate(text, key))
    camp = data.get("campaign", {})
    for key in camp:
        if key not in ("name", "seed"):
            raise ConfigError("unknown key in [campaign]", field=f"campaign.{key}", line=_locate(text, key, "campaign"))
    exps = data.get("experiment", [])
    if not isinstance(exps, list):
        raise ConfigError("'experiment' must be an array of tables", field="experiment", line=_locate(text, "experiment"))
    seen = set()
    for i, e in enumerate(exps):
        for key in e:
            if key not in EXPERIMENT_KEYS:
                raise ConfigError(f"unknown key in experiment #{i + 1}", field=f"experiment.{key}", line=_locate(text, key))
        name = e.get("name")
        if not isinstance(name, str) or not _NAME.match(name):
            raise ConfigError(f"experiment #{i + 1} needs a name made of [A-Za-z0-9_.-]", field="experiment.name")
        if name in seen:
            raise ConfigError(f"duplicate experiment name '{name}'", field="experiment.name", line=_locate(text, "name"))
        seen.add(name)
        etype = e.get("type")
        if etype not in RUNNERS:
            raise ConfigError(
                f"unknown experiment type {etype!r} (known: {', '.join(RUNNERS)})",
                field=f"{name}.type",
                line=_locate(text, "type"),
            )
        for sec in ("domain", "obstacles", "grid", "solver", "mc", "verify"):
            if sec in e:
                validate_section(sec, e[sec], text, header=f"experiment.{sec}")
        for sec in ("params", "checks"):
            if sec in e and not isinstance(e[sec], dict):
                raise ConfigError(f"[{sec}] must be a table", field=f"{name}.{sec}")
        for key in e.get("checks", {}):
            if key != "only":
                raise ConfigError("unknown key in [checks]", field=f"{name}.checks.{key}", line=_locate(text, key))
    return camp, exps


# ---------------------------------------------------------------------------
# helpers


class _Checks:
    def __init__(self):
        self.rows = []

    def add(self, name, passed, **detail):
        self.rows.append({"check": name, "passed": bool(passed), **detail})


def _select(checks, e):
    """Keep checks whose name starts with an entry of ``checks.only`` (all when absent)."""
    only = e.get("checks", {}).get("only")
    if only is None:
        return checks
    return [c for c in checks if any(c["check"].startswith(w) for w in only)]


def _geometry(e, base_dir):
    if "domain" not in e:
        raise ConfigError("experiment needs a [domain] table", field=f"{e['name']}.domain")
    G = build_domain(e["domain"])
    S, fat = build_obstacles(e.get("obstacles", {"kind": "none"}), G, base_dir)
    B = S.fattened(fat) if fat else None
    return G, S, B


def _solver(e, camp_seed):
    s = e.get("solver", {})
    return float(s.get("tol", 1e-10)), int(s.get("seed", camp_seed))


def _lambda1(G, S, h, trunc, tol, seed):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        grid = classify_grid(G, S, h, trunc)
    r = smallest_eigs(assemble_laplacian(grid), 1, tol=tol, seed=seed)
    return float(r.eigenvalues[0]), grid.n_dofs, r.method


def _extrapolated(G, S, e, tol, seed):
    g = e.get("grid", {})
    hs = grid_levels(g, G)
    trunc = truncation_of(g)
    levels = []
    for h in hs:
        lam, n, method = _lambda1(G, S, h, trunc, tol, seed)
        levels.append({"h": h, "lambda": lam, "n_dofs": n, "method": method})
    if len(hs) >= 2:
        if not math.isclose(hs[-1], hs[-2] / 2, rel_tol=1e-12):
            raise ConfigError("Richardson extrapolation needs consecutive spacings h, h/2", field=f"{e['name']}.grid.h")
        ext = float(richardson(levels[-2]["lambda"], levels[-1]["lambda"]))
    else:
        ext = levels[0]["lambda"]
    return ext, levels


# ---------------------------------------------------------------------------
# experiment runners: (experiment, campaign seed, base dir) -> (result dict, checks)


def run_bounds(e, seed, base_dir):
    p = dict(e.get("params", {}))
    name = p.pop("bound", None)
    expect = p.pop("expect", None)
    rtol = float(p.pop("rtol", 1e-3))
    inputs = p.pop("inputs", {})
    if p:
        raise ConfigError(f"unknown params {sorted(p)}", field=f"{e['name']}.params")
    rep = bounds.evaluate(name, **inputs)
    ck = _Checks()
    if expect is not None:
        ck.add("value", abs(rep.value - expect) <= rtol * abs(expect), value=rep.value, expected=expect, rtol=rtol)
    return {"report": rep.to_dict()}, ck.rows


def run_annulus(e, seed, base_dir):
    """Ball domain with a concentric ball obstacle of each radius in ``rhos``."""
    p = e.get("params", {})
    G = build_domain(e["domain"])
    if G.kind != "ball":
        raise ConfigError("annulus experiments need a ball domain", field=f"{e['name']}.domain.kind")
    allowance = float(p.get("allowance", 0.05))
    tol, sseed = _solver(e, seed)
    d = G.dim
    ck = _Checks()
    out = []
    for rho in p.get("rhos", [0.1]):
        S = build_obstacles({"kind": "balls", "centers": [list(G.center)], "radius": rho}, G)[0]
        ext, levels = _extrapolated(G, S, e, tol, sseed)
        lower, upper = bounds.annulus_bounds(rho, G.radius, d, G.volume())
        out.append(
            {
                "rho": rho,
                "levels": levels,
                "extrapolated": ext,
                "lower_bound": lower,
                "upper_bound": upper,
                "ratio_to_lower": ext / lower,
                "twice_extrapolated": 2 * ext,
            }
        )
        ck.add(f"lower_rho{rho:g}", ext >= (1 - allowance) * lower, value=ext, bound=lower)
        ck.add(f"upper_rho{rho:g}", ext <= (1 + allowance) * upper, value=ext, bound=upper)
    return {"allowance": allowance, "rows": out}, ck.rows


def run_eigen_lower(e, seed, base_dir):
    """Extrapolated lambda^{G,S} against the ball-pool or general lower bound."""
    p = e.get("params", {})
    G, S, _ = _geometry(e, base_dir)
    tol, sseed = _solver(e, seed)
    kind = p.get("bound", "general")
    rho = float(p.get("rho", float(S.radii.min())))
    d = G.dim
    info = {"bound_kind": kind, "rho": rho, "n_balls": len(S)}
    if kind == "ballpool":
        lower = bounds.ballpool_lower(rho, float(p.get("ell", 1.0)), d)
    elif kind == "general":
        R = p.get("R", "certified")
        if R == "certified":
            R = certified_radius(S, G, rho, float(p.get("sample_spacing", rho / 2)))
            info["certified_R"] = R
        lower = bounds.general_lower(rho, float(R), d)
        info["R"] = float(R)
    else:
        raise ConfigError(f"unknown bound kind {kind!r}", field=f"{e['name']}.params.bound")
    ext, levels = _extrapolated(G, S, e, tol, sseed)
    ck = _Checks()
    ck.add("lower", ext >= lower, value=ext, bound=lower)
    info.update({"levels": levels, "extrapolated": ext, "lower_bound": lower, "margin": ext / lower})
    return info, ck.rows


def _path_config(e, seed, start=None):
    m = e.get("mc", {})
    try:
        return PathConfig(
            float(m.get("dt", 1e-4)),
            int(m.get("n_paths", 10000)),
            int(m.get("seed", seed)),
            start if start is not None else m.get("start", [0.0, 0.0, 0.0]),
            float(m.get("horizon", 1.0)),
        )
    except UCPLabError as exc:
        raise ConfigError(str(exc), field=f"{e['name']}.mc") from exc


def run_hit_and_run(e, seed, base_dir):
    p = e.get("params", {})
    G, S, B = _geometry(e, base_dir)
    rho = float(p.get("rho", e.get("obstacles", {}).get("fattening", 1.0)))
    alphas = [float(a) for a in p.get("alphas", [0.01])]
    cfg = _path_config(e, seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        ests = estimate_hit_and_run(G, S, B, rho, alphas, cfg)
    ck = _Checks()
    rows = []
    for est in ests:
        a = est.extras["alpha"]
        bound = est.extras["bound"]
        rows.append(est.to_dict())
        ck.add(f"alpha{a:g}", est.value - 2 * est.ci_halfwidth <= bound, value=est.value, ci=est.ci_halfwidth, bound=bound)
    return {"rho": rho, "start": list(cfg.start), "dt": cfg.dt, "n_paths": cfg.n_paths, "estimates": rows}, ck.rows


def _split_operators(G, S, B, e):
    g = e.get("grid", {})
    h = grid_levels(g, G)[0]
    trunc = truncation_of(g)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        full = classify_grid(G, None, h, trunc)
        holed = classify_grid(G, S, h, trunc)
        omega = classify_grid(G, B, h, trunc)
    return h, full, holed, omega


def run_semigroup_gap(e, seed, base_dir):
    """Operator-norm and Monte Carlo checks of the semigroup comparison at each beta."""
    p = e.get("params", {})
    G, S, B = _geometry(e, base_dir)
    rho = float(e["obstacles"].get("fattening"))
    tol, sseed = _solver(e, seed)
    h, full, holed, _ = _split_operators(G, S, B, e)
    H1 = assemble_laplacian(full)
    H2 = assemble_laplacian(holed)
    m1, m2 = full.dof_mask(B), holed.dof_mask(B)
    starts = e.get("mc", {}).get("starts")
    ck = _Checks()
    rows = []
    for beta in p.get("betas", [1e3]):
        beta = float(beta)
        est = semigroup_diff_norm(
            H1.with_potential(beta, m1), H2.with_potential(beta, m2), t=1.0, probes=int(p.get("probes", 4)), tol=tol, seed=sseed
        )
        bound = bounds.semigroup_diff_bound(rho, beta, G.dim)
        row = {"beta": beta, "norm": est.to_dict(), "bound": bound}
        ck.add(f"norm_beta{beta:g}", est.lower <= bound, value=est.lower, bound=bound)
        if starts:
            cfg = _path_config(e, seed, starts[0])
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                mc = estimate_semigroup_gap(G, S, B, rho, beta, starts, cfg)
            sb = mc.extras["bound"]
            row["mc"] = mc.to_dict()
            ck.add(f"mc_beta{beta:g}", mc.value - 2 * mc.ci_halfwidth <= sb, value=mc.value, ci=mc.ci_halfwidth, bound=sb)
        rows.append(row)
    return {"rho": rho, "h": h, "n_dofs": [full.n_dofs, holed.n_dofs], "rows": rows}, ck.rows


def run_ordering_chain(e, seed, base_dir):
    """lambda_beta <= mu_beta <= lambda_Omega, and the shape of beta -> lambda_beta."""
    p = e.get("params", {})
    G, S, B = _geometry(e, base_dir)
    tol, sseed = _solver(e, seed)
    betas = [float(b) for b in p.get("betas", [1, 10, 1e2, 1e3, 1e4, 1e5])]
    rtol = float(p.get("rtol", 1e-8))
    h, full, holed, omega = _split_operators(G, S, B, e)
    lam = lambda_beta_values(assemble_laplacian(full), full.dof_mask(B), betas, tol, sseed)
    mu = lambda_beta_values(assemble_laplacian(holed), holed.dof_mask(B), betas, tol, sseed)
    lam_omega = float(smallest_eigs(assemble_laplacian(omega), 1, tol=tol, seed=sseed).eigenvalues[0])
    slack = rtol * max(1.0, lam_omega)
    inc, conc = _check_shape(betas, lam, slack)
    ck = _Checks()
    ck.add("lambda_le_mu", all(a <= b + slack for a, b in zip(lam, mu)))
    ck.add("mu_le_lambda_omega", all(b <= lam_omega + slack for b in mu))
    ck.add("nondecreasing", inc)
    ck.add("concave", conc)
    return {"h": h, "betas": betas, "lambda_beta": lam, "mu_beta": mu, "lambda_Omega": lam_omega, "slack": slack}, ck.rows


def _random_bls_case(rng):
    n = int(rng.integers(10, 201))
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    w = np.sort(rng.uniform(0.0, 10.0, n))
    A = (Q * w) @ Q.T
    A = (A + A.T) / 2
    mask = rng.random(n) < rng.uniform(0.2, 0.6)
    if not mask.any():
        mask[rng.integers(n)] = True
    if mask.all():
        mask[rng.integers(n)] = False
    ev = np.linalg.eigvalsh(A)
    comp = np.linalg.eigvalsh(A[np.ix_(~mask, ~mask)])[0]
    # interval top between two eigenvalues and below the limit of lambda_beta
    j_max = int(np.searchsorted(ev, comp)) - 1
    j = int(rng.integers(0, max(j_max, 0) + 1))
    top = 0.5 * (ev[j] + ev[j + 1]) if j + 1 < n else ev[j] + 0.5
    top = min(top, 0.5 * (ev[j] + comp)) if comp > ev[j] else top
    return A, mask, top


def run_bls_random(e, seed, base_dir):
    p = e.get("params", {})
    count = int(p.get("count", 50))
    rng = np.random.default_rng(int(p.get("seed", seed)))
    betas = np.logspace(-2, 6, int(p.get("n_betas", 33))).tolist()
    tol = float(p.get("tol", 1e-9))
    rows = []
    for i in range(count):
        A, mask, top = _random_bls_case(rng)
        try:
            r = verify_bls(A, mask, (0.0, top), betas, tol=tol, seed=seed)
            rows.append({"case": i, "n": A.shape[0], "I_max": float(top), **r.to_dict()})
        except UCPLabError as exc:
            rows.append({"case": i, "n": A.shape[0], "I_max": float(top), "certified": False, "reason": str(exc)})
    n_ok = sum(1 for r in rows if r["certified"])
    ck = _Checks()
    ck.add("all_certified", n_ok == count, value=n_ok, expected=count)
    return {"count": count, "certified": n_ok, "cases": rows}, ck.rows


def run_verify(e, seed, base_dir):
    G, B, _ = _geometry(e, base_dir)
    v = e.get("verify", {})
    tol, sseed = _solver(e, seed)
    g = e.get("grid", {})
    h = grid_levels(g, G)[0]
    delta = float(v.get("delta", float(B.radii.min())))
    spacing = float(v.get("sample_spacing", delta / 2))
    R = v.get("R", "certified")
    if R == "certified":
        R = certified_radius(B, G, delta, spacing)
    a_field = None
    coef = v.get("coefficient")
    if coef:
        if coef.get("kind") != "checkerboard":
            raise ConfigError("only checkerboard coefficients are supported", field=f"{e['name']}.verify.coefficient")
        a_field = checkerboard_field(coef["low"], coef["high"], coef.get("period", 0.5), G.dim)
    eta0 = float(v.get("eta0", coef.get("low", 1.0) if coef else 1.0))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = verify_main(
            G,
            B,
            float(R),
            delta,
            eta0=eta0,
            a_field=a_field,
            h=h,
            truncation=truncation_of(g),
            t=float(v.get("t", 0.5)),
            sample_spacing=spacing,
            betas=v.get("betas", (1.0, 10.0, 100.0, 1e3, 1e4, 1e5)),
            tol=tol,
            seed=sseed,
            refine=bool(v.get("refine", False)),
        )
    ck = _Checks()
    for k, ok in rep.flags.items():
        ck.add(k, ok)
    return {"report": rep.to_dict()}, ck.rows


def run_capacity_scaling(e, seed, base_dir):
    p = e.get("params", {})
    r = float(p.get("r", 1e-3))
    d = int(p.get("d", 3))
    rtol = float(p.get("rtol", 0.01))
    limit = float(p.get("limit", 4 * math.pi / 3 * 7))
    ratio = bounds.capacity_upper(r, d) / r
    ck = _Checks()
    ck.add("limit", abs(ratio - limit) <= rtol * limit, value=ratio, expected=limit, rtol=rtol)
    return {"r": r, "d": d, "ratio": ratio, "limit": limit}, ck.rows


def run_divergence_check(e, seed, base_dir):
    """Smallest eigenvalue of H_a - eta0 H^G (nonnegative when a >= eta0)."""
    G, _, _ = _geometry(e, base_dir)
    v = e.get("verify", {})
    coef = v.get("coefficient", {"low": 1.0, "high": 4.0, "period": 0.5})
    eta0 = float(v.get("eta0", coef.get("low", 1.0)))
    tol, sseed = _solver(e, seed)
    h = grid_levels(e.get("grid", {}), G)[0]
    grid = classify_grid(G, None, h)
    Ha = assemble_divergence_form(grid, checkerboard_field(coef["low"], coef["high"], coef.get("period", 0.5), G.dim), eta0)
    HG = assemble_laplacian(grid)
    dmin = float(smallest_eigs((Ha.matrix - eta0 * HG.matrix).tocsr(), 1, tol=tol, seed=sseed).eigenvalues[0])
    ck = _Checks()
    ck.add("dominates", dmin >= -1e-10 * max(1.0, Ha.norm1()), value=dmin)
    return {"min_eig": dmin}, ck.rows


RUNNERS = {
    "bounds": run_bounds,
    "annulus": run_annulus,
    "eigen_lower": run_eigen_lower,
    "hit_and_run": run_hit_and_run,
    "semigroup_gap": run_semigroup_gap,
    "ordering_chain": run_ordering_chain,
    "bls_random": run_bls_random,
    "verify": run_verify,
    "capacity_scaling": run_capacity_scaling,
    "divergence_check": run_divergence_check,
}


# ---------------------------------------------------------------------------
# orchestration


def run_campaign(config_path, out_dir, seed=None, only=None, log=None):
    """Run every experiment in order; returns ``(exit_code, summary_rows)``.

    A failing experiment (solver error) is recorded with ``completed = false``
    and the remaining experiments still run.
    """
    camp, exps = load_campaign(config_path)
    base_dir = Path(config_path).resolve().parent
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}", field="out") from exc
    cseed = int(seed if seed is not None else camp.get("seed", 0))
    summary = []
    timing = []
    for e in exps:
        if only and e["name"] not in only:
            continue
        t0 = time.perf_counter()
        report = {"experiment": e["name"], "type": e["type"], "seed": cseed, "config": e}
        try:
            result, checks = RUNNERS[e["type"]](e, cseed, base_dir)
            checks = _select(checks, e)
            report.update(result=result, checks=checks, completed=True)
        except ConfigError:
            raise
        except UCPLabError as exc:
            checks = [{"check": "completed", "passed": False, "error": f"{type(exc).__name__}: {exc}"}]
            report.update(result=None, checks=checks, completed=False, error=traceback.format_exception_only(exc)[-1].strip())
        report["passed"] = all(c["passed"] for c in checks)
        (out / f"{e['name']}.json").write_text(io.dumps(report), encoding="utf-8")
        for c in checks:
            summary.append({"experiment": e["name"], "type": e["type"], "check": c["check"], "passed": c["passed"]})
        dt = time.perf_counter() - t0
        timing.append({"experiment": e["name"], "seconds": round(dt, 3)})
        if log is not None:
            log(f"{e['name']}: {'pass' if report['passed'] else 'FAIL'} ({dt:.1f} s)")
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["experiment", "type", "check", "passed"], lineterminator="\n")
        w.writeheader()
        for row in summary:
            w.writerow({**row, "passed": "true" if row["passed"] else "false"})
    info = {
        "campaign": camp.get("name", Path(config_path).stem),
        "config": str(Path(config_path).resolve()),
        "seed": cseed,
        "finished": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "python": platform.python_version(),
        "timing": timing,
    }
    (out / "run_info.json").write_text(io.dumps(info), encoding="utf-8")
    code = 0 if all(r["passed"] for r in summary) else 1
    return code, summary
