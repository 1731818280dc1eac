"""Acceptance suite: runs ``campaigns/acceptance.toml`` twice and checks every item.

Prints one PASS/FAIL line per item (also repeated in the terminal summary).
Takes roughly 20 minutes on a single core.
"""

import csv
import json
import math
from pathlib import Path

import pytest

from ucp_lab import bounds
from ucp_lab.campaign import load_campaign, run_campaign

pytestmark = pytest.mark.acceptance

CAMPAIGN = Path(__file__).resolve().parents[1] / "campaigns" / "acceptance.toml"
EXPERIMENTS = len(load_campaign(CAMPAIGN)[1])


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    first = tmp_path_factory.mktemp("acceptance_a")
    second = tmp_path_factory.mktemp("acceptance_b")
    code, summary = run_campaign(CAMPAIGN, first)
    code2, _ = run_campaign(CAMPAIGN, second)
    return {"code": code, "code2": code2, "summary": summary, "dirs": (first, second)}


def report(runs, name):
    return json.loads((runs["dirs"][0] / f"{name}.json").read_text())


def checks(runs, name, prefix=""):
    return [c for c in report(runs, name)["checks"] if c["check"].startswith(prefix)]


def test_item1_annulus_upper(runs, acceptance_line):
    rows = checks(runs, "annulus", "upper_")
    ok = len(rows) == 3 and all(c["passed"] for c in rows)
    acceptance_line("1u", ok, "annulus upper: " + ", ".join(f"{c['value']:.4f} <= 1.05*{c['bound']:.4f}" for c in rows))
    assert ok


@pytest.mark.xfail(strict=True, reason="the -1/2 Laplacian sits a factor 2 below the lower bound; see the decisions ledger")
def test_item1_annulus_lower(runs, acceptance_line):
    rows = checks(runs, "annulus", "lower_")
    ok = len(rows) == 3 and all(c["passed"] for c in rows)
    acceptance_line("1l", ok, "annulus lower: " + ", ".join(f"{c['value']:.4f} >= 0.95*{c['bound']:.2f}" for c in rows))
    # the same numbers with the generator -Laplacian meet the bound
    assert all(2 * c["value"] >= 0.95 * c["bound"] for c in rows)
    assert ok


def test_item2_ball_pool(runs, acceptance_line):
    (c,) = checks(runs, "ball_pool", "lower")
    margin = c["value"] / c["bound"]
    ok = c["passed"] and margin >= 2 and c["bound"] == pytest.approx(0.057735, rel=1e-5)
    acceptance_line(2, ok, f"ball pool: {c['value']:.4f} >= {c['bound']:.6f} (margin x{margin:.1f})")
    assert ok


def test_item3_general_bound(runs, acceptance_line):
    (c,) = checks(runs, "random_general", "lower")
    R = report(runs, "random_general")["result"]["R"]
    ok = c["passed"] and c["bound"] == pytest.approx(3 / 27 * 0.1 / R**3, rel=1e-12)
    acceptance_line(3, ok, f"general bound: {c['value']:.4f} >= {c['bound']:.3e} at certified R = {R:.4f}")
    assert ok


def test_item4_hit_and_run(runs, acceptance_line):
    rows = checks(runs, "hit_and_run", "alpha")
    ok = len(rows) == 3
    for c in rows:
        a = float(c["check"][len("alpha") :])
        ok &= c["bound"] == pytest.approx(2**3.5 * math.exp(-1 / (16 * a)), rel=1e-12)
        ok &= c["value"] - 2 * c["ci"] <= c["bound"]
    n = report(runs, "hit_and_run")["result"]["n_paths"]
    ok &= n == 10**6
    acceptance_line(4, ok, "hit-and-run: " + ", ".join(f"{c['value']:.2e}-2*{c['ci']:.1e} <= {c['bound']:.3e}" for c in rows))
    assert ok


def test_item5_semigroup_gap(runs, acceptance_line):
    norm = checks(runs, "semigroup_gap", "norm_")
    mc = checks(runs, "semigroup_gap", "mc_")
    ok = len(norm) == 2 and len(mc) == 2
    for c in norm:
        beta = float(c["check"][len("norm_beta") :])
        ok &= c["bound"] == pytest.approx(math.sqrt(1 + 4 * 2**1.5) * math.exp(-0.25 * math.sqrt(beta) / (4 * math.sqrt(2))), rel=1e-12)
        ok &= c["value"] <= c["bound"]
    for c in mc:
        beta = float(c["check"][len("mc_beta") :])
        a = 0.25 / (4 * math.sqrt(2) * math.sqrt(beta))
        ok &= c["bound"] == pytest.approx(math.exp(-2 * beta * a) + bounds.hit_and_run_bound(0.25, a, 3), rel=1e-12)
        ok &= c["value"] - 2 * c["ci"] <= c["bound"]
    acceptance_line(5, ok, "semigroup gap: " + ", ".join(f"{c['check']} {c['value']:.3g} <= {c['bound']:.4g}" for c in norm + mc))
    assert ok


def test_item6_bls(runs, acceptance_line):
    (c,) = checks(runs, "bls_random")
    ok = c["passed"] and c["value"] == 50
    acceptance_line(6, ok, f"BLS oracle: {c['value']}/50 certified")
    assert ok


def test_item7_headline(runs, acceptance_line):
    names = ["verify_pool", "verify_pool_checkerboard", "verify_random", "verify_random_checkerboard"]
    parts, ok = [], True
    for n in names:
        rep = report(runs, n)
        res = rep["result"]["report"]
        flags_ok = rep["completed"] and all(c["passed"] for c in rep["checks"])
        thr = res["geometry"]["eta0"] * res["kappa"]
        rows_ok = all(r["threshold"] == pytest.approx(thr, rel=1e-12) and r["mass_ratio"] >= thr for r in res["rows"])
        const_ok = res["values"]["constant_vector_mass_ratio"] >= 10 * res["kappa"]
        ok &= flags_ok and rows_ok and const_ok and len(res["rows"]) > 0
        parts.append(f"{n} kappa={res['kappa']:.2e} vectors={len(res['rows'])}")
    acceptance_line(7, ok, "headline inequality: " + ", ".join(parts))
    assert ok


def test_item8_ordering_chain(runs, acceptance_line):
    rows = checks(runs, "ordering_chain")
    ok = {c["check"] for c in rows} == {"lambda_le_mu", "mu_le_lambda_omega", "nondecreasing", "concave"}
    ok &= all(c["passed"] for c in rows)
    acceptance_line(8, ok, "ordering chain: " + ", ".join(c["check"] for c in rows if c["passed"]))
    assert ok


def test_item9_determinism(runs, acceptance_line):
    a, b = runs["dirs"]
    names = sorted(p.name for p in a.glob("*.json") if p.name != "run_info.json")
    same = [n for n in names if (a / n).read_bytes() == (b / n).read_bytes()]
    ok = len(names) == EXPERIMENTS and same == names and runs["code"] == runs["code2"]
    acceptance_line(9, ok, f"determinism: {len(same)}/{len(names)} reports byte-identical")
    assert ok


def test_item10_capacity_scaling(runs, acceptance_line):
    (c,) = checks(runs, "capacity_scaling")
    ok = c["passed"] and c["expected"] == pytest.approx(4 * math.pi / 3 * 7) and abs(c["value"] / c["expected"] - 1) <= 0.01
    acceptance_line(10, ok, f"capacity scaling: {c['value']:.5f} vs {c['expected']:.5f}")
    assert ok


def test_campaign_only_fails_on_annulus_lower(runs):
    failing = {(r["experiment"], r["check"]) for r in runs["summary"] if not r["passed"]}
    assert failing == {("annulus", f"lower_rho{r:g}") for r in (0.05, 0.1, 0.2)}
    assert runs["code"] == 1
    with (runs["dirs"][0] / "summary.csv").open() as fh:
        assert len(list(csv.DictReader(fh))) == len(runs["summary"])
