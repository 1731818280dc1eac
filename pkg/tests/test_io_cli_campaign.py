import csv
import json
import textwrap

import numpy as np
import pytest

from ucp_lab import bounds
from ucp_lab import io as uio
from ucp_lab.campaign import load_campaign, run_campaign
from ucp_lab.cli import export_matrix, main
from ucp_lab.discretize import assemble_laplacian, classify_grid
from ucp_lab.errors import ConfigError
from ucp_lab.geometry import BallUnion, ConvexDomain
from ucp_lab.spectral import smallest_eigs


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(textwrap.dedent(text).lstrip())
    return p


SEGMENT = """
[domain]
kind = "box"
lo = [0.0]
hi = [1.0]

[grid]
h = 1.0
"""

CUBE20 = """
[domain]
kind = "box"
lo = [0.0, 0.0, 0.0]
hi = [1.0, 1.0, 1.0]

[obstacles]
kind = "balls"
centers = [[0.5, 0.5, 0.5]]
radius = 0.25
fattening = 0.25

[grid]
nodes = 20

[solver]
k = 2
"""


# --- file formats ----------------------------------------------------------


def test_export_two_dof_segment(tmp_path):
    cfg = write(tmp_path, "seg.toml", SEGMENT)
    out = tmp_path / "seg.mtx"
    H = export_matrix(cfg, out)
    assert H.n == 2
    lines = [ln for ln in out.read_text().splitlines() if not ln.startswith("%")]
    assert lines[0] == "2 2 3"
    assert len(lines) == 4
    assert out.read_text().startswith("%%MatrixMarket matrix coordinate real symmetric")


def test_export_roundtrip_20_cubed(tmp_path):
    cfg = write(tmp_path, "cube.toml", CUBE20)
    out = tmp_path / "cube.mtx"
    H = export_matrix(cfg, out, beta=1e3)
    back = uio.read_matrix_market(out)
    diff = H.matrix - back
    assert diff.nnz == 0 or np.abs(diff.data).max() == 0
    assert back.shape == H.shape


def test_export_bad_paths(tmp_path):
    cfg = write(tmp_path, "seg.toml", SEGMENT)
    with pytest.raises(ConfigError):
        export_matrix(cfg, tmp_path / "missing_dir" / "x.mtx")
    with pytest.raises(ConfigError):
        export_matrix(tmp_path / "nope.toml", tmp_path / "x.mtx")


def test_mask_roundtrip(tmp_path):
    S = BallUnion.from_centers([[0.5] * 3], 0.25)
    g = classify_grid(ConvexDomain.box([0] * 3, [1] * 3), S, 1 / 16)
    uio.write_mask(tmp_path / "g.mask", g)
    labels, h, origin = uio.read_mask(tmp_path / "g.mask")
    assert np.array_equal(labels, g.labels)
    assert h == g.h
    assert np.array_equal(origin, g.origin)
    raw = (tmp_path / "g.mask").read_bytes()
    assert raw.startswith(b"UCPMASK 1\n")
    assert len(raw) - raw.index(b"end\n") - 4 == g.labels.size


def test_spectral_result_roundtrip(tmp_path):
    H = assemble_laplacian(classify_grid(ConvexDomain.box([0] * 3, [1] * 3), None, 0.25))
    res = smallest_eigs(H, k=3)
    uio.write_spectral_result(tmp_path / "r.bin", res)
    back = uio.read_spectral_result(tmp_path / "r.bin")
    assert np.array_equal(back.eigenvalues, res.eigenvalues)
    assert np.array_equal(back.eigenvectors, res.eigenvectors)
    assert np.array_equal(back.residuals, res.residuals)


def test_canonical_json_nonfinite():
    assert json.loads(uio.dumps({"b": float("inf"), "a": np.float64(1.5)})) == {"a": 1.5, "b": "inf"}


# --- config validation -----------------------------------------------------


def test_unknown_key_reports_line(tmp_path):
    cfg = write(tmp_path, "bad.toml", SEGMENT + "colour = 3\n")
    with pytest.raises(ConfigError) as exc:
        export_matrix(cfg, tmp_path / "x.mtx")
    lines = cfg.read_text().splitlines()
    assert lines[exc.value.line - 1] == "colour = 3"
    assert "colour" in str(exc.value)


def test_campaign_rejects_unknown_experiment_key(tmp_path):
    cfg = write(
        tmp_path,
        "c.toml",
        """
        [campaign]
        name = "x"

        [[experiment]]
        name = "a"
        type = "bounds"
        bogus = 1
        """,
    )
    with pytest.raises(ConfigError) as exc:
        load_campaign(cfg)
    assert exc.value.line == 7


# --- campaigns -------------------------------------------------------------


def test_empty_campaign(tmp_path):
    cfg = write(tmp_path, "c.toml", '[campaign]\nname = "empty"\n')
    code, summary = run_campaign(cfg, tmp_path / "out")
    assert code == 0
    assert summary == []
    rows = list(csv.reader((tmp_path / "out" / "summary.csv").open()))
    assert rows == [["experiment", "type", "check", "passed"]]


def test_bounds_only_campaign(tmp_path):
    cfg = write(
        tmp_path,
        "c.toml",
        """
        [campaign]
        name = "b"
        seed = 5

        [[experiment]]
        name = "pool"
        type = "bounds"
        params = { bound = "ballpool_lower", inputs = { rho = 0.1, ell = 1.0, d = 3 }, expect = 0.057735, rtol = 1e-5 }
        """,
    )
    code, summary = run_campaign(cfg, tmp_path / "out")
    assert code == 0
    assert summary == [{"experiment": "pool", "type": "bounds", "check": "value", "passed": True}]
    rep = json.loads((tmp_path / "out" / "pool.json").read_text())
    assert rep["result"]["report"]["value"] == pytest.approx(bounds.ballpool_lower(0.1, 1.0, 3))
    assert rep["passed"] is True


def test_failing_check_gives_exit_1(tmp_path):
    cfg = write(
        tmp_path,
        "c.toml",
        """
        [campaign]
        name = "b"

        [[experiment]]
        name = "pool"
        type = "bounds"
        params = { bound = "ballpool_lower", inputs = { rho = 0.1, ell = 1.0, d = 3 }, expect = 1.0 }
        """,
    )
    assert main(["campaign", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1


# --- command line ----------------------------------------------------------


def test_cli_bounds_json(capsys):
    assert main(["bounds", "ballpool_lower", "--rho", "0.1", "--ell", "1", "--d", "3"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["value"] == pytest.approx(0.057735, rel=1e-5)


def test_cli_bounds_invalid_params(capsys):
    assert main(["bounds", "ballpool_lower", "--rho", "0.7", "--ell", "1", "--d", "3"]) == 2


def test_cli_missing_config():
    assert main(["eig"]) == 2


def test_cli_eig_and_assemble(tmp_path, capsys):
    cfg = write(tmp_path, "cube.toml", CUBE20)
    assert main(["eig", "--config", str(cfg), "--out", str(tmp_path / "eig.bin")]) == 0
    res = uio.read_spectral_result(tmp_path / "eig.bin")
    assert res.k == 2
    assert main(["assemble", "--config", str(cfg), "--out", str(tmp_path / "asm")]) == 0
    assert (tmp_path / "asm" / "operator.mtx").exists()
    labels, _, _ = uio.read_mask(tmp_path / "asm" / "grid.mask")
    assert uio.read_matrix_market(tmp_path / "asm" / "operator.mtx").shape[0] == int(np.count_nonzero((labels == 1) | (labels == 2)))


def test_cli_heat_conserves_constant(tmp_path, capsys):
    cfg = write(tmp_path, "cube.toml", CUBE20.replace('kind = "balls"', 'kind = "none"').replace("centers = [[0.5, 0.5, 0.5]]\nradius = 0.25\nfattening = 0.25\n", ""))
    assert main(["heat", "--config", str(cfg), "--t", "0.5"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["min"] == pytest.approx(1.0, abs=1e-8)
    assert out["max"] == pytest.approx(1.0, abs=1e-8)


def test_threads_env(monkeypatch):
    from ucp_lab.cli import set_threads

    monkeypatch.setenv("UCP_LAB_THREADS", "bad")
    with pytest.raises(ConfigError):
        set_threads()
    monkeypatch.setenv("UCP_LAB_THREADS", "1")
    assert set_threads() == 1
