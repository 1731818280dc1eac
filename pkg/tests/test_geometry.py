import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ucp_lab.errors import InvalidParams, UnboundedDomain
from ucp_lab.geometry import (
    BallUnion,
    ConvexDomain,
    block_cells,
    build_skeleton,
    check_relative_denseness,
    certified_radius,
    halving_radii,
    inradius_estimate,
    lattice_points,
    make_appendix_example,
    make_ball_pool,
    random_ball_union,
    voronoi_assign,
)


# --- domains ---------------------------------------------------------------


def test_box_rejects_inverted_corners():
    with pytest.raises(InvalidParams):
        ConvexDomain.box([0, 0, 0], [1, 0, 1])


def test_ball_rejects_nonpositive_radius():
    with pytest.raises(InvalidParams):
        ConvexDomain.ball([0, 0, 0], 0.0)


def test_closed_membership():
    G = ConvexDomain.box([0, 0, 0], [1, 1, 1])
    assert G.contains([1.0, 1.0, 0.0])
    assert not G.contains([1.0 + 1e-9, 0.5, 0.5])
    ball = ConvexDomain.ball([0, 0, 0], 1.0)
    assert ball.contains([1.0, 0, 0])


def test_halfspaces_store_interior_point():
    G = ConvexDomain.halfspaces(np.vstack([np.eye(3), -np.eye(3)]), np.ones(6))
    assert np.all(G.contains(np.asarray(G.interior_point)))


def test_halfspaces_empty_interior():
    with pytest.raises(InvalidParams):
        ConvexDomain.halfspaces([[1, 0, 0], [-1, 0, 0]], [0.0, 0.0])


# --- relative denseness ----------------------------------------------------


def test_denseness_single_ball_verified():
    B = BallUnion.from_centers([[0, 0, 0]], 0.2)
    G = ConvexDomain.box([-1, -1, -1], [1, 1, 1])
    cert = check_relative_denseness(B, G, 2.2, 0.2, 0.05)
    assert cert.verified
    assert cert.margin == pytest.approx(2.0 - math.sqrt(3), abs=1e-12)


def test_denseness_single_ball_fails_at_corner():
    B = BallUnion.from_centers([[0, 0, 0]], 0.2)
    G = ConvexDomain.box([-1, -1, -1], [1, 1, 1])
    cert = check_relative_denseness(B, G, 1.0, 0.2, 0.05)
    assert not cert.verified
    assert np.allclose(np.abs(cert.worst_point), 1.0)


def test_denseness_lattice_exhaustive():
    pts = lattice_points(-2, 2, 1.0)
    B = BallUnion.from_centers(pts, 0.1)
    G = ConvexDomain.box([-1.5] * 3, [1.5] * 3)
    R = math.sqrt(3) + 0.1 + 1e-9
    cert = check_relative_denseness(B, G, R, 0.1, 0.05)
    assert cert.verified
    # independent brute force over the same samples
    ax = np.arange(-1.5, 1.5 + 1e-9, 0.05)
    X = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), -1).reshape(-1, 3)
    d = np.min(np.linalg.norm(X[:, None, :] - pts[None, :, :], axis=-1), axis=1)
    assert np.all(d + 0.1 <= R)


def test_denseness_preconditions():
    B = BallUnion.from_centers([[0, 0, 0]], 0.2)
    G = ConvexDomain.box([-1] * 3, [1] * 3)
    with pytest.raises(InvalidParams):
        check_relative_denseness(B, G, 0.1, 0.2, 0.05)
    with pytest.raises(InvalidParams):
        check_relative_denseness(B, G, 2.0, 0.2, 0.0)
    with pytest.raises(UnboundedDomain):
        check_relative_denseness(B, ConvexDomain.whole_space(None, 3), 2.0, 0.2, 0.05)


@settings(max_examples=20, deadline=None)
@given(extra=arrays(float, (3, 3), elements=st.floats(-1, 1)))
def test_denseness_monotone_in_B(extra):
    G = ConvexDomain.box([-1] * 3, [1] * 3)
    B = BallUnion.from_centers([[0, 0, 0]], 0.2)
    R = 2.0
    before = check_relative_denseness(B, G, R, 0.2, 0.1)
    after = check_relative_denseness(B.union(BallUnion.from_centers(extra, 0.2)), G, R, 0.2, 0.1)
    assert after.margin >= before.margin
    assert not (before.verified and not after.verified)


def test_certified_radius_passes_its_own_check():
    G = ConvexDomain.box([0] * 3, [2] * 3)
    S = random_ball_union(G, 20, 0.1, seed=7, min_gap=0.05)
    R = certified_radius(S, G, 0.1, 0.05)
    assert check_relative_denseness(S, G, R, 0.1, 0.05).verified
    assert not check_relative_denseness(S, G, 0.9 * (R - 0.05), 0.1, 0.05).verified


# --- skeleton and Voronoi --------------------------------------------------


def test_skeleton_rejects_middle_point():
    R = 1.3
    e1 = np.array([1.0, 0, 0])
    sk = build_skeleton([0 * e1, e1 * R / 2, e1 * R], R)
    assert np.allclose(sk.points, [0 * e1, e1 * R])
    assert sk.cover_radius == pytest.approx(3 * R)


def test_skeleton_single_point():
    sk = build_skeleton([[0.3, 0.2, 0.1]], 1.0)
    assert len(sk) == 1


def test_skeleton_lattice_exhaustive():
    cand = np.array(list(itertools.product(range(6), repeat=3)), dtype=float)
    assert cand.shape[0] == 216
    sk = build_skeleton(cand, 1.5)
    d = np.linalg.norm(sk.points[:, None] - sk.points[None], axis=-1)
    np.fill_diagonal(d, np.inf)
    assert d.min() >= 1.5
    cover = np.linalg.norm(cand[:, None] - sk.points[None], axis=-1).min(axis=1)
    assert cover.max() <= 4.5


def test_skeleton_preconditions():
    with pytest.raises(InvalidParams):
        build_skeleton(np.zeros((0, 3)), 1.0)
    with pytest.raises(InvalidParams):
        build_skeleton([[0, 0, 0]], 0.0)


@settings(max_examples=40, deadline=None)
@given(
    pts=arrays(float, st.tuples(st.integers(1, 40), st.just(3)), elements=st.floats(-5, 5)),
    R=st.floats(0.1, 4.0),
)
def test_skeleton_separated_and_maximal(pts, R):
    sk = build_skeleton(pts, R)
    if len(sk) > 1:
        d = np.linalg.norm(sk.points[:, None] - sk.points[None], axis=-1)
        np.fill_diagonal(d, np.inf)
        assert d.min() >= R
    rejected = sorted(set(range(len(pts))) - set(sk.accepted))
    for i in rejected:
        assert np.linalg.norm(sk.points - pts[i], axis=1).min() < R


def test_voronoi_examples():
    sk = build_skeleton([[0, 0, 0], [4, 0, 0]], 1.0)
    assert voronoi_assign(sk, [1, 0, 0]) == 0
    assert voronoi_assign(sk, [2, 0, 0]) == 0
    assert voronoi_assign(sk, [3, 0, 0]) == 1


@settings(max_examples=30, deadline=None)
@given(
    sigma=arrays(float, st.tuples(st.integers(1, 12), st.just(3)), elements=st.floats(-3, 3)),
    x=arrays(float, (25, 3), elements=st.floats(-4, 4)),
)
def test_voronoi_matches_brute_force(sigma, x):
    got = voronoi_assign(sigma, x)
    for xi, g in zip(x, got):
        d = [float(np.sum((xi - p) ** 2)) for p in sigma]
        assert g == d.index(min(d))


# --- inradius --------------------------------------------------------------


def test_inradius_exact_cases():
    assert inradius_estimate(ConvexDomain.box([0, 0, 0], [2, 4, 6])) == 1.0
    assert inradius_estimate(ConvexDomain.ball([0, 0, 0], 3.0)) == 3.0
    assert inradius_estimate(ConvexDomain.whole_space(None, 3)) == math.inf


def test_inradius_half_ball():
    G = ConvexDomain.ball_polytope([0, 0, 0], 1.0, n_facets=4000, extra_normals=[[-1, 0, 0]], extra_offsets=[0.0])
    assert inradius_estimate(G) == pytest.approx(0.5, abs=1e-3)


@settings(max_examples=30, deadline=None)
@given(sides=st.lists(st.floats(0.01, 100), min_size=3, max_size=3))
def test_inradius_box_half_min_side(sides):
    G = ConvexDomain.box([0, 0, 0], sides)
    assert inradius_estimate(G) == min(sides) / 2


# --- named examples --------------------------------------------------------


def test_ball_pool_single_cell():
    host, S = make_ball_pool([[0, 0, 0]], 1.0, 0.2)
    assert len(S) == 1
    assert np.allclose(S.centers[0], 0.5)
    assert host.denseness_R == pytest.approx(math.sqrt(3))
    assert host.denseness_delta == 0.2


def test_ball_pool_2x2x2():
    _, S = make_ball_pool(block_cells([2, 2, 2]), 1.0, 0.1)
    assert len(S) == 8
    d = np.linalg.norm(S.centers[:, None] - S.centers[None], axis=-1)
    np.fill_diagonal(d, np.inf)
    assert d.min() == pytest.approx(1.0)


def test_ball_pool_offset_margin():
    rho, eps = 0.1, 1e-3
    make_ball_pool([[0, 0, 0]], 1.0, rho, offsets=[rho + eps] * 3)
    with pytest.raises(InvalidParams):
        make_ball_pool([[0, 0, 0]], 1.0, rho, offsets=[rho - eps] * 3)
    with pytest.raises(InvalidParams):
        make_ball_pool([[0, 0, 0]], 1.0, 0.5)


def test_ball_pool_denseness_certified():
    host, S = make_ball_pool(block_cells([3, 3, 3]), 1.0, 0.1)
    cert = check_relative_denseness(S, host.to_domain(), host.denseness_R, 0.1, 0.05)
    assert cert.verified


def test_appendix_constant_radii():
    G, S = make_appendix_example(0.25, 2)
    assert len(S) == 125
    assert G.kind == "whole_space"
    assert G.truncation.hi == (2.5, 2.5, 2.5)


def test_appendix_halving_profile():
    _, S = make_appendix_example(halving_radii(0.25), 2)
    vals, counts = np.unique(S.radii, return_counts=True)
    assert dict(zip(vals.tolist(), counts.tolist())) == {0.0625: 98, 0.125: 26, 0.25: 1}


def test_appendix_radius_half_rejected():
    with pytest.raises(InvalidParams):
        make_appendix_example(0.5, 2)


def test_ball_union_csv_roundtrip(tmp_path):
    S = BallUnion(np.array([[0.1, 0.2, 0.3], [1.0 / 3, 2.0, -1.0]]), np.array([0.1, 0.25]))
    S.to_csv(tmp_path / "balls.csv")
    T = BallUnion.from_csv(tmp_path / "balls.csv")
    assert np.array_equal(S.centers, T.centers)
    assert np.array_equal(S.radii, T.radii)
    assert (tmp_path / "balls.csv").read_text().splitlines()[0] == "cx,cy,cz,r"


def test_random_ball_union_disjoint_and_inside():
    G = ConvexDomain.box([0] * 3, [2] * 3)
    S = random_ball_union(G, 20, 0.1, seed=3, min_gap=0.05)
    d = np.linalg.norm(S.centers[:, None] - S.centers[None], axis=-1)
    np.fill_diagonal(d, np.inf)
    assert d.min() >= 0.25
    assert np.all(S.centers >= 0.1) and np.all(S.centers <= 1.9)
    again = random_ball_union(G, 20, 0.1, seed=3, min_gap=0.05)
    assert np.array_equal(S.centers, again.centers)
