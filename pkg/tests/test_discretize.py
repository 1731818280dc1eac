import itertools
import warnings

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from ucp_lab.discretize import (
    ResolutionWarning,
    assemble_divergence_form,
    assemble_laplacian,
    checkerboard_field,
    classify_grid,
    embedding,
    richardson,
    scalar_field,
)
from ucp_lab.errors import EllipticityViolation, EmptyInterior, InvalidParams
from ucp_lab.geometry import BallUnion, ConvexDomain

UNIT = ConvexDomain.box([0, 0, 0], [1, 1, 1])


def smallest(A):
    return float(np.linalg.eigvalsh(A.toarray())[0])


def grid_quiet(*args, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ResolutionWarning)
        return classify_grid(*args, **kw)


# --- classification --------------------------------------------------------


def test_unit_cube_27_nodes():
    g = classify_grid(UNIT, None, 0.5)
    c = g.counts()
    assert g.n_dofs == 27
    assert c["neumann_boundary"] == 26
    assert c["interior"] == 1


def test_center_node_removed():
    S = BallUnion.from_centers([[0.5] * 3], 0.3)
    with pytest.warns(ResolutionWarning):
        g = classify_grid(UNIT, S, 0.5)
    assert g.n_dofs == 26
    assert g.counts()["dirichlet_removed"] == 1


def test_ball_count_matches_lattice_scan():
    g = classify_grid(ConvexDomain.ball([0, 0, 0], 1.0), None, 0.25)
    ax = np.arange(-4, 5) * 0.25
    brute = sum(1 for p in itertools.product(ax, repeat=3) if np.dot(p, p) <= 1.0 + 1e-12)
    assert g.n_dofs == brute


def test_dof_index_bijection():
    S = BallUnion.from_centers([[0.5] * 3], 0.3)
    g = classify_grid(UNIT, S, 0.05)
    idx = np.sort(g.dof_index[g.dof_index >= 0])
    assert np.array_equal(idx, np.arange(g.n_dofs))
    removed = g.node_points()[g.labels == 3]
    assert np.all(np.linalg.norm(removed - 0.5, axis=-1) <= 0.3 + 1e-9)


def test_empty_interior():
    S = BallUnion.from_centers([[0.5] * 3], 2.0)
    with pytest.raises(EmptyInterior):
        classify_grid(UNIT, S, 0.5)


def test_nonpositive_spacing():
    with pytest.raises(InvalidParams):
        classify_grid(UNIT, None, 0.0)


# --- Laplacian -------------------------------------------------------------


def test_neumann_constant_in_kernel():
    H = assemble_laplacian(classify_grid(UNIT, None, 0.1))
    assert np.abs(H.laplacian @ np.ones(H.n)).max() < 1e-9


def test_two_node_segment():
    for h in (1.0, 0.5):
        g = classify_grid(ConvexDomain.box([0], [h]), None, h)
        H = assemble_laplacian(g)
        assert H.n == 2
        ref = np.linalg.eigvalsh(0.5 * np.array([[1.0, -1.0], [-1.0, 1.0]]) / h**2)
        assert np.allclose(np.linalg.eigvalsh(H.matrix.toarray()), ref)
        assert np.allclose(ref, [0.0, 1.0 / h**2])


def test_full_potential_shifts_spectrum():
    g = classify_grid(UNIT, None, 0.25)
    B = BallUnion.from_centers([[0.5] * 3], 2.0)
    H0 = assemble_laplacian(g).matrix.toarray()
    H1 = assemble_laplacian(g, 10.0, B).matrix.toarray()
    assert np.allclose(np.linalg.eigvalsh(H1), np.linalg.eigvalsh(H0) + 10.0)


def test_structure_with_obstacle():
    S = BallUnion.from_centers([[0.5] * 3], 0.25)
    g = classify_grid(UNIT, S, 0.0625)
    H = assemble_laplacian(g)
    assert H.asymmetry() == 0.0
    L = H.laplacian.tocoo()
    off = L.data[L.row != L.col]
    assert np.all(off <= 0)
    rows = np.asarray(H.laplacian.sum(axis=1)).ravel()
    # row sums are positive exactly at dofs next to a removed node
    near = np.zeros(g.n_dofs, dtype=bool)
    removed = g.labels == 3
    for k in range(3):
        for s in (-1, 1):
            nb = np.roll(removed, s, axis=k)
            near[g.dof_index[nb & (g.dof_index >= 0)]] = True
    assert np.all(rows[near] > 0)
    assert np.allclose(rows[~near], 0, atol=1e-9)


# --- divergence form -------------------------------------------------------


def _small_grid():
    S = BallUnion.from_centers([[0.5] * 3], 0.25)
    return classify_grid(UNIT, S, 0.0625)


def test_identity_coefficient_reduces_to_laplacian():
    g = _small_grid()
    A = assemble_divergence_form(g, scalar_field(lambda p: np.ones(len(p))), 1.0).matrix
    L = assemble_laplacian(g).matrix
    assert (A != L).nnz == 0


def test_doubled_coefficient_doubles_operator():
    g = _small_grid()
    A = assemble_divergence_form(g, scalar_field(lambda p: 2.0 * np.ones(len(p))), 1.0).matrix
    L = assemble_laplacian(g).matrix
    assert (A != 2.0 * L).nnz == 0


def test_checkerboard_dominates_laplacian():
    g = classify_grid(UNIT, None, 0.1)
    A = assemble_divergence_form(g, checkerboard_field(1.0, 4.0, 0.5), 1.0).matrix
    L = assemble_laplacian(g).matrix
    assert abs(A - A.T).max() == 0
    assert smallest(A - L) >= -1e-10


def test_anisotropic_symmetric_and_psd():
    g = classify_grid(UNIT, None, 0.125)

    def field(p):
        m = np.array([[2.0, 0.5, 0.0], [0.5, 2.0, 0.3], [0.0, 0.3, 2.0]])
        return np.broadcast_to(m, (len(p), 3, 3))

    A = assemble_divergence_form(g, field, 1.0).matrix
    assert abs(A - A.T).max() == 0
    assert smallest(A) >= -1e-10 * abs(A).sum(axis=0).max()
    assert np.abs(A @ np.ones(A.shape[0])).max() < 1e-9


def test_ellipticity_violation_reports_cell():
    g = classify_grid(UNIT, None, 0.25)
    with pytest.raises(EllipticityViolation) as exc:
        assemble_divergence_form(g, scalar_field(lambda p: np.where(p[:, 0] > 0.6, 0.5, 1.0)), 1.0)
    assert exc.value.cell is not None
    assert exc.value.cell[0] > 0.6


# --- helpers ---------------------------------------------------------------


def test_richardson_linear_error():
    # exact value 2 with error c*h
    assert richardson(2 + 0.4, 2 + 0.2) == pytest.approx(2.0)


def test_embedding_maps_to_same_points():
    big = classify_grid(UNIT, None, 0.125)
    small = grid_quiet(UNIT, BallUnion.from_centers([[0.5] * 3], 0.2), 0.125)
    idx = embedding(small, big)
    assert np.allclose(big.dof_points()[idx], small.dof_points())


# --- properties ------------------------------------------------------------


centers = st.lists(st.tuples(*[st.floats(0.1, 0.9)] * 3), min_size=1, max_size=3)


@settings(max_examples=15, deadline=None)
@given(c=centers, r=st.floats(0.1, 0.2), beta=st.floats(0, 100))
def test_symmetric_psd(c, r, beta):
    S = BallUnion.from_centers(c, r)
    g = grid_quiet(UNIT, S, 0.125)
    H = assemble_laplacian(g, beta, S.fattened(0.1))
    assert H.asymmetry() == 0.0
    assert smallest(H.matrix) >= -1e-10 * H.norm1()


@settings(max_examples=15, deadline=None)
@given(c=centers, extra=st.tuples(*[st.floats(0.1, 0.9)] * 3))
def test_adding_balls_raises_ground_state(c, extra):
    S = BallUnion.from_centers(c, 0.15)
    T = S.union(BallUnion.from_centers([extra], 0.15))
    g1 = grid_quiet(UNIT, S, 0.125)
    g2 = grid_quiet(UNIT, T, 0.125)
    assert smallest(assemble_laplacian(g2).matrix) >= smallest(assemble_laplacian(g1).matrix) - 1e-10


@settings(max_examples=10, deadline=None)
@given(betas=st.lists(st.floats(0, 1e4), min_size=2, max_size=4))
def test_beta_monotone_and_capped(betas):
    S = BallUnion.from_centers([[0.5] * 3], 0.25)
    g = classify_grid(UNIT, None, 0.125)
    B = S
    lam = [smallest(assemble_laplacian(g, b, B).matrix) for b in sorted(betas)]
    cap = smallest(assemble_laplacian(grid_quiet(UNIT, S, 0.125)).matrix)
    assert all(a <= b + 1e-9 for a, b in zip(lam, lam[1:]))
    assert lam[-1] <= cap + 1e-9


def test_refinement_converges():
    S = BallUnion.from_centers([[0.5] * 3], 0.25)
    from ucp_lab.spectral import smallest_eigs

    lam = [smallest_eigs(assemble_laplacian(classify_grid(UNIT, S, h)), 1).eigenvalues[0] for h in (0.0625, 0.03125)]
    assert abs(lam[1] - lam[0]) < 0.25 * lam[1]
    assert sp.issparse(assemble_laplacian(classify_grid(UNIT, S, 0.0625)).matrix)
