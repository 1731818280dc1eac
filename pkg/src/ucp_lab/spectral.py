"""Eigenpairs, heat semigroups and spectral projectors of assembled operators.

The solvers pick a method by size: dense ``eigh`` for small problems, ARPACK
shift-invert (sparse LU) for moderate ones, and LOBPCG with an algebraic
multigrid preconditioner beyond that. Every result carries residual
certificates ``||Hv - lambda v||``.

Matrix functions are applied with Chebyshev expansions on ``[0, L]`` where
``L`` is the Gershgorin bound of the operator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.fft import dct
from scipy.special import erfc, erfcinv, ive

from .errors import GapUnresolved, InvalidParams, NotConverged

DENSE_MAX = 1500
SHIFT_INVERT_MAX = 5000


def as_matrix(H):
    """CSR (or dense ndarray) view of an operator-like object."""
    if hasattr(H, "matrix"):
        return H.matrix
    if sp.issparse(H):
        return H.tocsr()
    return np.atleast_2d(np.asarray(H, dtype=float))


def norm1(A):
    A = as_matrix(A)
    if A.shape[0] == 0:
        return 0.0
    if sp.issparse(A):
        return float(abs(A).sum(axis=0).max())
    return float(np.abs(A).sum(axis=0).max())


def gershgorin(A):
    """Upper bound ``max_i (a_ii + sum_{j != i} |a_ij|)`` on the spectrum of a symmetric matrix."""
    A = as_matrix(A)
    if A.shape[0] == 0:
        return 0.0
    if sp.issparse(A):
        diag = A.diagonal()
        radius = np.asarray(abs(A).sum(axis=1)).ravel() - np.abs(diag)
    else:
        diag = np.diag(A)
        radius = np.abs(A).sum(axis=1) - np.abs(diag)
    return float(np.max(diag + radius))


@dataclass
class SpectralResult:
    """Ascending eigenvalues with orthonormal eigenvectors stored as columns.

    ``tol`` is the absolute residual tolerance the pairs were certified against.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residuals: np.ndarray
    iterations: int
    converged: bool
    tol: float
    method: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def k(self):
        return len(self.eigenvalues)

    def header(self):
        return {
            "eigenvalues": [float(x) for x in self.eigenvalues],
            "residuals": [float(x) for x in self.residuals],
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "tol": float(self.tol),
            "method": self.method,
            "n": int(self.eigenvectors.shape[0]),
            "k": int(self.k),
            "meta": self.meta,
        }


def _residuals(A, vals, vecs):
    R = A @ vecs - vecs * vals[None, :]
    return np.linalg.norm(R, axis=0)


def _sort_pairs(vals, vecs, k):
    order = np.argsort(vals, kind="stable")[:k]
    vecs = vecs[:, order]
    # sign convention: largest-magnitude entry positive, so output is reproducible
    piv = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[piv, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vals[order], vecs * signs[None, :]


def smallest_eigs(H, k=1, tol=1e-10, seed=0, method="auto", maxiter=None, strict=False, x0=None):
    """The ``k`` smallest eigenpairs of a symmetric positive semidefinite operator.

    Parameters
    ----------
    H : SparseSymmetricOperator, sparse matrix or ndarray
    k : int
        Number of pairs, ``1 <= k <= n``.
    tol : float
        Residual tolerance relative to ``||H||_1``; the absolute value is stored
        on the result.
    seed : int
        Seeds the starting vectors of the iterative solvers.
    method : {"auto", "dense", "shift_invert", "lobpcg"}
    strict : bool
        Raise :class:`NotConverged` instead of returning a flagged result.
    x0 : ndarray, optional
        Starting vector(s) for the iterative solvers, e.g. a nearby eigenvector.
    """
    A = as_matrix(H)
    n = A.shape[0]
    if not 1 <= k <= n:
        raise InvalidParams(f"need 1 <= k <= n, got k={k}, n={n}")
    if not tol > 0:
        raise InvalidParams("tol must be positive")
    scale = norm1(A)
    atol = tol * max(scale, 1.0)
    if method == "auto":
        if n <= DENSE_MAX:
            method = "dense"
        elif n <= SHIFT_INVERT_MAX:
            method = "shift_invert"
        else:
            method = "lobpcg"
    if method == "dense" or n <= max(2 * k + 2, 8):
        dense = A.toarray() if sp.issparse(A) else A
        vals, vecs = la.eigh(dense, subset_by_index=[0, k - 1])
        iters, method = 1, "dense"
    elif method == "shift_invert":
        vals, vecs, iters = _shift_invert(A, k, scale, seed, maxiter, x0)
    elif method == "lobpcg":
        vals, vecs, iters = _lobpcg(A, k, atol, scale, seed, maxiter, x0)
    else:
        raise InvalidParams(f"unknown method {method!r}")
    vals, vecs = _sort_pairs(np.asarray(vals, dtype=float), np.asarray(vecs, dtype=float), k)
    res = _residuals(A, vals, vecs)
    ok = bool(np.all(res <= atol))
    out = SpectralResult(vals, vecs, res, int(iters), ok, atol, method)
    if strict and not ok:
        raise NotConverged(f"max residual {res.max():.3e} exceeds {atol:.3e}")
    return out


def _start(n, m, seed):
    return np.random.default_rng(seed).standard_normal((n, m))


def _start_block(n, m, seed, x0):
    X = _start(n, m, seed)
    if x0 is not None:
        x0 = np.asarray(x0, dtype=float).reshape(n, -1)
        j = min(m, x0.shape[1])
        X[:, :j] = x0[:, :j]
    return X


def _shift_invert(A, k, scale, seed, maxiter, x0=None):
    n = A.shape[0]
    sigma = -max(1e-4 * scale, 1e-12)
    # the factorisation is done once here so the inverse map is explicit
    lu = spla.splu((A - sigma * sp.identity(n, format="csr")).tocsc())
    op = spla.LinearOperator((n, n), matvec=lu.solve, dtype=float)
    v0 = _start_block(n, 1, seed, x0)[:, 0]
    mu, vecs = spla.eigsh(op, k=k, which="LA", v0=v0, tol=0, maxiter=maxiter or 20 * n)
    return sigma + 1.0 / mu, vecs, 1


def _lobpcg(A, k, atol, scale, seed, maxiter, x0=None):
    import pyamg

    n = A.shape[0]
    shift = max(1e-4 * scale, 1e-12)
    # pyamg's smoother setup draws from the global numpy RNG; pin it so solves are reproducible
    state = np.random.get_state()
    np.random.seed(seed % 2**32)
    try:
        ml = pyamg.smoothed_aggregation_solver((A + shift * sp.identity(n, format="csr")).tocsr(), max_coarse=500)
    finally:
        np.random.set_state(state)
    M = ml.aspreconditioner(cycle="V")
    m = k if k == 1 else k + min(2, n - k)
    X = _start_block(n, m, seed, x0)
    vals, vecs = spla.lobpcg(A, X, M=M, tol=atol, maxiter=maxiter or 400, largest=False)
    return vals, vecs, maxiter or 400


def dense_eigs(H):
    """Full dense eigendecomposition, used as an oracle for small problems."""
    A = as_matrix(H)
    A = A.toarray() if sp.issparse(A) else A
    return la.eigh(A)


# ---------------------------------------------------------------------------
# Chebyshev machinery


@dataclass
class HeatActionParams:
    t: float
    tolerance: float = 1e-10
    spectral_bound: float | None = None

    def __post_init__(self):
        if not self.t >= 0:
            raise InvalidParams("t must be nonnegative")
        if not self.tolerance > 0:
            raise InvalidParams("tolerance must be positive")
        if self.spectral_bound is not None and not self.spectral_bound >= 0:
            raise InvalidParams("spectral_bound must be nonnegative")


def _cheb_apply(A, L, coeffs, f):
    """sum_k c_k T_k(2A/L - I) f by the three-term recurrence."""
    if L <= 0:
        return _cheb_zero(coeffs, f)
    a = 2.0 / L

    def B(x):
        return a * (A @ x) - x

    t0 = f
    out = coeffs[0] * t0
    if len(coeffs) == 1:
        return out
    t1 = B(f)
    out = out + coeffs[1] * t1
    for c in coeffs[2:]:
        t0, t1 = t1, 2.0 * B(t1) - t0
        out = out + c * t1
    return out


def _cheb_zero(coeffs, f):
    # L = 0 means A = 0: every T_k(-1) = (-1)^k
    signs = (-1.0) ** np.arange(len(coeffs))
    return float(np.dot(coeffs, signs)) * f


def exp_coefficients(z, tol):
    """Chebyshev coefficients of exp(-z (y + 1)) on [-1, 1] with tail sum <= tol.

    Returns ``(coeffs, tail)``. Uses exp(-z y) = I_0(z) + 2 sum (-1)^k I_k(z) T_k(y);
    the scaled Bessel function ive absorbs the exp(-z) prefactor.
    """
    if z == 0:
        return np.array([1.0]), 0.0
    K = int(math.ceil(math.sqrt(2 * z * (math.log(1 / tol) + 20)))) + 40
    while True:
        ks = np.arange(K + 1)
        c = 2.0 * (-1.0) ** ks * ive(ks, z)
        c[0] *= 0.5
        mag = np.abs(c)
        tails = np.concatenate([np.cumsum(mag[::-1])[::-1][1:], [0.0]])
        if mag[-1] < 1e-3 * tol or K > 10**6:
            break
        K *= 2
    m = int(np.argmax(tails <= tol))
    return c[: m + 1], float(tails[m])


def apply_heat(H, params, f, return_info=False):
    """v = exp(-t H) f via a Chebyshev expansion on [0, spectral_bound].

    ``f`` may be a vector or an ``(n, m)`` block. The truncation error bound
    ``tail * ||f||`` is reported in ``info`` together with the degree.
    """
    A = as_matrix(H)
    f = np.asarray(f, dtype=float)
    if f.shape[0] != A.shape[0]:
        raise InvalidParams("vector length does not match the operator")
    if not np.all(np.isfinite(f)):
        raise InvalidParams("f must be finite")
    L = params.spectral_bound if params.spectral_bound is not None else gershgorin(A)
    L = max(L, 0.0)
    z = params.t * L / 2
    coeffs, tail = exp_coefficients(z, params.tolerance)
    v = _cheb_apply(A, L, coeffs, f) if L > 0 else f.copy()
    if return_info:
        return v, {"degree": len(coeffs) - 1, "truncation_error": tail, "spectral_bound": L}
    return v


def cheb_coefficients(fn, L, degree):
    """Interpolation coefficients of fn on [0, L] at the Chebyshev points of the first kind."""
    N = degree + 1
    y = np.cos(np.pi * (np.arange(N) + 0.5) / N)
    vals = fn(L * (y + 1) / 2)
    c = dct(vals, type=2) / N
    c[0] *= 0.5
    return c


def _smooth_step(E, upper, eps):
    """0.5 erfc((x - m) / w) with value within eps of 1 on x <= E and of 0 on x >= upper."""
    a = float(erfcinv(2 * eps))
    w = (upper - E) / (2 * a)
    m = 0.5 * (E + upper)
    return (lambda x: 0.5 * erfc((x - m) / w)), m, w


def step_filter(E, upper, L, tol, max_degree=1 << 16):
    """Chebyshev filter approximating 1{x <= E} away from (E, upper).

    Returns ``(coeffs, achieved)``; ``achieved`` is the sampled uniform error of
    the polynomial against the indicator on [0, E] and [upper, L].
    """
    if not 0 <= E < upper:
        raise InvalidParams("need 0 <= E < upper")
    if upper >= L:
        # nothing above the band: the identity is an exact filter
        return np.array([1.0]), 0.0
    g, _, _ = _smooth_step(E, upper, tol / 4)
    deg = 64
    while True:
        c = cheb_coefficients(g, L, deg)
        mag = np.abs(c)
        tails = np.concatenate([np.cumsum(mag[::-1])[::-1][1:], [0.0]])
        m = int(np.argmax(tails <= tol / 4))
        c = c[: m + 1]
        achieved = _filter_error(c, E, upper, L)
        if achieved <= tol or deg >= max_degree:
            return c, achieved
        deg *= 2


def _filter_error(c, E, upper, L, n=4000):
    from numpy.polynomial import chebyshev as C

    # sample densely on both sides, including the Chebyshev-clustered ends
    left = np.linspace(0.0, E, n)
    right = np.concatenate([np.linspace(upper, L, n), upper + (L - upper) * (1 - np.cos(np.linspace(0, np.pi / 2, n)))])
    yl = 2 * left / L - 1
    yr = 2 * right / L - 1
    err_l = np.abs(C.chebval(yl, c) - 1.0).max()
    err_r = np.abs(C.chebval(yr, c)).max()
    return float(max(err_l, err_r))


def _interval_top(I):
    if np.isscalar(I):
        return float(I)
    lo, hi = I
    if lo > 0:
        raise InvalidParams("intervals must start at 0 (or below)")
    return float(hi)


def eigenpairs_below(H, E, tol=1e-10, k_start=4, k_max=64, seed=0):
    """Eigenpairs with eigenvalue <= E, growing k until one lies above E.

    Returns ``(SpectralResult, complete)`` where ``complete`` is False when the
    cap ``k_max`` was reached without seeing an eigenvalue above ``E``.
    """
    A = as_matrix(H)
    n = A.shape[0]
    k = min(k_start, n)
    while True:
        res = smallest_eigs(A, k=k, tol=tol, seed=seed)
        if res.eigenvalues[-1] > E or k == n:
            complete = True
            break
        if k >= k_max:
            complete = False
            break
        k = min(2 * k, k_max, n)
    sel = res.eigenvalues <= E
    out = SpectralResult(
        res.eigenvalues[sel],
        res.eigenvectors[:, sel],
        res.residuals[sel],
        res.iterations,
        res.converged,
        res.tol,
        res.method,
        {"k_computed": int(res.k), "next_eigenvalue": float(res.eigenvalues[~sel][0]) if not np.all(sel) else None},
    )
    return out, complete


def spectral_projector_apply(H, I, f, via="eigenpairs", tol=1e-8, gap=None, k_max=64, seed=0, return_info=False):
    """Apply P_I(H) for I = [0, E] to a vector (or block).

    ``via="eigenpairs"`` projects onto computed eigenvectors with eigenvalue in I.
    ``via="polynomial_filter"`` applies a Chebyshev approximation of the indicator
    whose transition band is (E, gap); ``gap`` is the next eigenvalue above E (or
    a lower estimate of it) and is computed when not supplied. Raises
    :class:`GapUnresolved` when an eigenvalue lies within ``tol`` of E.
    """
    A = as_matrix(H)
    f = np.asarray(f, dtype=float)
    E = _interval_top(I)
    info = {"via": via, "E": E}
    if via == "eigenpairs" or gap is None:
        pairs, complete = eigenpairs_below(A, E + tol, tol=min(tol, 1e-10), k_max=k_max, seed=seed)
        nxt = pairs.meta["next_eigenvalue"]
        if np.any(np.abs(pairs.eigenvalues - E) <= tol) or (nxt is not None and abs(nxt - E) <= tol):
            raise GapUnresolved(f"an eigenvalue lies within {tol:g} of E = {E:g}")
        if not complete:
            raise GapUnresolved(f"more than {k_max} eigenvalues lie in [0, {E:g}]")
        info.update(rank=int(pairs.k), next_eigenvalue=nxt)
        if gap is None:
            gap = nxt
    if via == "eigenpairs":
        V = pairs.eigenvectors
        out = V @ (V.T @ f)
    elif via == "polynomial_filter":
        if gap is None or not gap > E:
            raise GapUnresolved("no spectral gap above E")
        L = gershgorin(A)
        c, achieved = step_filter(E, gap, L, tol)
        out = _cheb_apply(A, L, c, f)
        info.update(degree=len(c) - 1, filter_error=achieved, gap=float(gap), spectral_bound=L)
    else:
        raise InvalidParams(f"unknown route {via!r}")
    return (out, info) if return_info else out


# ---------------------------------------------------------------------------
# Semigroup differences


@dataclass
class NormEstimate:
    """Power-iteration estimate of an operator norm.

    ``lower`` is a certified lower bound: the largest ``||Dv||`` over unit probes
    minus the accumulated Chebyshev error.
    """

    lower: float
    estimate: float
    residual: float
    iterations: int
    probes: int
    heat_error: float

    def to_dict(self):
        return {k: (float(v) if isinstance(v, float) else v) for k, v in self.__dict__.items()}


def semigroup_diff_norm(H1, H2, t=1.0, probes=4, embed=None, tol=1e-10, seed=0, maxiter=300, rtol=1e-4):
    """Lower estimate of ||exp(-t H1) - Z exp(-t H2) Z^T||_2.

    ``Z`` extends vectors on the dofs of H2 by zero into the dof space of H1;
    ``embed`` lists the H1 index of each H2 dof. When omitted it is derived from
    the operators' grids, or taken as the identity for equal sizes.
    """
    A1 = as_matrix(H1)
    A2 = as_matrix(H2)
    n1, n2 = A1.shape[0], A2.shape[0]
    if embed is None:
        if n1 == n2:
            embed = np.arange(n1)
        elif getattr(H1, "grid", None) is not None and getattr(H2, "grid", None) is not None:
            from .discretize import embedding

            embed = embedding(H2.grid, H1.grid)
        else:
            raise InvalidParams("cannot infer the embedding between operators of different size")
    embed = np.asarray(embed, dtype=np.int64)
    if embed.shape != (n2,):
        raise InvalidParams("embedding has the wrong length")
    p1 = HeatActionParams(t, tol, gershgorin(A1))
    p2 = HeatActionParams(t, tol, gershgorin(A2))

    def D(X):
        Y = apply_heat(A1, p1, X)
        Y[embed] -= apply_heat(A2, p2, X[embed])
        return Y

    heat_err = 2 * tol
    X = _start(n1, probes, seed)
    X /= np.linalg.norm(X, axis=0)
    prev = None
    it = 0
    est = 0.0
    res = float("inf")
    for it in range(1, maxiter + 1):
        Y = D(X)
        norms = np.linalg.norm(Y, axis=0)
        est = float(norms.max())
        j = int(np.argmax(norms))
        theta = float(X[:, j] @ Y[:, j])
        res = float(np.linalg.norm(Y[:, j] - theta * X[:, j]))
        if est == 0.0:
            break
        if prev is not None and abs(est - prev) <= rtol * est:
            break
        prev = est
        norms[norms == 0] = 1.0
        X = Y / norms
    return NormEstimate(max(est - heat_err, 0.0), est, res, it, probes, heat_err)
