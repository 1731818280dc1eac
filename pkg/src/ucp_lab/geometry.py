"""Convex host domains, ball-union obstacles and the point-set constructions on them.

All objects are immutable after construction. Points are numpy arrays with the
spatial axis last, so ``contains`` and friends accept a single point ``(d,)`` or a
cloud ``(n, d)``.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import cKDTree

from .errors import InvalidParams, UnboundedDomain

KINDS = ("box", "ball", "halfspaces", "whole_space")


def _as_points(x, dim):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != dim:
        raise InvalidParams(f"points have last axis {x.shape[-1]}, expected {dim}")
    return x


@dataclass(frozen=True, eq=False)
class ConvexDomain:
    """A convex region G of R^d.

    Use the constructors :meth:`box`, :meth:`ball`, :meth:`halfspaces` and
    :meth:`whole_space` rather than calling the dataclass directly. Half-spaces
    are stored as pairs ``(n, b)`` describing ``{x : n.x <= b}`` with ``|n| = 1``.
    """

    kind: str
    dim: int
    lo: tuple = ()
    hi: tuple = ()
    center: tuple = ()
    radius: float = 0.0
    normals: tuple = ()
    offsets: tuple = ()
    interior_point: tuple = ()
    truncation: "ConvexDomain | None" = None

    # -- constructors -------------------------------------------------------
    @classmethod
    def box(cls, lo, hi):
        lo = tuple(float(v) for v in lo)
        hi = tuple(float(v) for v in hi)
        if len(lo) != len(hi):
            raise InvalidParams("box corners have different dimensions")
        if any(a >= b for a, b in zip(lo, hi)):
            raise InvalidParams(f"box needs lo < hi on every axis, got {lo} / {hi}")
        return cls(kind="box", dim=len(lo), lo=lo, hi=hi)

    @classmethod
    def cube(cls, half_width, dim=3, center=None):
        c = np.zeros(dim) if center is None else np.asarray(center, float)
        return cls.box(c - half_width, c + half_width)

    @classmethod
    def ball(cls, center, radius):
        center = tuple(float(v) for v in center)
        if not radius > 0:
            raise InvalidParams(f"ball radius must be positive, got {radius}")
        return cls(kind="ball", dim=len(center), center=center, radius=float(radius))

    @classmethod
    def halfspaces(cls, normals, offsets, interior_point=None):
        normals = np.atleast_2d(np.asarray(normals, dtype=float))
        offsets = np.asarray(offsets, dtype=float).reshape(-1)
        if normals.shape[0] == 0 or normals.shape[0] != offsets.shape[0]:
            raise InvalidParams("need one offset per normal and at least one half-space")
        norms = np.linalg.norm(normals, axis=1)
        if np.any(norms == 0):
            raise InvalidParams("zero normal vector")
        normals = normals / norms[:, None]
        offsets = offsets / norms
        dim = normals.shape[1]
        if interior_point is None:
            center, r = _chebyshev_center(normals, offsets)
            if not r > 0:
                raise InvalidParams("half-space intersection has empty interior")
            interior_point = center
        interior_point = np.asarray(interior_point, dtype=float)
        if np.any(normals @ interior_point >= offsets):
            raise InvalidParams("stored interior point is not strictly inside")
        return cls(
            kind="halfspaces",
            dim=dim,
            normals=tuple(map(tuple, normals)),
            offsets=tuple(offsets),
            interior_point=tuple(interior_point),
        )

    @classmethod
    def whole_space(cls, truncation=None, dim=3):
        if truncation is not None:
            if not isinstance(truncation, ConvexDomain):
                lo, hi = truncation
                truncation = cls.box(lo, hi)
            if truncation.kind != "box":
                raise InvalidParams("whole-space truncation must be a box")
            dim = truncation.dim
        return cls(kind="whole_space", dim=dim, truncation=truncation)

    @classmethod
    def ball_polytope(cls, center, radius, n_facets=1000, extra_normals=(), extra_offsets=()):
        """Outer polyhedral approximation of a ball, optionally cut by extra half-spaces.

        Facets are tangent planes at a Fibonacci lattice of directions (``dim == 3``).
        """
        c = np.asarray(center, dtype=float)
        if c.shape != (3,):
            raise InvalidParams("ball_polytope is implemented for d = 3")
        i = np.arange(n_facets) + 0.5
        phi = np.arccos(1 - 2 * i / n_facets)
        theta = np.pi * (1 + 5**0.5) * i
        u = np.stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)], axis=1)
        normals = np.vstack([u, np.atleast_2d(np.asarray(extra_normals, float).reshape(-1, 3))])
        offsets = np.concatenate([u @ c + radius, np.asarray(extra_offsets, float).reshape(-1)])
        return cls.halfspaces(normals, offsets)

    # -- queries ------------------------------------------------------------
    @property
    def is_bounded(self):
        if self.kind in ("box", "ball"):
            return True
        if self.kind == "whole_space":
            return False
        return math.isfinite(_halfspace_extent(self))

    def contains(self, x, tol=0.0):
        """Closed-set membership, with an optional outward tolerance."""
        x = _as_points(x, self.dim)
        if self.kind == "box":
            lo = np.asarray(self.lo) - tol
            hi = np.asarray(self.hi) + tol
            return np.all((x >= lo) & (x <= hi), axis=-1)
        if self.kind == "ball":
            r = np.linalg.norm(x - np.asarray(self.center), axis=-1)
            return r <= self.radius + tol
        if self.kind == "halfspaces":
            n = np.asarray(self.normals)
            return np.all(x @ n.T <= np.asarray(self.offsets) + tol, axis=-1)
        if self.truncation is None:
            return np.ones(x.shape[:-1], dtype=bool)
        return self.truncation.contains(x, tol)

    def effective(self):
        """The domain numerics act on: the truncation box for whole space, else self."""
        if self.kind == "whole_space":
            if self.truncation is None:
                raise UnboundedDomain("whole-space domain has no truncation box")
            return self.truncation
        return self

    def bounding_box(self):
        if self.kind == "box":
            return np.array(self.lo), np.array(self.hi)
        if self.kind == "ball":
            c = np.array(self.center)
            return c - self.radius, c + self.radius
        if self.kind == "whole_space":
            return self.effective().bounding_box()
        n = np.asarray(self.normals)
        b = np.asarray(self.offsets)
        lo = np.empty(self.dim)
        hi = np.empty(self.dim)
        for k in range(self.dim):
            e = np.zeros(self.dim)
            e[k] = 1.0
            for sign, out in ((1.0, hi), (-1.0, lo)):
                res = linprog(-sign * e, A_ub=n, b_ub=b, bounds=[(None, None)] * self.dim, method="highs")
                if res.status == 3:
                    raise UnboundedDomain("half-space intersection is unbounded")
                out[k] = sign * -res.fun
        return lo, hi

    def volume(self):
        if self.kind == "box":
            return float(np.prod(np.subtract(self.hi, self.lo)))
        if self.kind == "ball":
            return unit_ball_volume(self.dim) * self.radius**self.dim
        if self.kind == "whole_space":
            return self.effective().volume() if self.truncation is not None else math.inf
        return None

    def to_dict(self):
        out = {"kind": self.kind, "dim": self.dim}
        if self.kind == "box":
            out.update(lo=list(self.lo), hi=list(self.hi))
        elif self.kind == "ball":
            out.update(center=list(self.center), radius=self.radius)
        elif self.kind == "halfspaces":
            out.update(normals=[list(n) for n in self.normals], offsets=list(self.offsets))
        elif self.truncation is not None:
            out.update(truncation_lo=list(self.truncation.lo), truncation_hi=list(self.truncation.hi))
        return out


def unit_ball_volume(d):
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def _chebyshev_center(normals, offsets):
    """Largest inscribed ball of {x : N x <= b}; radius is +inf when unbounded."""
    m, d = normals.shape
    c = np.zeros(d + 1)
    c[-1] = -1.0
    a_ub = np.hstack([normals, np.linalg.norm(normals, axis=1)[:, None]])
    bounds = [(None, None)] * d + [(0, None)]
    res = linprog(c, A_ub=a_ub, b_ub=offsets, bounds=bounds, method="highs")
    if res.status == 3:
        return np.zeros(d), math.inf
    if res.status != 0:
        return np.zeros(d), 0.0
    return res.x[:d], float(res.x[-1])


def _halfspace_extent(G):
    _, r = _chebyshev_center(np.asarray(G.normals), np.asarray(G.offsets))
    if math.isinf(r):
        return math.inf
    try:
        lo, hi = G.bounding_box()
    except UnboundedDomain:
        return math.inf
    return float(np.max(hi - lo))


# ---------------------------------------------------------------------------
# Ball unions


@dataclass(frozen=True, eq=False)
class BallUnion:
    """Finite union of closed balls; also used for the fattening B of an obstacle set."""

    centers: np.ndarray
    radii: np.ndarray
    dim: int = 3

    def __post_init__(self):
        centers = np.asarray(self.centers, dtype=float).reshape(-1, self.dim)
        radii = np.asarray(self.radii, dtype=float).reshape(-1)
        if centers.shape[0] != radii.shape[0]:
            raise InvalidParams("one radius per center required")
        if np.any(radii <= 0):
            raise InvalidParams("ball radii must be positive")
        centers.setflags(write=False)
        radii.setflags(write=False)
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "radii", radii)

    @classmethod
    def empty(cls, dim=3):
        return cls(np.zeros((0, dim)), np.zeros(0), dim)

    @classmethod
    def from_centers(cls, centers, radius):
        centers = np.atleast_2d(np.asarray(centers, dtype=float))
        return cls(centers, np.full(centers.shape[0], float(radius)), centers.shape[1])

    def __len__(self):
        return self.radii.shape[0]

    def contains(self, x, tol=0.0):
        x = _as_points(x, self.dim)
        flat = x.reshape(-1, self.dim)
        out = np.zeros(flat.shape[0], dtype=bool)
        for c, r in zip(self.centers, self.radii):
            # squared distances avoid a sqrt per node
            out |= np.sum((flat - c) ** 2, axis=1) <= (r + tol) ** 2
        return out.reshape(x.shape[:-1])

    def fattened(self, eps):
        """The eps-neighbourhood of the union (ball radii grown by eps)."""
        return BallUnion(self.centers, self.radii + eps, self.dim)

    def with_radius(self, r):
        return BallUnion(self.centers, np.full(len(self), float(r)), self.dim)

    def subset(self, idx):
        idx = np.asarray(idx, dtype=int)
        return BallUnion(self.centers[idx], self.radii[idx], self.dim)

    def union(self, other):
        return BallUnion(
            np.vstack([self.centers, other.centers]), np.concatenate([self.radii, other.radii]), self.dim
        )

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["cx", "cy", "cz", "r"] if self.dim == 3 else [f"c{i}" for i in range(self.dim)] + ["r"])
            for c, r in zip(self.centers, self.radii):
                w.writerow([repr(float(v)) for v in c] + [repr(float(r))])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise InvalidParams(f"{path}: empty ball file")
        body = rows[1:] if not _is_numeric_row(rows[0]) else rows
        data = np.array([[float(v) for v in row] for row in body if row], dtype=float)
        if data.size == 0:
            return cls.empty(len(rows[0]) - 1)
        return cls(data[:, :-1], data[:, -1], data.shape[1] - 1)

    def to_dict(self):
        return {"centers": self.centers.tolist(), "radii": self.radii.tolist()}


def _is_numeric_row(row):
    try:
        [float(v) for v in row]
        return True
    except ValueError:
        return False


def random_ball_union(G, count, radius, seed, min_gap=0.0, max_tries=100000):
    """Non-overlapping balls of one radius placed uniformly at random inside a box.

    Centres keep distance ``2 * radius + min_gap`` from each other and ``radius``
    from the box faces, so the union sits in the interior of G.
    """
    if G.kind != "box":
        raise InvalidParams("random_ball_union needs a box domain")
    rng = np.random.default_rng(seed)
    lo = np.asarray(G.lo) + radius
    hi = np.asarray(G.hi) - radius
    if np.any(hi <= lo):
        raise InvalidParams("box too small for the requested radius")
    centers = []
    for _ in range(max_tries):
        p = rng.uniform(lo, hi)
        if all(np.linalg.norm(p - q) >= 2 * radius + min_gap for q in centers):
            centers.append(p)
            if len(centers) == count:
                return BallUnion.from_centers(np.array(centers), radius)
    raise InvalidParams(f"could only place {len(centers)} of {count} balls")


# ---------------------------------------------------------------------------
# Relative denseness


@dataclass(frozen=True)
class DensenessCertificate:
    R: float
    delta: float
    verified: bool
    sample_spacing: float
    worst_point: tuple
    margin: float
    n_samples: int = 0
    worst_witness: tuple | None = None

    def to_dict(self):
        return {
            "R": self.R,
            "delta": self.delta,
            "verified": self.verified,
            "sample_spacing": self.sample_spacing,
            "worst_point": list(self.worst_point),
            "margin": self.margin,
            "n_samples": self.n_samples,
            "worst_witness": None if self.worst_witness is None else list(self.worst_witness),
        }


def sample_grid(G, spacing):
    """Grid points with the given spacing over the bounding box that lie in closure(G)."""
    if spacing <= 0:
        raise InvalidParams("sample spacing must be positive")
    dom = G.effective() if G.kind == "whole_space" else G
    if not dom.is_bounded:
        raise UnboundedDomain("cannot sample an unbounded domain")
    lo, hi = dom.bounding_box()
    axes = []
    for a, b in zip(lo, hi):
        n = int(math.floor((b - a) / spacing + 1e-9)) + 1
        ax = a + spacing * np.arange(n)
        if b - ax[-1] > 1e-9 * spacing:
            ax = np.append(ax, b)
        axes.append(ax)
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dom.dim)
    return pts[dom.contains(pts, tol=1e-12)]


def _nearest_witness(B, delta, pts):
    eligible = np.flatnonzero(B.radii >= delta)
    if eligible.size == 0:
        return np.full(pts.shape[0], np.inf), np.full(pts.shape[0], -1)
    tree = cKDTree(B.centers[eligible])
    dist, j = tree.query(pts)
    return dist, eligible[j]


def check_relative_denseness(B, G, R, delta, sample_spacing):
    """Certify that every sampled x in G has a delta-ball of B inside B_R(x).

    The witness for x is the centre y of a ball of B with radius >= delta and
    ``|x - y| + delta <= R``. ``margin`` is the smallest slack ``R - delta - |x - y|``.
    """
    if not (delta > 0 and R > 0) or delta > R:
        raise InvalidParams(f"need 0 < delta <= R, got delta={delta}, R={R}")
    if sample_spacing <= 0:
        raise InvalidParams("sample spacing must be positive")
    if sample_spacing > delta / 2 * (1 + 1e-12):
        raise InvalidParams(f"sample spacing {sample_spacing} exceeds delta/2 = {delta / 2}")
    if G.kind == "whole_space" and G.truncation is None:
        raise UnboundedDomain("whole-space domain needs a truncation box for sampling")
    pts = sample_grid(G, sample_spacing)
    dist, witness = _nearest_witness(B, delta, pts)
    margins = R - delta - dist
    k = int(np.argmin(margins))
    worst = float(margins[k])
    w = None if witness[k] < 0 else tuple(B.centers[witness[k]].tolist())
    return DensenessCertificate(
        R=float(R),
        delta=float(delta),
        verified=bool(worst >= 0),
        sample_spacing=float(sample_spacing),
        worst_point=tuple(pts[k].tolist()),
        margin=worst,
        n_samples=int(pts.shape[0]),
        worst_witness=w,
    )


def certified_radius(B, G, delta, sample_spacing):
    """Smallest covering radius R for which the sampled check passes, padded by the
    sampling grid's own covering radius so that points between samples are covered too."""
    pts = sample_grid(G, sample_spacing)
    dist, _ = _nearest_witness(B, delta, pts)
    return float(delta + dist.max() + math.sqrt(G.dim) * sample_spacing / 2)


# ---------------------------------------------------------------------------
# Skeletons and Voronoi cells


@dataclass(frozen=True, eq=False)
class Skeleton:
    points: np.ndarray
    separation: float
    cover_radius: float
    source_count: int
    accepted: tuple = ()
    spacing_violations: tuple = field(default=())

    def __len__(self):
        return self.points.shape[0]

    def to_dict(self):
        return {
            "points": self.points.tolist(),
            "separation": self.separation,
            "cover_radius": self.cover_radius,
            "source_count": self.source_count,
            "accepted": list(self.accepted),
            "spacing_violations": list(self.spacing_violations),
        }


def build_skeleton(candidates, R):
    """Greedy maximal R-separated subset, scanning candidates in input order.

    ``spacing_violations`` lists skeleton indices whose nearest other skeleton
    point is farther than 6R; for arbitrary finite inputs this is reported only.
    """
    pts = np.atleast_2d(np.asarray(candidates, dtype=float))
    if pts.size == 0 or pts.shape[0] == 0:
        raise InvalidParams("need at least one candidate point")
    if not R > 0:
        raise InvalidParams(f"separation must be positive, got {R}")
    accepted = [0]
    for i in range(1, pts.shape[0]):
        d = np.linalg.norm(pts[accepted] - pts[i], axis=1)
        if d.min() >= R:
            accepted.append(i)
    sigma = pts[accepted].copy()
    violations = []
    if sigma.shape[0] >= 2:
        dmat = np.linalg.norm(sigma[:, None, :] - sigma[None, :, :], axis=-1)
        np.fill_diagonal(dmat, np.inf)
        violations = np.flatnonzero(dmat.min(axis=1) > 6 * R).tolist()
    sigma.setflags(write=False)
    return Skeleton(
        points=sigma,
        separation=float(R),
        cover_radius=3.0 * R,
        source_count=int(pts.shape[0]),
        accepted=tuple(accepted),
        spacing_violations=tuple(violations),
    )


def voronoi_assign(skeleton, x):
    """Index of the nearest skeleton point; ties go to the smallest index.

    Accepts one point (returns ``int``) or an ``(n, d)`` array (returns an int array).
    """
    sigma = skeleton.points if isinstance(skeleton, Skeleton) else np.atleast_2d(skeleton)
    if sigma.shape[0] == 0:
        raise InvalidParams("empty skeleton")
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    out = np.empty(pts.shape[0], dtype=int)
    chunk = max(1, 2_000_000 // max(1, sigma.shape[0]))
    for s in range(0, pts.shape[0], chunk):
        block = pts[s : s + chunk]
        d2 = np.sum((block[:, None, :] - sigma[None, :, :]) ** 2, axis=-1)
        out[s : s + chunk] = np.argmin(d2, axis=1)  # first minimum wins
    return int(out[0]) if single else out


def inradius_estimate(G):
    """Radius of the largest ball inside G; ``math.inf`` for unbounded domains.

    Exact for boxes and balls. Half-space intersections use the Chebyshev-centre
    linear program (HiGHS, feasibility tolerance 1e-7).
    """
    if G.kind == "box":
        return float(np.min(np.subtract(G.hi, G.lo)) / 2)
    if G.kind == "ball":
        return float(G.radius)
    if G.kind == "whole_space":
        return math.inf
    _, r = _chebyshev_center(np.asarray(G.normals), np.asarray(G.offsets))
    return float(r)


def inscribed_center(G):
    """Centre of a largest inscribed ball (Chebyshev centre)."""
    if G.kind == "box":
        return (np.asarray(G.lo) + np.asarray(G.hi)) / 2
    if G.kind == "ball":
        return np.asarray(G.center)
    if G.kind == "whole_space":
        if G.truncation is None:
            return np.zeros(G.dim)
        return inscribed_center(G.truncation)
    c, _ = _chebyshev_center(np.asarray(G.normals), np.asarray(G.offsets))
    return c


# ---------------------------------------------------------------------------
# Named example geometries


@dataclass(frozen=True, eq=False)
class CubeUnion:
    """Interior of a union of closed lattice cubes ``k*ell + [0, ell]^d``.

    Carries the relative-denseness parameters guaranteed for a ball pool built on it.
    """

    cells: np.ndarray
    ell: float
    dim: int
    denseness_R: float
    denseness_delta: float

    def contains(self, x, tol=0.0):
        x = _as_points(x, self.dim)
        flat = x.reshape(-1, self.dim)
        out = np.zeros(flat.shape[0], dtype=bool)
        for k in self.cells:
            lo = k * self.ell - tol
            hi = (k + 1) * self.ell + tol
            out |= np.all((flat >= lo) & (flat <= hi), axis=1)
        return out.reshape(x.shape[:-1])

    def bounding_box(self):
        return self.cells.min(axis=0) * self.ell, (self.cells.max(axis=0) + 1) * self.ell

    @property
    def is_bounded(self):
        return True

    def volume(self):
        return float(self.cells.shape[0] * self.ell**self.dim)

    def to_domain(self):
        """The equivalent box when the cells fill a rectangular block."""
        lo = self.cells.min(axis=0)
        hi = self.cells.max(axis=0) + 1
        if int(np.prod(hi - lo)) != len({tuple(c) for c in self.cells.tolist()}):
            raise InvalidParams("cells do not form a rectangular block")
        return ConvexDomain.box(lo * self.ell, hi * self.ell)


def make_ball_pool(gamma, ell, rho, offsets=None):
    """Balls ``B_rho(k*ell + offset_k)``, one per lattice cell k in ``gamma``.

    ``offsets`` are positions relative to the cell's lower corner; default is the
    cell centre. Returns the cube-union host and the ball union.
    """
    cells = np.atleast_2d(np.asarray(gamma, dtype=int))
    d = cells.shape[1]
    if not (0 < rho < ell / 2):
        raise InvalidParams(f"need 0 < rho < ell/2, got rho={rho}, ell={ell}")
    if offsets is None:
        off = np.full(cells.shape, ell / 2)
    else:
        off = np.asarray(offsets, dtype=float)
        if off.ndim == 1:
            off = np.broadcast_to(off, cells.shape)
        if off.shape != cells.shape:
            raise InvalidParams("need one offset per cell")
    if np.any(off - rho <= 0) or np.any(off + rho >= ell):
        raise InvalidParams("a ball escapes its cell")
    centers = cells * ell + off
    host = CubeUnion(cells=cells, ell=float(ell), dim=d, denseness_R=math.sqrt(d) * ell, denseness_delta=float(rho))
    return host, BallUnion.from_centers(centers, rho)


def block_cells(shape):
    """Lattice indices of an ``n1 x n2 x ...`` block of cells starting at the origin."""
    return np.array(list(itertools.product(*[range(n) for n in shape])), dtype=int)


def halving_radii(r0):
    """Radius profile ``k -> r0 * 2**(-|k|_inf)``."""
    return lambda k: r0 * 2.0 ** (-int(np.max(np.abs(k))))


def make_appendix_example(radii, box_half_width, d=3):
    """Perforated space: closed balls of radius ``r_k < 1/2`` at every lattice point.

    ``radii`` is a constant, a sequence (one per lattice point, in lexicographic
    order) or a callable ``k -> r_k``. Centres are the integer points of
    ``[-w, w]^d``; the truncation box is ``[-w - 1/2, w + 1/2]^d``.
    """
    w = int(math.floor(box_half_width))
    pts = np.array(list(itertools.product(range(-w, w + 1), repeat=d)), dtype=float)
    if callable(radii):
        r = np.array([radii(p) for p in pts.astype(int)], dtype=float)
    elif np.ndim(radii) == 0:
        r = np.full(pts.shape[0], float(radii))
    else:
        r = np.asarray(radii, dtype=float).reshape(-1)
        if r.shape[0] != pts.shape[0]:
            raise InvalidParams(f"need {pts.shape[0]} radii, got {r.shape[0]}")
    if np.any(r <= 0) or np.any(r >= 0.5):
        raise InvalidParams("appendix radii must lie in (0, 1/2)")
    half = w + 0.5
    G = ConvexDomain.whole_space(ConvexDomain.cube(half, d))
    return G, BallUnion(pts, r, d)


def lattice_points(lo, hi, step=1.0, dim=3):
    """Points of ``step * Z^d`` inside ``[lo, hi]^d``."""
    a = math.ceil(lo / step - 1e-12)
    b = math.floor(hi / step + 1e-12)
    ax = step * np.arange(a, b + 1)
    return np.stack(np.meshgrid(*([ax] * dim), indexing="ij"), axis=-1).reshape(-1, dim)

