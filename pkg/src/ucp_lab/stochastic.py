"""Monte Carlo simulation of reflected Brownian motion with obstacles.

Paths use Euler steps ``sqrt(dt) * N(0, I)`` with exact reflection at the
outer boundary: coordinate folding for boxes (and the truncation box of whole
space), radial mirroring for balls. A path hits S when a step endpoint lands in
S; the occupation time of B uses the left-endpoint rule ``dt * 1{X_k in B}``.

Every path draws from its own counter-based stream (splitmix64 keyed by seed,
stream and path index), so results do not depend on the number of threads.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numba as nb
import numpy as np

from .bounds import hit_and_run_bound, occupation_split_bound, optimal_alpha
from .errors import InvalidParams, UnsupportedReflection

Z95 = 1.959963984540054

STOP_NONE, STOP_OCCUPATION, STOP_HIT = 0, 1, 2


class TimeStepWarning(UserWarning):
    """dt is coarser than rho^2 / 100 for the wall thickness in play."""


# ---------------------------------------------------------------------------
# RNG


_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


@nb.njit(cache=True, inline="always")
def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@nb.njit(cache=True, inline="always")
def _key(seed, stream, path):
    return _mix(_mix(_mix(seed) + stream) + path)


@nb.njit(cache=True, inline="always")
def _uniform(state):
    # returns (u in (0, 1], new state)
    state = state + _GOLDEN
    z = _mix(state)
    u = (np.float64(z >> np.uint64(11)) + 1.0) * (1.0 / 9007199254740992.0)
    return u, state


@nb.njit(cache=True, inline="always")
def _normal(state, spare, has_spare):
    """One standard normal by the polar method; the second variate is kept as a spare."""
    if has_spare:
        return spare, state, 0.0, False
    while True:
        u, state = _uniform(state)
        v, state = _uniform(state)
        u = 2.0 * u - 1.0
        v = 2.0 * v - 1.0
        s = u * u + v * v
        if 0.0 < s < 1.0:
            f = math.sqrt(-2.0 * math.log(s) / s)
            return u * f, state, v * f, True


# ---------------------------------------------------------------------------
# kernel


@nb.njit(cache=True, inline="always")
def _in_balls(x, centers, radii2):
    m = centers.shape[0]
    d = x.shape[0]
    for j in range(m):
        s = 0.0
        for k in range(d):
            t = x[k] - centers[j, k]
            s += t * t
        if s <= radii2[j]:
            return True
    return False


@nb.njit(cache=True, inline="always")
def _reflect(x, kind, lo, hi, center, radius):
    n = 0
    if kind == 0:
        for k in range(x.shape[0]):
            while x[k] < lo[k] or x[k] > hi[k]:
                if x[k] < lo[k]:
                    x[k] = 2.0 * lo[k] - x[k]
                else:
                    x[k] = 2.0 * hi[k] - x[k]
                n += 1
    else:
        s = 0.0
        for k in range(x.shape[0]):
            t = x[k] - center[k]
            s += t * t
        r = math.sqrt(s)
        if r > radius:
            r_new = r
            while r_new > radius:
                r_new = abs(2.0 * radius - r_new)
                n += 1
            f = r_new / r
            for k in range(x.shape[0]):
                x[k] = center[k] + (x[k] - center[k]) * f
    return n


@nb.njit(cache=True, parallel=True)
def _kernel(x0, n_paths, nsteps, dt, seed, stream, kind, lo, hi, center, radius, s_centers, s_r2, b_centers, b_r2, stop_mode, cap):
    d = x0.shape[0]
    hit = np.zeros(n_paths, dtype=np.bool_)
    hit_time = np.full(n_paths, np.inf)
    occ = np.zeros(n_paths)
    refl = np.zeros(n_paths, dtype=np.int64)
    ends = np.zeros((n_paths, d))
    trunc = np.zeros(n_paths, dtype=np.bool_)
    sq = math.sqrt(dt)
    for p in nb.prange(n_paths):
        state = _key(seed, stream, np.uint64(p))
        x = x0.copy()
        spare = 0.0
        has_spare = False
        T = 0.0
        nref = 0
        h = False
        ht = np.inf
        stopped = False
        if _in_balls(x, s_centers, s_r2):
            h = True
            ht = 0.0
        if not (stop_mode == 2 and h):
            for k in range(nsteps):
                if _in_balls(x, b_centers, b_r2):
                    T += dt
                    if stop_mode == 1 and T > cap:
                        stopped = True
                        break
                for i in range(d):
                    z, state, spare, has_spare = _normal(state, spare, has_spare)
                    x[i] += sq * z
                nref += _reflect(x, kind, lo, hi, center, radius)
                if not h and _in_balls(x, s_centers, s_r2):
                    h = True
                    ht = (k + 1) * dt
                    if stop_mode == 2:
                        stopped = k + 1 < nsteps
                        break
        else:
            stopped = nsteps > 0
        hit[p] = h
        hit_time[p] = ht
        occ[p] = T
        refl[p] = nref
        trunc[p] = stopped
        for i in range(d):
            ends[p, i] = x[i]
    return hit, hit_time, occ, refl, ends, trunc


def splitmix_key(seed, stream, path):
    """Reference (pure Python) value of the per-path stream key."""
    mask = (1 << 64) - 1

    def mix(z):
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
        return z ^ (z >> 31)

    return mix((mix((mix(seed & mask) + stream) & mask) + path) & mask)


# ---------------------------------------------------------------------------
# data types


@dataclass
class PathConfig:
    dt: float
    n_paths: int
    seed: int
    start: tuple
    horizon: float = 1.0

    def __post_init__(self):
        if not self.dt > 0:
            raise InvalidParams("dt must be positive")
        if not self.horizon > 0:
            raise InvalidParams("horizon must be positive")
        if int(self.n_paths) != self.n_paths or self.n_paths < 1:
            raise InvalidParams("n_paths must be a positive integer")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidParams("seed must fit in 64 bits")
        self.n_paths = int(self.n_paths)
        self.seed = int(self.seed)
        self.start = tuple(float(v) for v in np.ravel(self.start))

    @property
    def nsteps(self):
        return max(1, int(round(self.horizon / self.dt)))

    @property
    def step(self):
        """Effective step: the horizon split into ``nsteps`` equal pieces."""
        return self.horizon / self.nsteps

    def with_start(self, start):
        return PathConfig(self.dt, self.n_paths, self.seed, start, self.horizon)


@dataclass(frozen=True)
class PathOutcome:
    hit_S: bool
    hit_time: float
    occupation_T: float
    exit_reflections: int


@dataclass
class PathOutcomes:
    """Per-path results as parallel arrays.

    ``truncated`` marks paths stopped early (occupation already above the cap,
    or killed at S); their occupation and endpoint are then partial.
    """

    hit: np.ndarray
    hit_time: np.ndarray
    occupation: np.ndarray
    reflections: np.ndarray
    endpoints: np.ndarray
    truncated: np.ndarray
    horizon: float

    def __len__(self):
        return len(self.hit)

    def __getitem__(self, i):
        return PathOutcome(bool(self.hit[i]), float(self.hit_time[i]), float(self.occupation[i]), int(self.reflections[i]))

    def outcomes(self):
        return [self[i] for i in range(len(self))]

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("path,hit_S,hit_time,occupation_T,exit_reflections,truncated\n")
            for i in range(len(self)):
                ht = "" if not np.isfinite(self.hit_time[i]) else repr(float(self.hit_time[i]))
                fh.write(
                    f"{i},{int(self.hit[i])},{ht},{float(self.occupation[i])!r},{int(self.reflections[i])},{int(self.truncated[i])}\n"
                )


@dataclass
class MCEstimate:
    value: float
    ci_halfwidth: float
    n: int
    seed: int
    extras: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def proportion_ci(k, n, z=Z95):
    """95% halfwidth for a proportion; Wilson (larger side) when counts are thin."""
    p = k / n
    if min(k, n - k) >= 10:
        return p, z * math.sqrt(p * (1 - p) / n)
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z / denom * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
    return p, max(centre + half - p, p - (centre - half))


def mean_ci(samples, z=Z95):
    samples = np.asarray(samples, dtype=float)
    n = samples.size
    m = float(samples.mean())
    if n < 2:
        return m, math.inf
    return m, z * float(samples.std(ddof=1)) / math.sqrt(n)


# ---------------------------------------------------------------------------
# simulation


def _domain_arrays(G):
    d = G.dim
    zero = np.zeros(d)
    if G.kind == "box":
        return 0, np.asarray(G.lo, float), np.asarray(G.hi, float), zero, 0.0
    if G.kind == "ball":
        return 1, zero, zero, np.asarray(G.center, float), float(G.radius)
    if G.kind == "whole_space":
        T = G.effective()
        return 0, np.asarray(T.lo, float), np.asarray(T.hi, float), zero, 0.0
    raise UnsupportedReflection(f"no reflection rule for domain kind {G.kind!r}")


def _balls(U, d):
    if U is None or len(U) == 0:
        return np.zeros((0, d)), np.zeros(0)
    return np.ascontiguousarray(U.centers, dtype=float), np.asarray(U.radii, dtype=float) ** 2


def simulate_paths(G, S, B, cfg, stream=0, stop_mode=STOP_NONE, cap=math.inf):
    """Simulate ``cfg.n_paths`` reflected paths started at ``cfg.start``.

    ``stop_mode`` lets callers end a path early: ``STOP_OCCUPATION`` once the
    occupation of B exceeds ``cap``, ``STOP_HIT`` at the first hit of S.
    """
    kind, lo, hi, center, radius = _domain_arrays(G)
    d = G.dim
    x0 = np.asarray(cfg.start, dtype=float)
    if x0.shape != (d,):
        raise InvalidParams("start point has the wrong dimension")
    if not G.contains(x0, tol=1e-12):
        raise InvalidParams("start point lies outside the domain")
    sc, sr2 = _balls(S, d)
    bc, br2 = _balls(B, d)
    out = _kernel(
        x0,
        cfg.n_paths,
        cfg.nsteps,
        cfg.step,
        np.uint64(cfg.seed),
        np.uint64(stream),
        kind,
        lo,
        hi,
        center,
        radius,
        sc,
        sr2,
        bc,
        br2,
        stop_mode,
        float(cap),
    )
    return PathOutcomes(*out, horizon=cfg.horizon)


def _check_dt(cfg, rho):
    if rho is not None and cfg.step > rho * rho / 100 * (1 + 1e-12):
        warnings.warn(
            f"dt = {cfg.step:g} exceeds rho^2/100 = {rho * rho / 100:g}; endpoint hit detection is biased low",
            TimeStepWarning,
            stacklevel=3,
        )


def estimate_hit_and_run(G, S, B, rho, alpha, cfg, stream=0):
    """P{sigma <= horizon, T <= alpha}, with the closed-form bound alongside.

    ``alpha`` may be a scalar or a sequence; a sequence reuses one set of paths
    and returns a list of estimates.
    """
    alphas = np.atleast_1d(np.asarray(alpha, dtype=float))
    if np.any(alphas <= 0) or np.any(alphas > 1):
        raise InvalidParams("alpha must lie in (0, 1]")
    _check_dt(cfg, rho)
    cap = float(alphas.max())
    paths = simulate_paths(G, S, B, cfg, stream=stream, stop_mode=STOP_OCCUPATION, cap=cap)
    ests = []
    for a in alphas:
        k = int(np.count_nonzero(paths.hit & (paths.occupation <= a)))
        p, hw = proportion_ci(k, cfg.n_paths)
        ests.append(
            MCEstimate(
                p,
                hw,
                cfg.n_paths,
                cfg.seed,
                {
                    "alpha": float(a),
                    "count": k,
                    "bound": hit_and_run_bound(rho, a, G.dim),
                    "hit_fraction_lower": float(np.mean(paths.hit)),
                },
            )
        )
    return ests if np.ndim(alpha) else ests[0]


def _check_bounded(f, G, values):
    if not np.all(np.isfinite(values)):
        raise InvalidParams("f is not finite on the sampled endpoints")
    lo, hi = G.effective().bounding_box() if G.kind == "whole_space" else G.bounding_box()
    grid = np.stack(np.meshgrid(*[np.linspace(a, b, 9) for a, b in zip(lo, hi)], indexing="ij"), -1).reshape(-1, len(lo))
    if not np.all(np.isfinite(np.asarray(f(grid), dtype=float))):
        raise InvalidParams("f is not finite on the sample grid")


def feynman_kac(G, S, B, beta, f, x0, cfg, killed=False, stream=0):
    """E_x[f(X_1) exp(-beta T)], times 1{sigma > 1} when ``killed``.

    ``f`` maps an ``(n, d)`` array of points to ``n`` values; ``S`` may be None.
    """
    if beta < 0:
        raise InvalidParams("beta must be nonnegative")
    cfg = cfg.with_start(x0)
    mode = STOP_HIT if killed and S is not None and len(S) else STOP_NONE
    paths = simulate_paths(G, S, B, cfg, stream=stream, stop_mode=mode)
    vals = np.asarray(f(paths.endpoints), dtype=float)
    _check_bounded(f, G, vals)
    w = vals * np.exp(-beta * paths.occupation)
    if killed:
        w = np.where(paths.hit, 0.0, w)
    m, hw = mean_ci(w)
    return MCEstimate(m, hw, cfg.n_paths, cfg.seed, {"beta": float(beta), "killed": bool(killed)})


def estimate_semigroup_gap(G, S, B, rho, beta, x0s, cfg, f=None):
    """Estimate c(x) = E_x[exp(-2 beta T) 1{sigma <= 1}] at each start point.

    Reports the maximum with its CI, the per-point values and the split bound
    exp(-2 beta alpha*) + hit_and_run_bound(rho, alpha*, d). With ``f`` the
    same paths also give E_x[f(X_1) exp(-beta T) 1{sigma <= 1}], the semigroup
    difference applied to f.
    """
    if not beta >= 0:
        raise InvalidParams("beta must be nonnegative")
    _check_dt(cfg, rho)
    x0s = np.atleast_2d(np.asarray(x0s, dtype=float))
    vals, hws, diffs = [], [], []
    for j, x in enumerate(x0s):
        paths = simulate_paths(G, S, B, cfg.with_start(x), stream=j)
        c = np.where(paths.hit, np.exp(-2 * beta * paths.occupation), 0.0)
        m, hw = mean_ci(c)
        if np.all((c == 0) | (c == 1)):
            m, hw = proportion_ci(int(np.count_nonzero(c)), c.size)
        vals.append(m)
        hws.append(hw)
        if f is not None:
            fv = np.asarray(f(paths.endpoints), dtype=float)
            diffs.append(float(np.mean(np.where(paths.hit, fv * np.exp(-beta * paths.occupation), 0.0))))
    j = int(np.argmax(vals))
    extras = {
        "beta": float(beta),
        "rho": float(rho),
        "per_point": [float(v) for v in vals],
        "per_point_ci": [float(v) for v in hws],
        "argmax": j,
        "alpha_star": optimal_alpha(rho, beta) if beta > 0 else None,
        "bound": occupation_split_bound(rho, beta, G.dim) if beta > 0 else None,
    }
    if f is not None:
        extras["fk_difference"] = diffs
    return MCEstimate(float(vals[j]), float(hws[j]), cfg.n_paths, cfg.seed, extras)
