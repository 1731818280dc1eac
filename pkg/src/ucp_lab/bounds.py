"""Closed-form spectral bounds, probability bounds and the kappa constants.

Everything here is plain double-precision arithmetic on scalars. These values are
the references that the numerical experiments are compared against.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq
from scipy.special import jv

from .errors import DegenerateLog, InvalidParams
from .geometry import unit_ball_volume

EIGEN_UNITS = "1/length^2"
DIMLESS = "dimensionless"


def _check_dim(d):
    if int(d) != d or d < 3:
        raise InvalidParams(f"dimension must be an integer >= 3, got {d}")
    return int(d)


@lru_cache(maxsize=None)
def first_bessel_zero(nu):
    """First positive zero of J_nu for nu >= 0."""
    if nu < 0:
        raise InvalidParams("order must be nonnegative")
    # J_nu > 0 on (0, j_{nu,1}); step until the sign flips, then polish
    x = max(nu, 0.5)
    step = 0.25
    while jv(nu, x + step) > 0:
        x += step
    return float(brentq(lambda z: jv(nu, z), x, x + step, xtol=1e-15))


@dataclass(frozen=True)
class DimensionalConstants:
    d: int
    omega_d: float
    bessel_zero: float
    c_mu0: float
    A: float
    c_prime: float
    a_prime: float
    a_exp: float


@lru_cache(maxsize=None)
def dimensional_constants(d):
    d = _check_dim(d)
    c_mu0 = d * (d - 2) / 18.0**d
    A = math.sqrt(1.0 + 2.0 ** (d / 2 + 2))
    return DimensionalConstants(
        d=d,
        omega_d=unit_ball_volume(d),
        bessel_zero=first_bessel_zero(d / 2 - 1),
        c_mu0=c_mu0,
        A=A,
        c_prime=2.0**-8 * c_mu0,
        a_prime=d * (d - 2) / (2 * 18.0**d * A),
        a_exp=1.0 / (4.0 * math.sqrt(2.0)),
    )


@dataclass
class BoundReport:
    name: str
    inputs: dict
    value: float
    units: str
    extras: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


# ---------------------------------------------------------------------------
# Section-2 type lower bounds


def annulus_bounds(rho, R, d, vol_G=None):
    """Two-sided bound for a convex G with B_rho(0) in G in B_R(0), Dirichlet on B_rho(0).

    Returns ``(lower, upper)``; ``upper`` is None when ``vol_G`` is not given.
    """
    d = _check_dim(d)
    if not 0 < rho < R:
        raise InvalidParams(f"need 0 < rho < R, got rho={rho}, R={R}")
    lower = d * (d - 2) * rho ** (d - 2) / R**d
    if vol_G is None:
        return lower, None
    w = unit_ball_volume(d)
    inner = w * (2 * rho) ** d
    if not vol_G > inner:
        raise InvalidParams("upper bound needs vol(G) > vol(B_{2 rho})")
    upper = 2**d * w * rho ** (d - 2) / (vol_G - inner)
    return lower, upper


def ballpool_lower(rho, ell, d):
    d = _check_dim(d)
    if not 0 < rho < ell / 2:
        raise InvalidParams(f"need 0 < rho < ell/2, got rho={rho}, ell={ell}")
    return (d - 2) * (rho / math.sqrt(d)) ** (d - 2) / ell**d


def general_lower(rho, R, d):
    d = _check_dim(d)
    if not 0 < rho <= R:
        raise InvalidParams(f"need 0 < rho <= R, got rho={rho}, R={R}")
    return d * (d - 2) / 3.0**d * rho ** (d - 2) / R**d


def davies_comparison(rho, R, d):
    """Benchmark rho^(d-1)/R^(d+1) with unit prefactor; meaningful only in ratios."""
    d = _check_dim(d)
    if not 0 < rho < R:
        raise InvalidParams(f"need 0 < rho < R, got rho={rho}, R={R}")
    return rho ** (d - 1) / R ** (d + 1)


# ---------------------------------------------------------------------------
# Section-3 probabilistic bounds


def hit_and_run_bound(rho, alpha, d):
    """Upper bound on P{hit S by time 1 while spending <= alpha in B}; may exceed 1."""
    d = _check_dim(d)
    if not rho > 0 or not 0 < alpha <= 1:
        raise InvalidParams(f"need rho > 0 and 0 < alpha <= 1, got rho={rho}, alpha={alpha}")
    return 2.0 ** (d / 2 + 2) * math.exp(-(rho**2) / (16 * alpha))


def semigroup_diff_bound(rho, beta, d):
    d = _check_dim(d)
    if not rho > 0 or not beta > 0:
        raise InvalidParams("need rho > 0 and beta > 0")
    return math.sqrt(1 + 4 * 2.0 ** (d / 2)) * math.exp(-rho * math.sqrt(beta) / (4 * math.sqrt(2)))


def optimal_alpha(rho, beta):
    """Occupation threshold that equates the two exponents in the c(x, rho, beta) split."""
    return rho / (4 * math.sqrt(2) * math.sqrt(beta))


def occupation_split_bound(rho, beta, d, alpha=None):
    """exp(-2 beta alpha) + hit_and_run_bound(rho, alpha, d), at the balancing alpha by default."""
    if alpha is None:
        alpha = optimal_alpha(rho, beta)
    return math.exp(-2 * beta * alpha) + hit_and_run_bound(rho, min(alpha, 1.0), d)


def ball_dirichlet_eigenvalue(R, d):
    """Ground Dirichlet eigenvalue of -1/2 Laplacian on a ball of radius R: z^2/(2 R^2)."""
    d = _check_dim(d)
    if not R > 0:
        raise InvalidParams("radius must be positive")
    z = dimensional_constants(d).bessel_zero
    return z * z / (2 * R * R)


def capacity_upper(r, d):
    """Energy of the piecewise-linear cutoff phi(|x|/r): shell gradient term plus L^2 majorant."""
    d = _check_dim(d)
    if not r > 0:
        raise InvalidParams("radius must be positive")
    w = unit_ball_volume(d)
    return w * (2**d - 1) * r ** (d - 2) + w * 2**d * r**d


def homogenization_regime(rhos, Rs, d, window=None, divergence_factor=100.0, nonfading_fraction=0.1):
    """Classify a sequence of (rho_n, R_n) by the capacity density rho_n^(d-2)/R_n^d.

    The tail window defaults to the last half of the sequence. ``solid`` when the
    whole tail exceeds ``divergence_factor`` times the first element, ``nonfading``
    when the tail infimum exceeds ``nonfading_fraction`` times the first element,
    ``fading`` otherwise. Returns ``(label, sequence)``.
    """
    d = _check_dim(d)
    rhos = np.asarray(rhos, dtype=float)
    Rs = np.asarray(Rs, dtype=float)
    if rhos.shape != Rs.shape or rhos.ndim != 1 or rhos.size == 0:
        raise InvalidParams("need two nonempty sequences of equal length")
    if np.any(rhos <= 0) or np.any(Rs <= 0):
        raise InvalidParams("sequences must be positive")
    seq = rhos ** (d - 2) / Rs**d
    n = seq.size
    w = max(1, n // 2) if window is None else int(window)
    tail = seq[n - w :]
    if tail.min() > divergence_factor * seq[0]:
        label = "solid"
    elif tail.min() > nonfading_fraction * seq[0]:
        label = "nonfading"
    else:
        label = "fading"
    return label, seq


# ---------------------------------------------------------------------------
# Uncertainty-principle constants


def kappa_first_step(delta, R, lambda_Omega, t, d):
    """First-step constants: returns ``(E_t, kappa_t, mu0_lower)``."""
    d = _check_dim(d)
    if not 0 < delta <= R:
        raise InvalidParams(f"need 0 < delta <= R, got delta={delta}, R={R}")
    if not lambda_Omega > 0:
        raise InvalidParams("lambda_Omega must be positive")
    if not 0 < t < 1:
        raise InvalidParams("t must lie in (0, 1)")
    k = dimensional_constants(d)
    density = delta ** (d - 2) / R**d
    mu0_lower = k.c_mu0 * density
    E_t = t * mu0_lower
    bracket = lambda_Omega - math.log((1 - t) * k.a_prime * density)
    if not bracket > 0:
        raise DegenerateLog(f"log bracket is {bracket}")
    kappa_t = (1 - t) * k.c_prime * (delta / R) ** d / bracket**2
    return E_t, kappa_t, mu0_lower


def optimal_beta(rho, mu0, lambda_Omega, t, d):
    """Coupling at which the semigroup estimate closes the gap to mu0."""
    d = _check_dim(d)
    if not (rho > 0 and mu0 > 0 and lambda_Omega > 0 and 0 < t < 1):
        raise InvalidParams("need positive rho, mu0, lambda_Omega and t in (0, 1)")
    k = dimensional_constants(d)
    bracket = lambda_Omega - math.log((1 - t) * mu0 / (2 * k.A))
    if not bracket > 0:
        raise DegenerateLog(f"log bracket is {bracket}")
    return (k.a_exp * rho) ** -2 * bracket**2


def kappa_final_constants(d):
    """The canonical (a, b, C, c) used by :func:`kappa_final`, with their derivation."""
    k = dimensional_constants(d)
    t = 0.5
    shrink, grow = 8.0, 6.0
    return {
        "t": t,
        "C": t * k.c_mu0,
        "c": (1 - t) * k.c_prime * (shrink * grow) ** -d,
        "a": (1 - t) * k.a_prime * shrink ** -(d - 2) * grow**-d,
        "b": k.bessel_zero**2,
        "derivation": {
            "C": "t * c_mu0 with t = 1/2",
            "c": "(1 - t) * c_prime * (delta/8 over 6R)^d scaling, i.e. * 48^-d",
            "a": "(1 - t) * a_prime * 8^-(d-2) * 6^-d (delta -> delta/8, R -> 6R)",
            "b": "bessel_zero^2",
            "c_mu0": k.c_mu0,
            "c_prime": k.c_prime,
            "a_prime": k.a_prime,
            "A": k.A,
            "bessel_zero": k.bessel_zero,
        },
    }


def kappa_final(delta, R, R_G, eta0, d):
    """Energy window edge and mass fraction constant: returns ``(I_max, kappa)``.

    ``R_G`` may be ``math.inf``; then the geometric term uses R alone.
    """
    d = _check_dim(d)
    if not 0 < delta <= R:
        raise InvalidParams(f"need 0 < delta <= R, got delta={delta}, R={R}")
    if not eta0 > 0:
        raise InvalidParams("eta0 must be positive")
    if not R_G > 0:
        raise InvalidParams("inradius must be positive")
    k = kappa_final_constants(d)
    density = delta ** (d - 2) / R**d
    scale = min(R, R_G)
    I_max = k["C"] * eta0 * density
    bracket = k["b"] / scale**2 + abs(math.log(k["a"] * density))
    kappa = k["c"] * (delta / R) ** d / bracket**2
    return I_max, kappa


# ---------------------------------------------------------------------------
# registry used by the CLI and campaign runner


def _report_annulus(rho, R, d, vol_G=None):
    lo, up = annulus_bounds(rho, R, d, vol_G)
    return lo, EIGEN_UNITS, {"upper": up}


def _report_first_step(delta, R, lambda_Omega, t, d):
    E, kap, mu0 = kappa_first_step(delta, R, lambda_Omega, t, d)
    return kap, DIMLESS, {"E_t": E, "mu0_lower": mu0}


def _report_final(delta, R, R_G, eta0, d):
    I_max, kap = kappa_final(delta, R, R_G, eta0, d)
    consts = kappa_final_constants(d)
    return kap, DIMLESS, {"I_max": I_max, "constants": consts}


def _report_regime(rhos, Rs, d):
    label, seq = homogenization_regime(rhos, Rs, d)
    return float(seq[-1]), EIGEN_UNITS, {"classification": label, "sequence": seq.tolist()}


REGISTRY = {
    "annulus_bounds": (_report_annulus, ("rho", "R", "d", "vol_G")),
    "ballpool_lower": (lambda rho, ell, d: (ballpool_lower(rho, ell, d), EIGEN_UNITS, {}), ("rho", "ell", "d")),
    "general_lower": (lambda rho, R, d: (general_lower(rho, R, d), EIGEN_UNITS, {}), ("rho", "R", "d")),
    "davies_comparison": (lambda rho, R, d: (davies_comparison(rho, R, d), EIGEN_UNITS, {}), ("rho", "R", "d")),
    "hit_and_run_bound": (lambda rho, alpha, d: (hit_and_run_bound(rho, alpha, d), DIMLESS, {}), ("rho", "alpha", "d")),
    "semigroup_diff_bound": (
        lambda rho, beta, d: (semigroup_diff_bound(rho, beta, d), DIMLESS, {}),
        ("rho", "beta", "d"),
    ),
    "ball_dirichlet_eigenvalue": (lambda R, d: (ball_dirichlet_eigenvalue(R, d), EIGEN_UNITS, {}), ("R", "d")),
    "capacity_upper": (lambda r, d: (capacity_upper(r, d), "length^(d-2)", {}), ("r", "d")),
    "homogenization_regime": (_report_regime, ("rhos", "Rs", "d")),
    "kappa_first_step": (_report_first_step, ("delta", "R", "lambda_Omega", "t", "d")),
    "optimal_beta": (
        lambda rho, mu0, lambda_Omega, t, d: (optimal_beta(rho, mu0, lambda_Omega, t, d), "1/length^2", {}),
        ("rho", "mu0", "lambda_Omega", "t", "d"),
    ),
    "kappa_final": (_report_final, ("delta", "R", "R_G", "eta0", "d")),
}


def evaluate(name, **inputs):
    """Evaluate a registered bound by name and wrap it in a :class:`BoundReport`."""
    if name not in REGISTRY:
        raise InvalidParams(f"unknown bound '{name}'; known: {', '.join(sorted(REGISTRY))}")
    fn, params = REGISTRY[name]
    unknown = set(inputs) - set(params)
    if unknown:
        raise InvalidParams(f"unknown inputs for {name}: {sorted(unknown)}")
    value, units, extras = fn(**inputs)
    return BoundReport(name=name, inputs=dict(inputs), value=float(value), units=units, extras=extras)
