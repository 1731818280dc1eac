"""Spectral lower bounds and uncertainty principles on perforated convex domains.

Modules: ``geometry`` (domains, obstacle sets, denseness), ``bounds`` (closed
forms), ``discretize`` (finite-difference operators), ``spectral`` (eigen-
solvers, heat action, projectors), ``stochastic`` (Brownian Monte Carlo),
``ucp`` (the uncertainty-principle pipeline), ``campaign`` and ``cli``.
"""

from .errors import (
    ConfigError,
    DegenerateLog,
    DensenessNotCertified,
    EllipticityViolation,
    EmptyInterior,
    GapUnresolved,
    InvalidParams,
    NotConverged,
    UCPLabError,
    UnboundedDomain,
    UnsupportedReflection,
)

__version__ = "0.1.0"
