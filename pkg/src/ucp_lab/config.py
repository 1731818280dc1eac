"""TOML configuration: schema validation and construction of geometries.

A geometry config has one ``[domain]`` and one ``[obstacles]`` section plus
optional ``[grid]``, ``[solver]``, ``[mc]`` and ``[verify]`` sections. A campaign
config has a ``[campaign]`` table and a list of ``[[experiment]]`` tables whose
sub-tables use the same section schemas. Unknown keys are rejected before any
computation, with the offending line number when it can be located.
"""

from __future__ import annotations

import math
import re
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from .errors import ConfigError, InvalidParams
from .geometry import (
    BallUnion,
    ConvexDomain,
    block_cells,
    halving_radii,
    lattice_points,
    make_appendix_example,
    make_ball_pool,
    random_ball_union,
)

NUM = (int, float)
ANY = object

# key -> accepted python types
SECTIONS = {
    "domain": {
        "kind": str,
        "lo": list,
        "hi": list,
        "center": list,
        "radius": NUM,
        "half_width": NUM,
        "dim": int,
        "normals": list,
        "offsets": list,
        "truncation_lo": list,
        "truncation_hi": list,
        "shape": list,
        "ell": NUM,
    },
    "obstacles": {
        "kind": str,
        "centers": list,
        "radius": NUM,
        "radii": list,
        "path": str,
        "shape": list,
        "ell": NUM,
        "rho": NUM,
        "count": int,
        "seed": int,
        "min_gap": NUM,
        "lo": NUM,
        "hi": NUM,
        "step": NUM,
        "dim": int,
        "profile": str,
        "half_width": NUM,
        "fattening": NUM,
    },
    "grid": {"h": (NUM, list), "nodes": int, "truncation_lo": list, "truncation_hi": list},
    "solver": {"tol": NUM, "seed": int, "k": int},
    "mc": {"dt": NUM, "n_paths": int, "seed": int, "start": list, "starts": list, "horizon": NUM},
    "verify": {
        "R": (NUM, str),
        "delta": NUM,
        "eta0": NUM,
        "t": NUM,
        "sample_spacing": NUM,
        "betas": list,
        "coefficient": dict,
        "refine": bool,
    },
    "params": ANY,
    "checks": ANY,
}

DOMAIN_KINDS = ("box", "cube", "ball", "halfspaces", "whole_space", "cube_block", "appendix")
OBSTACLE_KINDS = ("none", "balls", "csv", "ball_pool", "random", "lattice", "appendix")


def _locate(text, key, section=None):
    """Best-effort line number of ``key = ...`` (after ``[section]`` when given)."""
    if text is None:
        return None
    lines = text.splitlines()
    start = 0
    if section:
        pat = re.compile(r"^\s*\[+\s*" + re.escape(section) + r"\s*\]+")
        for i, line in enumerate(lines):
            if pat.match(line):
                start = i
                break
    kp = re.compile(r"^\s*" + re.escape(key) + r"\s*=")
    for i in range(start, len(lines)):
        if kp.match(lines[i]):
            return i + 1
    for i, line in enumerate(lines):
        if kp.match(line) or re.match(r"^\s*\[+[^\]]*\b" + re.escape(key) + r"\s*\]+", line):
            return i + 1
    return None


def validate_section(name, table, text=None, header=None):
    schema = SECTIONS.get(name)
    if schema is None:
        raise ConfigError(f"unknown section [{name}]", field=name, line=_locate(text, name))
    if schema is ANY:
        return table
    if not isinstance(table, dict):
        raise ConfigError(f"[{name}] must be a table", field=name)
    for key, value in table.items():
        if key not in schema:
            raise ConfigError(f"unknown key in [{name}]", field=f"{name}.{key}", line=_locate(text, key, header or name))
        types = schema[key]
        types = types if isinstance(types, tuple) else (types,)
        flat = []
        for t in types:
            flat.extend(t if isinstance(t, tuple) else (t,))
        if isinstance(value, bool) and bool not in flat:
            raise ConfigError("expected a number, got a boolean", field=f"{name}.{key}", line=_locate(text, key, header or name))
        if not isinstance(value, tuple(flat)):
            raise ConfigError(
                f"wrong type {type(value).__name__}", field=f"{name}.{key}", line=_locate(text, key, header or name)
            )
    return table


def load_toml(path):
    """Parse a TOML file; returns ``(data, text)``."""
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}", field="path") from exc
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"TOML syntax error: {exc}", line=int(m.group(1)) if m else None) from exc
    return data, text


GEOMETRY_TOP = ("domain", "obstacles", "grid", "solver", "mc", "verify")


def load_geometry_config(path):
    """Load and validate a single-geometry config file."""
    data, text = load_toml(path)
    for key in data:
        if key not in GEOMETRY_TOP:
            raise ConfigError("unknown top-level section", field=key, line=_locate(text, key))
    for key in data:
        validate_section(key, data[key], text)
    if "domain" not in data:
        raise ConfigError("missing [domain] section", field="domain")
    data.setdefault("obstacles", {"kind": "none"})
    return data, text


# ---------------------------------------------------------------------------
# builders


def _need(table, key, section):
    if key not in table:
        raise ConfigError(f"missing required key '{key}'", field=f"{section}.{key}")
    return table[key]


def build_domain(sect):
    """ConvexDomain from a ``[domain]`` table."""
    kind = _need(sect, "kind", "domain")
    try:
        if kind == "box":
            return ConvexDomain.box(_need(sect, "lo", "domain"), _need(sect, "hi", "domain"))
        if kind == "cube":
            return ConvexDomain.cube(_need(sect, "half_width", "domain"), sect.get("dim", 3), sect.get("center"))
        if kind == "ball":
            return ConvexDomain.ball(_need(sect, "center", "domain"), _need(sect, "radius", "domain"))
        if kind == "halfspaces":
            return ConvexDomain.halfspaces(_need(sect, "normals", "domain"), _need(sect, "offsets", "domain"))
        if kind == "whole_space":
            dim = sect.get("dim", 3)
            if "half_width" in sect:
                return ConvexDomain.whole_space(ConvexDomain.cube(sect["half_width"], dim))
            if "truncation_lo" in sect:
                return ConvexDomain.whole_space((sect["truncation_lo"], _need(sect, "truncation_hi", "domain")))
            return ConvexDomain.whole_space(None, dim)
        if kind == "appendix":
            # lattice-perforated space truncated to [-w - 1/2, w + 1/2]^d
            w = math.floor(_need(sect, "half_width", "domain"))
            return ConvexDomain.whole_space(ConvexDomain.cube(w + 0.5, sect.get("dim", 3)))
        if kind == "cube_block":
            ell = sect.get("ell", 1.0)
            shape = _need(sect, "shape", "domain")
            return ConvexDomain.box([0.0] * len(shape), [n * ell for n in shape])
    except InvalidParams as exc:
        raise ConfigError(str(exc), field="domain") from exc
    raise ConfigError(f"unknown domain kind '{kind}' (known: {', '.join(DOMAIN_KINDS)})", field="domain.kind")


def build_obstacles(sect, G=None, base_dir=None):
    """Obstacle set S from an ``[obstacles]`` table; returns ``(S, fattening or None)``."""
    kind = sect.get("kind", "none")
    fat = sect.get("fattening")
    try:
        if kind == "none":
            return BallUnion.empty(G.dim if G is not None else 3), fat
        if kind == "balls":
            centers = np.atleast_2d(np.asarray(_need(sect, "centers", "obstacles"), dtype=float))
            if "radii" in sect:
                return BallUnion(centers, np.asarray(sect["radii"], dtype=float), centers.shape[1]), fat
            return BallUnion.from_centers(centers, _need(sect, "radius", "obstacles")), fat
        if kind == "csv":
            p = Path(_need(sect, "path", "obstacles"))
            if base_dir is not None and not p.is_absolute():
                p = Path(base_dir) / p
            return BallUnion.from_csv(p), fat
        if kind == "ball_pool":
            shape = _need(sect, "shape", "obstacles")
            _, S = make_ball_pool(block_cells(shape), sect.get("ell", 1.0), _need(sect, "rho", "obstacles"))
            return S, fat
        if kind == "random":
            if G is None:
                raise ConfigError("random obstacles need a domain", field="obstacles.kind")
            S = random_ball_union(
                G,
                _need(sect, "count", "obstacles"),
                _need(sect, "radius", "obstacles"),
                sect.get("seed", 0),
                sect.get("min_gap", 0.0),
            )
            return S, fat
        if kind == "lattice":
            pts = lattice_points(
                _need(sect, "lo", "obstacles"), _need(sect, "hi", "obstacles"), sect.get("step", 1.0), sect.get("dim", 3)
            )
            return BallUnion.from_centers(pts, _need(sect, "radius", "obstacles")), fat
        if kind == "appendix":
            w = _need(sect, "half_width", "obstacles")
            radii = halving_radii(sect["radius"]) if sect.get("profile") == "halving" else _need(sect, "radius", "obstacles")
            _, S = make_appendix_example(radii, w)
            return S, fat
    except InvalidParams as exc:
        raise ConfigError(str(exc), field="obstacles") from exc
    raise ConfigError(f"unknown obstacle kind '{kind}' (known: {', '.join(OBSTACLE_KINDS)})", field="obstacles.kind")


def grid_levels(sect, G=None):
    """Grid spacings from a ``[grid]`` table (``h`` scalar/list or ``nodes`` per axis on a box)."""
    if "h" in sect:
        h = sect["h"]
        hs = [float(x) for x in (h if isinstance(h, list) else [h])]
    elif "nodes" in sect:
        if G is None or G.kind != "box":
            raise ConfigError("'nodes' needs a box domain", field="grid.nodes")
        side = float(np.min(np.subtract(G.hi, G.lo)))
        hs = [side / (sect["nodes"] - 1)]
    else:
        raise ConfigError("missing grid spacing", field="grid.h")
    if any(not (h > 0 and math.isfinite(h)) for h in hs):
        raise ConfigError("grid spacing must be positive", field="grid.h")
    return hs


def truncation_of(sect):
    if "truncation_lo" in sect:
        return (sect["truncation_lo"], _need(sect, "truncation_hi", "grid"))
    return None
