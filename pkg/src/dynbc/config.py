"""INI run configuration: parsing, expression fields and problem assembly.

Sections and keys (defaults in brackets)::

    [mesh]          generator = rect | slit_disk | file
                    nx, ny [8], interface_y, interface_extent [0, 1],
                    gamma (comma list of top, bottom, left, right), n_refine [1], path
    [coefficients]  mu [1], eps [1], eps_gamma [1], eps_sigma [1], b_gamma [0], b_sigma [0];
                    per-region overrides mu.<r>, eps.<r>; a matrix is "a11 a12 a21 a22"
    [time]          T, N (required), grid = uniform | graded, s [2], alpha [1],
                    scheme = implicit_euler | crank_nicolson, mass = lumped | consistent
    [problem]       kind = linear | quasilinear, seed [0]
    [initial]       u0 = expression in x, y, or "random" (seeded, sup norm 1)
    [loads]         f_omega, f_gamma, f_sigma: expressions in x, y, t
    [nonlinearity]  name = identity | power | exp | fermi_dirac_b, eta [1], m [2], x_max [50]
    [reaction]      f_omega, f_gamma, f_sigma: expressions in t, xi
    [solver]        k_max [5], tol [1e-9], w_max [1e6]
    [manufactured]  name = smooth | jump, base_n [8], T [0.1], mu_low [1], mu_high [10], tau_factor [1]
    [check]         samples [2000], steps [50], thetas [0.25, 0.5, 0.75], nodes [200]
    [output]        directory [out], control_volume = x0 x1 y0 y1 (optional)

Expressions are numpy expressions over the named variables with the
functions listed in ``EXPR_NAMES``.
"""
from __future__ import annotations

import ast
import configparser
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .assembly import make_coefficients
from .kirchhoff import NAMED, QuasilinearControls, ReactionSpec, identity, power
from .linear_solver import Loads, WeightedNormSpec, graded_grid, uniform_grid
from .mesh import MeshError, generate_rect_mesh, generate_slit_disk, read_mesh


class ConfigError(ValueError):
    pass


EXPR_NAMES = {
    "pi": np.pi, "e": np.e, "sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp,
    "log": np.log, "sqrt": np.sqrt, "abs": np.abs, "tanh": np.tanh, "arctan": np.arctan,
    "where": np.where, "minimum": np.minimum, "maximum": np.maximum, "sign": np.sign,
    "heaviside": np.heaviside,
}

SECTIONS = {
    "mesh": {"generator": "rect", "nx": "8", "ny": "8", "interface_y": "", "interface_extent": "0 1",
             "gamma": "", "n_refine": "1", "path": ""},
    "coefficients": {"mu": "1", "eps": "1", "eps_gamma": "1", "eps_sigma": "1", "b_gamma": "0", "b_sigma": "0"},
    "time": {"grid": "uniform", "s": "2", "alpha": "1", "scheme": "implicit_euler", "mass": "lumped"},
    "problem": {"kind": "linear", "seed": "0"},
    "initial": {"u0": "0"},
    "loads": {"f_omega": "", "f_gamma": "", "f_sigma": ""},
    "nonlinearity": {"name": "identity", "eta": "1", "m": "2", "x_max": "50"},
    "reaction": {"f_omega": "", "f_gamma": "", "f_sigma": ""},
    "solver": {"k_max": "5", "tol": "1e-9", "w_max": "1e6"},
    "manufactured": {"name": "", "base_n": "8", "T": "0.1", "mu_low": "1", "mu_high": "10", "tau_factor": "1"},
    "check": {"samples": "2000", "steps": "50", "thetas": "0.25 0.5 0.75", "nodes": "200"},
    "output": {"directory": "out", "control_volume": ""},
}
REQUIRED = ("mesh", "time")
REQUIRED_KEYS = {"time": ("T", "N")}


class Expression:
    """Compiled numpy expression over fixed variable names."""

    def __init__(self, text: str, variables: tuple, where: str):
        self.text, self.variables, self.where = text, variables, where
        try:
            tree = ast.parse(text, mode="eval")
        except SyntaxError as exc:
            raise ConfigError(f"{where}: cannot parse expression {text!r}: {exc.msg}") from None
        for node in ast.walk(tree):
            if isinstance(node, ast.Name) and node.id not in EXPR_NAMES and node.id not in variables:
                raise ConfigError(f"{where}: unknown name {node.id!r} in {text!r}")
            if isinstance(node, ast.Attribute):
                raise ConfigError(f"{where}: attribute access is not allowed in {text!r}")
        self._code = compile(tree, where, "eval")

    def __call__(self, *args):
        scope = dict(EXPR_NAMES)
        scope.update(zip(self.variables, args))
        with np.errstate(all="ignore"):
            value = eval(self._code, {"__builtins__": {}}, scope)
        shape = np.broadcast(*[np.asarray(a) for a in args]).shape
        return np.broadcast_to(np.asarray(value, dtype=float), shape).copy()

    def __repr__(self):
        return f"Expression({self.text!r})"


@dataclass
class RunConfig:
    values: dict            # resolved section -> key -> string
    source: str = ""

    def get(self, section: str, key: str) -> str:
        return self.values[section][key]

    def number(self, section: str, key: str, kind=float):
        text = self.get(section, key)
        try:
            return kind(float(text)) if kind is int else kind(text)
        except ValueError:
            raise ConfigError(f"[{section}] {key}: expected a number, got {text!r}") from None

    def numbers(self, section: str, key: str) -> list:
        text = self.get(section, key).replace(",", " ")
        try:
            return [float(v) for v in text.split()]
        except ValueError:
            raise ConfigError(f"[{section}] {key}: expected numbers, got {text!r}") from None

    def choice(self, section: str, key: str, options) -> str:
        v = self.get(section, key).strip()
        if v not in options:
            raise ConfigError(f"[{section}] {key}: {v!r} is not one of {', '.join(options)}")
        return v

    @property
    def seed(self) -> int:
        env = os.environ.get("DYNBC_SEED")
        if env is not None:
            try:
                return int(env)
            except ValueError:
                raise ConfigError(f"DYNBC_SEED must be an integer, got {env!r}") from None
        return self.number("problem", "seed", int)

    def resolved(self) -> dict:
        out = {s: dict(v) for s, v in self.values.items()}
        out["problem"]["seed"] = str(self.seed)
        return out


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    unknown = [s for s in parser.sections() if s not in SECTIONS]
    if unknown:
        raise ConfigError(f"{source}: unknown section [{unknown[0]}]")
    for s in REQUIRED:
        if not parser.has_section(s):
            raise ConfigError(f"{source}: missing required section [{s}]")
    values = {}
    for s, defaults in SECTIONS.items():
        sec = dict(defaults)
        if parser.has_section(s):
            for key, v in parser.items(s):
                base = key.split(".", 1)[0]
                if base not in defaults and key not in REQUIRED_KEYS.get(s, ()):
                    raise ConfigError(f"{source}: unknown key {key!r} in section [{s}]")
                sec[key] = v.strip()
        for key in REQUIRED_KEYS.get(s, ()):
            if key not in sec:
                raise ConfigError(f"{source}: section [{s}] needs key {key!r}")
        values[s] = sec
    return RunConfig(values, source)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, str(path))


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def build_mesh(cfg: RunConfig):
    gen = cfg.choice("mesh", "generator", ("rect", "slit_disk", "file"))
    try:
        if gen == "rect":
            iy = cfg.get("mesh", "interface_y")
            extent = cfg.numbers("mesh", "interface_extent")
            if len(extent) != 2:
                raise ConfigError("[mesh] interface_extent: expected two numbers")
            gamma = [g.strip() for g in cfg.get("mesh", "gamma").replace(",", " ").split() if g.strip()]
            return generate_rect_mesh(cfg.number("mesh", "nx", int), cfg.number("mesh", "ny", int),
                                      float(iy) if iy else None, tuple(extent), gamma)
        if gen == "slit_disk":
            return generate_slit_disk(cfg.number("mesh", "n_refine", int))
        path = cfg.get("mesh", "path")
        if not path:
            raise ConfigError("[mesh] path is required for generator = file")
        base = Path(cfg.source).parent if cfg.source and not cfg.source.startswith("<") else Path(".")
        return read_mesh(base / path)
    except (MeshError, OSError) as exc:
        raise ConfigError(f"[mesh] {exc}") from None


def _scalar_or_matrix(text: str, where: str):
    try:
        vals = [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"{where}: expected a number or four matrix entries, got {text!r}") from None
    if len(vals) == 1:
        return vals[0]
    if len(vals) == 4:
        return np.array(vals).reshape(2, 2)
    raise ConfigError(f"{where}: expected a number or four matrix entries, got {text!r}")


def _per_region(cfg: RunConfig, mesh, key: str):
    sec = cfg.values["coefficients"]
    overrides = {k: v for k, v in sec.items() if k.startswith(key + ".")}
    base = _scalar_or_matrix(sec[key], f"[coefficients] {key}")
    if not overrides:
        return base
    regions = set(np.unique(mesh.regions).tolist())
    out = {r: base for r in regions}
    for k, v in overrides.items():
        try:
            r = int(k.split(".", 1)[1])
        except ValueError:
            raise ConfigError(f"[coefficients] {k}: region suffix must be an integer") from None
        if r not in regions:
            raise ConfigError(f"[coefficients] {k}: the mesh has no region {r}")
        out[r] = _scalar_or_matrix(v, f"[coefficients] {k}")
    return out


def build_coefficients(cfg: RunConfig, mesh):
    try:
        return make_coefficients(
            mesh, mu=_per_region(cfg, mesh, "mu"), eps=_per_region(cfg, mesh, "eps"),
            eps_gamma=cfg.number("coefficients", "eps_gamma"), eps_sigma=cfg.number("coefficients", "eps_sigma"),
            b_gamma=cfg.number("coefficients", "b_gamma"), b_sigma=cfg.number("coefficients", "b_sigma"))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"[coefficients] {exc}") from None


def build_grid(cfg: RunConfig):
    T, N = cfg.number("time", "T"), cfg.number("time", "N", int)
    if not T > 0 or N < 1:
        raise ConfigError("[time] needs T > 0 and N >= 1")
    kind = cfg.choice("time", "grid", ("uniform", "graded"))
    if kind == "uniform":
        return uniform_grid(T, N)
    try:
        return graded_grid(T, N, weighted_spec(cfg))
    except ValueError as exc:
        raise ConfigError(f"[time] {exc}") from None


def weighted_spec(cfg: RunConfig) -> WeightedNormSpec:
    try:
        return WeightedNormSpec(cfg.number("time", "s"), cfg.number("time", "alpha"))
    except ValueError as exc:
        raise ConfigError(f"[time] {exc}") from None


def build_loads(cfg: RunConfig) -> Loads:
    parts = []
    for key in ("f_omega", "f_gamma", "f_sigma"):
        text = cfg.get("loads", key)
        parts.append(Expression(text, ("x", "y", "t"), f"[loads] {key}") if text else None)
    return Loads(*parts)


def build_initial(cfg: RunConfig, mesh, dofmap) -> np.ndarray:
    text = cfg.get("initial", "u0")
    if text == "random":
        rng = np.random.default_rng(cfg.seed)
        u = rng.uniform(-1.0, 1.0, dofmap.n_free)
        return u / np.abs(u).max() if u.size else u
    expr = Expression(text, ("x", "y"), "[initial] u0")
    xy = mesh.vertices[dofmap.free]
    u = expr(xy[:, 0], xy[:, 1])
    if not np.all(np.isfinite(u)):
        raise ConfigError("[initial] u0 is not finite at every node")
    return u


def build_nonlinearity(cfg: RunConfig):
    name = cfg.choice("nonlinearity", "name", tuple(NAMED))
    x_max = cfg.number("nonlinearity", "x_max")
    if name == "power":
        return power(cfg.number("nonlinearity", "eta"), cfg.number("nonlinearity", "m"), x_max)
    if name == "identity":
        return identity(x_max)
    return NAMED[name](x_max)


def build_reaction(cfg: RunConfig) -> ReactionSpec:
    parts = {}
    for key in ("f_omega", "f_gamma", "f_sigma"):
        text = cfg.get("reaction", key)
        if text:
            parts[key] = Expression(text, ("t", "xi"), f"[reaction] {key}")
    return ReactionSpec(**parts)


def build_controls(cfg: RunConfig) -> QuasilinearControls:
    return QuasilinearControls(cfg.number("solver", "k_max", int), cfg.number("solver", "tol"),
                               cfg.number("solver", "w_max"))
