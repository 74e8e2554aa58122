"""Experiment configuration: YAML with ``network``, ``domain`` and ``run`` sections.

Example::

    network:
      species: [X1, X2]
      reactions:
        - {nu_plus: [1, 0], nu_minus: [0, 1], k_plus: 1.0, k_minus: 1.0}
    domain: {shape: ball, center: [7, 3], radius_squared: 2}
    run:
      h: 0.25
      t: 0.2
      x0: [7, 3]
      u0: "x1"

``u0`` is an arithmetic expression in ``x1, x2, ...`` (and ``alpha`` on a
segment) using ``sin cos exp log sqrt abs pi``.
"""

from __future__ import annotations

import ast
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import ParseError, ValidationError
from .network import Ball, Box, ConvexPolygon, Domain, ReactionNetwork

__all__ = ["ExperimentConfig", "parse_config", "load_config_text", "dump_config", "compile_expression"]

_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "log": np.log, "sqrt": np.sqrt,
          "abs": np.abs, "tanh": np.tanh}
_CONSTS = {"pi": math.pi, "e": math.e}
_ALLOWED = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load, ast.Constant,
            ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd)

RUN_DEFAULTS = {
    "h": 0.1,
    "t": 0.2,
    "dt": None,
    "x0": None,
    "beta": 0.0,
    "r": 0.0,
    "u0": "x1",
    "alpha_start": 0.0,
    "n_alpha": 801,
    "n_t": 40,
    "n_v": None,
    "n_samples": 1000,
    "seed": 0,
    "eps": 0.3,
    "h_ladder": [0.2, 0.1, 0.05],
    "snapshots": None,
}


def compile_expression(expr: str, names: list[str]):
    """Turn a whitelisted arithmetic expression into a vectorised callable."""
    try:
        tree = ast.parse(str(expr), mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"cannot parse expression {expr!r}: {exc.msg}") from None
    allowed_names = set(names) | set(_FUNCS) | set(_CONSTS)
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED):
            raise ValueError(f"construct {type(node).__name__} not allowed in {expr!r}")
        if isinstance(node, ast.Name) and node.id not in allowed_names:
            raise ValueError(f"unknown name {node.id!r} in {expr!r}")
        if isinstance(node, ast.Call) and not (isinstance(node.func, ast.Name) and node.func.id in _FUNCS):
            raise ValueError(f"only {sorted(_FUNCS)} may be called in {expr!r}")
    code = compile(tree, "<u0>", "eval")

    def fn(**kw):
        env = {"__builtins__": {}, **_FUNCS, **_CONSTS, **kw}
        return eval(code, env)  # noqa: S307 - tree validated above

    return fn


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    raw: dict
    network: ReactionNetwork
    domain: Domain
    run: dict = field(default_factory=dict)

    @property
    def hash(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    def u0_points(self):
        """``u0`` as a function of points with shape (..., N)."""
        names = [f"x{i + 1}" for i in range(self.network.n_species)]
        fn = compile_expression(self.run["u0"], names)

        def u0(x):
            x = np.asarray(x, float)
            out = fn(**{n: x[..., i] for i, n in enumerate(names)})
            return np.broadcast_to(np.asarray(out, float), x.shape[:-1]).copy()

        return u0

    def with_overrides(self, **run) -> "ExperimentConfig":
        raw = json.loads(json.dumps(self.raw))
        raw.setdefault("run", {}).update({k: v for k, v in run.items() if v is not None})
        return _build(raw)


def _line_of(node, path):
    """Best-effort source line of a nested key, from the YAML node tree."""
    for key in path:
        if isinstance(node, yaml.MappingNode):
            nxt = None
            for k, v in node.value:
                if k.value == key:
                    nxt = v
                    break
            if nxt is None:
                return node.start_mark.line + 1
            node = nxt
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
        else:
            break
    return node.start_mark.line + 1 if node is not None else None


def load_config_text(text: str) -> ExperimentConfig:
    try:
        raw = yaml.safe_load(text)
        tree = yaml.compose(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        raise ParseError(f"malformed YAML: {exc.problem}", line=mark.line + 1 if mark else None) from None
    if not isinstance(raw, dict):
        raise ParseError("top level must be a mapping", line=1)
    try:
        return _build(raw)
    except ValidationError as exc:
        located = []
        for err in exc.errors:
            path = err.split(":", 1)[0].split(".")
            path = [int(p) if p.isdigit() else p for p in path]
            located.append(f"line {_line_of(tree, path)}: {err}")
        raise ValidationError(located) from None


def parse_config(path) -> ExperimentConfig:
    """Read and validate a configuration file; all problems are reported together."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {p}: {exc.strerror}") from None
    return load_config_text(text)


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.raw, sort_keys=True)


def _num(errors, where, value, positive=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        errors.append(f"{where}: expected a number, got {value!r}")
        return None
    if positive and not value > 0:
        errors.append(f"{where}: must be positive")
        return None
    return float(value)


def _vec(errors, where, value, n=None):
    if not isinstance(value, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
        errors.append(f"{where}: expected a list of numbers")
        return None
    if n is not None and len(value) != n:
        errors.append(f"{where}: expected {n} entries, got {len(value)}")
        return None
    return [float(v) for v in value]


def _build(raw: dict) -> ExperimentConfig:
    errors: list[str] = []
    for key in raw:
        if key not in ("network", "domain", "run"):
            errors.append(f"{key}: unknown section")
    net_raw = raw.get("network")
    dom_raw = raw.get("domain")
    run_raw = raw.get("run", {}) or {}
    net = None
    if not isinstance(net_raw, dict):
        errors.append("network: missing section")
    else:
        species = net_raw.get("species")
        reactions = net_raw.get("reactions")
        if not isinstance(species, list) or not species or not all(isinstance(s, str) for s in species):
            errors.append("network.species: expected a nonempty list of names")
            species = None
        if not isinstance(reactions, list) or not reactions:
            errors.append("network.reactions: expected a nonempty list")
            reactions = []
        nu_p, nu_m, kp, km = [], [], [], []
        for i, rx in enumerate(reactions):
            where = f"network.reactions.{i}"
            if not isinstance(rx, dict):
                errors.append(f"{where}: expected a mapping")
                continue
            for key in rx:
                if key not in ("nu_plus", "nu_minus", "k_plus", "k_minus"):
                    errors.append(f"{where}.{key}: unknown field")
            n = len(species) if species else None
            a = _vec(errors, f"{where}.nu_plus", rx.get("nu_plus"), n)
            b = _vec(errors, f"{where}.nu_minus", rx.get("nu_minus"), n)
            c = _num(errors, f"{where}.k_plus", rx.get("k_plus"), positive=True)
            d = _num(errors, f"{where}.k_minus", rx.get("k_minus"), positive=True)
            for name, v in (("nu_plus", a), ("nu_minus", b)):
                if v is not None and any(x < 0 or x != int(x) for x in v):
                    errors.append(f"{where}.{name}: entries must be nonnegative integers")
            nu_p.append(a), nu_m.append(b), kp.append(c), km.append(d)
        if species and reactions and not errors:
            try:
                net = ReactionNetwork(nu_p, nu_m, kp, km, tuple(species))
            except ValueError as exc:
                errors.append(f"network: {exc}")
    dom = None
    if not isinstance(dom_raw, dict):
        errors.append("domain: missing section")
    else:
        shape = dom_raw.get("shape")
        try:
            if shape == "ball":
                c = _vec(errors, "domain.center", dom_raw.get("center"))
                if "radius_squared" in dom_raw:
                    r2 = _num(errors, "domain.radius_squared", dom_raw["radius_squared"], positive=True)
                    rad = math.sqrt(r2) if r2 else None
                else:
                    rad = _num(errors, "domain.radius", dom_raw.get("radius"), positive=True)
                if c is not None and rad is not None:
                    dom = Ball(c, rad)
            elif shape == "polygon":
                v = dom_raw.get("vertices")
                if not isinstance(v, list):
                    errors.append("domain.vertices: expected a list of points")
                else:
                    pts = [_vec(errors, f"domain.vertices.{i}", p, 2) for i, p in enumerate(v)]
                    if all(p is not None for p in pts):
                        dom = ConvexPolygon(pts)
            elif shape == "box":
                lo = _vec(errors, "domain.lower", dom_raw.get("lower"))
                hi = _vec(errors, "domain.upper", dom_raw.get("upper"))
                if lo is not None and hi is not None:
                    dom = Box(lo, hi)
            else:
                errors.append(f"domain.shape: expected ball, polygon or box, got {shape!r}")
        except ValueError as exc:
            errors.append(f"domain: {exc}")
    if not isinstance(run_raw, dict):
        errors.append("run: expected a mapping")
        run_raw = {}
    run = dict(RUN_DEFAULTS)
    for key, value in run_raw.items():
        if key not in RUN_DEFAULTS:
            errors.append(f"run.{key}: unknown field")
        else:
            run[key] = value
    for key in ("h", "t"):
        _num(errors, f"run.{key}", run[key], positive=True)
    for key in ("n_alpha", "n_t", "n_samples"):
        if not isinstance(run[key], int) or isinstance(run[key], bool) or run[key] < 1:
            errors.append(f"run.{key}: expected a positive integer")
    if not isinstance(run["seed"], int) or isinstance(run["seed"], bool) or run["seed"] < 0:
        errors.append("run.seed: expected a nonnegative integer")
    if run["h_ladder"] is not None:
        lad = _vec(errors, "run.h_ladder", run["h_ladder"])
        if lad is not None and any(v <= 0 for v in lad):
            errors.append("run.h_ladder: spacings must be positive")
    if run["x0"] is not None and net is not None:
        _vec(errors, "run.x0", run["x0"], net.n_species)
    if net is not None:
        try:
            compile_expression(run["u0"], [f"x{i + 1}" for i in range(net.n_species)])
        except ValueError as exc:
            errors.append(f"run.u0: {exc}")
    if errors:
        raise ValidationError(errors)
    return ExperimentConfig(raw, net, dom, run)
