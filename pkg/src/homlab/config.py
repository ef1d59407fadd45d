"""Experiment configuration: TOML loading, defaults merging and builders."""

from __future__ import annotations

import copy
import hashlib
import json
import sys

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .decomposition import CutoffPhi, NSchedule
from .expr import ExpressionError, radial_function, sphere_function
from .grid import Lattice
from .groups import GroupLawError, GroupStructure, from_config
from .kernels import KernelSpec, RadialFactor
from .weights import BallSampler


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def load(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError("<file>", f"no such config file {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("<file>", f"cannot parse TOML: {exc}") from exc


def merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def digest(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, default=str).encode()).hexdigest()


class View:
    """Typed access to a config section with dotted-path diagnostics."""

    def __init__(self, data: dict, path: str = ""):
        self.data = data
        self.path = path

    def _p(self, key):
        return f"{self.path}.{key}" if self.path else key

    def section(self, key: str, required: bool = True) -> "View | None":
        sub = self.data.get(key)
        if sub is None:
            if required:
                raise ConfigError(self._p(key), "section missing")
            return None
        if not isinstance(sub, dict):
            raise ConfigError(self._p(key), "expected a table")
        return View(sub, self._p(key))

    def has(self, key: str) -> bool:
        return key in self.data

    def get(self, key: str, kind=float, default=None, required: bool = False):
        if key not in self.data:
            if required:
                raise ConfigError(self._p(key), "field missing")
            return default
        v = self.data[key]
        try:
            if kind is list:
                if not isinstance(v, list):
                    raise TypeError("expected a list")
                return v
            if kind is bool:
                if not isinstance(v, bool):
                    raise TypeError("expected true or false")
                return v
            if kind is int:
                if isinstance(v, bool) or int(v) != v:
                    raise TypeError("expected an integer")
                return int(v)
            if kind is str:
                if not isinstance(v, str):
                    raise TypeError("expected a string")
                return v
            return kind(v)
        except (TypeError, ValueError) as exc:
            raise ConfigError(self._p(key), str(exc)) from exc

    def floats(self, key: str, default=None, required: bool = False) -> list[float]:
        v = self.get(key, list, default, required)
        if v is None:
            return v
        try:
            return [float(x) for x in v]
        except (TypeError, ValueError) as exc:
            raise ConfigError(self._p(key), "expected a list of numbers") from exc

    def ints(self, key: str, default=None, required: bool = False) -> list[int]:
        v = self.floats(key, default, required)
        if v is None:
            return v
        if any(x != int(x) for x in v):
            raise ConfigError(self._p(key), "expected a list of integers")
        return [int(x) for x in v]


# -- builders ----------------------------------------------------------------

def build_group(v: View) -> GroupStructure:
    try:
        return from_config(v.data)
    except GroupLawError as exc:
        raise ConfigError(v.path, str(exc)) from exc


def build_lattice(v: View, n: int) -> Lattice:
    R = v.floats("R", required=True)
    if len(R) == 1 and n > 1:
        R = R * n
    if len(R) != n:
        raise ConfigError(v._p("R"), f"expected {n} entries")
    if v.has("half"):
        half = v.ints("half")
        if len(half) == 1:
            half = half * n
    elif v.has("h"):
        h = v.floats("h")
        if len(h) == 1:
            h = h * n
        half = [int(round(r / s)) for r, s in zip(R, h)]
    else:
        raise ConfigError(v._p("half"), "give either half or h")
    if len(half) != n or any(m < 1 for m in half):
        raise ConfigError(v._p("half"), f"expected {n} positive integers")
    return Lattice.from_box(R, half)


def build_kernel(v: View, group: GroupStructure) -> KernelSpec:
    text = v.get("omega", str, required=True)
    try:
        om = sphere_function(text, group.n)
    except ExpressionError as exc:
        raise ConfigError(v._p("omega"), str(exc)) from exc
    q = v.get("q", float, np.inf)
    if not q > 1:
        raise ConfigError(v._p("q"), "must exceed 1")
    return KernelSpec(group, om, q=q, label=v.get("label", str, text),
                      mean_tol=v.get("mean_tol", float, 1e-8))


def build_schedule(v: View | None) -> NSchedule:
    if v is None:
        return NSchedule.powers_of_two()
    if v.has("values"):
        try:
            return NSchedule(tuple(v.ints("values")))
        except ValueError as exc:
            raise ConfigError(v._p("values"), str(exc)) from exc
    rule = v.get("rule", str, "powers_of_two")
    J = v.get("J_max", int, 4)
    if rule == "powers_of_two":
        return NSchedule.powers_of_two(J)
    if rule == "linear":
        return NSchedule.linear(J, v.get("step", int, 1))
    raise ConfigError(v._p("rule"), f"unknown schedule rule {rule!r}")


def build_cutoff(v: View | None) -> CutoffPhi:
    if v is None:
        return CutoffPhi()
    try:
        return CutoffPhi(v.get("inner", float, 1 / 200), v.get("outer", float, 1 / 100),
                         v.get("profile", str, "log"), v.get("nodes", int, 256))
    except ValueError as exc:
        raise ConfigError(v.path, str(exc)) from exc


def build_sampler(v: View | None) -> BallSampler:
    if v is None:
        return BallSampler()
    return BallSampler(stride=v.get("stride", int, 8),
                       radii_per_octave=v.get("radii_per_octave", int, 1),
                       random_count=v.get("random_count", int, 2000),
                       seed=v.get("seed", int, 0), min_sites=v.get("min_sites", int, 8))


def build_radial(v: View | None) -> RadialFactor | None:
    if v is None:
        return None
    text = v.get("h", str, required=True)
    try:
        fn = radial_function(text)
    except ExpressionError as exc:
        raise ConfigError(v._p("h"), str(exc)) from exc
    return RadialFactor(fn, q=v.get("q", float, 2.0), eta=v.get("eta", float, 0.5), label=text)


def dumps_toml(cfg: dict) -> str:
    """Minimal TOML writer for the one-level-of-sections configs used here."""
    lines = []

    def val(x):
        if isinstance(x, bool):
            return "true" if x else "false"
        if isinstance(x, str):
            return json.dumps(x)
        if isinstance(x, float) and np.isinf(x):
            return "inf" if x > 0 else "-inf"
        if isinstance(x, list):
            return "[" + ", ".join(val(y) for y in x) + "]"
        return repr(x)

    for k, v in cfg.items():
        if not isinstance(v, dict):
            lines.append(f"{k} = {val(v)}")
    for k, v in cfg.items():
        if isinstance(v, dict):
            lines.append(f"\n[{k}]")
            lines += [f"{kk} = {val(vv)}" for kk, vv in v.items()]
    return "\n".join(lines) + "\n"
