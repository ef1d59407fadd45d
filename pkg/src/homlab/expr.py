"""Restricted arithmetic expressions used by config files.

Only numeric literals, the named variables, arithmetic operators, comparisons
and a fixed set of numpy functions are accepted.
"""

from __future__ import annotations

import ast

import numpy as np

_FUNCS = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp, "log": np.log,
    "log2": np.log2, "sqrt": np.sqrt, "abs": np.abs, "sign": np.sign,
    "arctan2": np.arctan2, "tanh": np.tanh, "minimum": np.minimum,
    "maximum": np.maximum, "where": np.where, "floor": np.floor, "ones_like": np.ones_like,
}
_CONSTS = {"pi": np.pi, "e": np.e}
_NODES = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load,
          ast.Constant, ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub,
          ast.UAdd, ast.Mod, ast.Compare, ast.Lt, ast.LtE, ast.Gt, ast.GtE,
          ast.Eq, ast.NotEq, ast.IfExp)


class ExpressionError(ValueError):
    pass


def compile_expression(text: str, variables: tuple[str, ...]):
    """Return ``fn(**arrays)`` evaluating ``text`` with numpy semantics."""
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {text!r}: {exc}") from exc
    for node in ast.walk(tree):
        if not isinstance(node, _NODES):
            raise ExpressionError(f"disallowed syntax {type(node).__name__} in {text!r}")
        if isinstance(node, ast.Name) and node.id not in _FUNCS and node.id not in _CONSTS \
                and node.id not in variables:
            raise ExpressionError(f"unknown name {node.id!r} in {text!r}")
        if isinstance(node, ast.Call) and not (isinstance(node.func, ast.Name) and node.func.id in _FUNCS):
            raise ExpressionError(f"only whitelisted functions may be called in {text!r}")
    code = compile(tree, "<expr>", "eval")

    def fn(**kw):
        env = dict(_FUNCS)
        env.update(_CONSTS)
        env.update(kw)
        return eval(code, {"__builtins__": {}}, env)

    return fn


def sphere_function(text: str, n: int):
    """Function of sphere points ``theta`` (shape (m, n)) named x1..xn."""
    names = tuple(f"x{i + 1}" for i in range(n))
    fn = compile_expression(text, names)

    def omega(theta):
        theta = np.asarray(theta, dtype=float)
        out = fn(**{nm: theta[..., i] for i, nm in enumerate(names)})
        return np.broadcast_to(np.asarray(out, dtype=float), theta.shape[:-1]).copy()

    omega.expression = text
    return omega


def radial_function(text: str):
    """Function of a positive radius named ``t``."""
    fn = compile_expression(text, ("t",))

    def h(t):
        t = np.asarray(t, dtype=float)
        return np.broadcast_to(np.asarray(fn(t=t), dtype=float), t.shape).copy()

    h.expression = text
    return h
