"""Small arithmetic expression trees used in configuration files.

Expressions are parsed with :mod:`ast` and restricted to a whitelist of
operators and functions, then evaluated element-wise with numpy.
"""

from __future__ import annotations

import ast
import hashlib

import numpy as np

from .errors import ConfigError

_FUNCS = {
    "exp": np.exp,
    "log": np.log,
    "sin": np.sin,
    "cos": np.cos,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "min": np.minimum,
    "max": np.maximum,
}
_CONSTS = {"pi": np.pi, "e": np.e, "inf": np.inf}
_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)
_UNARY = (ast.USub, ast.UAdd)


class Expr:
    """A parsed, vectorised expression in a fixed set of variables.

    Parameters
    ----------
    source : str
        Expression text, e.g. ``"1 + 0.3*sin(x1)"``.
    variables : sequence of str
        Names allowed to appear in ``source``.
    """

    def __init__(self, source: str, variables):
        self.source = str(source)
        self.variables = tuple(variables)
        try:
            tree = ast.parse(self.source, mode="eval")
        except SyntaxError as exc:
            raise ConfigError(f"cannot parse expression {self.source!r}: {exc.msg}") from exc
        self._check(tree.body)
        self._code = compile(tree, "<expr>", "eval")

    def _check(self, node):
        if isinstance(node, ast.BinOp):
            if not isinstance(node.op, _BINOPS):
                raise ConfigError(f"operator not allowed in {self.source!r}")
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp):
            if not isinstance(node.op, _UNARY):
                raise ConfigError(f"operator not allowed in {self.source!r}")
            self._check(node.operand)
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
                raise ConfigError(f"unknown function in {self.source!r}")
            if node.keywords:
                raise ConfigError(f"keyword arguments not allowed in {self.source!r}")
            for arg in node.args:
                self._check(arg)
        elif isinstance(node, ast.Name):
            if node.id not in self.variables and node.id not in _CONSTS:
                raise ConfigError(
                    f"unknown name {node.id!r} in {self.source!r}; allowed: {', '.join(self.variables)}"
                )
        elif isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
                raise ConfigError(f"non-numeric constant in {self.source!r}")
        else:
            raise ConfigError(f"construct {type(node).__name__} not allowed in {self.source!r}")

    def __call__(self, **values):
        missing = [v for v in self.variables if v not in values and v in self.source]
        if missing:
            raise ConfigError(f"missing variables {missing} for {self.source!r}")
        scope = dict(_FUNCS)
        scope.update(_CONSTS)
        scope.update({k: np.asarray(v, dtype=float) for k, v in values.items()})
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            out = eval(self._code, {"__builtins__": {}}, scope)  # noqa: S307 - whitelisted tree
        return np.asarray(out, dtype=float)

    def uses(self, name: str) -> bool:
        return any(isinstance(n, ast.Name) and n.id == name for n in ast.walk(ast.parse(self.source, mode="eval")))

    def digest(self) -> str:
        return hashlib.sha256(self.source.encode()).hexdigest()[:16]

    def __repr__(self):
        return f"Expr({self.source!r})"
