"""Small arithmetic expression language for user-supplied model functions.

Grammar (one variable ``x``)::

    expr    := expr ('+' | '-') term | term
    term    := term ('*' | '/') factor | factor
    factor  := ('+' | '-') factor | power
    power   := atom ('^' factor)?
    atom    := NUMBER | 'x' | 'e' | 'pi' | FUNC '(' args ')' | '(' expr ')'
    FUNC    := 'log' | 'exp' | 'min' | 'max'

``min``/``max`` take two or more arguments; ``log`` and ``exp`` take one.
``^`` is exponentiation (``**`` is accepted as a synonym).  Parsing is done
with :mod:`ast` on a whitelist of node types, so nothing outside the grammar
can be evaluated.

Compiled expressions evaluate on numpy arrays by default, or on ``mpmath``
numbers via :meth:`Expression.mp`, which is how arguments like ``e**1e6``
are handled without overflow.
"""

from __future__ import annotations

import ast
import math
import operator

import mpmath
import numpy as np

__all__ = ["Expression", "ExpressionError", "compile_expression"]


class ExpressionError(ValueError):
    pass


_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}

_NUMPY_FUNCS = {
    "log": (np.log, 1),
    "exp": (np.exp, 1),
    "min": (np.minimum, None),
    "max": (np.maximum, None),
}

_MP_FUNCS = {
    "log": (mpmath.log, 1),
    "exp": (mpmath.exp, 1),
    "min": (min, None),
    "max": (max, None),
}

_CONSTANTS = {"e": math.e, "pi": math.pi}


def _check(node, source):
    if isinstance(node, ast.Expression):
        _check(node.body, source)
    elif isinstance(node, ast.BinOp):
        if type(node.op) not in _BINOPS:
            raise ExpressionError(f"operator not allowed in {source!r}")
        _check(node.left, source)
        _check(node.right, source)
    elif isinstance(node, ast.UnaryOp):
        if not isinstance(node.op, (ast.UAdd, ast.USub)):
            raise ExpressionError(f"unary operator not allowed in {source!r}")
        _check(node.operand, source)
    elif isinstance(node, ast.Constant):
        if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
            raise ExpressionError(f"only numeric literals are allowed in {source!r}")
    elif isinstance(node, ast.Name):
        if node.id != "x" and node.id not in _CONSTANTS:
            raise ExpressionError(f"unknown name {node.id!r} in {source!r}")
    elif isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in _NUMPY_FUNCS:
            raise ExpressionError(f"unknown function in {source!r}")
        if node.keywords:
            raise ExpressionError(f"keyword arguments not allowed in {source!r}")
        arity = _NUMPY_FUNCS[node.func.id][1]
        n = len(node.args)
        if (arity is not None and n != arity) or (arity is None and n < 2):
            raise ExpressionError(f"wrong number of arguments to {node.func.id} in {source!r}")
        for arg in node.args:
            _check(arg, source)
    else:
        raise ExpressionError(f"syntax not allowed in {source!r}: {type(node).__name__}")


def _evaluate(node, x, funcs):
    if isinstance(node, ast.BinOp):
        return _BINOPS[type(node.op)](_evaluate(node.left, x, funcs), _evaluate(node.right, x, funcs))
    if isinstance(node, ast.UnaryOp):
        val = _evaluate(node.operand, x, funcs)
        return -val if isinstance(node.op, ast.USub) else val
    if isinstance(node, ast.Constant):
        return float(node.value)
    if isinstance(node, ast.Name):
        return x if node.id == "x" else _CONSTANTS[node.id]
    fn = funcs[node.func.id][0]
    args = [_evaluate(a, x, funcs) for a in node.args]
    if len(args) == 1:
        return fn(args[0])
    out = args[0]
    for a in args[1:]:
        out = fn(out, a)
    return out


class Expression:
    """A parsed, validated expression in ``x``; call it like a function."""

    def __init__(self, source: str):
        self.source = source
        text = source.replace("^", "**")
        try:
            tree = ast.parse(text.strip(), mode="eval")
        except SyntaxError as exc:
            raise ExpressionError(f"cannot parse {source!r}: {exc.msg}") from None
        _check(tree, source)
        self._body = tree.body

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            out = np.asarray(_evaluate(self._body, x, _NUMPY_FUNCS), dtype=float)
        if out.shape != x.shape:
            out = np.broadcast_to(out, x.shape).copy()
        return out

    def mp(self, x):
        """Evaluate with mpmath arithmetic (arbitrary exponent range)."""
        return _evaluate(self._body, mpmath.mpf(x), _MP_FUNCS)

    def __repr__(self):
        return f"Expression({self.source!r})"

    def __eq__(self, other):
        return isinstance(other, Expression) and other.source == self.source

    def __hash__(self):
        return hash(self.source)

    def __getstate__(self):
        return {"source": self.source}

    def __setstate__(self, state):
        self.__init__(state["source"])


def compile_expression(source: str) -> Expression:
    return Expression(source)
