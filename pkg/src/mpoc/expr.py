"""Closed-form data expressions.

A small arithmetic grammar over named variables: numbers, ``+ - * /``,
``^`` or ``**`` for powers, unary signs, parentheses, the constants
``pi`` and ``e`` and the functions ``sin cos tan exp log sqrt abs tanh
sinh cosh``.  A comma-separated list gives a vector-valued expression.
Expressions are validated at parse time and evaluated with NumPy.
"""
from __future__ import annotations

import ast

import numpy as np

FUNCTIONS = {name: getattr(np, name) for name in
             ("sin", "cos", "tan", "exp", "log", "sqrt", "abs", "tanh", "sinh", "cosh")}
CONSTANTS = {"pi": np.pi, "e": np.e}

_BINOPS = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply, ast.Div: np.divide,
           ast.Pow: np.power}


class ExpressionError(ValueError):
    pass


def _compile(node, variables, text):
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
            and not isinstance(node.value, bool):
        v = float(node.value)
        return lambda env: v
    if isinstance(node, ast.Name):
        if node.id in variables:
            name = node.id
            return lambda env: env[name]
        if node.id in CONSTANTS:
            v = CONSTANTS[node.id]
            return lambda env: v
        raise ExpressionError(f"unknown name {node.id!r} in {text!r}")
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        op = _BINOPS[type(node.op)]
        a = _compile(node.left, variables, text)
        b = _compile(node.right, variables, text)
        return lambda env: op(a(env), b(env))
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        a = _compile(node.operand, variables, text)
        if isinstance(node.op, ast.USub):
            return lambda env: -a(env)
        return a
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and not node.keywords:
        if node.func.id not in FUNCTIONS:
            raise ExpressionError(f"unknown function {node.func.id!r} in {text!r}")
        if len(node.args) != 1:
            raise ExpressionError(f"{node.func.id} takes one argument in {text!r}")
        fn = FUNCTIONS[node.func.id]
        a = _compile(node.args[0], variables, text)
        return lambda env: fn(a(env))
    raise ExpressionError(f"unsupported syntax in {text!r}")


class Expression:
    """Compiled expression in the given variables.

    Examples
    --------
    >>> Expression("2*x^2 + sin(pi*y)", ("x", "y"))(np.array([1.0]), np.array([0.5]))
    array([3.])
    """

    def __init__(self, text, variables=("x", "y")):
        self.text = text
        self.variables = tuple(variables)
        try:
            # ``^`` must bind like ``**``, not like Python's xor
            tree = ast.parse(text.strip().replace("^", "**"), mode="eval")
        except SyntaxError as exc:
            raise ExpressionError(f"cannot parse {text!r}: {exc.msg}") from None
        body = tree.body
        parts = body.elts if isinstance(body, ast.Tuple) else [body]
        self._parts = [_compile(p, self.variables, text) for p in parts]

    @property
    def size(self):
        return len(self._parts)

    def __call__(self, *args):
        env = dict(zip(self.variables, (np.asarray(a, dtype=float) for a in args)))
        shape = np.broadcast(*env.values()).shape if env else ()
        out = [np.broadcast_to(np.asarray(p(env), dtype=float), shape).copy() for p in self._parts]
        return out[0] if len(out) == 1 else tuple(out)


def parse(text, variables=("x", "y"), size=None):
    e = Expression(text, variables)
    if size is not None and e.size != size:
        raise ExpressionError(f"{text!r} has {e.size} components, expected {size}")
    return e
