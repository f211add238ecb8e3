"""Restricted numpy expressions in the surface parameters u1..un."""

from typing import Callable

import numpy as np

from camtomo.utils.errors import ConfigError

_FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "tanh": np.tanh,
    "cosh": np.cosh,
    "sinh": np.sinh,
    "arctan": np.arctan,
    "abs": np.abs,
    "pi": np.pi,
}


def compile_expression(text: str, dimension: int) -> Callable[[np.ndarray], np.ndarray]:
    """Compile an expression such as ``"1 + 0.3*exp(-(u1**2 + u2**2))"``.

    Args:
        text: Expression source
        dimension: Number of parameters; names u1..u<dimension> are bound

    Returns:
        Vectorized callable u[..., dimension] -> values[...]

    Raises:
        ConfigError: On syntax errors or names outside the allowed set
    """
    try:
        code = compile(text, "<expression>", "eval")
    except SyntaxError as e:
        raise ConfigError(f"Invalid expression {text!r}: {e}")

    variables = {f"u{i + 1}" for i in range(dimension)}
    unknown = set(code.co_names) - variables - set(_FUNCTIONS)
    if unknown:
        raise ConfigError(f"Expression {text!r} uses unknown names: {sorted(unknown)}")

    def evaluate(u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        namespace = dict(_FUNCTIONS)
        for i in range(dimension):
            namespace[f"u{i + 1}"] = u[..., i]
        value = eval(code, {"__builtins__": {}}, namespace)
        return np.broadcast_to(np.asarray(value, dtype=float), u.shape[:-1]).copy()

    return evaluate
