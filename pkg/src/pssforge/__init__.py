"""Symbolic and numeric toolkit for third-order evolution equations whose
solutions sweep out surfaces of constant Gaussian curvature K = -1 or K = +1.
"""

from .expr import (
    Context, DEFAULT_CONTEXT, Expr, Rat, Param, Jet, Func, Builtin,
    ExprError, NormalizationError, EvalError, UnsupportedDerivative,
    CyclicBindingError, DivisionByZero,
    normalize, is_zero, partial, total_dx, total_dt,
    substitute, eval_numeric, format_expr,
    rat, param, jet, z, zt, fn, builtin,
)
from .parser import parse, ParseError

__version__ = "0.1.0"
