"""Configurable-precision real/complex arithmetic on top of :mod:`mpmath`.

Each precision gets its own :class:`mpmath.MPContext`, so computations at
different precisions never share mutable state and can run concurrently.
mpmath floats carry an arbitrary-size binary exponent, which covers the
``Lambda**(-2n)`` magnitudes needed for ``n`` in the hundreds.
"""

from __future__ import annotations

import functools
from typing import Any, Callable

import mpmath

__all__ = [
    "DEFAULT_DIGITS",
    "PrecisionDomainError",
    "agree_at_precision",
    "arith",
    "context",
    "format_sig",
    "from_decimal",
    "significant_digits_agreed",
    "to_decimal",
]

DEFAULT_DIGITS = 50


class PrecisionDomainError(ValueError):
    """Raised for division by zero or a real power outside its domain."""


@functools.lru_cache(maxsize=None)
def context(digits: int = DEFAULT_DIGITS) -> mpmath.ctx_mp.MPContext:
    """An mpmath context working with ``digits`` significant decimal digits."""
    if digits < 5:
        raise ValueError("need at least 5 digits")
    ctx = mpmath.MPContext()
    ctx.dps = digits
    return ctx


def _is_complex(x) -> bool:
    return isinstance(x, complex) or hasattr(x, "_mpc_")


def arith(op: str, *args: Any, ctx=None):
    """Evaluate one primitive operation at the precision of ``ctx``.

    Supported tags: ``add``, ``sub``, ``mul``, ``div``, ``exp``,
    ``power-real`` (``base**exponent`` with real exponent), ``abs`` and
    ``pi-const``.

    >>> c = context(50)
    >>> abs(arith("exp", c.mpc(0, c.pi), ctx=c) + 1) < c.mpf("1e-48")
    True
    """
    ctx = ctx or context()
    vals = [ctx.convert(a) for a in args]
    if op == "add":
        return vals[0] + vals[1]
    if op == "sub":
        return vals[0] - vals[1]
    if op == "mul":
        return vals[0] * vals[1]
    if op == "div":
        if vals[1] == 0:
            raise PrecisionDomainError("division by zero")
        return vals[0] / vals[1]
    if op == "exp":
        return ctx.exp(vals[0])
    if op == "power-real":
        base, expo = vals
        if _is_complex(expo) and expo.imag != 0:
            raise PrecisionDomainError("power-real needs a real exponent")
        if _is_complex(base):
            if base.imag != 0:
                raise PrecisionDomainError("power-real needs a real base")
            base = base.real
        if base < 0 and not ctx.isint(expo):
            raise PrecisionDomainError("negative base with non-integer exponent")
        if base == 0 and expo <= 0:
            raise PrecisionDomainError("zero base with non-positive exponent")
        return ctx.power(base, expo)
    if op == "abs":
        return abs(vals[0])
    if op == "pi-const":
        return +ctx.pi
    raise ValueError(f"unknown operation {op!r}")


def significant_digits_agreed(x, y) -> float:
    """Number of leading significant decimal digits on which ``x`` and ``y`` agree.

    Works for reals and complex numbers (relative error in modulus).
    Returns ``inf`` for identical values.
    """
    ctx = context(max(context_digits(x), context_digits(y), 15))
    x, y = ctx.convert(x), ctx.convert(y)
    diff = abs(x - y)
    if diff == 0:
        return float("inf")
    scale = max(abs(x), abs(y))
    if scale == 0:
        return float("inf")
    return float(-ctx.log10(diff / scale))


def context_digits(x) -> int:
    prec = getattr(getattr(x, "context", None), "prec", None)
    return int(prec * 0.30103) if prec else 15


def agree_at_precision(computation: Callable[[Any], Any], p1: int, p2: int, digits: int) -> bool:
    """Run ``computation(ctx)`` at ``p1`` and ``p2`` digits; check agreement to ``digits`` digits.

    ``computation`` may return a number or a flat sequence of numbers; every
    entry must agree.  Exact zeros on both sides count as agreement.
    """
    if p2 < p1 + 20:
        raise ValueError("need p2 >= p1 + 20")
    lo = computation(context(p1))
    hi = computation(context(p2))
    if not isinstance(lo, (list, tuple)):
        lo, hi = [lo], [hi]
    if len(lo) != len(hi):
        return False
    return all(significant_digits_agreed(a, b) >= digits for a, b in zip(lo, hi))


def to_decimal(x) -> str:
    """Exact decimal serialization with explicit exponent.

    The binary significand ``m * 2**e`` is written out in full, so
    :func:`from_decimal` at enough precision returns the identical value.
    """
    ctx = getattr(x, "context", None) or context()
    if _is_complex(x):
        return f"({to_decimal(x.real)},{to_decimal(x.imag)})"
    x = ctx.convert(x)
    if ctx.isinf(x) or ctx.isnan(x):
        return str(x)
    sign, man, exp, _ = x._mpf_
    if man == 0:
        return "0e0"
    man = -man if sign else man
    if exp >= 0:
        return f"{man * 2**exp}e0"
    # m * 2**e = m * 5**(-e) * 10**e
    return f"{man * 5 ** (-exp)}e{exp}"


def from_decimal(text: str, ctx=None):
    """Inverse of :func:`to_decimal`; exact whenever ``ctx`` holds enough bits."""
    text = text.strip()
    if text.startswith("(") and text.endswith(")"):
        re, im = text[1:-1].split(",")
        ctx = ctx or context()
        return ctx.mpc(from_decimal(re, ctx), from_decimal(im, ctx))
    ctx = ctx or context()
    mant, _, exp = text.partition("e")
    mant_i = int(mant)
    exp_i = int(exp or 0)
    bits = max(ctx.prec, mant_i.bit_length() + 8)
    with ctx.workprec(bits + 4 * abs(exp_i)):
        v = ctx.mpf(mant_i * 10**exp_i) if exp_i >= 0 else ctx.mpf(mant_i) / ctx.mpf(10 ** (-exp_i))
    return +v


def format_sig(x, digits: int = 5) -> str:
    """Format a real or complex number to ``digits`` significant digits, keeping trailing zeros.

    >>> format_sig(0.9765)
    '0.97650'
    """
    if _is_complex(x):
        re, im = float(x.real), float(x.imag)
        sign = "+" if im >= 0 else "-"
        return f"{_fmt(re, digits)}{sign}{_fmt(abs(im), digits)}i"
    return _fmt(x, digits)


def _fmt(x, digits: int) -> str:
    ctx = getattr(x, "context", None)
    if ctx is not None and (abs(x) > 1e300 or (x != 0 and abs(x) < 1e-300)):
        return ctx.nstr(x, digits, strip_zeros=False, min_fixed=0, max_fixed=0)
    return format(float(x), f"#.{digits}g").rstrip(".") if float(x) != 0 else "0"
