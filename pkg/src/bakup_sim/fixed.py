"""18-digit decimal fixed-point helpers.

All token balances and on-ledger prices are :class:`decimal.Decimal` values
quantized to 18 fractional digits. Addition and subtraction of quantized
values is exact; multiplication, division and square roots are truncated
(rounded toward zero) unless an explicit ``up`` variant is used.
"""

from __future__ import annotations

import decimal
from decimal import ROUND_CEILING, ROUND_DOWN, ROUND_FLOOR, Decimal

DECIMALS = 18
ULP = Decimal(1).scaleb(-DECIMALS)
ZERO = Decimal(0)
ONE = Decimal(1)

# Working precision for intermediate products; 18 fractional digits plus
# up to 40 integer digits never hits the context limit.
_PREC = 60
_ctx = decimal.Context(prec=_PREC, rounding=ROUND_DOWN)
_ctx_floor = decimal.Context(prec=_PREC, rounding=ROUND_FLOOR)
_ctx_ceil = decimal.Context(prec=_PREC, rounding=ROUND_CEILING)

# Plain +/- between quantized values must not be silently rounded by the
# default 28-digit context.
decimal.DefaultContext.prec = max(decimal.DefaultContext.prec, _PREC)
decimal.getcontext().prec = max(decimal.getcontext().prec, _PREC)

Number = Decimal | int | float | str


def fx(value: Number) -> Decimal:
    """Convert to an 18-digit fixed-point value, truncating extra digits.

    Floats go through ``repr`` so ``fx(0.1) == Decimal("0.1")``.
    """
    if isinstance(value, float):
        value = repr(value)
    return _ctx.create_decimal(value).quantize(ULP, rounding=ROUND_DOWN, context=_ctx)


def _q(x: Decimal, up: bool) -> Decimal:
    return x.quantize(ULP, rounding=ROUND_CEILING if up else ROUND_FLOOR, context=_ctx)


def trunc(x: Decimal) -> Decimal:
    """Quantize toward zero."""
    return x.quantize(ULP, rounding=ROUND_DOWN, context=_ctx)


def mul(a: Decimal, b: Decimal) -> Decimal:
    return trunc(_ctx.multiply(a, b))


def div(a: Decimal, b: Decimal) -> Decimal:
    if b == 0:
        raise ZeroDivisionError("fixed-point division by zero")
    return trunc(_ctx.divide(a, b))


def sqrt(a: Number) -> Decimal:
    if not isinstance(a, Decimal):
        a = fx(a)
    if a < 0:
        raise ValueError("sqrt of negative value")
    return trunc(_ctx.sqrt(a))


# Directed variants used by the AMM, where rounding must favour the pool.
def mul_down(a: Decimal, b: Decimal) -> Decimal:
    return _q(_ctx_floor.multiply(a, b), up=False)


def mul_up(a: Decimal, b: Decimal) -> Decimal:
    return _q(_ctx_ceil.multiply(a, b), up=True)


def div_down(a: Decimal, b: Decimal) -> Decimal:
    return _q(_ctx_floor.divide(a, b), up=False)


def div_up(a: Decimal, b: Decimal) -> Decimal:
    return _q(_ctx_ceil.divide(a, b), up=True)


def sqrt_down(a: Decimal) -> Decimal:
    return _q(_ctx.sqrt(a), up=False)


def sqrt_up(a: Decimal) -> Decimal:
    return _q(_ctx.sqrt(a), up=True)


def ln(a: Decimal) -> Decimal:
    return _ctx.ln(a)


def exp(a: Decimal) -> Decimal:
    return _ctx.exp(a)
