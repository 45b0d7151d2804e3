"""User-level trades of P/U against the base currency via mint/burn + a P/U pool.

Buying P: mint ``dp/(1+p)`` pairs, swap the U leg for P.
Selling P: swap ``d/(1+p)`` P for U, burn the matched pairs.
The U side mirrors this. Each trade is atomic: on any error the ledger and
pool are restored.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from decimal import Decimal
from enum import Enum
from typing import Literal

from .clamm import Direction, Pool
from .core import BASE, CoreContract, p_token, u_token
from .errors import SlippageExceeded, ZeroAmount
from .fixed import ONE, ZERO, Number, div_down, fx, mul

DEFAULT_SLIPPAGE = Decimal("0.005")

Side = Literal["buy_P", "sell_P", "buy_U", "sell_U"]


@dataclass
class Quote:
    side: Side
    size: Decimal
    ideal_price: Decimal
    realized_price: Decimal
    cost_or_proceeds: Decimal
    received: Decimal
    legs: list[str] = field(default_factory=list)

    @property
    def slippage(self) -> Decimal:
        """Relative shortfall of the realized price versus the closed form."""
        if self.side.startswith("buy"):
            return (self.realized_price - self.ideal_price) / self.ideal_price
        return (self.ideal_price - self.realized_price) / self.ideal_price


def pool_account(event: int) -> str:
    return f"pool:{event}"


def ideal_prices(p: Decimal, f: Decimal) -> dict[Side, Decimal]:
    """Small-trade effective prices in C: buy/sell for P and U."""
    p_side = p / (ONE + p)
    u_side = ONE / (ONE + p)
    raw = {
        "buy_P": p_side * (ONE + f),
        "sell_P": p_side,
        "buy_U": u_side * (ONE + f),
        "sell_U": u_side,
    }
    return {k: fx(v) for k, v in raw.items()}


class Market:
    """Binds a core contract event to its P/U pool.

    The pool's token balances are mirrored in the ledger under
    :func:`pool_account`, so ledger totals stay consistent with the pool.
    """

    def __init__(self, contract: CoreContract, pool: Pool, event: int = 1, slippage: Number = DEFAULT_SLIPPAGE):
        self.contract = contract
        self.pool = pool
        self.event = event
        self.slippage = fx(slippage)
        self.account = pool_account(event)

    # ------------------------------------------------------------------

    def add_liquidity(self, owner: str, p0: Number, p1: Number, amount_p: Number = 0, amount_u: Number = 0):
        def run():
            pos, x, y = self.pool.add_position(owner, p0, p1, amount_p, amount_u)
            self.contract.transfer(owner, self.account, p_token(self.event), x)
            self.contract.transfer(owner, self.account, u_token(self.event), y)
            return pos
        return self._atomic(run)

    def remove_liquidity(self, owner: str, position):
        def run():
            x, y, fx_, fy = self.pool.remove_position(position)
            self.contract.transfer(self.account, owner, p_token(self.event), x + fx_)
            self.contract.transfer(self.account, owner, u_token(self.event), y + fy)
            return x, y, fx_, fy
        return self._atomic(run)

    def _swap(self, trader: str, direction: Direction, amount: Decimal) -> Decimal:
        res = self.pool.swap(direction, amount)
        tin, tout = (p_token(self.event), u_token(self.event))
        if direction is Direction.U_FOR_P:
            tin, tout = tout, tin
        self.contract.transfer(trader, self.account, tin, res.amount_in)
        self.contract.transfer(self.account, trader, tout, res.amount_out)
        return res.amount_out

    def _atomic(self, fn):
        # the oracle callback is shared, not state
        saved = (
            {k: v if k == "oracle" else copy.deepcopy(v) for k, v in self.contract.__dict__.items()},
            copy.deepcopy(self.pool.__dict__),
        )
        try:
            return fn()
        except Exception:
            self.contract.__dict__.clear()
            self.contract.__dict__.update(saved[0])
            self.pool.__dict__.clear()
            self.pool.__dict__.update(saved[1])
            raise

    def _check_size(self, delta: Number) -> Decimal:
        delta = fx(delta)
        if delta <= 0:
            raise ZeroAmount("trade size must be positive")
        return delta

    # ------------------------------------------------------------------

    def buy_policy(self, delta: Number, payer: str) -> Quote:
        return self._buy(delta, payer, "buy_P")

    def buy_underwriting(self, delta: Number, payer: str) -> Quote:
        return self._buy(delta, payer, "buy_U")

    def sell_policy(self, delta: Number, payer: str) -> Quote:
        return self._sell(delta, payer, "sell_P")

    def sell_underwriting(self, delta: Number, payer: str) -> Quote:
        return self._sell(delta, payer, "sell_U")

    def _buy(self, delta: Number, payer: str, side: Side) -> Quote:
        delta = self._check_size(delta)
        p = self.pool.price
        f = self.contract.fee
        ideal = ideal_prices(p, f)[side]
        if side == "buy_P":
            m = div_down(delta * p, ONE + p)
            direction = Direction.U_FOR_P
        else:
            m = div_down(delta, ONE + p)
            direction = Direction.P_FOR_U

        def run() -> Quote:
            before = self.contract.balance(payer, BASE)
            self.contract.mint(self.event, m, payer)
            got = self._swap(payer, direction, m)
            cost = before - self.contract.balance(payer, BASE)
            received = m + got
            if received < delta * (ONE - self.slippage):
                raise SlippageExceeded(f"received {received}, wanted at least {delta * (ONE - self.slippage)}")
            legs = [f"mint {m}", f"swap {m} {'U' if side == 'buy_P' else 'P'} -> {got}"]
            return Quote(side, delta, ideal, div_down(cost, received), cost, received, legs)

        return self._atomic(run)

    def _sell(self, delta: Number, payer: str, side: Side) -> Quote:
        delta = self._check_size(delta)
        p = self.pool.price
        ideal = ideal_prices(p, self.contract.fee)[side]
        if side == "sell_P":
            swap_amt = div_down(delta, ONE + p)
            direction = Direction.P_FOR_U
        else:
            swap_amt = div_down(delta * p, ONE + p)
            direction = Direction.U_FOR_P

        def run() -> Quote:
            got = self._swap(payer, direction, swap_amt)
            kept = delta - swap_amt
            burn = min(kept, got)
            proceeds = self.contract.burn(self.event, burn, payer) if burn > 0 else ZERO
            if proceeds < mul(delta, ideal) * (ONE - self.slippage):
                raise SlippageExceeded(f"proceeds {proceeds} below tolerance of {mul(delta, ideal)}")
            legs = [f"swap {swap_amt} -> {got}", f"burn {burn}"]
            return Quote(side, delta, ideal, div_down(proceeds, delta), proceeds, proceeds, legs)

        return self._atomic(run)


class PriceBound(Enum):
    IN_BOUNDS = "InBounds"
    ARBITRAGE_P = "ArbitrageP"
    ARBITRAGE_U = "ArbitrageU"
    PAIR_MISPRICED = "PairMispriced"


def check_price_bounds(
    pool_price: Number,
    epsilon: Number,
    fee: Number = 0,
    price_p: Number | None = None,
    price_u: Number | None = None,
) -> PriceBound:
    """Classify a P/U price against the no-arbitrage band.

    ``price_p``/``price_u`` are optional external C prices of the tokens; by
    default they are implied from the pool price (``p/(1+p)``, ``1/(1+p)``),
    whose sum is exactly one and therefore never mispriced.
    """
    p, eps, f = fx(pool_price), fx(epsilon), fx(fee)
    if p < eps / (ONE - eps):
        return PriceBound.ARBITRAGE_P
    if p > (ONE - eps) / eps:
        return PriceBound.ARBITRAGE_U
    if price_p is not None or price_u is not None:
        pp = fx(price_p) if price_p is not None else p / (ONE + p)
        pu = fx(price_u) if price_u is not None else ONE / (ONE + p)
        if not (ONE <= pp + pu <= ONE + f):
            return PriceBound.PAIR_MISPRICED
    return PriceBound.IN_BOUNDS
