"""Concentrated-liquidity AMM for a P/U pair.

Token X is the policy token P, token Y the underwriting token U, and the
pool price is the price of P in units of U (``y / x``). Positions cover a
continuous interval ``[p0, p1]``; there is no tick grid. Breakpoints are
kept as square-root prices because reserves are linear in ``sqrt(p)``:

    r_x(p) = l * (1/sqrt(p) - 1/sqrt(p1))
    r_y(p) = l * (sqrt(p) - sqrt(p0))

All amounts are 18-digit fixed point. Amounts paid into the pool round up
and amounts paid out round down, so the pool can never owe more than it
holds.
"""

from __future__ import annotations

import copy
import itertools
from dataclasses import dataclass, field
from decimal import Decimal
from enum import Enum

from .errors import BadInterval, InsufficientLiquidity, RatioMismatch, UnknownPosition, ZeroAmount
from .fixed import ONE, ZERO, Number, div_down, div_up, fx, mul_down, mul_up, sqrt_down

RATIO_TOLERANCE = Decimal("1e-12")


class Direction(Enum):
    """Trader's side: ``P_FOR_U`` pays P and receives U (price falls)."""

    P_FOR_U = "P_for_U"
    U_FOR_P = "U_for_P"


@dataclass
class LiquidityPosition:
    id: int
    owner: str
    sqrt_lower: Decimal
    sqrt_upper: Decimal
    liquidity: Decimal
    fees_x: Decimal = ZERO
    fees_y: Decimal = ZERO

    @property
    def p0(self) -> Decimal:
        return self.sqrt_lower * self.sqrt_lower

    @property
    def p1(self) -> Decimal:
        return self.sqrt_upper * self.sqrt_upper


@dataclass
class SwapResult:
    direction: Direction
    amount_in: Decimal
    amount_out: Decimal
    fee: Decimal
    sqrt_price_before: Decimal
    sqrt_price_after: Decimal

    @property
    def average_price(self) -> Decimal:
        """Execution price in U per P."""
        if self.direction is Direction.P_FOR_U:
            net_in = self.amount_in - self.fee
            return self.amount_out / net_in
        return (self.amount_in - self.fee) / self.amount_out


# --- closed-form reserve helpers (Decimal, directed rounding) ---------------

def amount_x_between(liquidity: Decimal, sa: Decimal, sb: Decimal, up: bool) -> Decimal:
    """X reserve freed/needed moving between sqrt prices ``sa < sb``."""
    if sa > sb:
        sa, sb = sb, sa
    num = liquidity * (sb - sa)
    return div_up(num, sa * sb) if up else div_down(num, sa * sb)


def amount_y_between(liquidity: Decimal, sa: Decimal, sb: Decimal, up: bool) -> Decimal:
    if sa > sb:
        sa, sb = sb, sa
    return mul_up(liquidity, sb - sa) if up else mul_down(liquidity, sb - sa)


def position_amounts(liquidity: Decimal, sqrt_price: Decimal, sl: Decimal, su: Decimal, up: bool = False) -> tuple[Decimal, Decimal]:
    """Real reserves of a position at ``sqrt_price``, clamped outside its range."""
    s = min(max(sqrt_price, sl), su)
    return amount_x_between(liquidity, s, su, up), amount_y_between(liquidity, sl, s, up)


class Pool:
    """Single P/U pool with continuous-interval positions.

    ``fee_rate`` is taken from each swap's input and distributed to the
    positions active in each crossed segment, pro rata by liquidity. Fees
    are held in the input token and never compound into liquidity.
    """

    def __init__(self, price: Number, fee_rate: Number = 0, token_x: str = "P", token_y: str = "U"):
        price = fx(price)
        if price <= 0:
            raise ValueError("pool price must be positive")
        self.sqrt_price = sqrt_down(price)
        self.fee_rate = fx(fee_rate)
        if not ZERO <= self.fee_rate < ONE:
            raise ValueError("fee rate must lie in [0, 1)")
        self.token_x = token_x
        self.token_y = token_y
        self.positions: dict[int, LiquidityPosition] = {}
        # sqrt breakpoint -> net liquidity change when crossing it upward
        self.breakpoints: dict[Decimal, Decimal] = {}
        self.balance_x = ZERO
        self.balance_y = ZERO
        self.fees_x = ZERO
        self.fees_y = ZERO
        self._ids = itertools.count(1)

    @property
    def price(self) -> Decimal:
        return self.sqrt_price * self.sqrt_price

    # ------------------------------------------------------------------
    # liquidity structure

    def _sorted_breakpoints(self) -> list[Decimal]:
        return sorted(self.breakpoints)

    def liquidity_between(self, sa: Decimal, sb: Decimal) -> Decimal:
        """Aggregate liquidity on the open segment ``(sa, sb)`` with no breakpoint inside."""
        lo = min(sa, sb)
        return sum((net for bp, net in self.breakpoints.items() if bp <= lo), ZERO)

    def active_positions(self, sa: Decimal, sb: Decimal) -> list[LiquidityPosition]:
        lo, hi = min(sa, sb), max(sa, sb)
        return [p for p in self.positions.values() if p.sqrt_lower <= lo and p.sqrt_upper >= hi]

    def segments(self) -> list[tuple[Decimal, Decimal, Decimal]]:
        """``(sqrt_lo, sqrt_hi, liquidity)`` for every segment between breakpoints."""
        bps = self._sorted_breakpoints()
        return [(a, b, self.liquidity_between(a, b)) for a, b in zip(bps, bps[1:])]

    # ------------------------------------------------------------------
    # positions

    def add_position(
        self,
        owner: str,
        p0: Number,
        p1: Number,
        amount_x: Number = 0,
        amount_y: Number = 0,
    ) -> tuple[LiquidityPosition, Decimal, Decimal]:
        """Open a position on ``[p0, p1]`` funded by the given amounts.

        Returns ``(position, x_taken, y_taken)``; taken amounts never exceed
        what was offered. Inside the range both tokens are required in the
        ratio fixed by the current price.
        """
        p0, p1 = fx(p0), fx(p1)
        if not (ZERO < p0 < p1):
            raise BadInterval(f"need 0 < p0 < p1, got [{p0}, {p1}]")
        return self.add_position_sqrt(owner, sqrt_down(p0), sqrt_down(p1), fx(amount_x), fx(amount_y))

    def add_position_sqrt(
        self, owner: str, sl: Decimal, su: Decimal, amount_x: Decimal, amount_y: Decimal
    ) -> tuple[LiquidityPosition, Decimal, Decimal]:
        if not (ZERO < sl < su):
            raise BadInterval(f"need 0 < sqrt_lower < sqrt_upper, got [{sl}, {su}]")
        if amount_x < 0 or amount_y < 0:
            raise ValueError("negative deposit")
        s = self.sqrt_price
        if s <= sl:
            # entirely above the current price: only X
            unit_x = ONE / sl - ONE / su
            liquidity = div_down(amount_x, unit_x) if amount_x > 0 else ZERO
        elif s >= su:
            liquidity = div_down(amount_y, su - sl) if amount_y > 0 else ZERO
        else:
            unit_x = ONE / s - ONE / su
            unit_y = s - sl
            lx = amount_x / unit_x
            ly = amount_y / unit_y
            if lx <= 0 or ly <= 0 or abs(lx - ly) > RATIO_TOLERANCE * max(lx, ly):
                raise RatioMismatch(
                    f"deposit {amount_x} X / {amount_y} Y does not match the ratio required at price {self.price}"
                )
            liquidity = fx(min(lx, ly))
        if liquidity <= 0:
            raise ZeroAmount("deposit yields zero liquidity")
        need_x, need_y = position_amounts(liquidity, s, sl, su, up=True)
        # rounding up can overshoot the offer by one ulp; shave liquidity
        while need_x > amount_x or need_y > amount_y:
            liquidity -= Decimal("1e-18")
            need_x, need_y = position_amounts(liquidity, s, sl, su, up=True)
        pos = LiquidityPosition(next(self._ids), owner, sl, su, liquidity)
        self.positions[pos.id] = pos
        self.breakpoints[sl] = self.breakpoints.get(sl, ZERO) + liquidity
        self.breakpoints[su] = self.breakpoints.get(su, ZERO) - liquidity
        self.balance_x += need_x
        self.balance_y += need_y
        return pos, need_x, need_y

    def position_reserves(self, position: LiquidityPosition | int) -> tuple[Decimal, Decimal]:
        pos = self._get(position)
        return position_amounts(pos.liquidity, self.sqrt_price, pos.sqrt_lower, pos.sqrt_upper)

    def _get(self, position: LiquidityPosition | int) -> LiquidityPosition:
        pid = position.id if isinstance(position, LiquidityPosition) else position
        try:
            return self.positions[pid]
        except KeyError:
            raise UnknownPosition(f"no position with id {pid}") from None

    def remove_position(self, position: LiquidityPosition | int) -> tuple[Decimal, Decimal, Decimal, Decimal]:
        """Close a position; returns ``(x, y, fees_x, fees_y)``."""
        pos = self._get(position)
        x, y = self.position_reserves(pos)
        del self.positions[pos.id]
        for bp, delta in ((pos.sqrt_lower, pos.liquidity), (pos.sqrt_upper, -pos.liquidity)):
            left = self.breakpoints[bp] - delta
            if left == 0 and not any(bp in (p.sqrt_lower, p.sqrt_upper) for p in self.positions.values()):
                del self.breakpoints[bp]
            else:
                self.breakpoints[bp] = left
        self.balance_x -= x
        self.balance_y -= y
        self.fees_x -= pos.fees_x
        self.fees_y -= pos.fees_y
        return x, y, pos.fees_x, pos.fees_y

    # ------------------------------------------------------------------
    # swaps

    def swap(self, direction: Direction, amount_in: Number, price_limit: Number | None = None) -> SwapResult:
        """Exact-input swap.

        Without ``price_limit`` the whole input must be absorbed, otherwise
        :class:`InsufficientLiquidity` is raised and the pool is unchanged.
        With a limit the swap stops there and ``amount_in`` reports what was
        actually consumed.
        """
        amount_in = fx(amount_in)
        if amount_in <= 0:
            raise ZeroAmount("swap input must be positive")
        limit = sqrt_down(fx(price_limit)) if price_limit is not None else None
        return self._execute(direction, amount_in, limit)

    def swap_to_price(self, target_price: Number) -> SwapResult:
        """Trade whatever is needed to move the price to ``target_price``.

        Empty segments (including beyond the outermost breakpoint) are
        crossed at no cost.
        """
        target = sqrt_down(fx(target_price))
        direction = Direction.P_FOR_U if target < self.sqrt_price else Direction.U_FOR_P
        return self._execute(direction, None, target)

    def quote(self, direction: Direction, amount_in: Number) -> SwapResult:
        """Dry-run of :meth:`swap`; leaves the pool untouched."""
        return copy.deepcopy(self).swap(direction, amount_in)

    def _execute(self, direction: Direction, amount_in: Decimal | None, limit: Decimal | None) -> SwapResult:
        down = direction is Direction.P_FOR_U
        mu = self.fee_rate
        s = start = self.sqrt_price
        remaining = amount_in
        used = ZERO
        out = ZERO
        fee_total = ZERO
        fee_shares: list[tuple[list[LiquidityPosition], Decimal, Decimal]] = []
        bps = self._sorted_breakpoints()

        while remaining is None or remaining > 0:
            if limit is not None and (s <= limit if down else s >= limit):
                break
            if down:
                nxt = max((b for b in bps if b < s), default=None)
            else:
                nxt = min((b for b in bps if b > s), default=None)
            if nxt is None:
                if limit is None:
                    raise InsufficientLiquidity(
                        f"swap would move the price {'below' if down else 'above'} the outermost breakpoint"
                    )
                if remaining is None:
                    s = limit
                break
            target = nxt if limit is None else (max(nxt, limit) if down else min(nxt, limit))
            liq = self.liquidity_between(s, target)
            if liq == 0:
                s = target
                continue
            if down:
                need = amount_x_between(liq, target, s, up=True)
            else:
                need = amount_y_between(liq, s, target, up=True)
            need_fee = div_up(need * mu, ONE - mu) if mu > 0 else ZERO
            if remaining is None or remaining >= need + need_fee:
                step_in, step_fee, new_s = need, need_fee, target
            else:
                step_fee = mul_up(remaining, mu)
                step_in = remaining - step_fee
                if down:
                    # s' = l*s / (l + dx*s), rounded up so less X buys less Y
                    new_s = div_up(liq * s, liq + step_in * s)
                else:
                    new_s = s + div_down(step_in, liq)
                new_s = max(new_s, target) if down else min(new_s, target)
            if down:
                step_out = amount_y_between(liq, new_s, s, up=False)
            else:
                step_out = amount_x_between(liq, s, new_s, up=False)
            used += step_in + step_fee
            if remaining is not None:
                remaining -= step_in + step_fee
            out += step_out
            fee_total += step_fee
            if step_fee > 0:
                fee_shares.append((self.active_positions(s, new_s), liq, step_fee))
            s = new_s

        # commit
        if down:
            self.balance_x += used - fee_total
            self.balance_y -= out
            self.fees_x += fee_total
        else:
            self.balance_y += used - fee_total
            self.balance_x -= out
            self.fees_y += fee_total
        for active, liq, fee in fee_shares:
            for pos in active:
                share = div_down(fee * pos.liquidity, liq)
                if down:
                    pos.fees_x += share
                else:
                    pos.fees_y += share
        self.sqrt_price = s
        return SwapResult(direction, used, out, fee_total, start, s)

    # ------------------------------------------------------------------

    def reserve_gap(self) -> tuple[Decimal, Decimal]:
        """Pool balances minus the sum of position reserves (non-negative dust)."""
        rx = sum((self.position_reserves(p)[0] for p in self.positions.values()), ZERO)
        ry = sum((self.position_reserves(p)[1] for p in self.positions.values()), ZERO)
        return self.balance_x - rx, self.balance_y - ry
