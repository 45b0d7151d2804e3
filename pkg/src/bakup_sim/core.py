"""Core module: P/U conditional-token accounting for one adversity.

A :class:`CoreContract` holds ``n`` binary events sharing one expiration.
Each event ``i`` has a policy token ``P{i}`` and an underwriting token
``U{i}``; one pair is always worth exactly one unit of the base currency.
Balances live in a simple account -> token -> amount book.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Callable

from .errors import (
    AlreadyTrue,
    EventExpired,
    InsufficientBalance,
    InvariantViolation,
    NotRedeemable,
    UnknownEvent,
    ZeroAmount,
)
from .fixed import ONE, ZERO, Number, fx, mul

BASE = "C"
RESERVE_ACCOUNT = "core:reserve"


def p_token(i: int) -> str:
    return f"P{i}"


def u_token(i: int) -> str:
    return f"U{i}"


@dataclass
class BinaryEvent:
    index: int
    assertion_id: str
    expiration: int
    state: bool = False
    triggered_at: int | None = None

    def is_expired(self, now: int) -> bool:
        return now >= self.expiration


@dataclass
class EventBook:
    """Per-event supplies and the share of the reserve backing them."""

    supply_p: Decimal = ZERO
    supply_u: Decimal = ZERO
    reserve: Decimal = ZERO
    minted: Decimal = ZERO
    paid_out: Decimal = ZERO


# Signature of the oracle callback: (assertion_id, now) -> outcome.
OracleCallback = Callable[[str, int], bool]


class CoreContract:
    """Immutable-parameter ledger for ``n`` binary events.

    ``fee`` and ``epsilon`` are fixed at construction. ``oracle`` is the
    callback :meth:`trigger` consults. With ``debug=True`` the reserve and
    supply invariants are re-checked after every mutating call.
    """

    def __init__(
        self,
        assertion_ids: list[str],
        expiration: int,
        fee: Number = 0,
        epsilon: Number = "0.01",
        fee_to: str = "feeTo",
        oracle: OracleCallback | None = None,
        trigger_reward: Number = 0,
        debug: bool = False,
    ):
        fee_d, eps_d = fx(fee), fx(epsilon)
        if not (ZERO <= fee_d < ONE):
            raise ValueError(f"fee must lie in [0, 1), got {fee}")
        if not (ZERO < eps_d < Decimal("0.5")):
            raise ValueError(f"epsilon must lie in (0, 0.5), got {epsilon}")
        if not assertion_ids:
            raise ValueError("a core contract needs at least one event")
        self._fee = fee_d
        self._epsilon = eps_d
        self.fee_to = fee_to
        self.expiration = int(expiration)
        self.oracle = oracle
        self.trigger_reward = fx(trigger_reward)
        self.debug = debug
        self.events = [
            BinaryEvent(index=i, assertion_id=a, expiration=self.expiration)
            for i, a in enumerate(assertion_ids, start=1)
        ]
        self.books = {e.index: EventBook() for e in self.events}
        self.balances: dict[str, dict[str, Decimal]] = defaultdict(lambda: defaultdict(lambda: ZERO))
        self.fees_collected = ZERO
        # latest timestamp seen by a time-aware call; resolution is irreversible
        self.clock = -(2**62)

    # parameters are read-only after construction
    @property
    def fee(self) -> Decimal:
        return self._fee

    @property
    def epsilon(self) -> Decimal:
        return self._epsilon

    @property
    def n(self) -> int:
        return len(self.events)

    @property
    def reserve(self) -> Decimal:
        return sum((b.reserve for b in self.books.values()), ZERO)

    def event(self, i: int) -> BinaryEvent:
        if not 1 <= i <= len(self.events):
            raise UnknownEvent(f"no event with index {i}")
        return self.events[i - 1]

    # ------------------------------------------------------------------
    # balance bookkeeping

    def balance(self, account: str, token: str) -> Decimal:
        return self.balances[account][token] if account in self.balances else ZERO

    def _debit(self, account: str, token: str, amount: Decimal) -> None:
        have = self.balance(account, token)
        if have < amount:
            raise InsufficientBalance(f"{account} holds {have} {token}, needs {amount}")
        self.balances[account][token] = have - amount

    def _credit(self, account: str, token: str, amount: Decimal) -> None:
        self.balances[account][token] += amount

    def fund(self, account: str, amount: Number) -> None:
        """Credit base currency from outside the system (scenario faucet)."""
        amount = fx(amount)
        if amount <= 0:
            raise ZeroAmount("funding amount must be positive")
        self._credit(account, BASE, amount)

    def withdraw_external(self, account: str, amount: Number) -> None:
        """Move base currency out of the simulated system."""
        amount = fx(amount)
        if amount <= 0:
            raise ZeroAmount("withdrawal amount must be positive")
        self._debit(account, BASE, amount)

    def transfer(self, sender: str, receiver: str, token: str, amount: Number) -> None:
        amount = fx(amount)
        if amount < 0:
            raise ValueError("negative transfer")
        if amount == 0:
            return
        self._debit(sender, token, amount)
        self._credit(receiver, token, amount)

    # ------------------------------------------------------------------
    # protocol methods

    def mint(self, i: int, k: Number, payer: str) -> Decimal:
        """Pay ``k(1+f)`` C, receive ``k`` of both ``P_i`` and ``U_i``."""
        self.event(i)
        k = fx(k)
        if k <= 0:
            raise ZeroAmount("mint amount must be positive")
        fee = mul(k, self._fee)
        self._debit(payer, BASE, k + fee)
        self._credit(self.fee_to, BASE, fee)
        self.fees_collected += fee
        book = self.books[i]
        book.reserve += k
        book.minted += k
        book.supply_p += k
        book.supply_u += k
        self._credit(payer, p_token(i), k)
        self._credit(payer, u_token(i), k)
        self._check()
        return k

    def burn(self, i: int, k: Number, payer: str) -> Decimal:
        """Return ``k`` of both tokens for ``k`` C."""
        self.event(i)
        k = fx(k)
        if k <= 0:
            raise ZeroAmount("burn amount must be positive")
        if self.balance(payer, p_token(i)) < k or self.balance(payer, u_token(i)) < k:
            raise InsufficientBalance(f"{payer} lacks {k} of both {p_token(i)} and {u_token(i)}")
        self._debit(payer, p_token(i), k)
        self._debit(payer, u_token(i), k)
        book = self.books[i]
        book.supply_p -= k
        book.supply_u -= k
        book.reserve -= k
        book.paid_out += k
        self._credit(payer, BASE, k)
        self._check()
        return k

    def trigger(self, i: int, caller: str, now: int) -> bool:
        """Ask the oracle whether assertion ``i`` holds; latch True if so."""
        ev = self.event(i)
        self.clock = max(self.clock, now)
        if ev.is_expired(now):
            raise EventExpired(f"event {i} expired at {ev.expiration}, now={now}")
        if ev.state:
            raise AlreadyTrue(f"event {i} is already True")
        if self.oracle is None:
            raise RuntimeError("core contract has no oracle attached")
        outcome = bool(self.oracle(ev.assertion_id, now))
        if outcome:
            ev.state = True
            ev.triggered_at = now
            reward = min(self.trigger_reward, self.balance(self.fee_to, BASE))
            if reward > 0:
                self.transfer(self.fee_to, caller, BASE, reward)
        self._check()
        return outcome

    def redemption_value(self, i: int, now: int) -> tuple[Decimal, Decimal] | None:
        """Per-token payout ``(P_i, U_i)``, or ``None`` while unresolved."""
        ev = self.event(i)
        if ev.state:
            return ONE - self._epsilon, self._epsilon
        if ev.is_expired(now):
            return self._epsilon, ONE - self._epsilon
        return None

    def _redeem(self, i: int, k: Number, payer: str, now: int, token: str, side: int) -> Decimal:
        k = fx(k)
        if k <= 0:
            raise ZeroAmount("redeem amount must be positive")
        self.clock = max(self.clock, now)
        values = self.redemption_value(i, now)
        if values is None:
            raise NotRedeemable(f"event {i} is False and not yet expired")
        self._debit(payer, token, k)
        book = self.books[i]
        if side == 0:
            book.supply_p -= k
        else:
            book.supply_u -= k
        payout = mul(k, values[side])
        book.reserve -= payout
        book.paid_out += payout
        self._credit(payer, BASE, payout)
        self._check()
        return payout

    def redeem_p(self, i: int, k: Number, payer: str, now: int) -> Decimal:
        return self._redeem(i, k, payer, now, p_token(i), 0)

    def redeem_u(self, i: int, k: Number, payer: str, now: int) -> Decimal:
        return self._redeem(i, k, payer, now, u_token(i), 1)

    # ------------------------------------------------------------------
    # invariants

    def obligations(self, i: int, now: int) -> Decimal:
        """Worst-case C owed to outstanding ``P_i``/``U_i`` over reachable final states."""
        ev = self.event(i)
        book = self.books[i]
        eps = self._epsilon
        if_true = mul(book.supply_p, ONE - eps) + mul(book.supply_u, eps)
        if_false = mul(book.supply_p, eps) + mul(book.supply_u, ONE - eps)
        if ev.state:
            return if_true
        if ev.is_expired(now):
            return if_false
        return max(if_true, if_false)

    def check_invariants(self, now: int | None = None) -> None:
        now = self.clock if now is None else max(now, self.clock)
        for ev in self.events:
            book = self.books[ev.index]
            # ULP slack: each mul() in obligations() truncates once
            if book.reserve + 2 * self.n * Decimal("1e-18") < self.obligations(ev.index, now):
                raise InvariantViolation(f"event {ev.index}: reserve {book.reserve} below obligations")
            if book.reserve + book.paid_out != book.minted:
                raise InvariantViolation(f"event {ev.index}: C conservation broken")
            if min(book.supply_p, book.supply_u, book.reserve) < 0:
                raise InvariantViolation(f"event {ev.index}: negative supply or reserve")
        for account, tokens in self.balances.items():
            for token, amount in tokens.items():
                if amount < 0:
                    raise InvariantViolation(f"negative balance {account}/{token}")

    def _check(self) -> None:
        if self.debug:
            self.check_invariants()

    def snapshot(self) -> dict:
        """Plain-data view of the contract state (amounts as strings)."""
        return {
            "fee": str(self._fee),
            "epsilon": str(self._epsilon),
            "expiration": self.expiration,
            "reserve": str(self.reserve),
            "fees_collected": str(self.fees_collected),
            "events": [
                {
                    "index": e.index,
                    "assertion_id": e.assertion_id,
                    "state": e.state,
                    "triggered_at": e.triggered_at,
                    "supply_p": str(self.books[e.index].supply_p),
                    "supply_u": str(self.books[e.index].supply_u),
                    "reserve": str(self.books[e.index].reserve),
                }
                for e in self.events
            ],
            "balances": {
                acct: {tok: str(amt) for tok, amt in sorted(toks.items()) if amt != 0}
                for acct, toks in sorted(self.balances.items())
            },
        }
