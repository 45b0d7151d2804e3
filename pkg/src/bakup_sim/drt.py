"""DeFi Risk Transfer tranches and the yield vault built on top of them.

The vault takes P and U deposits, burns the matched pairs for base currency,
invests that into one DRT tranche, and after divesting re-mints pairs and
hands them back pro rata per token side together with the unburnt excess.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from decimal import Decimal
from enum import Enum

from .core import BASE, CoreContract, p_token, u_token
from .errors import InterestExceedsRecovery, NothingToInvest, WrongPhase, ZeroAmount
from .fixed import ONE, ZERO, Number, div_down, fx


class Tranche(str, Enum):
    A = "A"
    B = "B"


class Phase(str, Enum):
    CREATED = "Created"
    INVESTED = "Invested"
    DIVESTED = "Divested"


def drt_divest(k: Number, recovered: Number, interest: Number = 0) -> tuple[Decimal, Decimal]:
    """Split ``recovered`` C between the A and B tranches.

    ``k`` is the capital invested and ``interest`` the A-tranche interest
    owed on partial recovery (an exogenous input). Returns ``(A, B)``.
    """
    k, kp, ki = fx(k), fx(recovered), fx(interest)
    if k <= 0:
        raise ZeroAmount("invested capital must be positive")
    if kp < 0 or ki < 0:
        raise ValueError("recovery and interest must be non-negative")
    half = k / 2
    if ki > max(ZERO, kp - half):
        raise InterestExceedsRecovery(f"interest {ki} exceeds recovery above k/2 ({kp - half})")
    if kp >= k:
        a = kp / 2
        return a, kp - a
    if kp > half:
        a = half + ki
        return a, kp - a
    return kp, ZERO


@dataclass
class DRT:
    """Two-tranche pool; every C deposited mints one A and one B."""

    supply_a: Decimal = ZERO
    supply_b: Decimal = ZERO
    capital: Decimal = ZERO
    phase: Phase = Phase.CREATED
    payouts: tuple[Decimal, Decimal] | None = None

    def mint(self, k: Number) -> tuple[Decimal, Decimal]:
        k = fx(k)
        if k <= 0:
            raise ZeroAmount("DRT deposit must be positive")
        if self.phase is not Phase.CREATED:
            raise WrongPhase(f"cannot mint in phase {self.phase.value}")
        self.supply_a += k
        self.supply_b += k
        self.capital += k
        return k, k

    def invest(self) -> None:
        if self.phase is not Phase.CREATED:
            raise WrongPhase(f"cannot invest in phase {self.phase.value}")
        self.phase = Phase.INVESTED

    def divest(self, recovered: Number, interest: Number = 0) -> tuple[Decimal, Decimal]:
        if self.phase is not Phase.INVESTED:
            raise WrongPhase(f"cannot divest in phase {self.phase.value}")
        self.payouts = drt_divest(self.capital, recovered, interest)
        self.phase = Phase.DIVESTED
        return self.payouts

    def recovery_rate(self, tranche: Tranche | str) -> Decimal:
        """C returned per unit of capital attributed to ``tranche`` (k/2 each)."""
        if self.payouts is None:
            raise WrongPhase("DRT has not divested yet")
        a, b = self.payouts
        return (a if Tranche(tranche) is Tranche.A else b) / (self.capital / 2)


def tranche_recovery_rate(tranche: Tranche | str, recovery_ratio: Number, interest_ratio: Number = 0) -> Decimal:
    """Per-unit tranche return for a DRT recovering ``recovery_ratio * k``.

    ``interest_ratio`` is ``k_i / k``. Used by scenario presets.
    """
    drt = DRT()
    drt.mint(1)
    drt.invest()
    drt.divest(recovery_ratio, interest_ratio)
    return drt.recovery_rate(tranche)


@dataclass
class YieldVault:
    """Vault for one event of a core contract, targeting one DRT tranche."""

    contract: CoreContract
    event: int = 1
    tranche: Tranche = Tranche.A
    account: str = "vault"
    phase: Phase = Phase.CREATED
    deposits_p: dict[str, Decimal] = field(default_factory=dict)
    deposits_u: dict[str, Decimal] = field(default_factory=dict)
    invested: Decimal = ZERO
    recovered: Decimal | None = None
    minted: Decimal = ZERO
    distributed: dict[str, dict[str, Decimal]] = field(default_factory=dict)

    @property
    def k_p(self) -> Decimal:
        return sum(self.deposits_p.values(), ZERO)

    @property
    def k_u(self) -> Decimal:
        return sum(self.deposits_u.values(), ZERO)

    @property
    def lam(self) -> Decimal:
        return min(self.k_p, self.k_u)

    def deposit(self, depositor: str, amount: Number, token: str) -> None:
        if self.phase is not Phase.CREATED:
            raise WrongPhase(f"vault no longer accepts deposits (phase {self.phase.value})")
        amount = fx(amount)
        if amount <= 0:
            raise ZeroAmount("deposit must be positive")
        side = token.upper()
        if side not in ("P", "U"):
            raise ValueError(f"token must be 'P' or 'U', got {token!r}")
        tok = p_token(self.event) if side == "P" else u_token(self.event)
        self.contract.transfer(depositor, self.account, tok, amount)
        book = self.deposits_p if side == "P" else self.deposits_u
        book[depositor] = book.get(depositor, ZERO) + amount

    def invest(self, drt: DRT | None = None) -> Decimal:
        """Burn the matched pairs and move the freed C into the tranche.

        The C leaves the ledger into the external DRT account; ``drt``, if
        given, records the deposit.
        """
        if self.phase is not Phase.CREATED:
            raise WrongPhase(f"cannot invest in phase {self.phase.value}")
        lam = self.lam
        if lam <= 0:
            raise NothingToInvest("vault needs both P and U deposits to invest")
        self.contract.burn(self.event, lam, self.account)
        self.contract.withdraw_external(self.account, lam)
        if drt is not None:
            drt.mint(lam)
        self.invested = lam
        self.phase = Phase.INVESTED
        return lam

    def divest_and_distribute(self, recovered: Number) -> dict[str, dict[str, Decimal]]:
        """Re-mint ``recovered/(1+f)`` pairs and hand out tokens per side.

        Each side's pool is the minted pairs plus that side's unburnt excess,
        split pro rata by deposit; rounding dust goes to the last depositor
        so the side total is conserved exactly.
        """
        if self.phase is not Phase.INVESTED:
            raise WrongPhase(f"cannot divest in phase {self.phase.value}")
        recovered = fx(recovered)
        if recovered < 0:
            raise ValueError("recovered amount must be non-negative")
        f = self.contract.fee
        self.recovered = recovered
        minted = div_down(recovered, ONE + f)
        if minted > 0:
            self.contract.fund(self.account, recovered)
            self.contract.mint(self.event, minted, self.account)
            leftover = self.contract.balance(self.account, BASE)
            if leftover > 0:
                # mint-fee rounding dust stays with the vault operator
                self.contract.withdraw_external(self.account, leftover)
        self.minted = minted
        lam = self.invested
        out: dict[str, dict[str, Decimal]] = {}
        for side, book in (("P", self.deposits_p), ("U", self.deposits_u)):
            total_in = sum(book.values(), ZERO)
            pot = minted + (total_in - lam)
            tok = p_token(self.event) if side == "P" else u_token(self.event)
            names = list(book)
            given = ZERO
            for j, who in enumerate(names):
                share = pot - given if j == len(names) - 1 else div_down(pot * book[who], total_in)
                given += share
                self.contract.transfer(self.account, who, tok, share)
                out.setdefault(who, {})[side] = out.get(who, {}).get(side, ZERO) + share
        self.distributed = out
        self.phase = Phase.DIVESTED
        return out

    def yield_fraction(self, side: str) -> Decimal:
        """Per-unit yield realized by depositors of ``side``."""
        if self.phase is not Phase.DIVESTED:
            raise WrongPhase("vault has not distributed yet")
        book = self.deposits_p if side.upper() == "P" else self.deposits_u
        total_in = sum(book.values(), ZERO)
        total_out = self.minted + (total_in - self.invested)
        return (total_out - total_in) / total_in


# ---------------------------------------------------------------------------
# risk-category presets

RISK_CATEGORIES: dict[str, list[tuple[str, Tranche | None]]] = {
    "high": [("underwriter", Tranche.B)],
    "medium-high": [("underwriter", Tranche.A), ("policyholder", Tranche.B)],
    "medium-low": [("underwriter", None), ("policyholder", Tranche.A)],
    "low": [("policyholder", None)],
}


def preset_payoff(
    role: str,
    tranche: Tranche | None,
    epsilon: Number,
    catastrophe: bool,
    recovery_ratio: Number,
    interest_ratio: Number = 0,
    fee: Number = 0,
) -> Decimal:
    """Terminal C value of one token held by ``role``, optionally routed through a tranche.

    Assumes a balanced vault (equal P and U deposits), so one deposited token
    comes back as ``rate/(1+f)`` tokens of the same kind.
    """
    eps = fx(epsilon)
    token_value = (ONE - eps) if (role == "policyholder") == catastrophe else eps
    if tranche is None:
        return token_value
    rate = tranche_recovery_rate(tranche, recovery_ratio, interest_ratio)
    return rate / (ONE + fx(fee)) * token_value


def category_payoffs(
    epsilon: Number,
    catastrophe: bool,
    recovery_ratio: Number,
    interest_ratio: Number = 0,
    fee: Number = 0,
) -> dict[str, list[Decimal]]:
    return {
        cat: [preset_payoff(role, tr, epsilon, catastrophe, recovery_ratio, interest_ratio, fee) for role, tr in members]
        for cat, members in RISK_CATEGORIES.items()
    }
