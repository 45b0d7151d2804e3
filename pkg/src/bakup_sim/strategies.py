"""Passive LP strategies on the P/U pool and their divergence loss.

An LP mints one P and one U and provides both as liquidity at entry price
``p``. At expiry the price migrates to an edge of the no-arbitrage band:
``eps/(1-eps)`` without a catastrophe, ``(1-eps)/eps`` with one. Holdings
are then valued at redemption prices, so divergence loss is
``1 - terminal value``.

Two independent routes are provided: :func:`loss_closed_form` (float
formulas) and :func:`loss_simulated` (drives a fixed-point :class:`Pool`).
"""

from __future__ import annotations

import math
import os
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from decimal import Decimal
from enum import Enum
from itertools import product
from typing import Iterable, Sequence

from . import fixed
from .clamm import Pool
from .errors import OutOfRange
from .fixed import ONE, ZERO, fx

EPSILONS = (0.01, 0.07, 0.13, 0.19)
WIDTHS = (0.1, 0.2, 0.3, 0.4, 0.5)
MEDIAN_WIDTH = 0.3
DEFAULT_STEPS = 64


class Strategy(str, Enum):
    UNIFORM = "uniform"
    AROUND_ENTRY = "around-entry"
    EDGES = "edges"


class Scenario(str, Enum):
    NO_CATASTROPHE = "no-cat"
    CATASTROPHE = "cat"


@dataclass(frozen=True)
class StrategySpec:
    """Strategy, floor ``epsilon``, entry and width.

    ``x_entry`` is the entry price's normalized log coordinate in [0, 1].
    ``width`` is the fraction of the normalized distance to each edge that
    separates ``p_l``/``p_r`` from the entry (ignored for uniform).
    ``width_mode='linear'`` measures widths in linearly normalized price
    instead of log price.
    """

    kind: Strategy
    epsilon: float
    x_entry: float
    width: float = MEDIAN_WIDTH
    width_mode: str = "log"

    def __post_init__(self):
        object.__setattr__(self, "kind", Strategy(self.kind))
        if not 0 < self.epsilon < 0.5:
            raise OutOfRange(f"epsilon must lie in (0, 0.5), got {self.epsilon}")
        if not 0 <= self.x_entry <= 1:
            raise OutOfRange(f"normalized entry must lie in [0, 1], got {self.x_entry}")
        if self.kind is not Strategy.UNIFORM and not 0 < self.width < 1:
            raise OutOfRange(f"width must lie in (0, 1), got {self.width}")
        if self.width_mode not in ("log", "linear"):
            raise ValueError(f"unknown width mode {self.width_mode!r}")


@dataclass
class LossReport:
    spec: StrategySpec
    scenario: Scenario
    holdings_p: float
    holdings_u: float
    terminal_value: float
    method: str

    @property
    def loss(self) -> float:
        return 1.0 - self.terminal_value


# ---------------------------------------------------------------------------
# coordinates (float route)

def price_band(epsilon: float) -> tuple[float, float]:
    return epsilon / (1 - epsilon), (1 - epsilon) / epsilon


def normalize_price(p: float, epsilon: float) -> float:
    lo, hi = price_band(epsilon)
    if not lo * (1 - 1e-12) <= p <= hi * (1 + 1e-12):
        raise OutOfRange(f"price {p} outside [{lo}, {hi}]")
    x = (math.log(p) - math.log(lo)) / (2 * math.log(hi))
    return min(max(x, 0.0), 1.0)


def denormalize(x: float, epsilon: float) -> float:
    if not 0 <= x <= 1:
        raise OutOfRange(f"normalized price {x} outside [0, 1]")
    lo, hi = price_band(epsilon)
    if x == 0:
        return lo
    if x == 1:
        return hi
    return min(max(math.exp(math.log(lo) + x * 2 * math.log(hi)), lo), hi)


def _from_coord(x: float, epsilon: float, mode: str) -> float:
    if mode == "log":
        return denormalize(x, epsilon)
    lo, hi = price_band(epsilon)
    return lo + x * (hi - lo)


def _to_coord(p: float, epsilon: float, mode: str) -> float:
    if mode == "log":
        return normalize_price(p, epsilon)
    lo, hi = price_band(epsilon)
    return (p - lo) / (hi - lo)


def interval_prices(spec: StrategySpec) -> tuple[float, float, float]:
    """``(p_l, p, p_r)`` for ``spec``, in price units."""
    p = denormalize(spec.x_entry, spec.epsilon)
    lo, hi = price_band(spec.epsilon)
    if spec.kind is Strategy.UNIFORM:
        return lo, p, hi
    x = _to_coord(p, spec.epsilon, spec.width_mode)
    p_l = _from_coord(x * (1 - spec.width), spec.epsilon, spec.width_mode)
    p_r = _from_coord(x + spec.width * (1 - x), spec.epsilon, spec.width_mode)
    return min(p_l, p), p, max(p_r, p)


def loss_closed_form(spec: StrategySpec, scenario: Scenario | str) -> LossReport:
    scenario = Scenario(scenario)
    e = spec.epsilon
    p_l, p, p_r = interval_prices(spec)
    cat = scenario is Scenario.CATASTROPHE
    if spec.kind is Strategy.UNIFORM:
        value = e + math.sqrt(p * e * (1 - e)) if cat else e + math.sqrt(e * (1 - e) / p)
    elif spec.kind is Strategy.AROUND_ENTRY:
        value = e + e * math.sqrt(p * p_r) if cat else e + e / math.sqrt(p_l * p)
    else:
        value = e + math.sqrt(p_r * e * (1 - e)) if cat else e + math.sqrt(e * (1 - e) / p_l)
    # the LP ends holding only the losing token, worth eps each
    if cat:
        hp, hu = 0.0, value / e
    else:
        hp, hu = value / e, 0.0
    return LossReport(spec, scenario, hp, hu, value, "closed-form")


# ---------------------------------------------------------------------------
# simulation route (fixed point)

def _band_decimal(eps: Decimal) -> tuple[Decimal, Decimal]:
    return eps / (ONE - eps), (ONE - eps) / eps


def _coord_to_price_decimal(x: Decimal, eps: Decimal, mode: str) -> Decimal:
    lo, hi = _band_decimal(eps)
    if x <= 0:
        return lo
    if x >= 1:
        return hi
    if mode == "log":
        return fixed.exp(fixed.ln(lo) + x * 2 * fixed.ln(hi))
    return lo + x * (hi - lo)


def _price_to_coord_decimal(p: Decimal, eps: Decimal, mode: str) -> Decimal:
    lo, hi = _band_decimal(eps)
    if mode == "log":
        return (fixed.ln(p) - fixed.ln(lo)) / (2 * fixed.ln(hi))
    return (p - lo) / (hi - lo)


@dataclass
class Deployment:
    """Positions an LP opened plus any tokens left outside the pool."""

    pool: Pool
    position_ids: list[int]
    idle_p: Decimal
    idle_u: Decimal
    intervals: list[tuple[str, Decimal, Decimal]] = field(default_factory=list)


def strategy_intervals_decimal(spec: StrategySpec) -> tuple[Decimal, tuple[Decimal, Decimal], tuple[Decimal, Decimal]]:
    """Entry price and the U-side and P-side intervals, in fixed point."""
    eps = fx(spec.epsilon)
    lo, hi = _band_decimal(eps)
    x = Decimal(repr(spec.x_entry))
    p = fx(_coord_to_price_decimal(x, eps, "log"))
    if spec.kind is Strategy.UNIFORM:
        return p, (lo, p), (p, hi)
    xc = x if spec.width_mode == "log" else _price_to_coord_decimal(p, eps, "linear")
    w = Decimal(repr(spec.width))
    p_l = min(fx(_coord_to_price_decimal(xc * (ONE - w), eps, spec.width_mode)), p)
    p_r = max(fx(_coord_to_price_decimal(xc + w * (ONE - xc), eps, spec.width_mode)), p)
    if spec.kind is Strategy.AROUND_ENTRY:
        return p, (p_l, p), (p, p_r)
    return p, (lo, p_l), (p_r, hi)


def make_pool(spec: StrategySpec, fee_rate=0) -> Pool:
    p, _, _ = strategy_intervals_decimal(spec)
    return Pool(p, fee_rate=fee_rate)


def build_positions(spec: StrategySpec, pool: Pool, endowment=1, owner: str = "lp") -> Deployment:
    """Deposit ``endowment`` P and U per the strategy.

    A side whose interval has zero width cannot hold liquidity; that token
    stays idle in the LP's wallet.
    """
    p, (u_lo, u_hi), (p_lo, p_hi) = strategy_intervals_decimal(spec)
    if fixed.sqrt_down(p) != pool.sqrt_price:
        raise OutOfRange(f"pool price {pool.price} does not match entry price {p}")
    k = fx(endowment)
    if k <= 0:
        raise OutOfRange("endowment must be positive")
    dep = Deployment(pool, [], ZERO, ZERO)
    # U sits below the entry price, P above it
    for side, a, b in (("U", u_lo, u_hi), ("P", p_lo, p_hi)):
        sa, sb = fixed.sqrt_down(a), fixed.sqrt_down(b)
        amount_x, amount_y = (k, ZERO) if side == "P" else (ZERO, k)
        if sa >= sb:
            if side == "P":
                dep.idle_p += k
            else:
                dep.idle_u += k
            continue
        pos, tx, ty = pool.add_position_sqrt(owner, sa, sb, amount_x, amount_y)
        dep.position_ids.append(pos.id)
        dep.intervals.append((side, a, b))
        dep.idle_p += amount_x - tx
        dep.idle_u += amount_y - ty
    return dep


def loss_simulated(
    spec: StrategySpec,
    scenario: Scenario | str,
    steps: int = DEFAULT_STEPS,
    endowment=1,
) -> LossReport:
    """Move the pool price to the terminal edge through ``steps`` swaps and value the LP."""
    scenario = Scenario(scenario)
    if steps < 0:
        raise ValueError("steps must be non-negative")
    pool = make_pool(spec)
    dep = build_positions(spec, pool, endowment)
    eps = fx(spec.epsilon)
    lo, hi = _band_decimal(eps)
    cat = scenario is Scenario.CATASTROPHE
    final = hi if cat else lo
    start = pool.price
    if steps > 0:
        ratio = final / start
        for j in range(1, steps + 1):
            target = final if j == steps else start * fixed.exp(fixed.ln(ratio) * j / steps)
            pool.swap_to_price(target)
    hp, hu = dep.idle_p, dep.idle_u
    for pid in dep.position_ids:
        x, y, fx_, fy = pool.remove_position(pid)
        hp += x + fx_
        hu += y + fy
    value_p, value_u = (ONE - eps, eps) if cat else (eps, ONE - eps)
    k = fx(endowment)
    value = (hp * value_p + hu * value_u) / k
    return LossReport(spec, scenario, float(hp / k), float(hu / k), float(value), "simulated")


# ---------------------------------------------------------------------------
# sweeps

@dataclass(frozen=True)
class SweepRow:
    strategy: str
    epsilon: float
    x_entry: float
    width: float
    scenario: str
    terminal_value: float
    loss: float


def _evaluate(args: tuple) -> SweepRow:
    kind, eps, x, w, scen, method, steps, mode = args
    spec = StrategySpec(kind, eps, x, w, mode)
    if method == "simulated":
        rep = loss_simulated(spec, scen, steps)
    else:
        rep = loss_closed_form(spec, scen)
    return SweepRow(Strategy(kind).value, eps, x, w, Scenario(scen).value, rep.terminal_value, rep.loss)


def default_entry_grid(n: int = 101) -> list[float]:
    return [round(i / (n - 1), 12) for i in range(n)]


def sweep(
    epsilons: Sequence[float] = EPSILONS,
    strategies: Sequence[Strategy | str] = tuple(Strategy),
    scenarios: Sequence[Scenario | str] = tuple(Scenario),
    entries: Sequence[float] | None = None,
    widths: Sequence[float] = WIDTHS,
    method: str = "closed-form",
    steps: int = DEFAULT_STEPS,
    width_mode: str = "log",
    workers: int | None = None,
) -> list[SweepRow]:
    """Full cartesian evaluation; row order follows the argument order."""
    entries = default_entry_grid() if entries is None else list(entries)
    for name, grid in (("epsilons", epsilons), ("strategies", strategies), ("scenarios", scenarios),
                       ("entries", entries), ("widths", widths)):
        if len(grid) == 0:
            raise ValueError(f"sweep grid '{name}' is empty")
    jobs = [
        (Strategy(k), e, x, w, Scenario(s), method, steps, width_mode)
        for k, s, e, x, w in product(strategies, scenarios, epsilons, entries, widths)
    ]
    if workers is None:
        workers = int(os.environ.get("BAKUP_SIM_THREADS", "1") or 1)
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_evaluate, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    return [_evaluate(j) for j in jobs]


@dataclass(frozen=True)
class BandRow:
    strategy: str
    epsilon: float
    x_entry: float
    scenario: str
    loss_min: float
    loss_median: float
    loss_max: float


def width_bands(rows: Iterable[SweepRow]) -> list[BandRow]:
    """Min / median / max loss over widths for each curve point."""
    groups: dict[tuple, list[float]] = {}
    for r in rows:
        groups.setdefault((r.strategy, r.epsilon, r.x_entry, r.scenario), []).append(r.loss)
    return [
        BandRow(s, e, x, sc, min(v), statistics.median(v), max(v))
        for (s, e, x, sc), v in groups.items()
    ]


@dataclass(frozen=True)
class WorstCase:
    strategy: str
    epsilon: float
    width: float
    loss: float
    x_entry: float
    scenario: str


def worst_cases(rows: Iterable[SweepRow], width: float = MEDIAN_WIDTH) -> list[WorstCase]:
    """Worst loss over entries and scenarios per (strategy, epsilon) at ``width``."""
    best: dict[tuple[str, float], SweepRow] = {}
    for r in rows:
        if not math.isclose(r.width, width):
            continue
        key = (r.strategy, r.epsilon)
        if key not in best or r.loss > best[key].loss:
            best[key] = r
    return [WorstCase(s, e, width, r.loss, r.x_entry, r.scenario) for (s, e), r in best.items()]


def worst_loss(kind: Strategy | str, epsilon: float, width: float = MEDIAN_WIDTH) -> float:
    """Worst-case loss: entry at either band edge, adverse scenario."""
    return max(
        loss_closed_form(StrategySpec(kind, epsilon, 1.0, width), Scenario.NO_CATASTROPHE).loss,
        loss_closed_form(StrategySpec(kind, epsilon, 0.0, width), Scenario.CATASTROPHE).loss,
    )


def headline_reduction(naive_eps: float = 0.01, conservative_eps: float = 0.19, width: float = MEDIAN_WIDTH) -> float:
    """Relative cut in worst loss going from uniform at a small floor to edges at a large one."""
    naive = worst_loss(Strategy.UNIFORM, naive_eps, width)
    return (naive - worst_loss(Strategy.EDGES, conservative_eps, width)) / naive
