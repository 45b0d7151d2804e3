"""Oracle module: price feeds, cumulative log-price accumulators and assertions.

Prices are held constant between samples. Ticks are real-valued
``log_1.0001(price)``; integer rounding is available for strict parity with
on-chain tick accumulators.
"""

from __future__ import annotations

import bisect
import csv
import math
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Iterable, Literal

from .errors import ConfigError, InsufficientHistory, UnknownAssertion, UnknownFeed

LN_TICK_BASE = math.log(1.0001)


def price_to_tick(price: float, integer: bool = False) -> float:
    t = math.log(price) / LN_TICK_BASE
    return float(round(t)) if integer else t


def tick_to_price(tick: float) -> float:
    return math.exp(tick * LN_TICK_BASE)


@dataclass(frozen=True)
class PriceSample:
    timestamp: int
    price: Decimal


class PriceFeed:
    """Step-interpolated price history with a cumulative tick accumulator.

    ``checkpoints[j]`` is the accumulator value at ``timestamps[j]``, i.e. the
    sum of per-second ticks over ``[timestamps[0], timestamps[j])``.
    """

    def __init__(self, feed_id: str, integer_ticks: bool = False):
        self.feed_id = feed_id
        self.integer_ticks = integer_ticks
        self.samples: list[PriceSample] = []
        self.timestamps: list[int] = []
        self.ticks: list[float] = []
        self.checkpoints: list[float] = []

    def append(self, timestamp: int, price: Decimal | float | str) -> None:
        timestamp = int(timestamp)
        price = Decimal(str(price)) if not isinstance(price, Decimal) else price
        if price <= 0:
            raise ValueError(f"feed {self.feed_id}: price must be positive, got {price}")
        if self.timestamps and timestamp <= self.timestamps[-1]:
            raise ValueError(
                f"feed {self.feed_id}: timestamps must be strictly increasing "
                f"({timestamp} after {self.timestamps[-1]})"
            )
        if self.timestamps:
            dt = timestamp - self.timestamps[-1]
            acc = self.checkpoints[-1] + self.ticks[-1] * dt
        else:
            acc = 0.0
        self.samples.append(PriceSample(timestamp, price))
        self.timestamps.append(timestamp)
        self.ticks.append(price_to_tick(float(price), self.integer_ticks))
        self.checkpoints.append(acc)

    @classmethod
    def from_samples(cls, feed_id: str, samples: Iterable[tuple[int, object]], integer_ticks: bool = False) -> "PriceFeed":
        feed = cls(feed_id, integer_ticks)
        for ts, price in samples:
            feed.append(ts, price)
        return feed

    @classmethod
    def from_csv(cls, feed_id: str, path: str | Path, integer_ticks: bool = False) -> "PriceFeed":
        """Load a ``timestamp,price`` CSV file."""
        feed = cls(feed_id, integer_ticks)
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip() for h in header] != ["timestamp", "price"]:
                raise ConfigError(f"{path}: expected header 'timestamp,price'", line=1)
            for lineno, row in enumerate(reader, start=2):
                if not row or all(not c.strip() for c in row):
                    continue
                try:
                    feed.append(int(row[0]), Decimal(row[1].strip()))
                except (ValueError, IndexError, ArithmeticError) as exc:
                    raise ConfigError(f"{path}: bad sample {row!r}: {exc}", line=lineno) from exc
        return feed

    @property
    def start(self) -> int:
        if not self.timestamps:
            raise InsufficientHistory(f"feed {self.feed_id} has no samples")
        return self.timestamps[0]

    def _index_at(self, t: int) -> int:
        return bisect.bisect_right(self.timestamps, t) - 1

    def accumulator_at(self, t: int) -> float:
        if not self.timestamps or t < self.timestamps[0]:
            raise InsufficientHistory(f"feed {self.feed_id} has no history at t={t}")
        j = self._index_at(t)
        return self.checkpoints[j] + self.ticks[j] * (t - self.timestamps[j])

    def observe(self, seconds_ago: list[int], now: int) -> list[float]:
        """Accumulator values at ``now - s`` for each ``s`` in ``seconds_ago``."""
        return [self.accumulator_at(now - int(s)) for s in seconds_ago]

    def twap_avg_tick(self, window: int, now: int) -> float:
        """Mean tick over ``[now - window, now)``: log of the geometric-mean price."""
        if window <= 0:
            raise ValueError("TWAP window must be positive")
        a_now, a_then = self.observe([0, window], now)
        return (a_now - a_then) / window

    def latest_price(self, now: int) -> Decimal:
        if not self.timestamps or now < self.timestamps[0]:
            raise InsufficientHistory(f"feed {self.feed_id} has no sample at or before t={now}")
        return self.samples[self._index_at(now)].price


Kind = Literal["threshold_below", "threshold_above", "composite_and", "composite_or", "constant"]


@dataclass(frozen=True)
class Assertion:
    """A pure predicate over feed state.

    Threshold kinds read ``feed`` either through its TWAP tick
    (``window > 0``) or its latest price (``window == 0``). ``tick_threshold``
    overrides the exact ``log_1.0001(threshold)`` comparison, e.g. ``-513``.
    """

    id: str
    kind: Kind
    threshold: Decimal | None = None
    window: int = 0
    feed: str | None = None
    children: tuple[str, ...] = ()
    value: bool = False
    tick_threshold: float | None = None


class OracleEngine:
    def __init__(self, feeds: dict[str, PriceFeed] | None = None):
        self.feeds: dict[str, PriceFeed] = dict(feeds or {})
        self.assertions: dict[str, Assertion] = {}

    def add_feed(self, feed: PriceFeed) -> None:
        self.feeds[feed.feed_id] = feed

    def add_assertion(self, assertion: Assertion) -> None:
        self.assertions[assertion.id] = assertion

    def feed(self, feed_id: str) -> PriceFeed:
        try:
            return self.feeds[feed_id]
        except KeyError:
            raise UnknownFeed(f"unknown feed '{feed_id}'") from None

    def validate(self) -> None:
        """Check every reference resolves; raises UnknownFeed / UnknownAssertion."""
        for a in self.assertions.values():
            if a.kind in ("threshold_below", "threshold_above"):
                self.feed(a.feed)
            for c in a.children:
                if c not in self.assertions:
                    raise UnknownAssertion(f"assertion '{a.id}' references unknown '{c}'")

    def evaluate(self, assertion: Assertion | str, now: int) -> bool:
        if isinstance(assertion, str):
            try:
                assertion = self.assertions[assertion]
            except KeyError:
                raise UnknownAssertion(f"unknown assertion '{assertion}'") from None
        kind = assertion.kind
        if kind == "constant":
            return assertion.value
        if kind == "composite_and":
            return all(self.evaluate(c, now) for c in assertion.children)
        if kind == "composite_or":
            return any(self.evaluate(c, now) for c in assertion.children)
        feed = self.feed(assertion.feed)
        below = kind == "threshold_below"
        if assertion.window > 0:
            observed = feed.twap_avg_tick(assertion.window, now)
            bound = assertion.tick_threshold
            if bound is None:
                bound = price_to_tick(float(assertion.threshold))
        else:
            observed = feed.latest_price(now)
            bound = assertion.threshold
        return observed < bound if below else observed > bound

    def o_trigger(self, assertion_id: str, now: int) -> bool:
        return self.evaluate(assertion_id, now)

    # the core contract calls the oracle as a plain callable
    __call__ = o_trigger


def depeg_assertions(
    pool_feed: str,
    external_feed: str,
    threshold: str = "0.95",
    window: int = 3600,
    prefix: str = "depeg",
    tick_threshold: float | None = None,
) -> list[Assertion]:
    """The dual-source depeg trigger: TWAP tick below ``tick(threshold)``
    over ``window`` AND latest external price below ``threshold``.

    Returns the two leaves followed by the composite (id ``prefix``).
    """
    thr = Decimal(threshold)
    twap = Assertion(
        id=f"{prefix}:twap", kind="threshold_below", threshold=thr, window=window,
        feed=pool_feed, tick_threshold=tick_threshold,
    )
    ext = Assertion(id=f"{prefix}:external", kind="threshold_below", threshold=thr, feed=external_feed)
    both = Assertion(id=prefix, kind="composite_and", children=(twap.id, ext.id))
    return [twap, ext, both]
