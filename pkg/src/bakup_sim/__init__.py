"""Deterministic simulator for a binary-event insurance protocol.

Modules: ``core`` (P/U ledger), ``oracle`` (feeds, TWAP, assertions),
``clamm`` (concentrated-liquidity pool), ``market`` (composite trades),
``strategies`` (LP divergence loss), ``drt`` (tranches and yield vault),
``scenario`` / ``cli`` (replay and sweeps).
"""

from .clamm import Direction, Pool
from .core import CoreContract
from .drt import DRT, Tranche, YieldVault, drt_divest
from .market import Market, check_price_bounds
from .oracle import Assertion, OracleEngine, PriceFeed, depeg_assertions
from .strategies import Scenario, Strategy, StrategySpec, loss_closed_form, loss_simulated

__version__ = "0.1.0"

__all__ = [
    "Assertion", "CoreContract", "DRT", "Direction", "Market", "OracleEngine", "Pool", "PriceFeed",
    "Scenario", "Strategy", "StrategySpec", "Tranche", "YieldVault", "check_price_bounds",
    "depeg_assertions", "drt_divest", "loss_closed_form", "loss_simulated",
]
