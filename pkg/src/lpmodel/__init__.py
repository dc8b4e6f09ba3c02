"""Exact-arithmetic model of an over-collateralized lending pool.

The package is layered: :mod:`core` holds state types and metrics,
:mod:`semantics` the transition rules, :mod:`analysis` gains and health laws,
:mod:`strategies` and :mod:`attacks` trace constructors, :mod:`invariants` the
runtime checks and fuzzer, and :mod:`scenario`/:mod:`cli` the file format and
command line.
"""

from __future__ import annotations

from importlib.resources import files

from .core import (
    INF,
    BlockchainState,
    LendingPoolState,
    LinearUtilization,
    PriceOracle,
    ProtocolParams,
    SteppedUtilization,
    WalletState,
    exchange_rate,
    health_factor,
    net_worth,
)
from .semantics import (
    AccrueInterest,
    Borrow,
    Deposit,
    Liquidate,
    PriceUpdate,
    Redeem,
    Repay,
    Swap,
    apply,
    apply_trace,
    initial_state,
    is_enabled,
)


def scenario_path(name: str):
    """Path of a scenario file shipped with the package, e.g. ``"walkthrough.lps"``."""
    return files(__package__) / "scenarios" / name


__all__ = [
    "INF",
    "BlockchainState",
    "LendingPoolState",
    "LinearUtilization",
    "PriceOracle",
    "ProtocolParams",
    "SteppedUtilization",
    "WalletState",
    "exchange_rate",
    "health_factor",
    "net_worth",
    "AccrueInterest",
    "Borrow",
    "Deposit",
    "Liquidate",
    "PriceUpdate",
    "Redeem",
    "Repay",
    "Swap",
    "apply",
    "apply_trace",
    "initial_state",
    "is_enabled",
    "scenario_path",
]
