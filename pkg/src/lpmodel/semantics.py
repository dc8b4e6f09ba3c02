"""Transactions and the deterministic transition relation over blockchain states."""

from __future__ import annotations

from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from fractions import Fraction
from typing import Literal, Union

from . import core
from .core import (
    AddressId,
    BlockchainState,
    LendingPoolState,
    PriceOracle,
    ProtocolParams,
    TokenId,
    WalletState,
    exchange_rate,
    fmt_brief,
    fmt_exact,
    health_factor,
    interest_rate,
    q,
)
from .errors import (
    BorrowerHealthy,
    HealthTooLowAfter,
    InsufficientCredits,
    InsufficientDebt,
    InsufficientReserves,
    InsufficientWallet,
    MalformedTransaction,
    MissingPrice,
    NonPositivePrice,
    OverLiquidation,
    StepError,
)

__all__ = [
    "Deposit",
    "Borrow",
    "Repay",
    "Redeem",
    "Liquidate",
    "AccrueInterest",
    "PriceUpdate",
    "Swap",
    "Transaction",
    "initial_state",
    "apply",
    "is_enabled",
    "why_disabled",
    "apply_trace",
    "TraceResult",
    "seized_credits",
]


def _positive(value, what: str) -> Fraction:
    try:
        value = q(value)
    except (TypeError, ValueError) as exc:
        raise MalformedTransaction(f"{what} is not a number: {value!r}") from exc
    if value <= 0:
        raise MalformedTransaction(f"{what} must be > 0, got {value}")
    return value


def _name(value, what: str) -> str:
    if not isinstance(value, str) or not value:
        raise MalformedTransaction(f"{what} must be a non-empty identifier")
    return value


@dataclass(frozen=True)
class Deposit:
    user: AddressId
    amount: Fraction
    token: TokenId
    kind = "dep"

    def __post_init__(self) -> None:
        _name(self.user, "user"), _name(self.token, "token")
        object.__setattr__(self, "amount", _positive(self.amount, "deposit amount"))

    def __str__(self) -> str:
        return f"{self.user}:dep({fmt_exact(self.amount)}:{self.token})"


@dataclass(frozen=True)
class Borrow:
    user: AddressId
    amount: Fraction
    token: TokenId
    kind = "bor"

    def __post_init__(self) -> None:
        _name(self.user, "user"), _name(self.token, "token")
        object.__setattr__(self, "amount", _positive(self.amount, "borrow amount"))

    def __str__(self) -> str:
        return f"{self.user}:bor({fmt_exact(self.amount)}:{self.token})"


@dataclass(frozen=True)
class Repay:
    user: AddressId
    amount: Fraction
    token: TokenId
    kind = "rep"

    def __post_init__(self) -> None:
        _name(self.user, "user"), _name(self.token, "token")
        object.__setattr__(self, "amount", _positive(self.amount, "repay amount"))

    def __str__(self) -> str:
        return f"{self.user}:rep({fmt_exact(self.amount)}:{self.token})"


@dataclass(frozen=True)
class Redeem:
    """Redeem ``amount`` *credit* units of ``token``."""

    user: AddressId
    amount: Fraction
    token: TokenId
    kind = "rdm"

    def __post_init__(self) -> None:
        _name(self.user, "user"), _name(self.token, "token")
        object.__setattr__(self, "amount", _positive(self.amount, "redeem amount"))

    def __str__(self) -> str:
        return f"{self.user}:rdm({fmt_exact(self.amount)}:{self.token})"


@dataclass(frozen=True)
class Liquidate:
    """``liquidator`` repays ``amount`` of ``borrower``'s ``debt_token`` loan and
    seizes credits of ``collateral_token``."""

    liquidator: AddressId
    borrower: AddressId
    amount: Fraction
    debt_token: TokenId
    collateral_token: TokenId
    kind = "liq"

    def __post_init__(self) -> None:
        _name(self.liquidator, "liquidator"), _name(self.borrower, "borrower")
        _name(self.debt_token, "debt token"), _name(self.collateral_token, "collateral token")
        if self.liquidator == self.borrower:
            raise MalformedTransaction("a user cannot liquidate themselves")
        object.__setattr__(self, "amount", _positive(self.amount, "liquidation amount"))

    @property
    def user(self) -> AddressId:
        return self.liquidator

    def __str__(self) -> str:
        return (
            f"{self.liquidator}:liq({self.borrower},{fmt_exact(self.amount)}:"
            f"{self.debt_token},{self.collateral_token})"
        )


@dataclass(frozen=True)
class AccrueInterest:
    kind = "int"
    user = None

    def __str__(self) -> str:
        return "int"


@dataclass(frozen=True)
class PriceUpdate:
    delta: Fraction
    token: TokenId
    kind = "px"
    user = None

    def __post_init__(self) -> None:
        _name(self.token, "token")
        try:
            delta = q(self.delta)
        except (TypeError, ValueError) as exc:
            raise MalformedTransaction(f"price delta is not a number: {self.delta!r}") from exc
        if delta == 0:
            raise MalformedTransaction("price delta must be non-zero")
        object.__setattr__(self, "delta", delta)

    def __str__(self) -> str:
        sign = "+" if self.delta > 0 else "-"
        return f"px({sign}{fmt_exact(abs(self.delta))}:{self.token})"


@dataclass(frozen=True)
class Swap:
    user: AddressId
    amount: Fraction
    from_token: TokenId
    to_token: TokenId
    kind = "swp"

    def __post_init__(self) -> None:
        _name(self.user, "user"), _name(self.from_token, "token"), _name(self.to_token, "token")
        if self.from_token == self.to_token:
            raise MalformedTransaction("swap needs two distinct tokens")
        object.__setattr__(self, "amount", _positive(self.amount, "swap amount"))

    def __str__(self) -> str:
        return f"{self.user}:swp({fmt_exact(self.amount)}:{self.from_token},{self.to_token})"


Transaction = Union[Deposit, Borrow, Repay, Redeem, Liquidate, AccrueInterest, PriceUpdate, Swap]
USER_ACTIONS = ("dep", "bor", "rep", "rdm", "liq", "swp")


def tokens_of(tx: Transaction) -> tuple[TokenId, ...]:
    if isinstance(tx, Liquidate):
        return (tx.debt_token, tx.collateral_token)
    if isinstance(tx, Swap):
        return (tx.from_token, tx.to_token)
    if isinstance(tx, AccrueInterest):
        return ()
    return (tx.token,)


# --------------------------------------------------------------------------
# Initial states
# --------------------------------------------------------------------------


def initial_state(
    wallets: Mapping[tuple[TokenId, AddressId], object] | Iterable[tuple[AddressId, TokenId, object]],
    prices: Mapping[TokenId, object],
) -> BlockchainState:
    """Build a state with an empty pool.

    ``wallets`` is either a ``{(token, user): amount}`` mapping or an iterable
    of ``(user, token, amount)`` triples.
    """
    if isinstance(wallets, Mapping):
        entries = {k: q(v) for k, v in wallets.items()}
    else:
        entries = {}
        for user, token, amount in wallets:
            entries[(token, user)] = entries.get((token, user), core.ZERO) + q(amount)
    oracle = PriceOracle(dict(prices))
    wallet = WalletState(entries)
    for token in wallet.tokens():
        if token not in oracle:
            raise MissingPrice(f"wallet holds {token!r} but it has no price")
    return BlockchainState(wallet, LendingPoolState(), oracle)


# --------------------------------------------------------------------------
# Transition rules
# --------------------------------------------------------------------------


def seized_credits(state: BlockchainState, params: ProtocolParams, tx: Liquidate) -> Fraction:
    """Credit units of the collateral token moved from borrower to liquidator."""
    p = state.prices
    return tx.amount / exchange_rate(state.pool, tx.collateral_token) * (p[tx.debt_token] / p[tx.collateral_token]) * params.liq_reward


def _require(cond: bool, error: type[StepError], message: str) -> None:
    if not cond:
        raise error(message)


def _deposit(params, state: BlockchainState, tx: Deposit) -> BlockchainState:
    state.prices[tx.token]
    have = state.wallet.balance(tx.token, tx.user)
    _require(have >= tx.amount, InsufficientWallet, f"{tx.user} holds {fmt_brief(have)}:{tx.token} < {fmt_brief(tx.amount)}")
    minted = tx.amount / exchange_rate(state.pool, tx.token)
    pool = state.pool.with_reserve(tx.token, tx.amount).with_credit(tx.token, tx.user, minted)
    return state.replace(wallet=state.wallet.adjusted(tx.token, tx.user, -tx.amount), pool=pool)


def _borrow(params, state: BlockchainState, tx: Borrow) -> BlockchainState:
    state.prices[tx.token]
    reserves = state.pool.reserve(tx.token)
    _require(reserves >= tx.amount, InsufficientReserves, f"reserves {fmt_brief(reserves)}:{tx.token} < {fmt_brief(tx.amount)}")
    pool = state.pool.with_reserve(tx.token, -tx.amount).with_debit(tx.token, tx.user, tx.amount)
    post = state.replace(wallet=state.wallet.adjusted(tx.token, tx.user, tx.amount), pool=pool)
    h = health_factor(params, post, tx.user)
    _require(h >= 1, HealthTooLowAfter, f"health of {tx.user} after borrow would be {fmt_brief(h)}")
    return post


def _repay(params, state: BlockchainState, tx: Repay) -> BlockchainState:
    state.prices[tx.token]
    have = state.wallet.balance(tx.token, tx.user)
    _require(have >= tx.amount, InsufficientWallet, f"{tx.user} holds {fmt_brief(have)}:{tx.token} < {fmt_brief(tx.amount)}")
    owed = state.pool.debit(tx.token, tx.user)
    _require(owed >= tx.amount, InsufficientDebt, f"{tx.user} owes {fmt_brief(owed)}:{tx.token} < {fmt_brief(tx.amount)}")
    pool = state.pool.with_reserve(tx.token, tx.amount).with_debit(tx.token, tx.user, -tx.amount)
    return state.replace(wallet=state.wallet.adjusted(tx.token, tx.user, -tx.amount), pool=pool)


def _redeem(params, state: BlockchainState, tx: Redeem) -> BlockchainState:
    state.prices[tx.token]
    held = state.pool.credit(tx.token, tx.user)
    _require(held >= tx.amount, InsufficientCredits, f"{tx.user} holds {fmt_brief(held)} credits of {tx.token} < {fmt_brief(tx.amount)}")
    value = tx.amount * exchange_rate(state.pool, tx.token)
    reserves = state.pool.reserve(tx.token)
    _require(reserves >= value, InsufficientReserves, f"reserves {fmt_brief(reserves)}:{tx.token} < {fmt_brief(value)}")
    pool = state.pool.with_credit(tx.token, tx.user, -tx.amount).with_reserve(tx.token, -value)
    post = state.replace(wallet=state.wallet.adjusted(tx.token, tx.user, value), pool=pool)
    h = health_factor(params, post, tx.user)
    _require(h >= 1, HealthTooLowAfter, f"health of {tx.user} after redeem would be {fmt_brief(h)}")
    return post


def _accrue(params, state: BlockchainState, tx: AccrueInterest) -> BlockchainState:
    pool = state.pool
    rates = {t: interest_rate(params, pool, t) for t in {t for t, _ in pool.debits}}
    debits = {k: v + v * rates[k[0]] for k, v in pool.debits.items()}
    new_pool = object.__new__(LendingPoolState)
    object.__setattr__(new_pool, "reserves", pool.reserves)
    object.__setattr__(new_pool, "credits", pool.credits)
    object.__setattr__(new_pool, "debits", debits)
    return state.replace(pool=new_pool)


def _liquidate(params, state: BlockchainState, tx: Liquidate) -> BlockchainState:
    a, b, v0, t0, t1 = tx.liquidator, tx.borrower, tx.amount, tx.debt_token, tx.collateral_token
    state.prices[t0], state.prices[t1]
    have = state.wallet.balance(t0, a)
    _require(have >= v0, InsufficientWallet, f"{a} holds {fmt_brief(have)}:{t0} < {fmt_brief(v0)}")
    owed = state.pool.debit(t0, b)
    _require(owed >= v0, InsufficientDebt, f"{b} owes {fmt_brief(owed)}:{t0} < {fmt_brief(v0)}")
    seized = seized_credits(state, params, tx)
    held = state.pool.credit(t1, b)
    _require(held >= seized, InsufficientCredits, f"{b} holds {fmt_brief(held)} credits of {t1} < {fmt_brief(seized)}")
    h_pre = health_factor(params, state, b)
    _require(h_pre < 1, BorrowerHealthy, f"health of {b} is {fmt_brief(h_pre)} >= 1")
    pool = (
        state.pool.with_reserve(t0, v0)
        .with_debit(t0, b, -v0)
        .with_credit(t1, b, -seized)
        .with_credit(t1, a, seized)
    )
    post = state.replace(wallet=state.wallet.adjusted(t0, a, -v0), pool=pool)
    h_post = health_factor(params, post, b)
    _require(h_post <= 1, OverLiquidation, f"health of {b} after liquidation would be {fmt_brief(h_post)} > 1")
    return post


def _price_update(params, state: BlockchainState, tx: PriceUpdate) -> BlockchainState:
    new_price = state.prices[tx.token] + tx.delta
    _require(new_price > 0, NonPositivePrice, f"price of {tx.token} would become {fmt_brief(new_price)}")
    return state.replace(prices=state.prices.updated(tx.token, tx.delta))


def _swap(params, state: BlockchainState, tx: Swap) -> BlockchainState:
    p0, p1 = state.prices[tx.from_token], state.prices[tx.to_token]
    have = state.wallet.balance(tx.from_token, tx.user)
    _require(have >= tx.amount, InsufficientWallet, f"{tx.user} holds {fmt_brief(have)}:{tx.from_token} < {fmt_brief(tx.amount)}")
    wallet = state.wallet.adjusted(tx.from_token, tx.user, -tx.amount).adjusted(tx.to_token, tx.user, tx.amount * p0 / p1)
    return state.replace(wallet=wallet)


_RULES = {
    Deposit: _deposit,
    Borrow: _borrow,
    Repay: _repay,
    Redeem: _redeem,
    AccrueInterest: _accrue,
    Liquidate: _liquidate,
    PriceUpdate: _price_update,
    Swap: _swap,
}


def apply(params: ProtocolParams, state: BlockchainState, tx: Transaction) -> BlockchainState:
    """Fire ``tx`` in ``state`` and return the successor.

    Raises a :class:`~lpmodel.errors.StepError` subclass naming the failed
    premise when ``tx`` is not enabled; ``state`` is never modified.
    """
    try:
        rule = _RULES[type(tx)]
    except KeyError:
        raise MalformedTransaction(f"not a transaction: {tx!r}") from None
    return rule(params, state, tx)


def why_disabled(params: ProtocolParams, state: BlockchainState, tx: Transaction) -> StepError | None:
    try:
        apply(params, state, tx)
    except StepError as exc:
        return exc
    return None


def is_enabled(params: ProtocolParams, state: BlockchainState, tx: Transaction) -> bool:
    return why_disabled(params, state, tx) is None


@dataclass(frozen=True)
class TraceResult:
    state: BlockchainState
    applied: tuple[bool, ...]
    states: tuple[BlockchainState, ...]
    errors: tuple[StepError | None, ...]

    @property
    def skipped(self) -> tuple[int, ...]:
        return tuple(i for i, ok in enumerate(self.applied) if not ok)


def apply_trace(
    params: ProtocolParams,
    state: BlockchainState,
    trace: Sequence[Transaction],
    mode: Literal["strict", "skip_disabled"] = "strict",
) -> TraceResult:
    """Run ``trace`` from ``state``.

    In ``strict`` mode the first disabled transaction raises its
    :class:`StepError`.  In ``skip_disabled`` mode it is dropped and recorded
    in ``applied``/``errors``.  ``states[i]`` is the state after step ``i``
    (unchanged from the previous one for skipped steps).
    """
    if mode not in ("strict", "skip_disabled"):
        raise ValueError(f"unknown mode {mode!r}")
    applied: list[bool] = []
    states: list[BlockchainState] = []
    errors: list[StepError | None] = []
    for tx in trace:
        try:
            state = apply(params, state, tx)
        except StepError as exc:
            if mode == "strict":
                raise
            applied.append(False)
            errors.append(exc)
        else:
            applied.append(True)
            errors.append(None)
        states.append(state)
    return TraceResult(state, tuple(applied), tuple(states), tuple(errors))
