"""Gains and the closed-form economics of single transactions.

Every closed form here has a definitional counterpart (execute, then diff net
worth); the invariant checker compares the two exactly.
"""

from __future__ import annotations

import enum
from collections.abc import Sequence
from dataclasses import dataclass, field
from fractions import Fraction

from .core import (
    ZERO,
    AddressId,
    BlockchainState,
    ProtocolParams,
    TokenId,
    credit_value,
    debt_value,
    exchange_rate,
    interest_rate,
    net_worth,
    net_worth_restricted,
)
from .errors import DisabledTransaction, NonPositivePrice, StepError
from .semantics import (
    AccrueInterest,
    Borrow,
    Deposit,
    Liquidate,
    PriceUpdate,
    Redeem,
    Repay,
    Swap,
    Transaction,
    apply,
    apply_trace,
)


@dataclass(frozen=True)
class GainReport:
    user: AddressId
    gain: Fraction
    by_token: dict[TokenId, Fraction] = field(default_factory=dict)
    skipped: tuple[int, ...] = ()

    @property
    def definitional_gain(self) -> Fraction:
        return self.gain


def gain(params: ProtocolParams, state: BlockchainState, user: AddressId, trace: Sequence[Transaction]) -> GainReport:
    """Net-worth change of ``user`` over ``trace``; disabled steps are dropped."""
    run = apply_trace(params, state, trace, mode="skip_disabled")
    final = run.state
    tokens = sorted(state.tokens() | final.tokens())
    by_token = {}
    for t in tokens:
        d = net_worth_restricted(final, user, t) - net_worth_restricted(state, user, t)
        if d:
            by_token[t] = d
    total = net_worth(final, user) - net_worth(state, user)
    return GainReport(user, total, by_token, run.skipped)


def gain_value(params: ProtocolParams, state: BlockchainState, user: AddressId, trace: Sequence[Transaction]) -> Fraction:
    run = apply_trace(params, state, trace, mode="skip_disabled")
    return net_worth(run.state, user) - net_worth(state, user)


def _enabled(params: ProtocolParams, state: BlockchainState, tx: Transaction) -> BlockchainState:
    try:
        return apply(params, state, tx)
    except StepError as exc:
        raise DisabledTransaction(tx, exc) from exc


# --------------------------------------------------------------------------
# Closed-form gains
# --------------------------------------------------------------------------


def predicted_gain_liquidation(params: ProtocolParams, state: BlockchainState, tx: Liquidate) -> tuple[Fraction, Fraction]:
    """(liquidator gain, borrower gain) for an enabled liquidation.

    The liquidator pays ``v0 * p(τ0)`` and receives credits worth
    ``R_liq`` times that, so the net transfer is ``(R_liq - 1) * v0 * p(τ0)``.
    """
    _enabled(params, state, tx)
    g = (params.liq_reward - 1) * tx.amount * state.prices[tx.debt_token]
    return g, -g


def predicted_gain_price_update(state: BlockchainState, user: AddressId, delta: Fraction, token: TokenId) -> Fraction:
    p = state.prices[token]
    if p + delta <= 0:
        raise NonPositivePrice(f"price of {token} would become {p + delta}")
    pool = state.pool
    exposure = state.wallet.balance(token, user) + pool.credit(token, user) * exchange_rate(pool, token) - pool.debit(token, user)
    return exposure * delta


def accrual_gain_by_token(params: ProtocolParams, state: BlockchainState, user: AddressId) -> dict[TokenId, Fraction]:
    pool = state.pool
    out = {}
    for t in sorted(pool.tokens()):
        credits = pool.credit_supply(t)
        if credits <= 0:
            continue
        debts = pool.debt_supply(t)
        share = pool.credit(t, user) / credits * debts - pool.debit(t, user)
        if share:
            out[t] = share * interest_rate(params, pool, t) * state.prices[t]
    return out


def predicted_gain_interest_accrual(params: ProtocolParams, state: BlockchainState, user: AddressId) -> Fraction:
    return sum(accrual_gain_by_token(params, state, user).values(), ZERO)


def predicted_gain(params: ProtocolParams, state: BlockchainState, user: AddressId, tx: Transaction) -> Fraction:
    """Closed-form one-step gain of ``user`` for any enabled transaction."""
    if isinstance(tx, AccrueInterest):
        return predicted_gain_interest_accrual(params, state, user)
    if isinstance(tx, PriceUpdate):
        return predicted_gain_price_update(state, user, tx.delta, tx.token)
    if isinstance(tx, Liquidate):
        liq, bor = predicted_gain_liquidation(params, state, tx)
        if user == tx.liquidator:
            return liq
        if user == tx.borrower:
            return bor
        return ZERO
    _enabled(params, state, tx)
    return ZERO


# --------------------------------------------------------------------------
# Health factor laws
# --------------------------------------------------------------------------


class Direction(enum.Enum):
    NON_DECREASING = "non-decreasing"
    NON_INCREASING = "non-increasing"
    EQUAL = "equal"


@dataclass(frozen=True)
class HealthTrend:
    direction: Direction
    strict: bool


_TREND = {
    Deposit: Direction.NON_DECREASING,
    Repay: Direction.NON_DECREASING,
    Liquidate: Direction.NON_DECREASING,
    Borrow: Direction.NON_INCREASING,
    Redeem: Direction.NON_INCREASING,
    Swap: Direction.EQUAL,
}


def health_delta_direction(params: ProtocolParams, state: BlockchainState, tx: Transaction) -> HealthTrend:
    """Predicted change of the *sender's* health factor.

    ``strict`` follows the debt of the sender in ``state``.  A debt-free
    borrower still drops from +inf to a finite value; that case is reported as
    non-strict because "strict" here speaks about finite health factors.
    """
    if type(tx) not in _TREND:
        raise TypeError(f"{tx} is not a user action")
    _enabled(params, state, tx)
    direction = _TREND[type(tx)]
    strict = direction is not Direction.EQUAL and debt_value(state, tx.user) > 0
    return HealthTrend(direction, strict)


def borrower_liq_health_delta(params: ProtocolParams, state: BlockchainState, tx: Liquidate) -> Fraction:
    """Change of the liquidated borrower's health factor.

    With ``C``/``D`` the borrower's credit/debt values and ``w = v0 * p(τ0)``
    the repaid value, the borrower loses ``w`` of debt and ``R_liq * w`` of
    collateral, which gives ``(C - D*R_liq) * w * T_liq / (D * (D - w))``.
    Exchange rates do not appear: the seized credit amount already divides
    by the collateral token's rate.
    """
    _enabled(params, state, tx)
    c = credit_value(state, tx.borrower)
    d = debt_value(state, tx.borrower)
    w = tx.amount * state.prices[tx.debt_token]
    if d == w:
        # The loan is fully cleared; health jumps to +inf, which the rule forbids.
        raise DisabledTransaction(tx, StepError("liquidation clears the whole debt"))
    return (c - d * params.liq_reward) * w * params.liq_threshold / (d * (d - w))


class DepRepVerdict(enum.Enum):
    REPAY_BETTER_OR_EQUAL = "repay"
    DEPOSIT_BETTER = "deposit"


def deposit_vs_repay(
    params: ProtocolParams, state: BlockchainState, user: AddressId, amount: Fraction, token: TokenId
) -> tuple[DepRepVerdict, Fraction]:
    """Which of deposit/repay of ``amount:token`` leaves the higher health.

    Returns the verdict and ``amount*p - (D - C)``; repaying wins (or ties)
    exactly when that margin is non-negative.
    """
    _enabled(params, state, Deposit(user, amount, token))
    _enabled(params, state, Repay(user, amount, token))
    margin = amount * state.prices[token] - (debt_value(state, user) - credit_value(state, user))
    verdict = DepRepVerdict.REPAY_BETTER_OR_EQUAL if margin >= 0 else DepRepVerdict.DEPOSIT_BETTER
    return verdict, margin
