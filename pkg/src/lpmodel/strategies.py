"""Front-running strategies: a user who foresees an event acts first.

Each constructor returns a concrete trace together with the predicted effect
on the user's gain, so callers can check the prediction by execution.
"""

from __future__ import annotations

import enum
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from fractions import Fraction

from .analysis import gain_value, predicted_gain_liquidation
from .core import (
    ZERO,
    AddressId,
    BlockchainState,
    LinearUtilization,
    ProtocolParams,
    TokenId,
    credit_value,
    debt_value,
    health_factor,
    q,
)
from .errors import DisabledTransaction, HypothesisViolated, InsufficientFunds, StepError, UnsupportedRateFn, UserHealthy
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
    is_enabled,
)


class Relation(enum.Enum):
    GT = ">"
    LT = "<"
    EQ = "="
    GE = ">="
    LE = "<="
    INDETERMINATE = "?"

    def holds(self, lhs: Fraction, rhs: Fraction) -> bool:
        return {
            Relation.GT: lhs > rhs,
            Relation.LT: lhs < rhs,
            Relation.EQ: lhs == rhs,
            Relation.GE: lhs >= rhs,
            Relation.LE: lhs <= rhs,
            Relation.INDETERMINATE: True,
        }[self]

    @classmethod
    def of_sign(cls, x: Fraction) -> Relation:
        return cls.GT if x > 0 else cls.LT if x < 0 else cls.EQ


@dataclass(frozen=True)
class StrategyPlan:
    """``prefix`` fired by ``user`` right before the foreseen ``event``.

    ``relation`` relates gain(prefix + event) to gain(event); when known,
    ``predicted_delta`` is their exact difference.
    """

    user: AddressId
    prefix: tuple[Transaction, ...]
    event: tuple[Transaction, ...]
    relation: Relation
    predicted_delta: Fraction | None = None

    @property
    def trace(self) -> tuple[Transaction, ...]:
        return self.prefix + self.event

    def executed_delta(self, params: ProtocolParams, state: BlockchainState) -> Fraction:
        return gain_value(params, state, self.user, self.trace) - gain_value(params, state, self.user, self.event)

    def holds(self, params: ProtocolParams, state: BlockchainState) -> bool:
        delta = self.executed_delta(params, state)
        if self.predicted_delta is not None and delta != self.predicted_delta:
            return False
        return self.relation.holds(delta, ZERO)


def _check_enabled(params: ProtocolParams, state: BlockchainState, trace: Sequence[Transaction]) -> BlockchainState:
    for tx in trace:
        try:
            state = apply(params, state, tx)
        except StepError as exc:
            raise DisabledTransaction(tx, exc) from exc
    return state


# --------------------------------------------------------------------------
# Impending liquidation
# --------------------------------------------------------------------------


def liquidation_avoidance_threshold(
    params: ProtocolParams, state: BlockchainState, user: AddressId, action: str, token: TokenId
) -> Fraction:
    """Least amount of ``token`` whose deposit/repayment lifts health to 1.

    With ``C``/``D`` the user's credit/debt values and ``p`` the token price:
    deposit needs ``(D / T_liq - C) / p`` and repay needs ``(D - C * T_liq) / p``.
    At exactly the threshold the health factor is 1 and no liquidation is
    enabled.
    """
    if health_factor(params, state, user) >= 1:
        raise UserHealthy(f"{user} has health factor >= 1")
    c, d = credit_value(state, user), debt_value(state, user)
    p = state.prices[token]
    if action == "dep":
        return (d / params.liq_threshold - c) / p
    if action == "rep":
        return (d - c * params.liq_threshold) / p
    raise ValueError(f"action must be 'dep' or 'rep', not {action!r}")


def cheaper_avoidance(
    params: ProtocolParams, state: BlockchainState, user: AddressId, dep_token: TokenId, rep_token: TokenId
) -> tuple[str, Fraction, Fraction]:
    """Pick the action whose threshold costs less value.

    Returns ``(action, deposit value, repay value)``.  Both values are in price
    units; ties go to repaying.
    """
    dep = liquidation_avoidance_threshold(params, state, user, "dep", dep_token) * state.prices[dep_token]
    rep = liquidation_avoidance_threshold(params, state, user, "rep", rep_token) * state.prices[rep_token]
    return ("dep" if dep < rep else "rep"), dep, rep


def liquidation_avoidance_plan(
    params: ProtocolParams,
    state: BlockchainState,
    user: AddressId,
    action: str,
    token: TokenId,
    event: Liquidate,
    margin: Fraction = ZERO,
) -> StrategyPlan:
    """Deposit or repay ``threshold + margin`` ahead of ``event``.

    The plan predicts a strictly larger gain than suffering the liquidation.
    """
    if event.borrower != user:
        raise HypothesisViolated("the foreseen liquidation must target the user")
    amount = liquidation_avoidance_threshold(params, state, user, action, token) + q(margin)
    if amount <= 0:
        raise HypothesisViolated("threshold plus margin is not positive")
    if state.wallet.balance(token, user) < amount:
        raise InsufficientFunds(f"{user} holds {state.wallet.balance(token, user)} {token}, needs {amount}")
    if action == "rep" and state.pool.debit(token, user) < amount:
        raise InsufficientFunds(f"{user} owes only {state.pool.debit(token, user)} {token}, cannot repay {amount}")
    tx = Deposit(user, amount, token) if action == "dep" else Repay(user, amount, token)
    return StrategyPlan(user, (tx,), (event,), Relation.GT)


def find_enabled_liquidation(
    params: ProtocolParams,
    state: BlockchainState,
    borrower: AddressId,
    liquidators: Iterable[AddressId] | None = None,
    rounds: int = 40,
) -> Liquidate | None:
    """Search for any enabled liquidation of ``borrower``.

    For each (liquidator, debt token, collateral token) the repaid amount
    starts at the largest the liquidator can pay and halves until the
    transaction becomes enabled.
    """
    if liquidators is None:
        liquidators = sorted(state.users() - {borrower})
    pool = state.pool
    debts = sorted(t for t in pool.tokens() if pool.debit(t, borrower) > 0)
    collaterals = sorted(t for t in pool.tokens() if pool.credit(t, borrower) > 0)
    for liq in liquidators:
        if liq == borrower:
            continue
        for t0 in debts:
            cap = min(state.wallet.balance(t0, liq), pool.debit(t0, borrower))
            if cap <= 0:
                continue
            for t1 in collaterals:
                amount = cap
                for _ in range(rounds):
                    tx = Liquidate(liq, borrower, amount, t0, t1)
                    if is_enabled(params, state, tx):
                        return tx
                    amount /= 2
    return None


# --------------------------------------------------------------------------
# Impending price update
# --------------------------------------------------------------------------


def px_frontrun_gain_delta(
    params: ProtocolParams, state: BlockchainState, user: AddressId, tx: Transaction, delta: Fraction, token: TokenId
) -> tuple[Fraction, Relation]:
    """``gain(tx . px) - gain(px)`` for ``user`` when ``px`` moves ``token`` by ``delta``.

    Buying ``token`` with ``v`` units of ``τ'`` yields ``v * delta * p(τ') / p(token)``;
    selling ``v`` units of it yields ``-v * delta``.  Pool actions leave the
    exposure to ``token`` unchanged, so their delta is 0.  A liquidation adds
    its own gain to the change of exposure times ``delta``.
    """
    delta = q(delta)
    post = _check_enabled(params, state, [tx])
    _check_enabled(params, post, [PriceUpdate(delta, token)])
    p = state.prices
    if isinstance(tx, Swap):
        if tx.user != user:
            out = ZERO
        elif tx.to_token == token:
            out = tx.amount * delta * p[tx.from_token] / p[token]
        elif tx.from_token == token:
            out = -tx.amount * delta
        else:
            out = ZERO
    elif isinstance(tx, (Deposit, Borrow, Repay, Redeem)):
        out = ZERO
    elif isinstance(tx, Liquidate):
        liq_gain, bor_gain = predicted_gain_liquidation(params, state, tx)
        seized_value = tx.amount * p[tx.debt_token] * params.liq_reward
        if user == tx.liquidator:
            own, sign = liq_gain, 1
        elif user == tx.borrower:
            own, sign = bor_gain, -1
        else:
            return ZERO, Relation.EQ
        exposure = ZERO
        if tx.debt_token == token:
            exposure -= tx.amount
        if tx.collateral_token == token:
            exposure += seized_value / p[token]
        out = own + sign * exposure * delta
    else:
        raise TypeError(f"{tx} is not a user action")
    return out, Relation.of_sign(out)


def build_leverage_strategy(
    params: ProtocolParams,
    state: BlockchainState,
    user: AddressId,
    v1: Fraction,
    token1: TokenId,
    v2: Fraction,
    token2: TokenId,
    delta: Fraction,
) -> StrategyPlan:
    """Deposit ``token1``, borrow ``token2``, swap the loan into ``token1``.

    The swap adds ``v2 * p(token2) / p(token1)`` units of exposure to
    ``token1``, which is what a rise of ``delta`` pays on.
    """
    delta = q(delta)
    if delta <= 0:
        raise HypothesisViolated("the foreseen price change must be a rise")
    v1, v2 = q(v1), q(v2)
    prefix = (Deposit(user, v1, token1), Borrow(user, v2, token2), Swap(user, v2, token2, token1))
    _check_enabled(params, state, prefix)
    bought = v2 * state.prices[token2] / state.prices[token1]
    return StrategyPlan(user, prefix, (PriceUpdate(delta, token1),), Relation.GT, bought * delta)


# --------------------------------------------------------------------------
# Impending interest accrual
# --------------------------------------------------------------------------


def accrual_frontrun_classification(params: ProtocolParams, kind: str, alpha: Fraction | None = None) -> Relation:
    """How firing ``kind`` before an accrual changes the sender's accrual gain.

    With a flat rate (``alpha == 0``) deposits and repayments never hurt and
    borrows and redemptions never help; liquidations can go either way.  A
    utilization-sensitive rate makes every kind indeterminate.
    """
    rate = params.rate_fn
    if not isinstance(rate, LinearUtilization):
        raise UnsupportedRateFn("classification needs the linear utilization rate model")
    a = rate.alpha if alpha is None else q(alpha)
    if kind not in ("dep", "rep", "bor", "rdm", "liq"):
        raise ValueError(f"unknown action kind {kind!r}")
    if a > 0 or kind == "liq":
        return Relation.INDETERMINATE
    return Relation.GE if kind in ("dep", "rep") else Relation.LE


def accrual_frontrun_delta(params: ProtocolParams, state: BlockchainState, user: AddressId, tx: Transaction) -> Fraction:
    """``gain(tx . int) - gain(int)``, computed by execution."""
    _check_enabled(params, state, [tx])
    return gain_value(params, state, user, [tx, AccrueInterest()]) - gain_value(params, state, user, [AccrueInterest()])


def find_accrual_witnesses(
    instances: Iterable[tuple[ProtocolParams, BlockchainState, AddressId, Transaction]],
) -> dict[Relation, tuple[ProtocolParams, BlockchainState, AddressId, Transaction, Fraction]]:
    """Scan candidate instances for a strict witness in each direction.

    Disabled candidates are ignored; the search stops once both a positive and
    a negative delta have been seen.
    """
    found: dict[Relation, tuple] = {}
    for params, state, user, tx in instances:
        if not is_enabled(params, state, tx):
            continue
        d = accrual_frontrun_delta(params, state, user, tx)
        rel = Relation.of_sign(d)
        if rel is not Relation.EQ and rel not in found:
            found[rel] = (params, state, user, tx, d)
            if len(found) == 2:
                break
    return found


__all__ = [
    "Relation",
    "StrategyPlan",
    "liquidation_avoidance_threshold",
    "cheaper_avoidance",
    "liquidation_avoidance_plan",
    "find_enabled_liquidation",
    "px_frontrun_gain_delta",
    "build_leverage_strategy",
    "accrual_frontrun_classification",
    "accrual_frontrun_delta",
    "find_accrual_witnesses",
]
