"""Adversarial traces against the pool, each checked by execution.

Every constructor validates the attack's hypotheses, derives its parameters,
emits an ordinary trace, runs it, and reports whether the claimed effect
actually happened.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction

from .analysis import gain_value, predicted_gain_liquidation
from .core import (
    AddressId,
    BlockchainState,
    LinearUtilization,
    ProtocolParams,
    TokenId,
    exchange_rate,
    health_factor,
    net_position,
    q,
)
from .errors import HypothesisViolated, NoFeasibleDelta, StepError, UnsupportedRateFn
from .semantics import (
    AccrueInterest,
    Borrow,
    Deposit,
    Liquidate,
    PriceUpdate,
    Redeem,
    Repay,
    Transaction,
    apply,
    apply_trace,
    seized_credits,
)


class Verdict(enum.Enum):
    SUCCEEDED = "Succeeded"
    PRECONDITION_FAILED = "PreconditionFailed"
    CLAIM_VIOLATED = "ClaimViolated"


@dataclass(frozen=True)
class AttackOutcome:
    kind: str
    trace: tuple[Transaction, ...]
    enabled: bool
    adversary_gain: Fraction | None
    victim_gain: Fraction | None
    adversary_net_position: Fraction | None
    verdict: Verdict
    details: dict[str, object] = field(default_factory=dict)
    error: StepError | None = None

    @property
    def succeeded(self) -> bool:
        return self.verdict is Verdict.SUCCEEDED


def _run(params: ProtocolParams, state: BlockchainState, trace: tuple[Transaction, ...]):
    try:
        return apply_trace(params, state, trace, mode="strict"), None
    except StepError as exc:
        return None, exc


def _failed(kind: str, trace: tuple[Transaction, ...], error: StepError, details: dict) -> AttackOutcome:
    return AttackOutcome(kind, trace, False, None, None, None, Verdict.PRECONDITION_FAILED, details, error)


def _linear_alpha(params: ProtocolParams) -> Fraction:
    rate = params.rate_fn
    if not isinstance(rate, LinearUtilization):
        raise UnsupportedRateFn("utilization attacks need the linear utilization rate model")
    if rate.alpha <= 0:
        raise HypothesisViolated("the rate must depend on utilization (alpha > 0)")
    return rate.alpha


def _has_pool_position(state: BlockchainState, user: AddressId) -> bool:
    pool = state.pool
    return any(pool.credit(t, user) or pool.debit(t, user) for t in pool.tokens())


# --------------------------------------------------------------------------
# Undercollateralized loan
# --------------------------------------------------------------------------


def build_undercollateralized_loan_attack(
    params: ProtocolParams,
    state: BlockchainState,
    adversary: AddressId,
    v1: Fraction,
    token1: TokenId,
    token2: TokenId,
    delta: Fraction,
) -> AttackOutcome:
    """Depress ``token2``'s price, borrow against it to the limit, restore the price.

    The borrow of ``v2 = v1 * p(token1) / (p(token2) - delta) * T_liq`` is
    exactly at health 1 under the depressed price.  The deposit mints
    ``v1 / X(token1)`` credits worth ``v1 * p(token1)``, so no exchange-rate
    factor appears.  The adversary's gain is
    zero, and the loan ends undercollateralized iff
    ``delta > p(token2) * (1 - T_liq)``.
    """
    v1, delta = q(v1), q(delta)
    if token1 == token2:
        raise HypothesisViolated("collateral and loan tokens must differ")
    if _has_pool_position(state, adversary):
        raise HypothesisViolated(f"{adversary} already holds credits or debts")
    p1, p2 = state.prices[token1], state.prices[token2]
    if not 0 < delta < p2:
        raise HypothesisViolated(f"delta must lie strictly between 0 and p({token2}) = {p2}")
    v2 = v1 * (p1 / (p2 - delta)) * params.liq_threshold
    trace = (
        Deposit(adversary, v1, token1),
        PriceUpdate(-delta, token2),
        Borrow(adversary, v2, token2),
        PriceUpdate(delta, token2),
    )
    details = {"v2": v2, "threshold_delta": p2 * (1 - params.liq_threshold)}
    run, err = _run(params, state, trace)
    if err is not None:
        return _failed("undercoll", trace, err, details)
    final = run.state
    g = gain_value(params, state, adversary, trace)
    pos = net_position(final, adversary)
    ok = g == 0 and (pos < 0) == (delta > details["threshold_delta"]) and final.prices == state.prices
    verdict = Verdict.SUCCEEDED if ok else Verdict.CLAIM_VIOLATED
    return AttackOutcome("undercoll", trace, True, g, None, pos, verdict, details)


# --------------------------------------------------------------------------
# Liquidation by price manipulation
# --------------------------------------------------------------------------


def _liq_attack_trace(adversary, victim, token1, token2, p1, delta, v_l):
    return (
        PriceUpdate(-p1 + delta, token1),
        Liquidate(adversary, victim, v_l, token2, token1),
        PriceUpdate(p1 - delta, token1),
    )


def build_liquidation_attack(
    params: ProtocolParams,
    state: BlockchainState,
    adversary: AddressId,
    victim: AddressId,
    token1: TokenId,
    token2: TokenId,
    delta: Fraction,
    v_l: Fraction,
    floor: Fraction = Fraction(1, 2**40),
) -> AttackOutcome:
    """Crash the collateral price to ``delta``, liquidate, restore the price.

    The victim must be healthy, hold collateral only in ``token1`` and debt
    only in ``token2``.  ``delta`` is the first candidate of a halving search
    that stops at ``floor``; the first value for which the liquidation is
    admissible is used.

    ``adversary_gain`` is the gain over the whole trace.  The liquidation
    step alone gains ``(R_liq - 1) * v_l * p(token2)`` at the manipulated
    prices, reported as ``details["liquidation_step_gain"]``.
    """
    delta, v_l = q(delta), q(v_l)
    if adversary == victim:
        raise HypothesisViolated("adversary and victim must differ")
    if token1 == token2:
        raise HypothesisViolated("collateral and debt tokens must differ")
    pool = state.pool
    for t in pool.tokens():
        if t != token1 and pool.credit(t, victim):
            raise HypothesisViolated(f"{victim} holds collateral outside {token1}")
        if t != token2 and pool.debit(t, victim):
            raise HypothesisViolated(f"{victim} owes debt outside {token2}")
    v_c = pool.credit(token1, victim)
    if v_c <= 0 or pool.debit(token2, victim) <= 0:
        raise HypothesisViolated(f"{victim} needs credits of {token1} and debt in {token2}")
    if health_factor(params, state, victim) < 1:
        raise HypothesisViolated(f"{victim} is already liquidatable")
    if not 0 < v_l <= min(state.wallet.balance(token2, adversary), pool.debit(token2, victim)):
        raise HypothesisViolated("v_l must be positive and within the adversary's funds and the victim's debt")
    p1, p2 = state.prices[token1], state.prices[token2]
    x1 = exchange_rate(pool, token1)

    chosen = None
    d = delta
    while d >= floor:
        if d < p1 and v_l < v_c * (x1 / params.liq_reward) * (d / p2):
            low = apply(params, state, PriceUpdate(-p1 + d, token1))
            if health_factor(params, low, victim) < 1:
                tx = Liquidate(adversary, victim, v_l, token2, token1)
                try:
                    after = apply(params, low, tx)
                except StepError:
                    after = None
                if after is not None and health_factor(params, after, victim) <= 1:
                    chosen = d
                    break
        d /= 2
    if chosen is None:
        raise NoFeasibleDelta(f"no admissible price offset in [{floor}, {delta}]")

    trace = _liq_attack_trace(adversary, victim, token1, token2, p1, chosen, v_l)
    low = apply(params, state, trace[0])
    step_gain, _ = predicted_gain_liquidation(params, low, trace[1])
    details = {
        "delta": chosen,
        "seized": seized_credits(low, params, trace[1]),
        "liquidation_step_gain": step_gain,
    }
    run, err = _run(params, state, trace)
    if err is not None:
        return _failed("liq", trace, err, details)
    g = gain_value(params, state, adversary, trace)
    step_exec = gain_value(params, low, adversary, trace[1:2])
    vg = gain_value(params, state, victim, trace)
    pos = net_position(run.state, adversary)
    ok = g > 0 and step_exec == step_gain == (params.liq_reward - 1) * v_l * p2
    verdict = Verdict.SUCCEEDED if ok else Verdict.CLAIM_VIOLATED
    return AttackOutcome("liq", trace, True, g, vg, pos, verdict, details)


# --------------------------------------------------------------------------
# Utilization manipulation around an accrual
# --------------------------------------------------------------------------


def _compare_with_accrual(kind, params, state, adversary, victim, trace, details) -> AttackOutcome:
    run, err = _run(params, state, trace)
    if err is not None:
        return _failed(kind, trace, err, details)
    baseline = (AccrueInterest(),)
    g_adv = gain_value(params, state, adversary, trace)
    g_vic = gain_value(params, state, victim, trace)
    base_adv = gain_value(params, state, adversary, baseline)
    base_vic = gain_value(params, state, victim, baseline)
    details.update(baseline_adversary_gain=base_adv, baseline_victim_gain=base_vic)
    ok = g_adv > base_adv and g_vic < base_vic
    verdict = Verdict.SUCCEEDED if ok else Verdict.CLAIM_VIOLATED
    return AttackOutcome(kind, trace, True, g_adv, g_vic, net_position(run.state, adversary), verdict, details)


def build_underutilization_attack(
    params: ProtocolParams,
    state: BlockchainState,
    adversary: AddressId,
    victim: AddressId,
    token: TokenId,
    v: Fraction,
) -> AttackOutcome:
    """Deposit right before an accrual and redeem everything right after.

    The deposit lowers utilization and hence the rate, so the victim (a
    creditor) earns less while the adversary collects a share of the interest.
    """
    v = q(v)
    _linear_alpha(params)
    pool = state.pool
    if adversary == victim:
        raise HypothesisViolated("adversary and victim must differ")
    if pool.credit(token, adversary) != 0:
        raise HypothesisViolated(f"{adversary} already holds credits of {token}")
    if pool.credit(token, victim) <= 0 or pool.debit(token, victim) != 0:
        raise HypothesisViolated(f"{victim} must be a pure creditor of {token}")
    if pool.debt_supply(token) <= 0:
        raise HypothesisViolated(f"nobody owes {token}, so no interest accrues")
    minted = v / exchange_rate(pool, token)
    trace = (Deposit(adversary, v, token), AccrueInterest(), Redeem(adversary, minted, token))
    return _compare_with_accrual("underutil", params, state, adversary, victim, trace, {"minted": minted})


def build_overutilization_attack(
    params: ProtocolParams,
    state: BlockchainState,
    adversary: AddressId,
    victim: AddressId,
    token: TokenId,
    v: Fraction,
) -> AttackOutcome:
    """Borrow right before an accrual and repay right after.

    The adversary owns every credit of ``token``, so the higher rate caused
    by the extra loan flows back to them, and the other debtors pay it.
    """
    v = q(v)
    _linear_alpha(params)
    pool = state.pool
    if adversary == victim:
        raise HypothesisViolated("adversary and victim must differ")
    credits = pool.credit_supply(token)
    if credits <= 0 or pool.credit(token, adversary) != credits:
        raise HypothesisViolated(f"{adversary} must hold every credit of {token}")
    if pool.debit(token, adversary) >= pool.debt_supply(token):
        raise HypothesisViolated(f"someone other than {adversary} must owe {token}")
    if pool.debit(token, victim) <= 0:
        raise HypothesisViolated(f"{victim} must owe {token}")
    trace = (Borrow(adversary, v, token), AccrueInterest(), Repay(adversary, v, token))
    return _compare_with_accrual("overutil", params, state, adversary, victim, trace, {})


ATTACKS = {
    "undercoll": build_undercollateralized_loan_attack,
    "liq": build_liquidation_attack,
    "underutil": build_underutilization_attack,
    "overutil": build_overutilization_attack,
}

__all__ = [
    "Verdict",
    "AttackOutcome",
    "build_undercollateralized_loan_attack",
    "build_liquidation_attack",
    "build_underutilization_attack",
    "build_overutilization_attack",
    "ATTACKS",
]
