from __future__ import annotations

from fractions import Fraction as F

import pytest

from instances import FLAT, walkthrough
from lpmodel.analysis import gain_value
from lpmodel.core import LinearUtilization, ProtocolParams, exchange_rate, health_factor
from lpmodel.errors import DisabledTransaction, HypothesisViolated, InsufficientFunds, UnsupportedRateFn, UserHealthy
from lpmodel.semantics import (
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
from lpmodel.strategies import (
    Relation,
    accrual_frontrun_classification,
    accrual_frontrun_delta,
    build_leverage_strategy,
    cheaper_avoidance,
    find_accrual_witnesses,
    find_enabled_liquidation,
    liquidation_avoidance_plan,
    liquidation_avoidance_threshold,
    px_frontrun_gain_delta,
)

WALK, STATES = walkthrough()
P = WALK.params
S6 = STATES[6]
LIQ = WALK.trace[6]


def test_repay_threshold_avoids_liquidation():
    v = liquidation_avoidance_threshold(P, S6, "B", "rep", "T0")
    assert v == F(577, 195)  # (37.18 - 50 * 2/3) / 1.3
    assert health_factor(P, apply(P, S6, Repay("B", v, "T0")), "B") == 1
    assert gain_value(P, S6, "B", [Repay("B", F(296, 100), "T0"), LIQ]) == 0
    assert gain_value(P, S6, "B", [LIQ]) == F(-143, 100)


def test_deposit_threshold_in_other_token():
    v = liquidation_avoidance_threshold(P, S6, "B", "dep", "T1")
    assert v == F(577, 100)
    rich = S6.replace(wallet=S6.wallet.adjusted("T1", "B", F(10)))
    assert health_factor(P, apply(P, rich, Deposit("B", v, "T1")), "B") == 1
    with pytest.raises(InsufficientFunds):
        liquidation_avoidance_plan(P, S6, "B", "dep", "T1", LIQ)


def test_deposit_threshold_is_minimal_when_exchange_rate_above_one():
    assert exchange_rate(S6.pool, "T0") > 1
    v = liquidation_avoidance_threshold(P, S6, "B", "dep", "T0")
    assert health_factor(P, apply(P, S6, Deposit("B", v, "T0")), "B") == 1
    below = apply(P, S6, Deposit("B", v - F(1, 10**6), "T0"))
    assert health_factor(P, below, "B") < 1
    assert find_enabled_liquidation(P, below, "B", ["A"]) is not None


def test_threshold_needs_unhealthy_user():
    with pytest.raises(UserHealthy):
        liquidation_avoidance_threshold(P, STATES[5], "B", "rep", "T0")
    at_one = apply(P, S6, Repay("B", F(577, 195), "T0"))
    with pytest.raises(UserHealthy):  # health exactly 1: threshold would be 0
        liquidation_avoidance_threshold(P, at_one, "B", "rep", "T0")
    with pytest.raises(ValueError):
        liquidation_avoidance_threshold(P, S6, "B", "swp", "T0")


def test_cheaper_action_and_plan():
    action, dep, rep = cheaper_avoidance(P, S6, "B", "T0", "T0")
    assert action == "rep" and rep == dep * P.liq_threshold
    plan = liquidation_avoidance_plan(P, S6, "B", "rep", "T0", LIQ, margin=F(1, 100))
    assert plan.relation is Relation.GT and plan.holds(P, S6)
    assert plan.executed_delta(P, S6) == F(143, 100)
    with pytest.raises(HypothesisViolated):
        liquidation_avoidance_plan(P, S6, "A", "rep", "T0", LIQ)


def _two_token(p0=1, p1=1):
    s = initial_state([("A", "T0", 50), ("A", "T1", 50), ("L", "T0", 100)], {"T0": p0, "T1": p1})
    return apply_trace(FLAT, s, [Deposit("L", 100, "T0"), Deposit("A", 20, "T1")]).state


def _executed(params, s, user, tx, delta, token):
    px = PriceUpdate(delta, token)
    return gain_value(params, s, user, [tx, px]) - gain_value(params, s, user, [px])


@pytest.mark.parametrize(
    "prices, tx, delta, token, expected",
    [
        ((1, 1), Swap("A", 10, "T1", "T0"), F(3, 10), "T0", F(3)),
        ((1, 1), Swap("A", 10, "T0", "T1"), F(3, 10), "T0", F(-3)),
        ((2, 1), Swap("A", 10, "T0", "T1"), F(3, 10), "T0", F(-3)),
        ((2, 1), Swap("A", 10, "T1", "T0"), F(3, 10), "T0", F(3, 2)),
        ((1, 1), Deposit("A", 10, "T0"), F(3, 10), "T0", 0),
        ((1, 1), Borrow("A", 5, "T0"), F(-3, 10), "T0", 0),
        ((1, 1), Redeem("A", 5, "T1"), F(3, 10), "T1", 0),
    ],
)
def test_price_frontrun_delta(prices, tx, delta, token, expected):
    s = _two_token(*prices)
    got, rel = px_frontrun_gain_delta(FLAT, s, "A", tx, delta, token)
    assert got == expected == _executed(FLAT, s, "A", tx, delta, token)
    assert rel is Relation.of_sign(got)


def test_price_frontrun_delta_for_liquidation():
    for user in ("A", "B"):
        for token, delta in (("T0", F(1, 10)), ("T1", F(-1, 10))):
            got, _ = px_frontrun_gain_delta(P, S6, user, LIQ, delta, token)
            assert got == _executed(P, S6, user, LIQ, delta, token)


def test_pool_actions_commute_with_price_updates():
    s = _two_token()
    px = PriceUpdate(F(1, 2), "T0")
    for tx in (Deposit("A", 10, "T0"), Borrow("A", 5, "T0"), Repay("A", 1, "T0"), Redeem("A", 3, "T1")):
        if tx.kind == "rep":
            s2 = apply(FLAT, s, Borrow("A", 5, "T0"))
        else:
            s2 = s
        assert gain_value(FLAT, s2, "A", [px, tx]) == gain_value(FLAT, s2, "A", [tx, px])
    swap = Swap("A", 10, "T1", "T0")
    assert gain_value(FLAT, s, "A", [px, swap]) != gain_value(FLAT, s, "A", [swap, px])


def _leverage_state():
    s = initial_state([("A", "T1", 100), ("L", "T2", 100)], {"T1": 1, "T2": 1})
    return apply(FLAT, s, Deposit("L", 100, "T2"))


def test_leverage_strategy():
    s = _leverage_state()
    plan = build_leverage_strategy(FLAT, s, "A", 50, "T1", 20, "T2", F(3, 10))
    assert plan.predicted_delta == 6 and plan.holds(FLAT, s)
    plan2 = build_leverage_strategy(FLAT, s, "A", 50, "T1", 20, "T2", F(6, 10))
    assert plan2.predicted_delta == 12 == plan2.executed_delta(FLAT, s)
    with pytest.raises(DisabledTransaction):
        build_leverage_strategy(FLAT, s, "A", 50, "T1", 200, "T2", F(3, 10))
    with pytest.raises(HypothesisViolated):
        build_leverage_strategy(FLAT, s, "A", 50, "T1", 20, "T2", F(-3, 10))


@pytest.mark.parametrize(
    "kind, alpha, expected",
    [
        ("dep", 0, Relation.GE),
        ("rep", 0, Relation.GE),
        ("bor", 0, Relation.LE),
        ("rdm", 0, Relation.LE),
        ("liq", 0, Relation.INDETERMINATE),
        ("rdm", F(1, 10), Relation.INDETERMINATE),
        ("dep", F(1, 10), Relation.INDETERMINATE),
    ],
)
def test_accrual_classification(kind, alpha, expected):
    assert accrual_frontrun_classification(FLAT, kind, alpha) is expected


def test_accrual_classification_needs_linear_rate():
    custom = ProtocolParams(F(1, 2), F(11, 10), lambda r, c, d: F(1, 10))
    with pytest.raises(UnsupportedRateFn):
        accrual_frontrun_classification(custom, "dep")


def test_accrual_frontrun_on_walkthrough_state():
    # B repays ahead of the accrual: pays less interest.
    assert accrual_frontrun_delta(P, STATES[3], "B", Repay("B", 5, "T0")) == F(6, 10)
    assert accrual_frontrun_delta(P, STATES[3], "A", Deposit("A", 10, "T0")) == 0


def _liq_instances():
    for beta in (F(1, 100), F(1, 20), F(1, 10), F(12, 100), F(1, 2), F(1)):
        params = ProtocolParams(F(2, 3), F(11, 10), LinearUtilization(0, beta))
        for v0 in (1, 5, 11):
            yield params, S6, "A", Liquidate("A", "B", v0, "T0", "T1")


def test_liquidation_before_accrual_goes_both_ways():
    found = find_accrual_witnesses(_liq_instances())
    assert set(found) == {Relation.GT, Relation.LT}
    for params, s, user, tx, d in found.values():
        beta = params.rate_fn.beta
        assert d == tx.amount * s.prices["T0"] * (params.liq_reward - 1 - beta)
        assert is_enabled(params, s, tx)


def test_find_enabled_liquidation():
    assert find_enabled_liquidation(P, STATES[5], "B") is None
    tx = find_enabled_liquidation(P, S6, "B")
    assert tx is not None and is_enabled(P, S6, tx)
    assert accrual_frontrun_delta(P, S6, "A", AccrueInterest()) is not None
