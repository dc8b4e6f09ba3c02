from __future__ import annotations

import random
from fractions import Fraction as F

import pytest

from instances import FLAT, unhealthy_borrower, walkthrough
from lpmodel import scenario_path
from lpmodel.analysis import (
    DepRepVerdict,
    Direction,
    accrual_gain_by_token,
    borrower_liq_health_delta,
    deposit_vs_repay,
    gain,
    gain_value,
    health_delta_direction,
    predicted_gain,
    predicted_gain_interest_accrual,
    predicted_gain_liquidation,
    predicted_gain_price_update,
)
from lpmodel.core import fmt_display, health_factor
from lpmodel.errors import DisabledTransaction, NonPositivePrice, StepError
from lpmodel.scenario import parse_scenario
from lpmodel.semantics import (
    AccrueInterest,
    Borrow,
    Deposit,
    Liquidate,
    PriceUpdate,
    Repay,
    Swap,
    apply,
    apply_trace,
    initial_state,
)

WALK, STATES = walkthrough()
P = WALK.params


def _states(name):
    s = parse_scenario(scenario_path(name).read_text())
    return s, (s.initial_state(),) + apply_trace(s.params, s.initial_state(), s.trace).states


def test_gain_of_liquidation_step():
    report = gain(P, STATES[6], "A", [WALK.trace[6]])
    assert report.gain == F(143, 100)
    assert report.definitional_gain == sum(report.by_token.values())
    assert report.by_token == {"T0": F(-143, 10), "T1": F(1573, 100)}


def test_gain_of_empty_trace_and_accrual():
    assert gain(P, STATES[3], "B", []).gain == 0
    assert gain(P, STATES[3], "B", [AccrueInterest()]).gain == F(-36, 10)
    assert gain(P, STATES[3], "A", [AccrueInterest()]).gain == F(36, 10)


def test_gain_skips_disabled_steps():
    report = gain(P, STATES[0], "A", [Borrow("A", 1, "T0"), Deposit("A", 10, "T0")])
    assert report.skipped == (0,) and report.gain == 0


def test_predicted_liquidation_gain():
    assert predicted_gain_liquidation(P, STATES[6], WALK.trace[6]) == (F(143, 100), F(-143, 100))
    small = predicted_gain_liquidation(P, STATES[6], Liquidate("A", "B", 5, "T0", "T1"))
    double = predicted_gain_liquidation(P, STATES[6], Liquidate("A", "B", 10, "T0", "T1"))
    assert double == (2 * small[0], 2 * small[1])
    with pytest.raises(DisabledTransaction):
        predicted_gain_liquidation(P, STATES[6], Liquidate("A", "B", 12, "T0", "T1"))


def test_non_liquidation_actions_have_zero_gain():
    for pre, tx in zip(STATES, WALK.trace):
        if tx.kind in ("int", "px", "liq"):
            continue
        for user in ("A", "B"):
            assert predicted_gain(P, pre, user, tx) == 0 == gain_value(P, pre, user, [tx])


def test_predicted_price_update_gain():
    s = STATES[5]
    assert predicted_gain_price_update(s, "B", F(3, 10), "T0") == F(-108, 100)
    assert predicted_gain_price_update(s, "A", F(3, 10), "T0") == F(3108, 100)
    assert predicted_gain_price_update(s, "nobody", F(3, 10), "T0") == 0
    for user in ("A", "B"):
        assert predicted_gain_price_update(s, user, F(3, 10), "T0") == gain_value(P, s, user, [PriceUpdate(F(3, 10), "T0")])
    with pytest.raises(NonPositivePrice):
        predicted_gain_price_update(s, "A", -1, "T0")


def test_predicted_accrual_gain():
    s = STATES[3]
    assert predicted_gain_interest_accrual(P, s, "A") == F(36, 10)
    assert predicted_gain_interest_accrual(P, s, "B") == F(-36, 10)
    assert "T1" not in accrual_gain_by_token(P, s, "B")


def test_health_direction_examples():
    trend = health_delta_direction(P, STATES[4], WALK.trace[4])
    assert trend.direction is Direction.NON_DECREASING and trend.strict
    assert health_factor(P, STATES[4], "B") < health_factor(P, STATES[5], "B")
    assert health_delta_direction(P, STATES[6], Swap("B", 1, "T0", "T1")).direction is Direction.EQUAL
    trend = health_delta_direction(P, STATES[2], WALK.trace[2])  # B borrows with no debt yet
    assert trend.direction is Direction.NON_INCREASING and not trend.strict
    with pytest.raises(TypeError):
        health_delta_direction(P, STATES[2], AccrueInterest())
    with pytest.raises(DisabledTransaction):
        health_delta_direction(P, STATES[2], Borrow("B", 40, "T0"))


@pytest.mark.parametrize(
    "name, step, before, after, shown",
    [
        ("liquidation_health_shallow.lps", 3, F(26, 27), F(104, 105), "0.027"),
        ("liquidation_health_deep.lps", 4, F(155, 189), F(593, 735), "-0.013"),
        ("walkthrough.lps", 6, F(5000, 5577), F(3427, 3432), "0.102"),
    ],
)
def test_borrower_health_change_under_liquidation(name, step, before, after, shown):
    s, states = _states(name)
    tx = s.trace[step]
    delta = borrower_liq_health_delta(s.params, states[step], tx)
    assert health_factor(s.params, states[step], tx.borrower) == before
    assert health_factor(s.params, states[step + 1], tx.borrower) == after
    assert delta == after - before
    assert fmt_display(delta, 3) == shown


def test_borrower_health_change_matches_execution_on_random_states():
    rng = random.Random(7)
    checked = 0
    while checked < 40:
        params, s = unhealthy_borrower(rng)
        v = F(rng.randint(1, 100), 100) * s.pool.debit("T0", "B") / 10
        for collateral in ("T1", "T0"):
            tx = Liquidate("Q", "B", v, "T0", collateral)
            try:
                post = apply(params, s, tx)
            except StepError:
                continue
            predicted = borrower_liq_health_delta(params, s, tx)
            assert predicted == health_factor(params, post, "B") - health_factor(params, s, "B")
            checked += 1


def _underwater():
    s = initial_state([("A", "T1", 60), ("L", "T2", 200)], {"T1": 1, "T2": 1})
    trace = [Deposit("L", 200, "T2"), Deposit("A", 60, "T1"), PriceUpdate(F(-1, 2), "T2"), Borrow("A", 80, "T2"), PriceUpdate(F(1, 2), "T2")]
    return apply_trace(FLAT, s, trace).state  # A: credit 60, debt 80, wallet 80:T2


@pytest.mark.parametrize(
    "v, verdict, margin",
    [(5, DepRepVerdict.DEPOSIT_BETTER, -15), (20, DepRepVerdict.REPAY_BETTER_OR_EQUAL, 0), (30, DepRepVerdict.REPAY_BETTER_OR_EQUAL, 10)],
)
def test_deposit_vs_repay(v, verdict, margin):
    s = _underwater()
    got, m = deposit_vs_repay(FLAT, s, "A", v, "T2")
    assert (got, m) == (verdict, margin)
    h_dep = health_factor(FLAT, apply(FLAT, s, Deposit("A", v, "T2")), "A")
    h_rep = health_factor(FLAT, apply(FLAT, s, Repay("A", v, "T2")), "A")
    assert (h_rep >= h_dep) == (got is DepRepVerdict.REPAY_BETTER_OR_EQUAL)


def test_positive_net_position_prefers_repay():
    s = STATES[6]  # B: C = 50 > D = 37.18
    for v in (F(1, 100), 1, 5, 25):
        assert deposit_vs_repay(P, s, "B", v, "T0")[0] is DepRepVerdict.REPAY_BETTER_OR_EQUAL


def test_deposit_vs_repay_matches_execution_on_random_states():
    rng = random.Random(11)
    for _ in range(60):
        params, s = unhealthy_borrower(rng)
        v = F(rng.randint(1, 400), 100) * s.pool.debit("T0", "B") / 4
        if v > s.pool.debit("T0", "B"):
            v = s.pool.debit("T0", "B")
        verdict, _ = deposit_vs_repay(params, s, "B", v, "T0")
        h_dep = health_factor(params, apply(params, s, Deposit("B", v, "T0")), "B")
        h_rep = health_factor(params, apply(params, s, Repay("B", v, "T0")), "B")
        assert (h_rep >= h_dep) == (verdict is DepRepVerdict.REPAY_BETTER_OR_EQUAL)
