from __future__ import annotations

from fractions import Fraction as F

import pytest
from hypothesis import given
from hypothesis import strategies as st

from instances import FLAT, walkthrough
from lpmodel.core import exchange_rate
from lpmodel.errors import (
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
)
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
    seized_credits,
    why_disabled,
)

WALK, STATES = walkthrough()
P = WALK.params


def test_initial_states():
    s = initial_state([("A", "T0", 100), ("B", "T1", 50)], {"T0": 1, "T1": 1})
    assert s.pool.is_empty() and s.wallet.balance("T0", "A") == 100
    assert initial_state({}, {"T": 1}).wallet.balances == {}
    with pytest.raises(NonPositivePrice):
        initial_state([("A", "T0", 1)], {"T0": 0})
    with pytest.raises(MissingPrice):
        initial_state([("A", "T9", 1)], {"T0": 1})


def test_first_deposit_mints_one_to_one():
    assert STATES[1].pool.credit("T0", "A") == 50


def test_liquidation_step():
    s = STATES[7]
    assert seized_credits(STATES[6], P, WALK.trace[6]) == F(1573, 100)
    assert s.pool.credit("T1", "A") == F(1573, 100)
    assert s.pool.credit("T1", "B") == F(3427, 100)
    assert s.pool.debit("T0", "B") == F(176, 10)
    assert s.pool.reserve("T0") == 36


def test_over_liquidation_rejected():
    with pytest.raises(OverLiquidation):
        apply(P, STATES[6], Liquidate("A", "B", 12, "T0", "T1"))


def test_enabledness_examples():
    liq = Liquidate("A", "B", 1, "T0", "T1")
    assert not is_enabled(P, STATES[5], liq)
    assert isinstance(why_disabled(P, STATES[5], liq), BorrowerHealthy)
    assert all(is_enabled(P, s, AccrueInterest()) for s in STATES)
    assert isinstance(why_disabled(P, STATES[0], PriceUpdate(-1, "T0")), NonPositivePrice)


def test_full_trace_and_empty_trace():
    final = apply_trace(P, STATES[0], WALK.trace).state
    assert final.wallet.balance("T0", "A") == F(4972, 100)
    assert final.pool.reserve("T0") == F(2528, 100)
    assert apply_trace(P, STATES[0], []).state == STATES[0]


def test_skip_mode_drops_disabled_steps():
    bad = Borrow("A", 1, "T0")  # nothing deposited yet
    run = apply_trace(P, STATES[0], [bad], mode="skip_disabled")
    assert run.state == STATES[0] and run.applied == (False,) and run.skipped == (0,)
    assert isinstance(run.errors[0], InsufficientReserves)
    with pytest.raises(InsufficientReserves):
        apply_trace(P, STATES[0], [bad])


@pytest.mark.parametrize(
    "state_index, tx, error",
    [
        (0, Deposit("A", 101, "T0"), InsufficientWallet),
        (2, Borrow("B", 34, "T0"), HealthTooLowAfter),
        (3, Repay("B", 31, "T0"), InsufficientWallet),
        (3, Repay("A", 1, "T0"), InsufficientDebt),
        (3, Redeem("B", 51, "T1"), InsufficientCredits),
        (3, Redeem("A", 50, "T0"), InsufficientReserves),
        (3, Redeem("B", 10, "T1"), HealthTooLowAfter),
        (6, Liquidate("A", "B", 100, "T0", "T1"), InsufficientWallet),
        (6, Swap("B", 26, "T0", "T1"), InsufficientWallet),
        (6, PriceUpdate(-F(13, 10), "T0"), NonPositivePrice),
        (6, PriceUpdate(1, "T9"), MissingPrice),
    ],
)
def test_each_premise_has_its_error(state_index, tx, error):
    with pytest.raises(error):
        apply(P, STATES[state_index], tx)


def test_liquidation_needs_enough_collateral():
    s = initial_state([("A", "T0", 500), ("B", "T1", 10), ("L", "T0", 100)], {"T0": 1, "T1": 1})
    s = apply_trace(FLAT, s, [Deposit("L", 100, "T0"), Deposit("B", 10, "T1"), Borrow("B", 6, "T0"), PriceUpdate(10, "T0")]).state
    with pytest.raises(InsufficientCredits):
        apply(FLAT, s, Liquidate("A", "B", 6, "T0", "T1"))


@pytest.mark.parametrize(
    "make",
    [
        lambda: Deposit("A", 0, "T"),
        lambda: Borrow("A", -1, "T"),
        lambda: PriceUpdate(0, "T"),
        lambda: Swap("A", 1, "T", "T"),
        lambda: Liquidate("A", "A", 1, "T", "U"),
        lambda: Redeem("", 1, "T"),
        lambda: Repay("A", "abc", "T"),
    ],
)
def test_malformed_transactions(make):
    with pytest.raises(MalformedTransaction):
        make()


def test_swap_preserves_value():
    s = STATES[6]
    after = apply(P, s, Swap("B", 10, "T0", "T1"))
    assert after.wallet.balance("T1", "B") == 13
    assert after.prices == s.prices


def test_accrual_uses_pre_state_rate():
    after = apply(P, STATES[3], AccrueInterest())
    assert after.pool.debit("T0", "B") == F(336, 10)
    assert after.wallet == STATES[3].wallet and after.pool.reserves == STATES[3].pool.reserves


def test_determinism_and_liquidation_value_identity():
    for pre, tx in zip(STATES, WALK.trace):
        assert apply(P, pre, tx) == apply(P, pre, tx)
    pre, tx = STATES[6], WALK.trace[6]
    lhs = seized_credits(pre, P, tx) * exchange_rate(pre.pool, "T1") * pre.prices["T1"]
    assert lhs == tx.amount * pre.prices["T0"] * P.liq_reward


def test_transaction_text():
    assert str(Liquidate("A", "B", 11, "T0", "T1")) == "A:liq(B,11:T0,T1)"
    assert str(PriceUpdate(F(-3, 10), "T0")) == "px(-0.3:T0)"
    assert str(Swap("A", F(1, 3), "T0", "T1")) == "A:swp(1/3:T0,T1)"


@given(st.fractions(min_value=F(1, 100), max_value=25, max_denominator=100))
def test_deposit_then_full_redeem_round_trips(v):
    s = STATES[5]  # X(T0) > 1 and B is healthy
    x = exchange_rate(s.pool, "T0")
    after = apply(P, apply(P, s, Deposit("B", v, "T0")), Redeem("B", v / x, "T0"))
    assert after == s


@given(st.sampled_from(range(len(STATES))), st.fractions(min_value=F(1, 100), max_value=5, max_denominator=100))
def test_base_tokens_conserved_by_deposits(i, v):
    s = STATES[i]
    tx = Deposit("A", v, "T0")
    if is_enabled(P, s, tx):
        after = apply(P, s, tx)
        for t in ("T0", "T1"):
            assert after.wallet.supply(t) + after.pool.reserve(t) == s.wallet.supply(t) + s.pool.reserve(t)
