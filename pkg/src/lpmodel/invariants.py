"""Runtime checks of the pool's structural laws, plus a seeded trace generator.

``check_step`` evaluates every law on one transition and reports exact
witnesses on failure; ``generate_trace`` produces traces in which every
transaction is enabled, for use as fuzz input.
"""

from __future__ import annotations

import enum
import random
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from fractions import Fraction

from .analysis import gain_value, predicted_gain
from .core import (
    INF,
    ZERO,
    BlockchainState,
    ProtocolParams,
    SteppedUtilization,
    credit_value,
    debt_value,
    exchange_rate,
    health_factor,
    interest_rate,
    total_net_worth,
)
from .errors import DisabledTransaction, InvalidConfig, StepError
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
    initial_state,
    is_enabled,
)

INVARIANTS = (
    "determinism",
    "base-conservation",
    "er-step",
    "er-geq-1",
    "cred0-debt0",
    "credit-bound",
    "networth-preservation",
    "health-direction",
)


class Status(enum.Enum):
    PASS = "Pass"
    FAIL = "Fail"
    NOT_APPLICABLE = "NotApplicable"


@dataclass(frozen=True)
class InvariantResult:
    invariant: str
    status: Status
    lhs: object = None
    rhs: object = None
    detail: str = ""


@dataclass(frozen=True)
class StepReport:
    index: int
    tx: Transaction
    results: tuple[InvariantResult, ...]

    @property
    def failures(self) -> tuple[InvariantResult, ...]:
        return tuple(r for r in self.results if r.status is Status.FAIL)


@dataclass(frozen=True)
class InvariantReport:
    steps: tuple[StepReport, ...] = ()

    @property
    def failures(self) -> list[tuple[int, Transaction, InvariantResult]]:
        return [(s.index, s.tx, r) for s in self.steps for r in s.failures]

    @property
    def ok(self) -> bool:
        return not self.failures

    def counts(self) -> dict[str, dict[Status, int]]:
        out = {name: {st: 0 for st in Status} for name in INVARIANTS}
        for s in self.steps:
            for r in s.results:
                out[r.invariant][r.status] += 1
        return out

    def merged(self, other: InvariantReport) -> InvariantReport:
        return InvariantReport(self.steps + other.steps)


def _result(name: str, ok: bool, lhs=None, rhs=None, detail: str = "") -> InvariantResult:
    if ok:
        return InvariantResult(name, Status.PASS)
    return InvariantResult(name, Status.FAIL, lhs, rhs, detail)


def _na(name: str) -> InvariantResult:
    return InvariantResult(name, Status.NOT_APPLICABLE)


def _determinism(params, pre, tx, post) -> InvariantResult:
    try:
        again = apply(params, pre, tx)
    except StepError as exc:
        return _result("determinism", False, None, post, f"re-application failed: {exc}")
    return _result("determinism", again == post, again, post, "re-application differs")


def _base_conservation(pre, tx, post) -> InvariantResult:
    if isinstance(tx, Swap):
        return _na("base-conservation")
    for t in sorted(pre.tokens() | post.tokens()):
        before = pre.wallet.supply(t) + pre.pool.reserve(t)
        after = post.wallet.supply(t) + post.pool.reserve(t)
        if before != after:
            return _result("base-conservation", False, before, after, f"token {t}")
    return _result("base-conservation", True)


def _er_step(params, pre, tx, post) -> InvariantResult:
    # Accrual raises X by exactly (debt supply / credit supply) * rate; every
    # other step keeps X, except that draining all credits resets it to 1.
    for t in sorted(pre.pool.tokens() | post.pool.tokens()):
        x0, x1 = exchange_rate(pre.pool, t), exchange_rate(post.pool, t)
        credits = pre.pool.credit_supply(t)
        if isinstance(tx, AccrueInterest) and credits > 0:
            expected = x0 + pre.pool.debt_supply(t) / credits * interest_rate(params, pre.pool, t)
        elif post.pool.credit_supply(t) == 0:
            expected = Fraction(1)
        else:
            expected = x0
        if x1 != expected:
            return _result("er-step", False, x1, expected, f"token {t}")
    return _result("er-step", True)


def _er_geq_1(post) -> InvariantResult:
    for t in sorted(post.pool.tokens()):
        x = exchange_rate(post.pool, t)
        if x < 1:
            return _result("er-geq-1", False, x, 1, f"token {t}")
    return _result("er-geq-1", True)


def _cred0_debt0(post) -> InvariantResult:
    pool = post.pool
    for t in sorted(pool.tokens()):
        if pool.credit_supply(t) == 0 and (pool.reserve(t) != 0 or pool.debt_supply(t) != 0):
            return _result("cred0-debt0", False, pool.reserve(t), pool.debt_supply(t), f"token {t}")
    return _result("cred0-debt0", True)


def _credit_bound(post) -> InvariantResult:
    pool = post.pool
    for t in sorted(pool.tokens()):
        lhs, rhs = pool.credit_supply(t), pool.reserve(t) + pool.debt_supply(t)
        if lhs > rhs:
            return _result("credit-bound", False, lhs, rhs, f"token {t}")
    return _result("credit-bound", True)


def _networth(pre, tx, post) -> InvariantResult:
    if isinstance(tx, PriceUpdate):
        return _na("networth-preservation")
    users = pre.users() | post.users()
    before, after = total_net_worth(pre, users), total_net_worth(post, users)
    return _result("networth-preservation", before == after, before, after)


_NON_DECREASING = (Deposit, Repay, Liquidate)
_NON_INCREASING = (Borrow, Redeem)


def _health_direction(params, pre, tx, post) -> InvariantResult:
    if isinstance(tx, (AccrueInterest, PriceUpdate)):
        return _na("health-direction")
    user = tx.user
    h0, h1 = health_factor(params, pre, user), health_factor(params, post, user)
    indebted = debt_value(pre, user) > 0
    if isinstance(tx, Swap):
        ok = h0 == h1
    elif isinstance(tx, _NON_DECREASING):
        ok = (h1 > h0) if indebted else (h1 == h0 == INF)
    else:
        if indebted:
            ok = h1 < h0
        elif isinstance(tx, Borrow):
            ok = h0 == INF and h1 != INF
        else:
            ok = h1 == h0 == INF
    return _result("health-direction", ok, h0, h1, f"{type(tx).__name__} by {user}")


def check_step(params: ProtocolParams, pre: BlockchainState, tx: Transaction, post: BlockchainState, index: int = 0) -> StepReport:
    """Evaluate every structural law on the transition ``pre --tx--> post``."""
    results = (
        _determinism(params, pre, tx, post),
        _base_conservation(pre, tx, post),
        _er_step(params, pre, tx, post),
        _er_geq_1(post),
        _cred0_debt0(post),
        _credit_bound(post),
        _networth(pre, tx, post),
        _health_direction(params, pre, tx, post),
    )
    return StepReport(index, tx, results)


def check_trace(params: ProtocolParams, initial: BlockchainState, trace: Sequence[Transaction]) -> InvariantReport:
    """Run ``trace`` strictly and check every step; a disabled step raises."""
    steps = []
    state = initial
    for i, tx in enumerate(trace):
        post = apply(params, state, tx)
        steps.append(check_step(params, state, tx, post, i))
        state = post
    return InvariantReport(tuple(steps))


# --------------------------------------------------------------------------
# Closed form versus definition
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GainCheck:
    tx: Transaction
    definitional: dict[str, Fraction]
    predicted: dict[str, Fraction]
    total: Fraction
    total_must_vanish: bool

    @property
    def mismatches(self) -> dict[str, tuple[Fraction, Fraction]]:
        return {u: (self.definitional[u], self.predicted[u]) for u in self.definitional if self.definitional[u] != self.predicted[u]}

    @property
    def ok(self) -> bool:
        return not self.mismatches and (not self.total_must_vanish or self.total == 0)


def differential_gain_check(params: ProtocolParams, state: BlockchainState, tx: Transaction) -> GainCheck:
    """Compare every user's executed one-step gain with its closed form."""
    try:
        post = apply(params, state, tx)
    except StepError as exc:
        raise DisabledTransaction(tx, exc) from exc
    users = sorted(state.users() | post.users())
    definitional = {u: gain_value(params, state, u, [tx]) for u in users}
    predicted = {u: predicted_gain(params, state, u, tx) for u in users}
    total = sum(definitional.values(), ZERO)
    return GainCheck(tx, definitional, predicted, total, not isinstance(tx, PriceUpdate))


# --------------------------------------------------------------------------
# Random enabled traces
# --------------------------------------------------------------------------

KINDS = ("dep", "bor", "rep", "rdm", "liq", "int", "px", "swp")
DEFAULT_WEIGHTS = {"dep": 4, "bor": 3, "rep": 2, "rdm": 2, "liq": 2, "int": 2, "px": 2, "swp": 1}
PRICE_MIN, PRICE_MAX = Fraction(1, 1000), Fraction(1000)
# The exact linear rate squares denominator sizes at every accrual, which
# makes 100-step traces intractable; the stepped rate keeps them linear.
DEFAULT_FUZZ_PARAMS = ProtocolParams(Fraction(2, 3), Fraction(11, 10), SteppedUtilization(Fraction(1, 10), Fraction(1, 20)))


@dataclass(frozen=True)
class FuzzConfig:
    seed: int = 0
    users: int = 2
    tokens: int = 2
    steps: int = 10
    balance_range: tuple[int, int] = (0, 1000)
    weights: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_WEIGHTS))
    denominator: int = 100
    max_fraction: Fraction = Fraction(1, 8)  # chance of drawing an exact maximum
    retries: int = 64
    params: ProtocolParams = field(default_factory=lambda: DEFAULT_FUZZ_PARAMS)

    def __post_init__(self) -> None:
        if self.users < 1 or self.tokens < 1:
            raise InvalidConfig("need at least one user and one token")
        if self.steps < 0:
            raise InvalidConfig("step count must be >= 0")
        lo, hi = self.balance_range
        if lo < 0 or hi < lo:
            raise InvalidConfig(f"bad balance range {self.balance_range}")
        if self.denominator < 1 or self.retries < 1:
            raise InvalidConfig("denominator and retries must be positive")
        unknown = set(self.weights) - set(KINDS)
        if unknown:
            raise InvalidConfig(f"unknown transaction kinds {sorted(unknown)}")
        if any(w < 0 for w in self.weights.values()) or not any(w > 0 for w in self.weights.values()):
            raise InvalidConfig("weights must be non-negative with at least one positive")


class _Sampler:
    def __init__(self, config: FuzzConfig, rng: random.Random, users=None, tokens=None) -> None:
        self.cfg = config
        self.rng = rng
        self.users = list(users) if users is not None else [f"U{i}" for i in range(config.users)]
        self.tokens = list(tokens) if tokens is not None else [f"T{i}" for i in range(config.tokens)]
        kinds = [k for k in KINDS if config.weights.get(k, 0) > 0]
        self.kinds = kinds
        self.kind_weights = [config.weights[k] for k in kinds]

    def amount(self, cap: Fraction) -> Fraction | None:
        """A positive amount <= ``cap`` with a small denominator (or ``cap`` itself)."""
        if cap <= 0:
            return None
        den = self.cfg.denominator
        if self.rng.random() < self.cfg.max_fraction:
            return cap
        units = int(cap * den * Fraction(self.rng.randint(1, 1000), 1000))
        if units < 1:
            return cap if cap <= Fraction(1, den) else Fraction(1, den)
        return Fraction(units, den)

    def candidate(self, kind: str, params: ProtocolParams, s: BlockchainState) -> Transaction | None:
        rng, pool = self.rng, s.pool
        user = rng.choice(self.users)
        token = rng.choice(self.tokens)
        if kind == "int":
            return AccrueInterest()
        if kind == "dep":
            v = self.amount(s.wallet.balance(token, user))
            return v and Deposit(user, v, token)
        if kind == "bor":
            room = credit_value(s, user) * params.liq_threshold - debt_value(s, user)
            cap = min(pool.reserve(token), room / s.prices[token]) if room > 0 else ZERO
            v = self.amount(cap)
            return v and Borrow(user, v, token)
        if kind == "rep":
            v = self.amount(min(pool.debit(token, user), s.wallet.balance(token, user)))
            return v and Repay(user, v, token)
        if kind == "rdm":
            x = exchange_rate(pool, token)
            v = self.amount(min(pool.credit(token, user), pool.reserve(token) / x))
            return v and Redeem(user, v, token)
        if kind == "liq":
            others = [u for u in self.users if u != user and health_factor(params, s, u) < 1]
            if not others:
                return None
            borrower = rng.choice(others)
            collateral = rng.choice(self.tokens)
            v = self.amount(min(pool.debit(token, borrower), s.wallet.balance(token, user)))
            return v and Liquidate(user, borrower, v, token, collateral)
        if kind == "px":
            p = s.prices[token]
            factor = Fraction(rng.randint(50, 150), 100)
            target = min(max(p * factor, PRICE_MIN), PRICE_MAX)
            target = Fraction(round(target * 1000), 1000) or PRICE_MIN
            return PriceUpdate(target - p, token) if target != p else None
        if kind == "swp":
            if len(self.tokens) < 2:
                return None
            to = rng.choice([t for t in self.tokens if t != token])
            v = self.amount(s.wallet.balance(token, user))
            return v and Swap(user, v, token, to)
        raise AssertionError(kind)


def generate_trace(config: FuzzConfig) -> tuple[BlockchainState, tuple[Transaction, ...]]:
    """Seeded random trace in which every transaction is enabled when fired.

    Each step draws a kind by weight and samples parameters from the current
    balances; a candidate that turns out disabled is redrawn up to
    ``config.retries`` times, after which an accrual (always enabled) is used.
    """
    rng = random.Random(config.seed)
    sampler = _Sampler(config, rng)
    lo, hi = config.balance_range
    wallets = [(u, t, rng.randint(lo, hi)) for u in sampler.users for t in sampler.tokens]
    prices = {t: Fraction(rng.randint(1, 40), 10) for t in sampler.tokens}
    state = initial_state(wallets, prices)
    params = config.params
    trace: list[Transaction] = []
    for _ in range(config.steps):
        chosen: Transaction = AccrueInterest()
        for _attempt in range(config.retries):
            kind = rng.choices(sampler.kinds, sampler.kind_weights)[0]
            tx = sampler.candidate(kind, params, state)
            if tx and is_enabled(params, state, tx):
                chosen = tx
                break
        state = apply(params, state, chosen)
        trace.append(chosen)
    return initial_state(wallets, prices), tuple(trace)


def sample_transaction(
    params: ProtocolParams,
    state: BlockchainState,
    kind: str,
    rng: random.Random,
    retries: int = 64,
    denominator: int = 100,
) -> Transaction | None:
    """An enabled transaction of ``kind`` drawn like the fuzzer does, or None."""
    if kind not in KINDS:
        raise InvalidConfig(f"unknown transaction kind {kind!r}")
    cfg = FuzzConfig(denominator=denominator, retries=retries, params=params)
    sampler = _Sampler(cfg, rng, sorted(state.users()), sorted(state.tokens()))
    if not sampler.users or not sampler.tokens:
        return AccrueInterest() if kind == "int" else None
    for _ in range(retries):
        tx = sampler.candidate(kind, params, state)
        if tx and is_enabled(params, state, tx):
            return tx
    return None


def fuzz_seed(config: FuzzConfig) -> InvariantReport:
    initial, trace = generate_trace(config)
    return check_trace(config.params, initial, trace)


__all__ = [
    "INVARIANTS",
    "Status",
    "InvariantResult",
    "StepReport",
    "InvariantReport",
    "check_step",
    "check_trace",
    "GainCheck",
    "differential_gain_check",
    "FuzzConfig",
    "generate_trace",
    "sample_transaction",
    "fuzz_seed",
]
