"""Ledger state types and the pure economic metrics defined on them.

All quantities are :class:`fractions.Fraction`.  Balances are stored in plain
dicts that are never mutated after construction; every update goes through
``with_*`` helpers that return a fresh object with zero entries dropped, so
"no credits of τ" is simply "no key for τ".
"""

from __future__ import annotations

import math
from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction
from functools import total_ordering
from numbers import Rational
from typing import Protocol, Union

from .errors import MissingPrice, NonPositivePrice

TokenId = str
AddressId = str
Key = tuple[TokenId, AddressId]

ZERO = Fraction(0)
ONE = Fraction(1)


@total_ordering
class _Infinity:
    """Positive infinity for health/collateralization of debt-free users.

    Only comparisons are defined.  Any arithmetic raises ``TypeError`` so a
    stray ``inf * x`` cannot silently propagate into an exact computation.
    """

    _instance: _Infinity | None = None

    def __new__(cls) -> _Infinity:
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "INF"

    def __str__(self) -> str:
        return "+inf"

    def __eq__(self, other: object) -> bool:
        return other is self

    def __hash__(self) -> int:
        return hash("lpmodel.INF")

    def __lt__(self, other: object) -> bool:
        if other is self or isinstance(other, (Rational, int)):
            return False
        return NotImplemented

    def __reduce__(self) -> str:
        return "INF"


INF = _Infinity()

Health = Union[Fraction, _Infinity]


def is_inf(x: object) -> bool:
    return x is INF


def q(x: Fraction | int | str | float | Decimal) -> Fraction:
    """Coerce a user-supplied number to an exact rational.

    Floats go through their shortest repr, so ``q(0.3) == Fraction(3, 10)``.
    """
    if isinstance(x, Fraction):
        return x
    if isinstance(x, bool):
        raise TypeError("booleans are not amounts")
    if isinstance(x, float):
        return Fraction(repr(x))
    return Fraction(x)


def _normalized(entries: Mapping | Iterable) -> dict:
    items = entries.items() if isinstance(entries, Mapping) else entries
    out = {}
    for key, value in items:
        value = q(value)
        if value < 0:
            raise ValueError(f"negative balance for {key}: {value}")
        if value:
            out[key] = value
    return out


def _adjust(mapping: dict, key, delta: Fraction) -> dict:
    new = dict(mapping)
    value = new.get(key, ZERO) + delta
    if value < 0:
        raise ValueError(f"balance for {key} would become negative ({value})")
    if value:
        new[key] = value
    else:
        new.pop(key, None)
    return new


# --------------------------------------------------------------------------
# State components
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=True)
class WalletState:
    """(token, address) -> balance; absent keys are zero."""

    balances: dict[Key, Fraction] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "balances", _normalized(self.balances))

    def balance(self, token: TokenId, user: AddressId) -> Fraction:
        return self.balances.get((token, user), ZERO)

    def supply(self, token: TokenId) -> Fraction:
        return sum((v for (t, _), v in self.balances.items() if t == token), ZERO)

    def tokens(self) -> set[TokenId]:
        return {t for t, _ in self.balances}

    def users(self) -> set[AddressId]:
        return {a for _, a in self.balances}

    def of(self, user: AddressId) -> dict[TokenId, Fraction]:
        return {t: v for (t, a), v in self.balances.items() if a == user}

    def adjusted(self, token: TokenId, user: AddressId, delta: Fraction) -> WalletState:
        return _replace_dict(self, "balances", _adjust(self.balances, (token, user), delta))

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True, eq=True)
class LendingPoolState:
    """Reserves per token plus per-(token, address) credit and debit balances."""

    reserves: dict[TokenId, Fraction] = field(default_factory=dict)
    credits: dict[Key, Fraction] = field(default_factory=dict)
    debits: dict[Key, Fraction] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "reserves", _normalized(self.reserves))
        object.__setattr__(self, "credits", _normalized(self.credits))
        object.__setattr__(self, "debits", _normalized(self.debits))

    def reserve(self, token: TokenId) -> Fraction:
        return self.reserves.get(token, ZERO)

    def credit(self, token: TokenId, user: AddressId) -> Fraction:
        return self.credits.get((token, user), ZERO)

    def debit(self, token: TokenId, user: AddressId) -> Fraction:
        return self.debits.get((token, user), ZERO)

    def credit_supply(self, token: TokenId) -> Fraction:
        return sum((v for (t, _), v in self.credits.items() if t == token), ZERO)

    def debt_supply(self, token: TokenId) -> Fraction:
        return sum((v for (t, _), v in self.debits.items() if t == token), ZERO)

    def tokens(self) -> set[TokenId]:
        return set(self.reserves) | {t for t, _ in self.credits} | {t for t, _ in self.debits}

    def users(self) -> set[AddressId]:
        return {a for _, a in self.credits} | {a for _, a in self.debits}

    def is_empty(self) -> bool:
        return not (self.reserves or self.credits or self.debits)

    def with_reserve(self, token: TokenId, delta: Fraction) -> LendingPoolState:
        return _replace_dict(self, "reserves", _adjust(self.reserves, token, delta))

    def with_credit(self, token: TokenId, user: AddressId, delta: Fraction) -> LendingPoolState:
        return _replace_dict(self, "credits", _adjust(self.credits, (token, user), delta))

    def with_debit(self, token: TokenId, user: AddressId, delta: Fraction) -> LendingPoolState:
        return _replace_dict(self, "debits", _adjust(self.debits, (token, user), delta))

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True, eq=True)
class PriceOracle:
    prices: dict[TokenId, Fraction] = field(default_factory=dict)

    def __post_init__(self) -> None:
        prices = {}
        for token, p in self.prices.items():
            p = q(p)
            if p <= 0:
                raise NonPositivePrice(f"price of {token} must be > 0, got {p}")
            prices[token] = p
        object.__setattr__(self, "prices", prices)

    def __getitem__(self, token: TokenId) -> Fraction:
        try:
            return self.prices[token]
        except KeyError:
            raise MissingPrice(f"no price for token {token!r}") from None

    def __contains__(self, token: object) -> bool:
        return token in self.prices

    def updated(self, token: TokenId, delta: Fraction) -> PriceOracle:
        new = dict(self.prices)
        new[token] = self[token] + delta
        return PriceOracle(new)

    __hash__ = None  # type: ignore[assignment]


def _replace_dict(obj, name: str, value: dict):
    # Bypass __post_init__ re-normalization: _adjust already keeps the invariant.
    new = object.__new__(type(obj))
    for f in obj.__dataclass_fields__:
        object.__setattr__(new, f, getattr(obj, f))
    object.__setattr__(new, name, value)
    return new


@dataclass(frozen=True, eq=True)
class BlockchainState:
    wallet: WalletState = field(default_factory=WalletState)
    pool: LendingPoolState = field(default_factory=LendingPoolState)
    prices: PriceOracle = field(default_factory=PriceOracle)

    def tokens(self) -> set[TokenId]:
        return self.wallet.tokens() | self.pool.tokens() | set(self.prices.prices)

    def users(self) -> set[AddressId]:
        return self.wallet.users() | self.pool.users()

    def replace(self, **changes) -> BlockchainState:
        return BlockchainState(
            wallet=changes.get("wallet", self.wallet),
            pool=changes.get("pool", self.pool),
            prices=changes.get("prices", self.prices),
        )

    __hash__ = None  # type: ignore[assignment]


# --------------------------------------------------------------------------
# Protocol parameters and interest rates
# --------------------------------------------------------------------------


class InterestRateFn(Protocol):
    """Rate as a function of (reserves, credit supply, debt supply) of one token."""

    def __call__(self, reserves: Fraction, credit_supply: Fraction, debt_supply: Fraction) -> Fraction: ...


def utilization_of(reserves: Fraction, debt_supply: Fraction) -> Fraction:
    if debt_supply == 0:
        return ZERO
    return debt_supply / (reserves + debt_supply)


@dataclass(frozen=True)
class LinearUtilization:
    """``rate = alpha * U + beta`` with ``alpha >= 0`` and ``beta > 0``."""

    alpha: Fraction
    beta: Fraction

    def __post_init__(self) -> None:
        object.__setattr__(self, "alpha", q(self.alpha))
        object.__setattr__(self, "beta", q(self.beta))
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.beta <= 0:
            raise ValueError("beta must be > 0")

    def __call__(self, reserves: Fraction, credit_supply: Fraction, debt_supply: Fraction) -> Fraction:
        return self.alpha * utilization_of(reserves, debt_supply) + self.beta


@dataclass(frozen=True)
class SteppedUtilization:
    """``rate = alpha * floor(U * grid) / grid + beta``.

    Utilization-sensitive like :class:`LinearUtilization`, but the rate only
    takes ``grid + 1`` distinct values, so repeated accruals do not compound
    the size of numerators and denominators.  Used for long random traces.
    """

    alpha: Fraction
    beta: Fraction
    grid: int = 20

    def __post_init__(self) -> None:
        object.__setattr__(self, "alpha", q(self.alpha))
        object.__setattr__(self, "beta", q(self.beta))
        if self.alpha < 0 or self.beta <= 0 or self.grid < 1:
            raise ValueError("need alpha >= 0, beta > 0 and grid >= 1")

    def __call__(self, reserves: Fraction, credit_supply: Fraction, debt_supply: Fraction) -> Fraction:
        u = utilization_of(reserves, debt_supply)
        return self.alpha * Fraction(math.floor(u * self.grid), self.grid) + self.beta


@dataclass(frozen=True)
class ProtocolParams:
    liq_threshold: Fraction
    liq_reward: Fraction
    rate_fn: InterestRateFn | Callable[[Fraction, Fraction, Fraction], Fraction]

    def __post_init__(self) -> None:
        object.__setattr__(self, "liq_threshold", q(self.liq_threshold))
        object.__setattr__(self, "liq_reward", q(self.liq_reward))
        if not 0 < self.liq_threshold < 1:
            raise ValueError("liquidation threshold must lie in (0, 1)")
        if self.liq_reward <= 1:
            raise ValueError("liquidation reward must be > 1")

    @classmethod
    def linear(cls, liq_threshold, liq_reward, alpha, beta) -> ProtocolParams:
        return cls(q(liq_threshold), q(liq_reward), LinearUtilization(q(alpha), q(beta)))


# --------------------------------------------------------------------------
# Metrics
# --------------------------------------------------------------------------


def _pool_of(state: BlockchainState | LendingPoolState) -> LendingPoolState:
    return state.pool if isinstance(state, BlockchainState) else state


def supply(state: BlockchainState | LendingPoolState | WalletState, kind: str, token: TokenId) -> Fraction:
    """Total units of ``token`` of the given kind (``base``, ``credit`` or ``debt``)."""
    if kind == "base":
        wallet = state.wallet if isinstance(state, BlockchainState) else state
        if not isinstance(wallet, WalletState):
            raise TypeError("base supply needs a wallet or blockchain state")
        return wallet.supply(token)
    pool = _pool_of(state)
    if kind == "credit":
        return pool.credit_supply(token)
    if kind == "debt":
        return pool.debt_supply(token)
    raise ValueError(f"unknown supply kind {kind!r}")


def exchange_rate(pool: BlockchainState | LendingPoolState, token: TokenId) -> Fraction:
    pool = _pool_of(pool)
    credits = pool.credit_supply(token)
    if credits == 0:
        return ONE
    return (pool.reserve(token) + pool.debt_supply(token)) / credits


def credit_token_price(pool: BlockchainState | LendingPoolState, prices: PriceOracle, token: TokenId) -> Fraction:
    return exchange_rate(pool, token) * prices[token]


@dataclass(frozen=True)
class PortfolioValues:
    wallet: Fraction
    credit: Fraction
    debt: Fraction

    def __iter__(self):
        return iter((self.wallet, self.credit, self.debt))


def wallet_value(state: BlockchainState, user: AddressId) -> Fraction:
    return sum((v * state.prices[t] for t, v in state.wallet.of(user).items()), ZERO)


def credit_value(state: BlockchainState, user: AddressId) -> Fraction:
    pool = state.pool
    return sum(
        (v * exchange_rate(pool, t) * state.prices[t] for (t, a), v in pool.credits.items() if a == user),
        ZERO,
    )


def debt_value(state: BlockchainState, user: AddressId) -> Fraction:
    return sum((v * state.prices[t] for (t, a), v in state.pool.debits.items() if a == user), ZERO)


def portfolio_values(state: BlockchainState, user: AddressId) -> PortfolioValues:
    return PortfolioValues(wallet_value(state, user), credit_value(state, user), debt_value(state, user))


def net_worth(state: BlockchainState, user: AddressId) -> Fraction:
    w, c, d = portfolio_values(state, user)
    return w + c - d


def net_worth_restricted(state: BlockchainState, user: AddressId, token: TokenId) -> Fraction:
    pool = state.pool
    units = state.wallet.balance(token, user) + pool.credit(token, user) * exchange_rate(pool, token) - pool.debit(token, user)
    if not units:
        return ZERO
    return units * state.prices[token]


def net_position(state: BlockchainState, user: AddressId) -> Fraction:
    return credit_value(state, user) - debt_value(state, user)


def collateralization(state: BlockchainState, user: AddressId) -> Health:
    debt = debt_value(state, user)
    if debt <= 0:
        return INF
    return credit_value(state, user) / debt


def health_factor(params: ProtocolParams, state: BlockchainState, user: AddressId) -> Health:
    coll = collateralization(state, user)
    if coll is INF:
        return INF
    return coll * params.liq_threshold


def utilization(pool: BlockchainState | LendingPoolState, token: TokenId) -> Fraction:
    pool = _pool_of(pool)
    return utilization_of(pool.reserve(token), pool.debt_supply(token))


def interest_rate(params: ProtocolParams, pool: BlockchainState | LendingPoolState, token: TokenId) -> Fraction:
    pool = _pool_of(pool)
    rate = q(params.rate_fn(pool.reserve(token), pool.credit_supply(token), pool.debt_supply(token)))
    if rate <= 0:
        raise ValueError(f"interest rate for {token} must be > 0, got {rate}")
    return rate


def total_net_worth(state: BlockchainState, users: Iterable[AddressId] | None = None) -> Fraction:
    users = state.users() if users is None else users
    return sum((net_worth(state, u) for u in users), ZERO)


# --------------------------------------------------------------------------
# Display
# --------------------------------------------------------------------------


def fmt_exact(x: Fraction | _Infinity) -> str:
    """Exact text form: a finite decimal when one exists, else ``num/den``."""
    if x is INF:
        return "+inf"
    x = q(x)
    den = x.denominator
    twos = fives = 0
    while den % 2 == 0:
        den //= 2
        twos += 1
    while den % 5 == 0:
        den //= 5
        fives += 1
    if den != 1:
        return f"{x.numerator}/{x.denominator}"
    places = max(twos, fives)
    if places == 0:
        return str(x.numerator)
    scaled = x * 10**places
    sign = "-" if scaled < 0 else ""
    digits = str(abs(scaled.numerator)).rjust(places + 1, "0")
    return f"{sign}{digits[:-places]}.{digits[-places:]}".rstrip("0").rstrip(".")


def fmt_ratio(x: Fraction | _Infinity) -> str:
    """Machine form used in JSON output: always ``num/den``."""
    if x is INF:
        return "inf"
    x = q(x)
    return f"{x.numerator}/{x.denominator}"


def truncate(x: Fraction, places: int) -> Fraction:
    """Drop digits beyond ``places`` decimals (toward zero)."""
    scale = 10**places
    n = abs(x.numerator) * scale // x.denominator
    return Fraction(-n if x < 0 else n, scale)


def fmt_brief(x: Fraction | _Infinity, digits: int = 30) -> str:
    """Exact form for modest rationals, else a 6-decimal truncation marked ``~``."""
    if x is INF:
        return "+inf"
    x = q(x)
    if x.denominator.bit_length() < digits * 10 // 3 and x.numerator.bit_length() < digits * 10 // 3:
        return fmt_exact(x)
    return "~" + fmt_display(x, 6)


def fmt_display(x: Fraction | _Infinity, places: int = 2) -> str:
    """Human display, truncated toward zero with trailing zeros stripped."""
    if x is INF:
        return "+inf"
    return fmt_exact(truncate(q(x), places))
