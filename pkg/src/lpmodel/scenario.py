"""Line-oriented scenario files and human/JSON state reports.

A scenario fixes the protocol parameters, the initial wallets and prices, a
trace, and optional expectations about intermediate states::

    param Tliq 2/3
    param Rliq 1.1
    param rate linear 0 0.12
    wallet A 100:T0
    price T0 1
    A:dep(50:T0)
    expect step 1 credit A T0 50
    expect step 3 health B 10/9 ≈ 1.11

``#`` starts a comment.  Amounts are integers, finite decimals or ``n/d``.
"""

from __future__ import annotations

import re
from collections.abc import Sequence
from dataclasses import dataclass
from fractions import Fraction

from .core import (
    INF,
    BlockchainState,
    Health,
    LinearUtilization,
    ProtocolParams,
    exchange_rate,
    fmt_display,
    fmt_exact,
    fmt_ratio,
    health_factor,
    net_worth,
    truncate,
)
from .errors import LendingModelError, ParseError
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
    apply_trace,
    initial_state,
)

# What each expectation kind needs after the step number: names of the
# operands, read in order.
EXPECT_KINDS = {
    "health": ("user",),
    "networth": ("user",),
    "wallet": ("user", "token"),
    "credit": ("user", "token"),
    "debit": ("user", "token"),
    "reserve": ("token",),
    "xrate": ("token",),
    "price": ("token",),
}


@dataclass(frozen=True)
class Expectation:
    step: int
    kind: str
    operands: tuple[str, ...]
    value: Health
    approx: str | None = None


@dataclass(frozen=True)
class Scenario:
    liq_threshold: Fraction
    liq_reward: Fraction
    alpha: Fraction
    beta: Fraction
    wallets: tuple[tuple[str, str, Fraction], ...] = ()
    prices: tuple[tuple[str, Fraction], ...] = ()
    trace: tuple[Transaction, ...] = ()
    expects: tuple[Expectation, ...] = ()

    @property
    def params(self) -> ProtocolParams:
        return ProtocolParams(self.liq_threshold, self.liq_reward, LinearUtilization(self.alpha, self.beta))

    def initial_state(self) -> BlockchainState:
        return initial_state(self.wallets, dict(self.prices))


# --------------------------------------------------------------------------
# Parsing
# --------------------------------------------------------------------------

_NAME = r"[A-Za-z_][A-Za-z0-9_]*"
_NUM = r"[0-9]+(?:\.[0-9]+)?(?:/[0-9]+)?"
_TX_PATTERNS = [
    (re.compile(rf"({_NAME}):(dep|bor|rep|rdm)\(({_NUM}):({_NAME})\)"), "simple"),
    (re.compile(rf"({_NAME}):liq\(({_NAME}),({_NUM}):({_NAME}),ĉ?({_NAME})\)"), "liq"),
    (re.compile(rf"({_NAME}):swp\(({_NUM}):({_NAME}),({_NAME})\)"), "swp"),
    (re.compile(rf"px\(([+-]{_NUM}):({_NAME})\)"), "px"),
    (re.compile(r"int"), "int"),
]
_SIMPLE = {"dep": Deposit, "bor": Borrow, "rep": Repay, "rdm": Redeem}


def parse_number(text: str, line: int = 0, column: int = 1) -> Fraction:
    if not re.fullmatch(rf"[+-]?{_NUM}", text):
        raise ParseError(f"not a number: {text!r}", line, column, "integer, decimal or n/d")
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise ParseError(f"bad number {text!r}: {exc}", line, column) from None


def parse_transaction(text: str, line: int = 0) -> Transaction:
    text = "".join(text.split())
    for pattern, shape in _TX_PATTERNS:
        m = pattern.fullmatch(text)
        if not m:
            continue
        g = m.groups()
        try:
            if shape == "simple":
                return _SIMPLE[g[1]](g[0], Fraction(g[2]), g[3])
            if shape == "liq":
                return Liquidate(g[0], g[1], Fraction(g[2]), g[3], g[4])
            if shape == "swp":
                return Swap(g[0], Fraction(g[1]), g[2], g[3])
            if shape == "px":
                return PriceUpdate(Fraction(g[0]), g[1])
            return AccrueInterest()
        except (LendingModelError, ValueError, ZeroDivisionError) as exc:
            raise ParseError(str(exc), line) from None
    raise ParseError(f"unrecognised line {text!r}", line, 1, "param, wallet, price, expect or a transaction")


def _split(raw: str) -> list[tuple[int, str]]:
    """Whitespace-separated words of ``raw`` with their 1-based columns."""
    return [(m.start() + 1, m.group()) for m in re.finditer(r"\S+", raw)]


def _parse_expect(words: list[tuple[int, str]], lineno: int) -> Expectation:
    def need(i: int, what: str) -> tuple[int, str]:
        if i >= len(words):
            col = words[-1][0] + len(words[-1][1]) if words else 1
            raise ParseError("line ends early", lineno, col, what)
        return words[i]

    col, word = need(1, "'step'")
    if word != "step":
        raise ParseError(f"found {word!r}", lineno, col, "'step'")
    col, word = need(2, "step number")
    if not word.isdigit():
        raise ParseError(f"found {word!r}", lineno, col, "step number")
    step = int(word)
    col, kind = need(3, "expectation kind")
    if kind not in EXPECT_KINDS:
        raise ParseError(f"unknown expectation {kind!r}", lineno, col, " | ".join(EXPECT_KINDS))
    names = EXPECT_KINDS[kind]
    operands = tuple(need(4 + i, n)[1] for i, n in enumerate(names))
    i = 4 + len(names)
    col, word = need(i, "expected value")
    value: Health = INF if word in ("inf", "+inf") else parse_number(word, lineno, col)
    approx = None
    if i + 1 < len(words):
        col, mark = words[i + 1]
        if mark not in ("≈", "~"):
            raise ParseError(f"found {mark!r}", lineno, col, "'≈' or end of line")
        col, approx = need(i + 2, "displayed value")
        parse_number(approx, lineno, col)
        if i + 3 < len(words):
            raise ParseError("trailing text", lineno, words[i + 3][0], "end of line")
    return Expectation(step, kind, operands, value, approx)


def parse_scenario(text: str) -> Scenario:
    params: dict[str, Fraction] = {}
    wallets: list[tuple[str, str, Fraction]] = []
    prices: list[tuple[str, Fraction]] = []
    trace: list[Transaction] = []
    expects: list[Expectation] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        raw = raw.split("#", 1)[0]
        words = _split(raw)
        if not words:
            continue
        head = words[0][1]
        if head == "param":
            _parse_param(words, lineno, params)
        elif head == "wallet":
            if len(words) < 3:
                raise ParseError("wallet needs a user and holdings", lineno, 1, "wallet USER AMOUNT:TOKEN ...")
            user = words[1][1]
            for col, item in words[2:]:
                m = re.fullmatch(rf"({_NUM}):({_NAME})", item)
                if not m:
                    raise ParseError(f"bad holding {item!r}", lineno, col, "AMOUNT:TOKEN")
                wallets.append((user, m.group(2), parse_number(m.group(1), lineno, col)))
        elif head == "price":
            if len(words) != 3:
                raise ParseError("price needs a token and a value", lineno, 1, "price TOKEN VALUE")
            prices.append((words[1][1], parse_number(words[2][1], lineno, words[2][0])))
        elif head == "expect":
            expects.append(_parse_expect(words, lineno))
        else:
            trace.append(parse_transaction(raw, lineno))
    missing = [k for k in ("Tliq", "Rliq", "alpha", "beta") if k not in params]
    if missing:
        raise ParseError(f"missing parameter(s) {', '.join(missing)}", len(text.splitlines()) + 1, 1, "param lines")
    try:
        ProtocolParams(params["Tliq"], params["Rliq"], LinearUtilization(params["alpha"], params["beta"]))
    except ValueError as exc:
        raise ParseError(str(exc), 1) from None
    return Scenario(
        params["Tliq"], params["Rliq"], params["alpha"], params["beta"],
        tuple(wallets), tuple(prices), tuple(trace), tuple(expects),
    )


def _parse_param(words, lineno: int, params: dict) -> None:
    if len(words) < 3:
        raise ParseError("incomplete param line", lineno, 1, "param Tliq|Rliq|rate ...")
    col, name = words[1]
    if name in ("Tliq", "Rliq"):
        if len(words) != 3:
            raise ParseError("expected a single value", lineno, words[-1][0])
        params[name] = parse_number(words[2][1], lineno, words[2][0])
    elif name == "rate":
        if len(words) != 5 or words[2][1] != "linear":
            raise ParseError("bad rate line", lineno, words[2][0], "param rate linear ALPHA BETA")
        params["alpha"] = parse_number(words[3][1], lineno, words[3][0])
        params["beta"] = parse_number(words[4][1], lineno, words[4][0])
    else:
        raise ParseError(f"unknown parameter {name!r}", lineno, col, "Tliq, Rliq or rate")


def render_scenario(s: Scenario) -> str:
    """Canonical text; ``parse_scenario(render_scenario(s)) == s``."""
    out = [
        f"param Tliq {fmt_exact(s.liq_threshold)}",
        f"param Rliq {fmt_exact(s.liq_reward)}",
        f"param rate linear {fmt_exact(s.alpha)} {fmt_exact(s.beta)}",
    ]
    out += [f"wallet {u} {fmt_exact(v)}:{t}" for u, t, v in s.wallets]
    out += [f"price {t} {fmt_exact(p)}" for t, p in s.prices]
    out += [str(tx) for tx in s.trace]
    for e in s.expects:
        line = f"expect step {e.step} {e.kind} {' '.join(e.operands)} {fmt_exact(e.value)}".replace("+inf", "inf")
        if e.approx is not None:
            line += f" ≈ {e.approx}"
        out.append(line)
    return "\n".join(out) + "\n"


# --------------------------------------------------------------------------
# Expectations
# --------------------------------------------------------------------------


def observe(params: ProtocolParams, state: BlockchainState, kind: str, operands: Sequence[str]) -> Health:
    pool = state.pool
    if kind == "health":
        return health_factor(params, state, operands[0])
    if kind == "networth":
        return net_worth(state, operands[0])
    if kind == "wallet":
        return state.wallet.balance(operands[1], operands[0])
    if kind == "credit":
        return pool.credit(operands[1], operands[0])
    if kind == "debit":
        return pool.debit(operands[1], operands[0])
    if kind == "reserve":
        return pool.reserve(operands[0])
    if kind == "xrate":
        return exchange_rate(pool, operands[0])
    if kind == "price":
        return state.prices[operands[0]]
    raise ValueError(kind)


def _decimals(text: str) -> int:
    return len(text.split(".", 1)[1]) if "." in text else 0


@dataclass(frozen=True)
class ExpectationResult:
    expectation: Expectation
    actual: Health | None
    exact_ok: bool
    display_ok: bool | None

    @property
    def ok(self) -> bool:
        return self.exact_ok and self.display_ok is not False


def check_expectations(s: Scenario, states: Sequence[BlockchainState] | None = None) -> list[ExpectationResult]:
    """Compare each expectation with the executed trace.

    The exact value must match exactly.  An ``≈`` column must equal the actual
    value truncated to the same number of decimals.
    """
    params = s.params
    if states is None:
        states = (s.initial_state(),) + apply_trace(params, s.initial_state(), s.trace).states
    results = []
    for e in s.expects:
        if e.step >= len(states):
            results.append(ExpectationResult(e, None, False, None))
            continue
        actual = observe(params, states[e.step], e.kind, e.operands)
        exact_ok = actual == e.value
        display_ok = None
        if e.approx is not None:
            if actual is INF:
                display_ok = False
            else:
                display_ok = truncate(actual, _decimals(e.approx)) == Fraction(e.approx)
        results.append(ExpectationResult(e, actual, exact_ok, display_ok))
    return results


# --------------------------------------------------------------------------
# State reports
# --------------------------------------------------------------------------


def _num(x: Health, precision: int, exact: bool) -> str:
    return fmt_exact(x) if exact else fmt_display(x, precision)


def render_state_report(params: ProtocolParams, state: BlockchainState, precision: int = 2, exact: bool = False) -> str:
    """Per-user holdings with health and net worth, then pool and prices."""
    users = sorted(state.users())
    tokens = sorted(state.tokens())
    lines = [f"state: {len(users)} users, {len(tokens)} tokens"]
    pool, wallet = state.pool, state.wallet

    def amt(v, label):
        return f"{_num(v, precision, exact)}:{label}"

    for u in users:
        items = [amt(wallet.balance(t, u), t) for t in tokens if wallet.balance(t, u)]
        items += [amt(pool.credit(t, u), "ĉ" + t) for t in tokens if pool.credit(t, u)]
        items += [amt(pool.debit(t, u), "δ" + t) for t in tokens if pool.debit(t, u)]
        h = _num(health_factor(params, state, u), precision, exact)
        w = _num(net_worth(state, u), precision, exact)
        lines.append(f"{u}: {', '.join(items) or '-'} | H({u})={h} | W({u})={w}")
    if not pool.is_empty():
        pool_tokens = sorted(pool.tokens())
        reserves = ", ".join(amt(pool.reserve(t), t) for t in pool_tokens)
        rates = ", ".join(f"X({t})={_num(exchange_rate(pool, t), precision, exact)}" for t in pool_tokens)
        lines.append(f"LP: {reserves} | {rates}")
    if tokens:
        lines.append("prices: " + ", ".join(f"{t}={_num(state.prices[t], precision, exact)}" for t in tokens))
    return "\n".join(lines)


def state_to_json(params: ProtocolParams, state: BlockchainState) -> dict:
    """Exact machine form: every rational as a ``"num/den"`` string."""
    pool, wallet = state.pool, state.wallet
    tokens = sorted(state.tokens())
    users = {}
    for u in sorted(state.users()):
        users[u] = {
            "wallet": {t: fmt_ratio(wallet.balance(t, u)) for t in tokens if wallet.balance(t, u)},
            "credit": {t: fmt_ratio(pool.credit(t, u)) for t in tokens if pool.credit(t, u)},
            "debit": {t: fmt_ratio(pool.debit(t, u)) for t in tokens if pool.debit(t, u)},
            "health": fmt_ratio(health_factor(params, state, u)),
            "net_worth": fmt_ratio(net_worth(state, u)),
        }
    return {
        "users": users,
        "reserves": {t: fmt_ratio(pool.reserve(t)) for t in sorted(pool.tokens())},
        "xrate": {t: fmt_ratio(exchange_rate(pool, t)) for t in sorted(pool.tokens())},
        "prices": {t: fmt_ratio(state.prices[t]) for t in tokens},
    }


__all__ = [
    "Expectation",
    "ExpectationResult",
    "Scenario",
    "parse_scenario",
    "parse_transaction",
    "render_scenario",
    "check_expectations",
    "observe",
    "render_state_report",
    "state_to_json",
]
