"""Exception hierarchy shared by every layer of the model."""

from __future__ import annotations


class LendingModelError(Exception):
    """Base class for all errors raised by :mod:`lpmodel`."""


class StepError(LendingModelError):
    """A transaction is not enabled in the given state.

    ``premise`` names the rule premise that failed, so callers can report
    *why* a step was rejected without parsing the message.
    """

    premise = "step"

    def __init__(self, message: str = "") -> None:
        super().__init__(message or self.premise)


class InsufficientWallet(StepError):
    premise = "wallet balance covers the amount"


class InsufficientReserves(StepError):
    premise = "pool reserves cover the amount"


class InsufficientDebt(StepError):
    premise = "debit balance covers the amount"


class InsufficientCredits(StepError):
    premise = "credit balance covers the amount"


class HealthTooLowAfter(StepError):
    premise = "post-state health factor >= 1"


class BorrowerHealthy(StepError):
    premise = "borrower health factor < 1"


class OverLiquidation(StepError):
    premise = "post-state borrower health factor <= 1"


class NonPositivePrice(StepError, ValueError):
    premise = "price strictly positive"


class MissingPrice(StepError, KeyError):
    premise = "token has a price"

    def __str__(self) -> str:  # KeyError would repr() the message
        return self.args[0] if self.args else self.premise


class MalformedTransaction(StepError, ValueError):
    premise = "transaction well-formed"


class DisabledTransaction(LendingModelError):
    """Raised by analysis helpers whose precondition is an enabled transaction."""

    def __init__(self, tx: object, cause: StepError) -> None:
        super().__init__(f"{tx} is not enabled: {cause}")
        self.tx = tx
        self.cause = cause


class HypothesisViolated(LendingModelError, ValueError):
    """An attack or strategy constructor was called outside its hypotheses."""


class NoFeasibleDelta(LendingModelError):
    """The price-manipulation search found no admissible offset."""


class UserHealthy(LendingModelError):
    """The user is not liquidatable, so there is nothing to avoid."""


class InsufficientFunds(LendingModelError):
    """A computed strategy amount exceeds what the user can actually pay."""


class UnsupportedRateFn(LendingModelError, TypeError):
    """The operation needs the linear utilization interest model."""


class InvalidConfig(LendingModelError, ValueError):
    pass


class ParseError(LendingModelError, ValueError):
    """Scenario text could not be parsed."""

    def __init__(self, message: str, line: int, column: int = 1, expected: str | None = None) -> None:
        where = f"line {line}, column {column}"
        text = f"{where}: {message}"
        if expected:
            text += f" (expected {expected})"
        super().__init__(text)
        self.line = line
        self.column = column
        self.expected = expected
