"""Exceptions that the CLI maps onto its exit-code contract."""

from __future__ import annotations


class EmptyInputError(ValueError):
    """No usable input was provided (CLI exit code 2)."""


class UnresolvedReferenceError(ValueError):
    """A referenced id could not be resolved (CLI exit code 3)."""

    def __init__(self, message: str, missing: list[str] | None = None):
        super().__init__(message)
        self.missing = list(missing or [])
