"""Shared error types.

Every error raised by this package carries a stable ``code`` string so the
CLI can emit machine-readable diagnostics without string-matching messages.
"""

from __future__ import annotations


class ColearnError(Exception):
    """Base class for all package errors."""

    code = "ColearnError"

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self) -> dict:
        out = {"error": self.code, "message": self.message}
        if self.details:
            out["details"] = self.details
        return out


class ConfigError(ColearnError):
    """Invalid configuration. ``details['violations']`` lists every problem."""

    code = "ConfigError"


class BankFormatError(ColearnError):
    """Malformed feature-bank file or inconsistent bank contents."""

    code = "BankFormat"


class BadMagic(BankFormatError):
    code = "BadMagic"


class UnsupportedVersion(BankFormatError):
    code = "UnsupportedVersion"


class Truncated(BankFormatError):
    code = "Truncated"


class NonFiniteValues(BankFormatError):
    code = "NonFinite"


class LabelOutOfRange(BankFormatError):
    code = "LabelOutOfRange"


class ModelFormatError(ColearnError):
    """Malformed model file."""

    code = "ModelFormat"


class EmptyBatch(ColearnError):
    code = "EmptyBatch"


class NumericalBlowup(ColearnError):
    """Non-finite values appeared during training."""

    code = "NumericalBlowup"


class DegenerateLogits(ColearnError):
    """Logit matrix is (near-)constant where spread is required."""

    code = "DegenerateLogits"


class EmptyPseudolabelSet(ColearnError):
    """No sample received a pseudolabel; adaptation cannot proceed."""

    code = "EmptyPseudolabelSet"


class ConvergenceError(ColearnError):
    """Training failed to reach the requested accuracy."""

    code = "ConvergenceError"

    def __init__(self, message: str, accuracy: float, **details):
        super().__init__(message, accuracy=accuracy, **details)
        self.accuracy = accuracy
