"""Exception hierarchy shared across the pipeline."""

from __future__ import annotations


class AifgError(Exception):
    """Base class for all pipeline errors."""


class ConfigError(AifgError):
    """Invalid or incomplete configuration (prompt slots, gateway config)."""


# --- corpus ---------------------------------------------------------------

class DocumentError(AifgError):
    pass


class DecodeError(DocumentError):
    """Input bytes are not valid UTF-8."""


class EmptyDocumentError(DocumentError):
    """Document body is empty after decoding."""


# --- gateway --------------------------------------------------------------

class GatewayError(AifgError):
    pass


class ProviderError(GatewayError):
    """Provider/network failure; carries the attempt count."""

    def __init__(self, message: str, attempts: int = 1):
        super().__init__(f"{message} (after {attempts} attempt{'s' if attempts != 1 else ''})")
        self.attempts = attempts


class ReplayMissError(GatewayError):
    """Replay transcript has no entry for a request hash."""

    def __init__(self, request_hash: str):
        super().__init__(f"no transcript entry for request hash {request_hash}")
        self.request_hash = request_hash


class CorruptProviderError(GatewayError):
    """Provider returned inconsistent data (e.g. mixed embedding dims)."""


# --- extraction / formalization -------------------------------------------

class MalformedOutputError(AifgError):
    """Model output is not the expected JSON shape; carries the raw text."""

    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


class FormalizationFailedError(AifgError):
    """A goal's formalization failed after the automatic retry."""

    def __init__(self, goal: str, cause: Exception):
        super().__init__(f"formalization failed for goal {goal!r}: {cause}")
        self.goal = goal
        self.cause = cause


# --- schema ---------------------------------------------------------------

class TemplateError(AifgError):
    pass


class DuplicateTemplateError(TemplateError):
    """Two templates declare the same (type, subtype)."""


class PropertyValidationError(AifgError):
    """Base for the named validation failures of a raw property object."""


class UnknownTemplateError(PropertyValidationError):
    """(type, subtype) not present in the loaded template set."""


class MissingFieldError(PropertyValidationError):
    """A template-required field is absent."""


class WrongKindError(PropertyValidationError):
    """A field value does not match its declared kind."""


class UnknownFieldError(PropertyValidationError):
    """Strict mode: property carries a field its template does not declare."""


# --- dataset / harness -----------------------------------------------------

class DatasetError(AifgError):
    """Dataset load/validation failure; names the offending file and line."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        loc = ""
        if path:
            loc = f" [{path}" + (f":{line}" if line is not None else "") + "]"
        super().__init__(message + loc)
        self.path = path
        self.line = line


class ProtocolMismatchError(AifgError):
    """Metric inputs belong to different protocols."""


class DegenerateMetricError(AifgError):
    """A metric is undefined on this input (e.g. recall with no ground truth)."""


class IncompleteArbitrationError(AifgError):
    """Arbitration is missing verdicts for listed disagreements."""

    def __init__(self, pending: list[str]):
        super().__init__(f"{len(pending)} disagreement(s) without an arbiter verdict: " + "; ".join(repr(p) for p in pending))
        self.pending = pending


class ReviewError(AifgError):
    """Invalid review-service operation (unknown ids, submitted-session edits)."""


class ReviewLogError(AifgError):
    """The decisions log cannot be replayed (corrupt or inconsistent)."""
