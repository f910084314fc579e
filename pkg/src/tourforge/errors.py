"""Error hierarchy shared by every tourforge module.

Each error carries a stable machine-readable ``code`` so CLI output, HTTP
responses, and tests can match on it without parsing messages.
"""

from __future__ import annotations


class TourForgeError(Exception):
    """Base class; ``code`` identifies the failure kind."""

    code = "ERROR"

    def __init__(self, message: str = "", **details):
        super().__init__(message or self.code)
        self.message = message or self.code
        self.details = details


# --- tour-model ---

class MalformedError(TourForgeError):
    code = "MALFORMED"


class InvalidTourError(TourForgeError):
    """Document parsed but failed validation; carries the full report."""

    code = "INVALID"

    def __init__(self, message: str = "", report=None, **details):
        super().__init__(message, **details)
        self.report = list(report or [])


class UnsupportedVersionError(TourForgeError):
    code = "UNSUPPORTED_VERSION"


# --- anchor-engine ---

class AnchorRangeError(TourForgeError):
    code = "RANGE_OUT_OF_BOUNDS"


# --- genpipe ---

class EmptySelectionError(TourForgeError):
    code = "EMPTY_SELECTION"


class SelectionOutOfBoundsError(TourForgeError):
    code = "SELECTION_OUT_OF_BOUNDS"


class UnparseableOutputError(TourForgeError):
    code = "UNPARSEABLE"


class SchemaMismatchError(TourForgeError):
    """Provider output parsed as JSON but violates the expected shape.

    ``field_path`` points at the offending field (e.g. ``steps/1/choices``).
    """

    code = "SCHEMA_MISMATCH"

    def __init__(self, message: str = "", field_path: str = "", **details):
        super().__init__(message, **details)
        self.field_path = field_path


class UnknownPathError(TourForgeError):
    code = "UNKNOWN_PATH"


class ProviderUnreachableError(TourForgeError):
    code = "PROVIDER_UNREACHABLE"


class ProviderConfigError(TourForgeError):
    code = "PROVIDER_CONFIG"


class NotDraftError(TourForgeError):
    code = "NOT_DRAFT"


class ForbiddenRoleError(TourForgeError):
    code = "FORBIDDEN_ROLE"


class EditTargetMissingError(TourForgeError):
    code = "EDIT_TARGET_MISSING"


class ValidationFailedError(TourForgeError):
    code = "VALIDATION_FAILED"

    def __init__(self, message: str = "", report=None, **details):
        super().__init__(message, **details)
        self.report = list(report or [])


class NeedsEditPendingError(TourForgeError):
    code = "NEEDS_EDIT_PENDING"


# --- voice2tour ---

class NoEventsError(TourForgeError):
    code = "NO_EVENTS"


class SnapshotFileMissingError(TourForgeError):
    code = "SNAPSHOT_FILE_MISSING"


# --- store ---

class ConflictError(TourForgeError):
    code = "CONFLICT"


class NotAssignedError(TourForgeError):
    code = "NOT_ASSIGNED"


class UnknownStepError(TourForgeError):
    code = "UNKNOWN_STEP"


class UnknownEntityError(TourForgeError):
    code = "UNKNOWN_ENTITY"


class InvalidRatingError(TourForgeError):
    code = "INVALID_RATING"


# --- service ---

class MissingAnswerError(TourForgeError):
    code = "MISSING_ANSWER"


class UnknownQuestionError(TourForgeError):
    code = "UNKNOWN_QUESTION"


class InvalidCountError(TourForgeError):
    code = "INVALID_COUNT"
