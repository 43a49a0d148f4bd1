"""Exception hierarchy shared across the toolkit.

Every error raised on purpose derives from MikoError so the CLI can map
operational failures to exit code 1 without catching bare Exception.
"""

from __future__ import annotations


class MikoError(Exception):
    """Base class for all toolkit errors."""


# --- corpus ---------------------------------------------------------------

class UnreadableSource(MikoError):
    pass


class MalformedRecord(MikoError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


# --- prompts --------------------------------------------------------------

class EmptyText(MikoError):
    pass


class InvalidRelation(MikoError):
    pass


class TemplateError(MikoError):
    pass


# --- gateway --------------------------------------------------------------

class AuthError(MikoError):
    """Credential rejected; never retried."""


class RateLimited(MikoError):
    def __init__(self, message: str = "rate limited", retry_after: float | None = None):
        super().__init__(message)
        self.retry_after = retry_after


class BackendError(MikoError):
    def __init__(self, status: int, message: str = ""):
        super().__init__(f"backend error {status}: {message}" if message else f"backend error {status}")
        self.status = status


class BackendTimeout(MikoError):
    pass


class CacheCorrupt(MikoError):
    pass


class MissingImageFile(MikoError):
    pass


# --- distiller ------------------------------------------------------------

class ParseFailure(MikoError):
    def __init__(self, raw: str, missing: list[str] | None = None, reason: str = ""):
        detail = reason or ("missing fields: " + ", ".join(missing or []))
        super().__init__(detail)
        self.raw = raw
        self.missing = list(missing or [])
        self.reason = detail


class StageError(MikoError):
    def __init__(self, post_id: str, stage: str, cause: Exception):
        super().__init__(f"post {post_id}, stage {stage}: {cause}")
        self.post_id = post_id
        self.stage = stage
        self.cause = cause


class PartialResult(MikoError):
    """Some relations of a post failed; successful records are attached."""

    def __init__(self, post_id: str, records: list, failures: dict):
        failed = ", ".join(sorted(failures))
        super().__init__(f"post {post_id}: relations failed: {failed}")
        self.post_id = post_id
        self.records = records
        self.failures = failures


# --- kb-store ---------------------------------------------------------------

class DuplicateKey(MikoError):
    pass


# --- annotation -------------------------------------------------------------

class UnknownAnnotator(MikoError):
    pass


class InvalidValue(MikoError):
    pass


class UnknownTask(MikoError):
    pass


class NotEligible(MikoError):
    pass


class AlreadyReviewed(MikoError):
    pass


class ExclusionNotAllowed(MikoError):
    pass


class EmptyBenchmark(MikoError):
    pass


# --- eval-bench -------------------------------------------------------------

class NoOverlap(MikoError):
    pass


class LengthMismatch(MikoError):
    pass


class IncompletePost(MikoError):
    def __init__(self, post_id: str, missing: list[str]):
        super().__init__(f"post {post_id} missing: {', '.join(missing)}")
        self.post_id = post_id
        self.missing = list(missing)


class MissingArtifact(MikoError):
    def __init__(self, post_id: str, kind: str):
        super().__init__(f"post {post_id} lacks {kind}")
        self.post_id = post_id
        self.kind = kind
