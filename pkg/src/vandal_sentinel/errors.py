"""Exception hierarchy shared across the package.

Every error that crosses a module boundary derives from VandalSentinelError
so the CLI can map it onto its exit-code contract (2 config, 3 data,
4 upstream).
"""


class VandalSentinelError(Exception):
    """Base class for all package errors."""


class ConfigError(VandalSentinelError):
    """Bad configuration: unknown flags, invalid parameter combinations."""


class DataError(VandalSentinelError):
    """Bad data: malformed inputs, schema violations, corrupt artifacts."""


class UpstreamError(VandalSentinelError):
    """A remote source failed: transport errors, missing revisions."""


# -- entity model ------------------------------------------------------------

class MalformedJson(DataError):
    """Input is not parseable JSON. Carries a path to the offending node."""

    def __init__(self, message: str, path: str = "$"):
        super().__init__(f"{message} (at {path})")
        self.path = path


class SchemaViolation(DataError):
    """JSON parsed but violates a schema. Carries a node path when known."""

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{message} (at {path})" if path else message)
        self.path = path


# -- diff / features ---------------------------------------------------------

class ItemMismatch(DataError):
    """Parent and child revisions belong to different items."""


class SchemaMismatch(DataError):
    """Feature schema version of one artifact does not match another."""


# -- ingestion ---------------------------------------------------------------

class NotFound(UpstreamError):
    """Revision or user does not exist (deleted or suppressed)."""


class Transport(UpstreamError):
    """Network-level failure after retries were exhausted."""


class Malformed(UpstreamError):
    """Upstream response violated the expected API shape."""


class CheckpointInvalid(DataError):
    """A stream checkpoint token could not be parsed or applied."""


# -- corpus ------------------------------------------------------------------

class IncompleteHistory(DataError):
    """Item history is truncated inside the revert window."""


class AlreadySplit(DataError):
    """split_train_test called on records that already carry a split."""


# -- forest ------------------------------------------------------------------

class SingleClass(DataError):
    """Training input contains only one label value."""


class EmptyInput(DataError):
    """Training input is empty."""


# -- metrics -----------------------------------------------------------------

class OneClass(DataError):
    """A scored set must contain at least one positive and one negative."""


class MissingReport(DataError):
    """Report rendering requested but no evaluation report exists."""


class InvalidSpec(ConfigError):
    """Synthetic corpus specification is out of range."""


class MissingCurves(DataError):
    """Threshold exploration requested but no curve file was exported."""


# -- service -----------------------------------------------------------------

class RevisionNotFound(UpstreamError):
    """Requested revision does not exist at the configured source."""


class UpstreamUnavailable(UpstreamError):
    """The revision source is unreachable."""


class ServiceUnreachable(UpstreamError):
    """The scoring service did not answer (replay harness)."""


class ModelUnavailable(VandalSentinelError):
    """No model is loaded into the scoring service."""


class BatchTooLarge(ConfigError):
    """Batch request exceeds the configured maximum."""
