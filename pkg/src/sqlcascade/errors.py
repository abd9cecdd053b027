"""Exception types shared across the pipeline."""


class SqlCascadeError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(SqlCascadeError):
    """Invalid or incomplete run configuration."""


class MissingDatabaseFile(SqlCascadeError):
    """The bundle does not contain the expected SQLite file."""


class MalformedDescriptionFile(SqlCascadeError):
    """A database_description CSV is structurally broken or names an unknown column."""

    def __init__(self, message: str, file: str = "", row: int = 0):
        super().__init__(message)
        self.file = file
        self.row = row


class DuplicateTableName(SqlCascadeError):
    """Two tables in a catalog share a name."""


class UnknownColumn(SqlCascadeError):
    """A (table, column) reference does not resolve in the catalog."""


class UnknownDbId(SqlCascadeError):
    """A benchmark item references a database bundle that is not present."""


class DatabaseUnreadable(SqlCascadeError):
    """The SQLite file exists but cannot be opened or scanned."""


class BackendUnavailable(SqlCascadeError):
    """The chat-completion backend failed after the configured retries."""


class ReplayMiss(SqlCascadeError):
    """Replay mode saw a request whose fingerprint was never recorded."""


class ReplayExhausted(SqlCascadeError):
    """Replay mode consumed every recorded response for a fingerprint."""


class UnparseableSummary(SqlCascadeError):
    """Table summarization produced no parseable JSON even after a repair retry."""


class UnparseableLinks(SqlCascadeError):
    """Entity linking produced no usable JSON even after a repair retry."""


class NoSqlFound(SqlCascadeError):
    """A generator or refiner response contained no extractable SQL."""


class MalformedTrace(SqlCascadeError):
    """A trace file does not contain a readable pipeline trace."""
