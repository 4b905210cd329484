"""Exception hierarchy shared by every stage. Each family maps to a CLI exit code."""


class EdgeRcaError(Exception):
    exit_code = 2


# --- usage (1) ---

class UsageError(EdgeRcaError):
    exit_code = 1


class ConfigError(UsageError):
    pass


# --- data (2) ---

class DataError(EdgeRcaError):
    exit_code = 2


class EmptyTextError(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class ZeroVectorError(DataError):
    pass


class LengthMismatch(DataError):
    pass


class InsufficientWindows(DataError):
    pass


class MissingDirectory(DataError):
    pass


class SchemaVersionMismatch(DataError):
    pass


class EmptyKnowledgeBase(DataError):
    pass


class UnknownEntry(DataError):
    pass


# --- budget (3) ---

class BudgetExceeded(EdgeRcaError):
    exit_code = 3

    def __init__(self, message: str, peak_rss_mb: float = 0.0):
        super().__init__(message)
        self.peak_rss_mb = peak_rss_mb
        # reports of the cells finished before the abort
        self.partial: list = []


# --- model backend (4) ---

class BackendError(EdgeRcaError):
    exit_code = 4


class ClientUnavailable(BackendError):
    pass


class ReplayMiss(BackendError):
    pass


class ModelTimeout(BackendError):
    pass


class HttpStatusError(BackendError):
    def __init__(self, status: int, body: str = ""):
        super().__init__(f"HTTP {status}: {body[:200]}")
        self.status = status


class UnparseableResponse(BackendError):
    pass
