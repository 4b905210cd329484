import threading
import time
from abc import ABC, abstractmethod
from typing import Optional

from edge_rca.utils.specs import ModelRequest, ModelResponse


class ModelClient(ABC):
    """
    Abstract interface to a chat model. The local fallback parser and the
    synthesis model share it and differ only in configuration.
    """
    provider_tag = "abstract"

    def __init__(self):
        self._lock = threading.Lock()
        self.calls = 0
        self.failures = 0

    def complete(self, req: ModelRequest) -> ModelResponse:
        """
        Runs one request through the backend.

        Args:
            req: the request; its hash keys fixtures and transcripts.

        Returns:
            The response text (verbatim), wall-clock latency and provider tag.

        Raises:
            BackendError subclasses; callers own the failover.
        """
        with self._lock:
            self.calls += 1
        start = time.perf_counter()
        try:
            text = self._complete(req)
        except Exception:
            with self._lock:
                self.failures += 1
            raise
        latency_ms = (time.perf_counter() - start) * 1000.0
        return ModelResponse(text=text, latency_ms=latency_ms, provider_tag=self.provider_tag)

    @abstractmethod
    def _complete(self, req: ModelRequest) -> str:
        pass

    def reset_counters(self) -> None:
        with self._lock:
            self.calls = 0
            self.failures = 0

    def close(self) -> None:
        pass


def first_line(text: Optional[str]) -> str:
    for line in (text or "").splitlines():
        if line.strip():
            return line.strip()
    return ""
