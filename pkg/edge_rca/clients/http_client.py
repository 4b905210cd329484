import logging
import os
import threading
import time
from typing import Optional

import requests

from edge_rca.clients.model_client import ModelClient
from edge_rca.clients.transcripts import append_transcript, transcript_record
from edge_rca.utils.config import ClientConfig
from edge_rca.utils.errors import ClientUnavailable, HttpStatusError, ModelTimeout, UnparseableResponse
from edge_rca.utils.specs import ModelRequest

logger = logging.getLogger(__name__)


class HttpModelClient(ModelClient):
    """
    Generic chat-completions client (OpenAI-compatible wire shape).
    Retries timeouts, connection errors and 5xx with linear backoff;
    4xx fails immediately. In record mode every successful call is
    appended to a JSONL transcript that ReplayModelClient can serve.
    """
    provider_tag = "http"

    def __init__(self, cfg: ClientConfig, session: Optional[requests.Session] = None):
        super().__init__()
        self.cfg = cfg
        self.session = session or requests.Session()
        self.provider_tag = f"http:{cfg.model}"
        self._rate_lock = threading.Lock()
        self._last_call = 0.0

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.cfg.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _wait_turn(self) -> None:
        if self.cfg.min_interval_s <= 0:
            return
        with self._rate_lock:
            wait = self._last_call + self.cfg.min_interval_s - time.monotonic()
            if wait > 0:
                time.sleep(wait)
            self._last_call = time.monotonic()

    def _complete(self, req: ModelRequest) -> str:
        payload = {
            "model": self.cfg.model,
            "messages": req.messages(),
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }
        last_error: Exception = ClientUnavailable("no attempt made")
        for attempt in range(self.cfg.retries + 1):
            if attempt:
                time.sleep(self.cfg.backoff_s * attempt)
            self._wait_turn()
            try:
                resp = self.session.post(self.cfg.endpoint, json=payload, headers=self._headers(),
                                         timeout=self.cfg.timeout_s)
            except requests.Timeout:
                last_error = ModelTimeout(f"{self.cfg.endpoint} timed out after {self.cfg.timeout_s}s")
                logger.warning("attempt %d: %s", attempt + 1, last_error)
                continue
            except requests.ConnectionError as e:
                last_error = ClientUnavailable(f"cannot reach {self.cfg.endpoint}: {e}")
                logger.warning("attempt %d: %s", attempt + 1, last_error)
                continue
            # 5xx is worth another try, 4xx is not
            if resp.status_code >= 500:
                last_error = HttpStatusError(resp.status_code, resp.text)
                logger.warning("attempt %d: %s", attempt + 1, last_error)
                continue
            if resp.status_code >= 400:
                raise HttpStatusError(resp.status_code, resp.text)
            text = _content(resp)
            # Record mode: keep the exchange for replay later
            if self.cfg.record_path:
                append_transcript(self.cfg.record_path, transcript_record(req, text, self.provider_tag))
            return text
        raise last_error

    def close(self) -> None:
        self.session.close()


def _content(resp: requests.Response) -> str:
    try:
        body = resp.json()
        content = body["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as e:
        raise UnparseableResponse(f"unexpected chat-completions body: {e}") from e
    if not isinstance(content, str):
        raise UnparseableResponse("message content is not text")
    return content
