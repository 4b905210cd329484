import json
import re
from pathlib import Path
from typing import Dict, Optional

import yaml

from edge_rca.clients.model_client import ModelClient
from edge_rca.prompts import CASES_MARKER, EVIDENCE_MARKER, LOG_MARKER
from edge_rca.utils.errors import ClientUnavailable
from edge_rca.utils.specs import ModelRequest

_LOG_LINE = re.compile(rf"^{re.escape(LOG_MARKER)}\s?(.*)$", re.MULTILINE)


class MockModelClient(ModelClient):
    """
    Deterministic stand-in for both model roles. The response is a pure
    function of the request hash:

      - a fixture map entry {request_hash: text} wins when present;
      - L3_parse requests echo the log line found after the `LOG:` marker;
      - synthesis requests pick the top evidence candidate and the top
        retrieved case action.

    Never touches the network.
    """
    provider_tag = "mock"

    def __init__(self, fixtures: Optional[Dict[str, str]] = None, available: bool = True):
        super().__init__()
        self.fixtures = dict(fixtures or {})
        self.available = available

    @classmethod
    def from_file(cls, path: str) -> "MockModelClient":
        raw = Path(path).read_text(encoding="utf-8")
        data = yaml.safe_load(raw) or {}
        return cls(fixtures={str(k): str(v) for k, v in data.items()})

    def _complete(self, req: ModelRequest) -> str:
        if not self.available:
            raise ClientUnavailable("mock client configured as offline")
        h = req.request_hash()
        if h in self.fixtures:
            return self.fixtures[h]
        prompt = "\n".join(m.content for m in req.role_prompts if m.role == "user")
        if req.purpose == "L3_parse":
            found = _LOG_LINE.findall(prompt)
            return found[-1] if found else prompt
        return _default_synthesis(prompt)


def _json_after(prompt: str, marker: str):
    at = prompt.find(marker)
    if at < 0:
        return None
    try:
        value, _ = json.JSONDecoder().raw_decode(prompt[at + len(marker):].lstrip())
    except json.JSONDecodeError:
        return None
    return value


def _default_synthesis(prompt: str) -> str:
    evidence = _json_after(prompt, EVIDENCE_MARKER) or {}
    cases = _json_after(prompt, CASES_MARKER) or []
    candidates = evidence.get("candidates") or []
    top = candidates[0] if candidates else {}
    root_id = top.get("template_id", "")
    # Same shape a well-behaved model would give us
    if cases:
        cause, action = cases[0].get("root_cause", ""), cases[0].get("repair_action", "")
    else:
        cause, action = top.get("text", ""), "escalate to operator"
    return json.dumps({"root_template_id": root_id, "root_cause": cause, "repair_action": action},
                      sort_keys=True)
