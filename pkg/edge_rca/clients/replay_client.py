from pathlib import Path

from edge_rca.clients.model_client import ModelClient
from edge_rca.clients.transcripts import load_transcripts
from edge_rca.utils.errors import ClientUnavailable, ReplayMiss
from edge_rca.utils.specs import ModelRequest


class ReplayModelClient(ModelClient):
    """Serves recorded responses keyed by request hash. No network."""
    provider_tag = "replay"

    def __init__(self, transcript_path: str):
        super().__init__()
        if not Path(transcript_path).is_file():
            raise ClientUnavailable(f"replay transcript {transcript_path} does not exist")
        self.transcript_path = transcript_path
        self.records = load_transcripts(transcript_path)

    def _complete(self, req: ModelRequest) -> str:
        h = req.request_hash()
        rec = self.records.get(h)
        if rec is None:
            raise ReplayMiss(f"no recorded response for request {h[:12]} in {self.transcript_path}")
        return rec["response_text"]
