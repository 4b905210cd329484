import json
import logging
import threading
from pathlib import Path
from typing import Dict

from edge_rca.utils.specs import ModelRequest

logger = logging.getLogger(__name__)

_write_lock = threading.Lock()


def transcript_record(req: ModelRequest, response_text: str, provider_tag: str) -> Dict:
    return {
        "request_hash": req.request_hash(),
        "purpose": req.purpose,
        "messages": req.messages(),
        "response_text": response_text,
        "provider_tag": provider_tag,
    }


def append_transcript(path: str, record: Dict) -> None:
    line = json.dumps(record, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with _write_lock, p.open("a", encoding="utf-8", newline="\n") as fh:
        fh.write(line + "\n")


def load_transcripts(path: str) -> Dict[str, Dict]:
    """request_hash -> record. Later records for the same hash win."""
    records: Dict[str, Dict] = {}
    p = Path(path)
    if not p.is_file():
        return records
    for lineno, line in enumerate(p.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            records[rec["request_hash"]] = rec
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            logger.warning("skipping transcript line %s:%d (%s)", path, lineno, e)
    return records
