import json
import logging
import re
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Tuple

import pandas as pd
import yaml
from pydantic import BaseModel, Field

from edge_rca.utils.errors import DataError
from edge_rca.utils.specs import RawLog, StructuredEvent

logger = logging.getLogger(__name__)


def frame_lines(lines: Iterable[str], continuation: Optional[str] = None) -> Iterator[str]:
    """
    Join continuation lines (stack frames, wrapped messages) onto the entry
    they follow. Blank lines are dropped.
    """
    cont = re.compile(continuation) if continuation else None
    current: Optional[str] = None
    for line in lines:
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        if cont is not None and current is not None and cont.match(line):
            current = f"{current} {line.strip()}"
            continue
        if current is not None:
            yield current
        current = line
    if current is not None:
        yield current


def read_raw_logs(path: str, source_id: Optional[str] = None,
                  continuation: Optional[str] = None) -> List[RawLog]:
    """One RawLog per (framed) entry of a plain-text log file."""
    p = Path(path)
    if not p.is_file():
        raise DataError(f"input file {path} not found")
    sid = source_id or p.stem
    with p.open("r", encoding="utf-8", errors="replace") as fh:
        return [RawLog(line=entry, source_id=sid, seq=i)
                for i, entry in enumerate(frame_lines(fh, continuation))]


def load_structured_csv(path: str, limit: Optional[int] = None) -> Tuple[List[str], List[str]]:
    """
    Loghub `*_structured.csv`: returns (raw contents, ground-truth templates).
    When a Date/Time column pair exists it is prefixed to the content so the
    timestamp rules can see it.
    """
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, nrows=limit)
    except FileNotFoundError as e:
        raise DataError(f"structured log file {path} not found") from e
    missing = {"Content", "EventTemplate"} - set(df.columns)
    if missing:
        raise DataError(f"{path} lacks columns {sorted(missing)}")
    content = df["Content"].astype(str)
    if {"Date", "Time"} <= set(df.columns):
        content = df["Date"].astype(str) + " " + df["Time"].astype(str) + " " + content
    return content.tolist(), df["EventTemplate"].astype(str).tolist()


class DatasetEntry(BaseModel):
    name: str
    # None -> eval.profile
    profile: Optional[str] = None
    # raw log file, or a Loghub structured CSV carrying ground-truth templates
    raw: Optional[str] = None
    structured: Optional[str] = None
    limit: Optional[int] = None


class DatasetManifest(BaseModel):
    datasets: List[DatasetEntry] = Field(default_factory=list)

    def get(self, name: str) -> Optional[DatasetEntry]:
        for d in self.datasets:
            if d.name == name:
                return d
        return None


def load_manifest(path: str) -> DatasetManifest:
    p = Path(path)
    if not p.is_file():
        raise DataError(f"dataset manifest {path} not found")
    data = yaml.safe_load(p.read_text(encoding="utf-8")) or {}
    manifest = DatasetManifest.model_validate(data)
    base = p.parent
    for d in manifest.datasets:
        if d.raw and not Path(d.raw).is_absolute():
            d.raw = str(base / d.raw)
        if d.structured and not Path(d.structured).is_absolute():
            d.structured = str(base / d.structured)
    return manifest


def write_events(path: str, events: Iterable[StructuredEvent], config_hash: str = "") -> int:
    n = 0
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("w", encoding="utf-8", newline="\n") as fh:
        for e in events:
            fh.write(json.dumps(e.to_record(config_hash), sort_keys=True, separators=(",", ":")) + "\n")
            n += 1
    return n


def read_events(path: str) -> List[StructuredEvent]:
    p = Path(path)
    if not p.is_file():
        raise DataError(f"events file {path} not found")
    events = []
    for lineno, line in enumerate(p.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec: Dict = json.loads(line)
            rec.pop("config_hash", None)
            events.append(StructuredEvent.model_validate(rec))
        except (json.JSONDecodeError, ValueError) as e:
            raise DataError(f"{path}:{lineno}: bad event record ({e})") from e
    return events
