"""
Preprocessing: extract the timestamp, mask dynamic fields with `<*>`, normalize.
"""
import logging
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import List, Optional, Sequence, Tuple

from edge_rca.utils.config import PerceptionConfig
from edge_rca.utils.errors import EmptyTextError, UsageError
from edge_rca.utils.specs import Placeholder, ProcessedLog, RawLog
from edge_rca.utils.text import PLACEHOLDER, PLACEHOLDER_VARIANTS, norm

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TimestampFormat:
    """A regex that locates a timestamp plus the strptime format that parses it."""
    pattern: str
    fmt: str

    @property
    def regex(self) -> re.Pattern:
        return re.compile(self.pattern)


@dataclass(frozen=True)
class MaskRule:
    kind: str
    pattern: str

    @property
    def regex(self) -> re.Pattern:
        return re.compile(self.pattern)


# Loghub-flavoured formats: HDFS (yymmdd HHMMSS), Hadoop (comma millis), ISO / OpenStack.
DEFAULT_TIMESTAMP_FORMATS: Tuple[TimestampFormat, ...] = (
    TimestampFormat(r"\d{4}-\d{2}-\d{2}[ T]\d{2}:\d{2}:\d{2}[.,]\d{1,6}", "%Y-%m-%d %H:%M:%S.%f"),
    TimestampFormat(r"\d{4}-\d{2}-\d{2}[ T]\d{2}:\d{2}:\d{2}", "%Y-%m-%d %H:%M:%S"),
    TimestampFormat(r"\d{6} \d{6}", "%y%m%d %H%M%S"),
)

# Applied in this order; earlier rules win overlapping spans.
DEFAULT_MASK_RULES: Tuple[MaskRule, ...] = (
    MaskRule("ipv4", r"/?(?<![\w.])(?:\d{1,3}\.){3}\d{1,3}(?::\d+)?(?![\w.])"),
    MaskRule("ipv6", r"(?<![\w:])(?:(?:[0-9a-fA-F]{1,4}:){7}[0-9a-fA-F]{1,4}"
                     r"|(?:[0-9a-fA-F]{1,4}:){1,6}:(?:[0-9a-fA-F]{1,4}(?::[0-9a-fA-F]{1,4})*)?)(?![\w:])"),
    MaskRule("block_id", r"blk_-?\d+"),
    MaskRule("hex_id", r"\b(?:0x[0-9a-fA-F]+|(?=[0-9a-fA-F]*[a-fA-F])(?=[0-9a-fA-F]*\d)[0-9a-fA-F]{8,})\b"),
    MaskRule("path", r"(?<![\w/<])(?:/[\w.\-]+)+/?"),
    MaskRule("number", r"(?<![\w.])[-+]?\d+(?:\.\d+)?(?![\w.])"),
)


@dataclass
class MaskRuleSet:
    rules: Sequence[MaskRule] = DEFAULT_MASK_RULES
    timestamp_formats: Sequence[TimestampFormat] = DEFAULT_TIMESTAMP_FORMATS
    _compiled: List[Tuple[str, re.Pattern]] = field(default_factory=list, init=False, repr=False)
    _ts_compiled: List[Tuple[re.Pattern, str]] = field(default_factory=list, init=False, repr=False)

    def __post_init__(self):
        self._compiled = [(r.kind, r.regex) for r in self.rules]
        self._ts_compiled = [(t.regex, t.fmt) for t in self.timestamp_formats]

    def __len__(self) -> int:
        return len(self._compiled) + len(self._ts_compiled)

    def find_timestamp(self, line: str) -> Optional[re.Match]:
        """First (leftmost, then first-format) timestamp match in the line."""
        best = None
        for regex, _fmt in self._ts_compiled:
            m = regex.search(line)
            if m and (best is None or m.start() < best.start()):
                best = m
        return best

    def parse_timestamp(self, text: str) -> Optional[int]:
        candidate = text.replace("T", " ").replace(",", ".")
        for regex, fmt in self._ts_compiled:
            if not regex.fullmatch(text):
                continue
            try:
                dt = datetime.strptime(candidate, fmt).replace(tzinfo=timezone.utc)
            except ValueError:
                continue
            return int(dt.timestamp() * 1000)
        return None

    def timestamp_spans(self, line: str) -> List[Tuple[int, int]]:
        spans = []
        for regex, _fmt in self._ts_compiled:
            spans.extend((m.start(), m.end()) for m in regex.finditer(line))
        return spans

    def mask(self, text: str) -> Tuple[str, List[Placeholder]]:
        """Mask dynamic fields (no timestamp handling). Used to re-mask model output."""
        spans = _select_spans(text, [], self._compiled)
        return _render(text, spans)


def _overlaps(a: Tuple[int, int], taken: List[Tuple[int, int, str]]) -> bool:
    return any(a[0] < e and s < a[1] for s, e, _ in taken)


def _select_spans(line: str, seeded: List[Tuple[int, int, str]],
                  compiled: List[Tuple[str, re.Pattern]]) -> List[Tuple[int, int, str]]:
    taken = list(seeded)
    # placeholders already present in the text (model output, re-parsed templates)
    for m in PLACEHOLDER_VARIANTS.finditer(line):
        if not _overlaps((m.start(), m.end()), taken):
            taken.append((m.start(), m.end(), "literal"))
    for kind, regex in compiled:
        for m in regex.finditer(line):
            if m.end() == m.start() or _overlaps((m.start(), m.end()), taken):
                continue
            taken.append((m.start(), m.end(), kind))
    return sorted(taken)


def _render(line: str, spans: List[Tuple[int, int, str]]) -> Tuple[str, List[Placeholder]]:
    out, placeholders, cursor = [], [], 0
    for start, end, kind in spans:
        out.append(line[cursor:start])
        out.append(PLACEHOLDER)
        placeholders.append(Placeholder(kind=kind, original=line[start:end]))
        cursor = end
    out.append(line[cursor:])
    return "".join(out), placeholders


def preprocess(raw: RawLog, rules: MaskRuleSet, fallback_ms: Optional[int] = None) -> ProcessedLog:
    """
    Extract the timestamp, then mask dynamic fields in fixed rule order and
    normalize. A leading timestamp header is stripped; timestamps elsewhere
    are masked in place. When no timestamp is found, `fallback_ms`
    (or the raw arrival time) is used.
    """
    if len(rules) == 0:
        raise UsageError("mask rule set is empty")
    line = raw.line.strip()
    if not line:
        raise EmptyTextError("raw log line is empty")

    warnings: List[str] = []
    ts_ms: Optional[int] = None
    ts_source = "arrival"
    seeded: List[Tuple[int, int, str]] = []

    match = rules.find_timestamp(line)
    if match is not None:
        ts_ms = rules.parse_timestamp(match.group(0))
        if ts_ms is None:
            warnings.append("unparsable_timestamp")
            logger.warning("unparsable timestamp %r in %s#%d", match.group(0), raw.source_id, raw.seq)
        else:
            ts_source = "parsed"
        if match.start() == 0 and line[match.end():].strip():
            line = line[match.end():].lstrip()
        else:
            seeded.append((match.start(), match.end(), "timestamp"))
        for start, end in rules.timestamp_spans(line):
            if not _overlaps((start, end), seeded):
                seeded.append((start, end, "timestamp"))

    if ts_ms is None:
        unparsable = bool(warnings)
        if unparsable and raw.arrival_ms is not None:
            ts_ms = raw.arrival_ms
        elif fallback_ms is not None:
            ts_ms, ts_source = fallback_ms, "inherited"
        else:
            ts_ms = raw.arrival_ms if raw.arrival_ms is not None else 0

    spans = _select_spans(line, seeded, rules._compiled)
    masked, placeholders = _render(line, spans)
    return ProcessedLog(
        normalized_text=norm(masked),
        timestamp_ms=ts_ms,
        timestamp_source=ts_source,
        placeholders=placeholders,
        warnings=warnings,
        source_id=raw.source_id,
        seq=raw.seq,
    )


def rules_from_config(cfg: PerceptionConfig) -> MaskRuleSet:
    if not cfg.timestamp_formats:
        return MaskRuleSet()
    formats = tuple(TimestampFormat(f.pattern, f.fmt) for f in cfg.timestamp_formats)
    return MaskRuleSet(timestamp_formats=formats)
