import hashlib
import json
from typing import Any, Dict, List, Literal, Optional, Tuple

import networkx as nx
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_serializer, field_validator, model_validator

from edge_rca.utils.text import PLACEHOLDER, norm, template_id_for

Tier = Literal["L1", "L2", "L3"]
NOISE_LEVELS = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)


# ----------------------------------------------------------------------------
# Perception
# ----------------------------------------------------------------------------

class RawLog(BaseModel):
    """One raw log entry as read from a stream."""
    line: str
    source_id: str
    seq: int
    arrival_ms: Optional[int] = None

    @field_validator("line")
    @classmethod
    def _non_empty(cls, v: str) -> str:
        if not v.strip():
            raise ValueError("log line is empty after trimming")
        return v


class Placeholder(BaseModel):
    kind: str
    original: str


class ProcessedLog(BaseModel):
    normalized_text: str
    timestamp_ms: int
    timestamp_source: Literal["parsed", "arrival", "inherited"] = "arrival"
    placeholders: List[Placeholder] = Field(default_factory=list)
    warnings: List[str] = Field(default_factory=list)
    source_id: str = ""
    seq: int = 0

    @model_validator(mode="after")
    def _placeholder_count(self):
        if self.normalized_text.count(PLACEHOLDER) != len(self.placeholders):
            raise ValueError("placeholder list does not match <*> count")
        return self


class EventTemplate(BaseModel):
    template_id: str
    text: str
    origin: Tier
    validated: bool = False
    degraded: bool = False

    @classmethod
    def from_text(cls, text: str, origin: Tier, validated: bool = False, degraded: bool = False) -> "EventTemplate":
        canonical = norm(text)
        return cls(template_id=template_id_for(canonical), text=canonical,
                   origin=origin, validated=validated, degraded=degraded)


class StructuredEvent(BaseModel):
    template_id: str
    template_text: str
    timestamp_ms: int
    source_id: str
    tier: Tier
    seq: int = 0

    def to_record(self, config_hash: str = "") -> Dict[str, Any]:
        record = {
            "template_id": self.template_id,
            "template_text": self.template_text,
            "timestamp_ms": self.timestamp_ms,
            "source_id": self.source_id,
            "tier": self.tier,
        }
        if config_hash:
            record["config_hash"] = config_hash
        return record


class RouteDecision(BaseModel):
    seq: int
    tier: Tier
    template_id: str
    latency_ms: float
    promoted: bool = False
    degraded: bool = False
    error: Optional[str] = None


class RouteStats(BaseModel):
    l1_hits: int = 0
    l2_hits: int = 0
    l3_hits: int = 0
    l2_promoted: int = 0
    degraded: int = 0
    warnings: int = 0
    decisions: List[RouteDecision] = Field(default_factory=list)
    skipped: List[str] = Field(default_factory=list)

    def record(self, decision: RouteDecision, warnings: int = 0) -> None:
        self.decisions.append(decision)
        if decision.tier == "L1":
            self.l1_hits += 1
        elif decision.tier == "L2":
            self.l2_hits += 1
        else:
            self.l3_hits += 1
        self.l2_promoted += int(decision.promoted)
        self.degraded += int(decision.degraded)
        self.warnings += warnings

    @property
    def tiers(self) -> List[str]:
        return [d.tier for d in self.decisions]

    @property
    def errors(self) -> List[str]:
        return [d.error for d in self.decisions if d.error] + list(self.skipped)

    def mean_latency_ms(self, tier: Optional[str] = None) -> float:
        lat = [d.latency_ms for d in self.decisions if tier is None or d.tier == tier]
        return float(np.mean(lat)) if lat else 0.0

    def summary(self) -> Dict[str, Any]:
        return {
            "logs": len(self.decisions),
            "L1": self.l1_hits,
            "L2": self.l2_hits,
            "L3": self.l3_hits,
            "l2_promoted": self.l2_promoted,
            "degraded": self.degraded,
            "warnings": self.warnings,
            "errors": len(self.errors),
            "mean_latency_ms": round(self.mean_latency_ms(), 4),
        }


# ----------------------------------------------------------------------------
# Embedding / knowledge base
# ----------------------------------------------------------------------------

class EmbeddingVector(BaseModel):
    """L2-normalized hashed trigram vector."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    values: np.ndarray
    norm: float

    @field_validator("values", mode="before")
    @classmethod
    def _as_array(cls, v):
        return np.asarray(v, dtype=np.float64)

    @field_serializer("values")
    def _ser_values(self, v: np.ndarray) -> List[float]:
        return [float(x) for x in v]

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


class KbTemplateEntry(BaseModel):
    template_id: str
    text: str
    embedding: EmbeddingVector
    validated: bool = False
    added_at: int = 0
    support_count: int = 1
    journal_keys: List[str] = Field(default_factory=list)


class KbPriorEntry(BaseModel):
    src_template_id: str
    dst_template_id: str
    family: Literal["intra", "inter"]
    support_count: int = 1
    validated: bool = False
    journal_keys: List[str] = Field(default_factory=list)

    @property
    def key(self) -> Tuple[str, str, str]:
        return (self.family, self.src_template_id, self.dst_template_id)


class KbCaseEntry(BaseModel):
    case_id: str
    indexed_text: str
    embedding: EmbeddingVector
    root_cause_label: str
    repair_action: str
    template_refs: List[str] = Field(default_factory=list)
    # explicit template -> cause mapping; cases without it never match deterministically
    root_template_id: Optional[str] = None
    validated: bool = False
    support_count: int = 1
    journal_keys: List[str] = Field(default_factory=list)

    @field_validator("root_cause_label", "repair_action")
    @classmethod
    def _label_non_empty(cls, v: str) -> str:
        if not v.strip():
            raise ValueError("case labels must be non-empty")
        return v


# ----------------------------------------------------------------------------
# Reasoning
# ----------------------------------------------------------------------------

class EventMatrix(BaseModel):
    """Windows x event-types count matrix with a frozen column order."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    counts: np.ndarray
    event_order: List[str]
    labels: Dict[str, str] = Field(default_factory=dict)
    window_start_ms: List[int]
    window_len_ms: int

    @model_validator(mode="after")
    def _check(self):
        if len(set(self.event_order)) != len(self.event_order):
            raise ValueError("event_order has duplicates")
        if self.counts.ndim != 2 or self.counts.shape[1] != len(self.event_order):
            raise ValueError("counts shape does not match event_order")
        if (self.counts < 0).any():
            raise ValueError("counts must be nonnegative")
        if len(self.window_start_ms) != self.counts.shape[0]:
            raise ValueError("one window start per row required")
        return self

    @property
    def m(self) -> int:
        return int(self.counts.shape[0])

    @property
    def d(self) -> int:
        return int(self.counts.shape[1])


class PriorMasks(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    w_mask: np.ndarray
    a_mask: np.ndarray
    event_order: List[str]
    p_w: List[Tuple[int, int]] = Field(default_factory=list)
    p_a: List[Tuple[int, int]] = Field(default_factory=list)


class CausalEdge(BaseModel):
    src: str
    dst: str
    weight: float
    lag: int = 0


class CausalGraph(BaseModel):
    nodes: List[str]
    labels: Dict[str, str] = Field(default_factory=dict)
    intra_edges: List[CausalEdge] = Field(default_factory=list)
    inter_edges: List[CausalEdge] = Field(default_factory=list)
    config: Dict[str, Any] = Field(default_factory=dict)

    @property
    def edges(self) -> List[CausalEdge]:
        return self.intra_edges + self.inter_edges

    def intra_digraph(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(self.nodes)
        for e in self.intra_edges:
            g.add_edge(e.src, e.dst, weight=e.weight)
        return g

    def to_record(self) -> Dict[str, Any]:
        """Serialized form with a stable field order (golden-file friendly)."""
        return {
            "nodes": list(self.nodes),
            "labels": {n: self.labels.get(n, "") for n in self.nodes},
            "intra": [{"src": e.src, "dst": e.dst, "w": e.weight} for e in self.intra_edges],
            "inter": [{"src": e.src, "dst": e.dst, "w": e.weight, "lag": e.lag} for e in self.inter_edges],
            "config": self.config,
        }

    @classmethod
    def from_record(cls, record: Dict[str, Any]) -> "CausalGraph":
        return cls(
            nodes=record["nodes"],
            labels=record.get("labels", {}),
            intra_edges=[CausalEdge(src=e["src"], dst=e["dst"], weight=e["w"]) for e in record.get("intra", [])],
            inter_edges=[CausalEdge(src=e["src"], dst=e["dst"], weight=e["w"], lag=e.get("lag", 1))
                         for e in record.get("inter", [])],
            config=record.get("config", {}),
        )


# ----------------------------------------------------------------------------
# Action
# ----------------------------------------------------------------------------

class RootCandidate(BaseModel):
    template_id: str
    score: float


class CausalPath(BaseModel):
    nodes: List[str]
    weights: List[float]
    score: float


class CausalEvidence(BaseModel):
    candidate_roots: List[RootCandidate] = Field(default_factory=list)
    key_paths: List[CausalPath] = Field(default_factory=list)
    upstream_relations: List[CausalEdge] = Field(default_factory=list)
    labels: Dict[str, str] = Field(default_factory=dict)

    @property
    def candidate_ids(self) -> List[str]:
        return [c.template_id for c in self.candidate_roots]

    def digest(self) -> Dict[str, Any]:
        return {
            "candidates": [
                {"template_id": c.template_id, "text": self.labels.get(c.template_id, ""), "score": round(c.score, 6)}
                for c in self.candidate_roots
            ],
            "paths": [
                {"nodes": p.nodes, "score": round(p.score, 6)} for p in self.key_paths
            ],
            "upstream": [
                {"src": e.src, "dst": e.dst, "w": round(e.weight, 6), "lag": e.lag}
                for e in self.upstream_relations
            ],
        }


class CaseMatch(BaseModel):
    case_id: str
    similarity: float = Field(ge=0.0, le=1.0)
    root_cause_label: str
    repair_action: str
    root_template_id: Optional[str] = None


class DeterministicCertificate(BaseModel):
    top_similarity: float
    second_similarity: Optional[float]
    label_agrees: bool
    margin_ok: bool
    min_similarity: float
    margin_ratio: float


class TranscriptEntry(BaseModel):
    request_hash: str
    prompt: List[Dict[str, str]]
    response_text: Optional[str] = None
    provider_tag: str = ""
    error: Optional[str] = None


class RcaReport(BaseModel):
    root_cause: str
    action: str
    decision_path: Literal["local", "synthesized"]
    root_template_id: Optional[str] = None
    evidence: Dict[str, Any] = Field(default_factory=dict)
    cases_used: List[str] = Field(default_factory=list)
    validated: bool = False
    degraded: bool = False
    certificate: Optional[DeterministicCertificate] = None
    transcript: Optional[List[TranscriptEntry]] = None
    diagnostics: List[str] = Field(default_factory=list)
    config_hash: str = ""

    @model_validator(mode="after")
    def _path_attachments(self):
        if self.decision_path == "local" and self.certificate is None:
            raise ValueError("local decisions must carry a deterministic-match certificate")
        if self.decision_path == "synthesized" and not self.transcript:
            raise ValueError("synthesized decisions must carry a transcript")
        return self

    def to_document(self) -> Dict[str, Any]:
        doc = {
            "root_cause": self.root_cause,
            "action": self.action,
            "root_template_id": self.root_template_id,
            "decision_path": self.decision_path,
            "evidence_digest": self.evidence,
            "cases_used": self.cases_used,
            "degraded": self.degraded,
            "validated": self.validated,
            "diagnostics": self.diagnostics,
            "config_hash": self.config_hash,
        }
        if self.certificate is not None:
            doc["certificate"] = self.certificate.model_dump()
        if self.transcript:
            doc["transcript"] = [t.model_dump() for t in self.transcript]
        return doc


# ----------------------------------------------------------------------------
# Model client
# ----------------------------------------------------------------------------

class ChatMessage(BaseModel):
    role: Literal["system", "user", "assistant"]
    content: str


class ModelRequest(BaseModel):
    role_prompts: List[ChatMessage]
    temperature: float = 0.0
    max_tokens: int = 256
    purpose: Literal["L3_parse", "synthesis"]

    @model_validator(mode="after")
    def _check(self):
        if not self.role_prompts:
            raise ValueError("request needs at least one prompt")
        if self.purpose == "synthesis" and self.temperature != 0.0:
            raise ValueError("synthesis requests run at temperature 0.0")
        return self

    def request_hash(self) -> str:
        payload = {
            "messages": [[m.role, m.content] for m in self.role_prompts],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "purpose": self.purpose,
        }
        raw = json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
        return hashlib.sha256(raw.encode("utf-8")).hexdigest()

    def messages(self) -> List[Dict[str, str]]:
        return [{"role": m.role, "content": m.content} for m in self.role_prompts]


class ModelResponse(BaseModel):
    text: str
    latency_ms: float = 0.0
    provider_tag: str = ""


# ----------------------------------------------------------------------------
# Evaluation
# ----------------------------------------------------------------------------

NoiseProfile = Literal["control_plane", "storage", "heterogeneous"]


class NoiseConfig(BaseModel):
    level: float
    seed: int = 42
    profile: NoiseProfile = "storage"

    @field_validator("level")
    @classmethod
    def _known_level(cls, v: float) -> float:
        if round(v, 6) not in NOISE_LEVELS:
            raise ValueError(f"noise level must be one of {NOISE_LEVELS}")
        return round(v, 6)


class BenchmarkCase(BaseModel):
    case_id: str
    logs: List[RawLog]
    truth_templates: List[str]
    # None for parsing-only suites (Loghub structured CSVs)
    root_relation: Optional[Tuple[str, str]] = None
    root_cause: str = ""
    action: str = ""

    @model_validator(mode="after")
    def _aligned(self):
        if len(self.logs) != len(self.truth_templates):
            raise ValueError("one ground-truth template per log line required")
        return self


class BenchmarkSuite(BaseModel):
    dataset: str
    profile: NoiseProfile
    kb_templates: List[KbTemplateEntry] = Field(default_factory=list)
    kb_priors: List[KbPriorEntry] = Field(default_factory=list)
    kb_cases: List[KbCaseEntry] = Field(default_factory=list)
    cases: List[BenchmarkCase] = Field(default_factory=list)
    parsing_only: bool = False


class MetricsReport(BaseModel):
    dataset: str = ""
    method: str = ""
    noise: float = 0.0
    seed: int = 0
    n_cases: int = 0
    n_logs: int = 0
    pa: float = Field(default=0.0, ge=0.0, le=1.0)
    avg_latency_ms: float = 0.0
    sparsity: float = 0.0
    avg_rank: float = 0.0
    misses: int = 0
    rca: float = Field(default=0.0, ge=0.0, le=1.0)
    e2e: float = Field(default=0.0, ge=0.0, le=1.0)
    peak_rss_mb: float = 0.0
    route_counts: Dict[str, int] = Field(default_factory=lambda: {"L1": 0, "L2": 0, "L3": 0})
    client_calls: int = 0

    @model_validator(mode="after")
    def _conjunctive(self):
        if self.e2e > self.rca + 1e-12:
            raise ValueError("e2e cannot exceed rca")
        return self

    def metric_values(self) -> Dict[str, float]:
        values = {
            "pa": self.pa,
            "rca": self.rca,
            "e2e": self.e2e,
            "avg_rank": self.avg_rank,
            "misses": float(self.misses),
            "sparsity": self.sparsity,
            "client_calls": float(self.client_calls),
        }
        for tier in ("L1", "L2", "L3"):
            values[tier] = float(self.route_counts.get(tier, 0))
        return values
