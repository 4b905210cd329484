"""
Diagnostic workflow: evidence -> case retrieval -> deterministic match, else
constrained synthesis through the model client -> report -> gated KB write-back.
"""
import json
import logging
from typing import List, Optional, Tuple

from edge_rca.action.navigator import navigate
from edge_rca.action.retrieval import retrieve_cases
from edge_rca.clients.model_client import ModelClient
from edge_rca.kb.knowledge_base import KnowledgeBase
from edge_rca.prompts import SYNTHESIS_PROMPT, VANILLA_PROMPT, load_prompt
from edge_rca.utils.config import ActionConfig
from edge_rca.utils.errors import BackendError, EdgeRcaError, UnparseableResponse
from edge_rca.utils.specs import (
    CaseMatch,
    CausalEvidence,
    CausalGraph,
    ChatMessage,
    DeterministicCertificate,
    ModelRequest,
    RcaReport,
    TranscriptEntry,
)

logger = logging.getLogger(__name__)

FALLBACK_ACTION = "escalate to operator"


def deterministic_match(ev: CausalEvidence, cases: List[CaseMatch],
                        min_similarity: float = 0.90, margin_ratio: float = 0.8) -> Optional[RcaReport]:
    """
    Local decision iff the top case is similar enough, maps to the top-ranked
    root candidate, and is not ambiguous against the runner-up.
    """
    if not cases or not ev.candidate_roots:
        return None
    top = cases[0]
    second = cases[1].similarity if len(cases) > 1 else None
    similar = top.similarity >= min_similarity
    agrees = top.root_template_id is not None and top.root_template_id == ev.candidate_ids[0]
    margin_ok = second is None or second <= margin_ratio * top.similarity
    if not (similar and agrees and margin_ok):
        return None
    return RcaReport(
        root_cause=top.root_cause_label,
        action=top.repair_action,
        decision_path="local",
        root_template_id=top.root_template_id,
        evidence=ev.digest(),
        cases_used=[c.case_id for c in cases],
        certificate=DeterministicCertificate(
            top_similarity=top.similarity,
            second_similarity=second,
            label_agrees=agrees,
            margin_ok=margin_ok,
            min_similarity=min_similarity,
            margin_ratio=margin_ratio,
        ),
    )


def _cases_payload(cases: List[CaseMatch]) -> str:
    return json.dumps([
        {"case_id": c.case_id, "similarity": round(c.similarity, 6),
         "root_cause": c.root_cause_label, "repair_action": c.repair_action}
        for c in cases
    ], sort_keys=True)


def synthesis_request(ev: CausalEvidence, cases: List[CaseMatch], max_tokens: int = 256,
                      prompt: str = SYNTHESIS_PROMPT) -> ModelRequest:
    system, user = load_prompt(prompt)
    evidence = json.dumps(ev.digest(), sort_keys=True)
    return ModelRequest(
        role_prompts=[ChatMessage(role="system", content=system),
                      ChatMessage(role="user", content=user.format(evidence=evidence, cases=_cases_payload(cases)))],
        temperature=0.0,
        max_tokens=max_tokens,
        purpose="synthesis",
    )


def parse_synthesis(text: str) -> Tuple[str, str, str]:
    """(root_template_id, root_cause, repair_action) from the first JSON object in `text`."""
    start = text.find("{")
    if start < 0:
        raise UnparseableResponse("no JSON object in model response")
    try:
        obj, _ = json.JSONDecoder().raw_decode(text[start:])
    except json.JSONDecodeError as e:
        raise UnparseableResponse(f"invalid JSON in model response: {e.msg}") from e
    if not isinstance(obj, dict):
        raise UnparseableResponse("model response is not a JSON object")
    fields = []
    for key in ("root_template_id", "root_cause", "repair_action"):
        value = obj.get(key)
        if not isinstance(value, str) or (key != "root_template_id" and not value.strip()):
            raise UnparseableResponse(f"model response lacks a usable {key!r}")
        fields.append(value.strip())
    return fields[0], fields[1], fields[2]


def _failover(ev: CausalEvidence, cases: List[CaseMatch], transcript: List[TranscriptEntry],
              diagnostics: List[str]) -> RcaReport:
    root = ev.candidate_ids[0] if ev.candidate_roots else None
    # the cause always describes `root`; a case only lends its label if it maps there
    mapped = next((c for c in cases if root is not None and c.root_template_id == root), None)
    if mapped is not None:
        cause = mapped.root_cause_label
    else:
        cause = ev.labels.get(root) or root or "unknown"
    action = cases[0].repair_action if cases else FALLBACK_ACTION
    logger.warning("synthesis failed over to the top candidate (%s)", root)
    return RcaReport(
        root_cause=cause,
        action=action,
        decision_path="synthesized",
        root_template_id=root,
        evidence=ev.digest(),
        cases_used=[c.case_id for c in cases],
        degraded=True,
        transcript=transcript,
        diagnostics=diagnostics,
    )


def _ask(client: Optional[ModelClient], req: ModelRequest, transcript: List[TranscriptEntry]) -> Optional[str]:
    entry = TranscriptEntry(request_hash=req.request_hash(), prompt=req.messages())
    if client is None:
        transcript.append(entry.model_copy(update={"error": "client unavailable"}))
        return None
    try:
        resp = client.complete(req)
    except BackendError as e:
        transcript.append(entry.model_copy(update={"error": f"{type(e).__name__}: {e}"}))
        return None
    transcript.append(entry.model_copy(update={"response_text": resp.text, "provider_tag": resp.provider_tag}))
    return resp.text


def synthesize(ev: CausalEvidence, cases: List[CaseMatch], client: Optional[ModelClient],
               retries: int = 1, max_tokens: int = 256) -> RcaReport:
    """
    Constrained synthesis. A response naming a root outside the evidence
    candidates, or one that cannot be parsed, is retried `retries` times and
    then fails over to the top candidate plus the top case action (degraded).
    """
    req = synthesis_request(ev, cases, max_tokens)
    transcript: List[TranscriptEntry] = []
    diagnostics: List[str] = []
    allowed = set(ev.candidate_ids)
    for attempt in range(retries + 1):
        text = _ask(client, req, transcript)
        if text is None:
            # Backend down, stop here
            diagnostics.append(transcript[-1].error or "no response")
            break
        try:
            root, cause, action = parse_synthesis(text)
        except UnparseableResponse as e:
            diagnostics.append(f"attempt {attempt + 1}: {e}")
            continue
        # Grounding check: the root has to be one of our candidates
        if root not in allowed:
            diagnostics.append(f"attempt {attempt + 1}: root {root!r} is not an evidence candidate")
            continue
        return RcaReport(
            root_cause=cause,
            action=action,
            decision_path="synthesized",
            root_template_id=root,
            evidence=ev.digest(),
            cases_used=[c.case_id for c in cases],
            transcript=transcript,
            diagnostics=diagnostics,
        )
    return _failover(ev, cases, transcript, diagnostics)


def diagnose(graph: CausalGraph, kb: Optional[KnowledgeBase], client: Optional[ModelClient],
             cfg: Optional[ActionConfig] = None, config_hash: str = "") -> RcaReport:
    cfg = cfg or ActionConfig()
    diagnostics: List[str] = []
    # 1. Evidence from the graph
    ev = navigate(graph, cfg.top_k, cfg.max_depth, cfg.max_paths)
    if not ev.candidate_roots:
        diagnostics.append("empty graph: synthesis uses retrieval context only")
    # 2. Similar past incidents
    try:
        cases = retrieve_cases(ev, kb, cfg.top_n_cases)
    except EdgeRcaError as e:
        diagnostics.append(f"retrieval: {e}")
        cases = []

    # 3. Decide locally if one case clearly wins, otherwise ask the model
    report = deterministic_match(ev, cases, cfg.min_similarity, cfg.margin_ratio)
    if report is None:
        report = synthesize(ev, cases, client, cfg.synthesis_retries)
    else:
        logger.info("deterministic match on case %s; model bypassed", report.cases_used[0])
    report = report.model_copy(update={
        "diagnostics": diagnostics + report.diagnostics,
        "config_hash": config_hash,
    })
    # 4. Write back (queued for approval unless already validated)
    if kb is not None:
        kb.write_back(report)
    return report


def rag_only(graph: CausalGraph, kb: Optional[KnowledgeBase], cfg: Optional[ActionConfig] = None) -> RcaReport:
    """Baseline: take the top retrieved case for the incident's events, no graph reasoning."""
    cfg = cfg or ActionConfig()
    query_ev = CausalEvidence(labels=dict(graph.labels))
    query = " ".join(graph.labels.get(n) or n for n in graph.nodes)
    cases = kb.search_cases(query, cfg.top_n_cases) if kb is not None and query.strip() else []
    if not cases:
        return RcaReport(root_cause="unknown", action=FALLBACK_ACTION, decision_path="local", degraded=True,
                         evidence=query_ev.digest(),
                         certificate=DeterministicCertificate(top_similarity=0.0, second_similarity=None,
                                                              label_agrees=False, margin_ok=False,
                                                              min_similarity=cfg.min_similarity,
                                                              margin_ratio=cfg.margin_ratio))
    top = cases[0]
    second = cases[1].similarity if len(cases) > 1 else None
    return RcaReport(
        root_cause=top.root_cause_label,
        action=top.repair_action,
        decision_path="local",
        root_template_id=top.root_template_id,
        evidence=query_ev.digest(),
        cases_used=[c.case_id for c in cases],
        certificate=DeterministicCertificate(
            top_similarity=top.similarity, second_similarity=second, label_agrees=False,
            margin_ok=second is None or second <= cfg.margin_ratio * top.similarity,
            min_similarity=cfg.min_similarity, margin_ratio=cfg.margin_ratio,
        ),
    )


def vanilla_model(graph: CausalGraph, client: Optional[ModelClient], cfg: Optional[ActionConfig] = None) -> RcaReport:
    """Baseline: the model sees the evidence digest only; no cases, no grounding check."""
    cfg = cfg or ActionConfig()
    ev = navigate(graph, cfg.top_k, cfg.max_depth, cfg.max_paths)
    req = synthesis_request(ev, [], prompt=VANILLA_PROMPT)
    transcript: List[TranscriptEntry] = []
    text = _ask(client, req, transcript)
    if text is not None:
        try:
            root, cause, action = parse_synthesis(text)
            return RcaReport(root_cause=cause, action=action, decision_path="synthesized",
                             root_template_id=root or None, evidence=ev.digest(), transcript=transcript)
        except UnparseableResponse as e:
            return _failover(ev, [], transcript, [str(e)])
    return _failover(ev, [], transcript, [transcript[-1].error or "no response"])
