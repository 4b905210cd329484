import json

import pytest

from edge_rca.action.agent import (
    FALLBACK_ACTION,
    deterministic_match,
    diagnose,
    parse_synthesis,
    rag_only,
    synthesis_request,
    vanilla_model,
)
from edge_rca.action.navigator import navigate, root_scores
from edge_rca.action.retrieval import evidence_query, retrieve_cases
from edge_rca.clients.mock_client import MockModelClient
from edge_rca.kb.knowledge_base import KnowledgeBase, make_case_entry
from edge_rca.utils.config import ActionConfig
from edge_rca.utils.errors import UnparseableResponse
from edge_rca.utils.specs import CaseMatch, CausalEdge, CausalEvidence, CausalGraph, RootCandidate
from edge_rca.utils.text import template_id_for

from conftest import DISK, PIPE


def _chain():
    return CausalGraph(nodes=["a", "b", "c"], labels={"a": "alpha", "b": "beta", "c": "gamma"},
                       intra_edges=[CausalEdge(src="a", dst="b", weight=0.5),
                                    CausalEdge(src="a", dst="c", weight=0.1)],
                       inter_edges=[CausalEdge(src="b", dst="c", weight=-0.4, lag=1)])


def _ambiguous_kb():
    """Two cases with the same text but different labels."""
    kb = KnowledgeBase()
    for case_id, cause in (("case-a", "data disk failure"), ("case-b", "controller fault")):
        kb.add_validated([make_case_entry(case_id, f"{DISK} {PIPE}", cause, f"fix {cause}",
                                          root_template_id=template_id_for(DISK), validated=True)])
    return kb


def _match(case_id, sim, root="r1"):
    return CaseMatch(case_id=case_id, similarity=sim, root_cause_label=f"cause {case_id}",
                     repair_action=f"action {case_id}", root_template_id=root)


# -------------------------------------------------------------------------
# navigator
# -------------------------------------------------------------------------

def test_root_scores_use_absolute_weights():
    scores = root_scores(_chain())
    assert scores["a"] == pytest.approx(0.6)
    assert scores["b"] == pytest.approx(-0.1)
    assert scores["c"] == pytest.approx(-0.5)


def test_navigate_ranks_roots_and_keeps_maximal_paths():
    ev = navigate(_chain())
    assert ev.candidate_ids == ["a", "b", "c"]
    assert [p.nodes for p in ev.key_paths] == [["a", "b", "c"], ["a", "c"]]
    assert ev.key_paths[0].score == pytest.approx(0.2)
    assert abs(ev.upstream_relations[0].weight) == 0.5


def test_navigate_respects_limits():
    ev = navigate(_chain(), top_k=1, max_depth=1, max_paths=1)
    assert ev.candidate_ids == ["a"]
    assert [p.nodes for p in ev.key_paths] == [["a", "b"]]


def test_lagged_cycles_terminate_and_keep_the_stronger_arc():
    g = CausalGraph(nodes=["a", "b"],
                    intra_edges=[CausalEdge(src="a", dst="b", weight=0.3)],
                    inter_edges=[CausalEdge(src="a", dst="b", weight=-0.7, lag=1),
                                 CausalEdge(src="b", dst="a", weight=0.2, lag=1)])
    ev = navigate(g)
    assert ev.candidate_ids == ["a", "b"]
    assert [p.nodes for p in ev.key_paths] == [["a", "b"], ["b", "a"]]
    assert [p.score for p in ev.key_paths] == pytest.approx([0.7, 0.2])


def test_edgeless_graph_ranks_every_node_by_id():
    ev = navigate(CausalGraph(nodes=["z", "m"]))
    assert ev.candidate_ids == ["m", "z"]
    assert ev.key_paths == []
    assert navigate(CausalGraph(nodes=[])).candidate_roots == []


def test_evidence_query_deduplicates_labels():
    assert evidence_query(navigate(_chain())) == "alpha beta gamma"


# -------------------------------------------------------------------------
# deterministic match
# -------------------------------------------------------------------------

def _evidence(root="r1"):
    return CausalEvidence(candidate_roots=[RootCandidate(template_id=root, score=1.0)])


def test_deterministic_match_needs_similarity_agreement_and_margin():
    assert deterministic_match(_evidence(), [_match("x", 0.95)]).decision_path == "local"
    assert deterministic_match(_evidence(), [_match("x", 0.85)]) is None
    assert deterministic_match(_evidence("other"), [_match("x", 0.95)]) is None
    assert deterministic_match(_evidence(), [_match("x", 0.95, root=None)]) is None
    assert deterministic_match(_evidence(), [_match("x", 1.0), _match("y", 0.9)]) is None
    report = deterministic_match(_evidence(), [_match("x", 1.0), _match("y", 0.7)])
    assert report.certificate.second_similarity == 0.7 and report.certificate.margin_ok
    assert deterministic_match(_evidence(), []) is None


def test_clear_incident_is_decided_locally(disk_graph, storage_kb, mock_client):
    report = diagnose(disk_graph, storage_kb, mock_client, config_hash="abc")
    assert report.decision_path == "local"
    assert report.root_cause == "data disk failure"
    assert report.action == "replace the failed disk"
    assert report.root_template_id == template_id_for(DISK)
    assert report.certificate.label_agrees
    assert report.config_hash == "abc"
    assert mock_client.calls == 0


def test_ambiguous_cases_go_through_one_synthesis_call(disk_graph, mock_client):
    kb = _ambiguous_kb()
    report = diagnose(disk_graph, kb, mock_client)
    assert mock_client.calls == 1
    assert report.decision_path == "synthesized" and not report.degraded
    assert report.root_template_id == template_id_for(DISK)
    assert report.root_cause == "data disk failure"
    assert len(report.transcript) == 1
    assert report.cases_used == ["case-a", "case-b"]


def test_unsupported_root_is_retried_then_fails_over(disk_graph):
    kb = _ambiguous_kb()
    cfg = ActionConfig()
    ev = navigate(disk_graph, cfg.top_k, cfg.max_depth, cfg.max_paths)
    req = synthesis_request(ev, retrieve_cases(ev, kb, cfg.top_n_cases))
    bogus = json.dumps({"root_template_id": "Tnot-a-candidate", "root_cause": "gremlins", "repair_action": "pray"})
    client = MockModelClient(fixtures={req.request_hash(): bogus})

    report = diagnose(disk_graph, kb, client, cfg)
    assert client.calls == 2
    assert report.degraded and report.decision_path == "synthesized"
    assert report.root_template_id == template_id_for(DISK)
    assert report.root_cause == "data disk failure"
    assert len(report.transcript) == 2
    assert any("not an evidence candidate" in d for d in report.diagnostics)


def test_unparseable_answers_fail_over(disk_graph):
    kb = _ambiguous_kb()
    cfg = ActionConfig(synthesis_retries=0)
    ev = navigate(disk_graph, cfg.top_k, cfg.max_depth, cfg.max_paths)
    req = synthesis_request(ev, retrieve_cases(ev, kb, cfg.top_n_cases))
    client = MockModelClient(fixtures={req.request_hash(): "I think it is the disk."})
    report = diagnose(disk_graph, kb, client, cfg)
    assert client.calls == 1 and report.degraded


def test_offline_model_fails_over_with_a_transcript(disk_graph):
    report = diagnose(disk_graph, _ambiguous_kb(), MockModelClient(available=False))
    assert report.degraded
    assert report.transcript[0].error.startswith("ClientUnavailable")
    report = diagnose(disk_graph, _ambiguous_kb(), None)
    assert report.degraded and report.transcript[0].error == "client unavailable"


def test_empty_graph_without_cases(mock_client):
    report = diagnose(CausalGraph(nodes=[]), KnowledgeBase(), mock_client)
    assert report.degraded
    assert report.root_cause == "unknown" and report.action == FALLBACK_ACTION
    assert report.root_template_id is None
    assert report.diagnostics[0].startswith("empty graph")


def test_diagnoses_are_queued_for_approval(disk_graph, storage_kb, mock_client):
    before = storage_kb.counts()
    report = diagnose(disk_graph, storage_kb, mock_client)
    assert not report.validated and not report.degraded
    assert storage_kb.counts()["cases"] == before["cases"]
    queued = [r for r in storage_kb.pending() if r["kind"] == "case"]
    assert len(queued) == 1
    assert queued[0]["entry"]["root_template_id"] == template_id_for(DISK)


def test_degraded_diagnoses_are_not_queued(disk_graph):
    kb = _ambiguous_kb()
    report = diagnose(disk_graph, kb, None)
    assert report.degraded
    assert kb.pending() == []


def test_failover_cause_describes_the_top_candidate(disk_graph):
    # the only case maps to PIPE while the graph puts DISK on top
    kb = KnowledgeBase()
    kb.add_validated([make_case_entry("pipe-1", f"{DISK} {PIPE}", "pipeline bug", "restart the pipeline",
                                      root_template_id=template_id_for(PIPE), validated=True)])
    report = diagnose(disk_graph, kb, MockModelClient(available=False))
    assert report.degraded
    assert report.root_template_id == template_id_for(DISK)
    assert report.root_cause == DISK
    assert report.action == "restart the pipeline"


def test_parse_synthesis_finds_the_first_object():
    text = 'Sure. {"root_template_id": "T1", "root_cause": " disk ", "repair_action": "swap"} trailing'
    assert parse_synthesis(text) == ("T1", "disk", "swap")
    with pytest.raises(UnparseableResponse):
        parse_synthesis('{"root_template_id": "T1", "root_cause": ""}')
    with pytest.raises(UnparseableResponse):
        parse_synthesis("[1, 2]")


def test_reports_document_their_decision_path(disk_graph, storage_kb, mock_client):
    doc = diagnose(disk_graph, storage_kb, mock_client).to_document()
    assert doc["decision_path"] == "local" and "certificate" in doc and "transcript" not in doc
    doc = diagnose(disk_graph, _ambiguous_kb(), mock_client).to_document()
    assert doc["decision_path"] == "synthesized" and "transcript" in doc and "certificate" not in doc


# -------------------------------------------------------------------------
# baselines
# -------------------------------------------------------------------------

def test_rag_only_returns_the_top_case(disk_graph, storage_kb):
    report = rag_only(disk_graph, storage_kb)
    assert report.root_cause == "data disk failure"
    assert report.decision_path == "local" and not report.certificate.label_agrees
    empty = rag_only(disk_graph, KnowledgeBase())
    assert empty.degraded and empty.root_cause == "unknown"


def test_vanilla_model_sees_no_cases(disk_graph, mock_client):
    report = vanilla_model(disk_graph, mock_client)
    assert report.root_template_id == template_id_for(DISK)
    assert report.root_cause == DISK
    assert report.cases_used == []
    assert mock_client.calls == 1
