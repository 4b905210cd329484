import json

import pytest

from edge_rca.kb.knowledge_base import (
    PENDING_FILE,
    TEMPLATES_FILE,
    KnowledgeBase,
    make_case_entry,
    make_template_entry,
)
from edge_rca.utils.errors import MissingDirectory, SchemaVersionMismatch, UnknownEntry
from edge_rca.utils.specs import DeterministicCertificate, RcaReport
from edge_rca.utils.text import template_id_for

from conftest import DISK, PIPE, RECV


def _local_report(validated: bool) -> RcaReport:
    cert = DeterministicCertificate(top_similarity=1.0, second_similarity=None, label_agrees=True,
                                    margin_ok=True, min_similarity=0.9, margin_ratio=0.8)
    return RcaReport(root_cause="data disk failure", action="replace the failed disk", decision_path="local",
                     root_template_id=template_id_for(DISK), certificate=cert, validated=validated,
                     evidence={"candidates": [{"template_id": template_id_for(DISK), "text": DISK, "score": 1.0}]})


def test_init_creates_empty_store(kb_dir):
    kb = KnowledgeBase.init(kb_dir)
    for name in ("templates.jsonl", "priors.jsonl", "cases.jsonl", "pending.jsonl"):
        assert (kb_dir / name).is_file()
    assert kb.is_empty()
    assert kb.counts()["templates"] == 0


def test_load_missing_directory(tmp_path):
    with pytest.raises(MissingDirectory):
        KnowledgeBase.load(tmp_path / "absent")


def test_save_and_reload_keeps_the_view(storage_kb, kb_dir):
    storage_kb.save(kb_dir)
    kb = KnowledgeBase.load(kb_dir)
    assert kb.counts() == storage_kb.counts()
    hit = kb.search_templates(RECV, 0.99)
    assert hit is not None and hit[0].template_id == template_id_for(RECV)
    assert kb.priors_for([template_id_for(DISK), template_id_for(PIPE)]) == ([(0, 1)], [])
    assert kb.priors_for([template_id_for(PIPE), template_id_for(DISK)]) == ([(1, 0)], [])
    assert kb.priors_for([template_id_for(RECV)]) == ([], [])


def test_saved_files_are_canonical(storage_kb, kb_dir):
    storage_kb.save(kb_dir)
    first = (kb_dir / TEMPLATES_FILE).read_bytes()
    KnowledgeBase.load(kb_dir).save()
    assert (kb_dir / TEMPLATES_FILE).read_bytes() == first


def test_schema_version_mismatch_refuses_to_load(kb_dir):
    KnowledgeBase.init(kb_dir)
    record = {"schema_version": 99, **make_template_entry(DISK).model_dump(mode="json")}
    (kb_dir / TEMPLATES_FILE).write_text(json.dumps(record) + "\n", encoding="utf-8")
    with pytest.raises(SchemaVersionMismatch):
        KnowledgeBase.load(kb_dir)


def test_malformed_lines_are_reported_not_fatal(storage_kb, kb_dir):
    storage_kb.save(kb_dir)
    with (kb_dir / TEMPLATES_FILE).open("a", encoding="utf-8") as fh:
        fh.write("{not json\n")
        fh.write(json.dumps({"text": "no version"}) + "\n")
    kb = KnowledgeBase.load(kb_dir)
    assert kb.counts()["templates"] == 3
    assert len(kb.diagnostics) == 2
    assert "malformed JSON" in kb.diagnostics[0]


def test_pending_entries_stay_invisible_until_approved(kb_dir):
    kb = KnowledgeBase.init(kb_dir)
    key = kb.enqueue_validation(make_template_entry(DISK))
    assert kb.search_templates(DISK, 0.5) is None
    assert [r["key"] for r in kb.pending()] == [key]

    entry = kb.approve(key)
    assert entry.validated and entry.journal_keys == [key]
    assert kb.search_templates(DISK, 0.99) is not None
    assert kb.pending() == []

    again = kb.approve(key)
    assert again.support_count == 1
    with pytest.raises(UnknownEntry):
        kb.approve("nope")


def test_approve_all_replays_the_journal_once(kb_dir):
    kb = KnowledgeBase.init(kb_dir)
    kb.enqueue_validation(make_template_entry(DISK))
    kb.enqueue_validation(make_template_entry(PIPE))
    assert len((kb_dir / PENDING_FILE).read_text(encoding="utf-8").splitlines()) == 2

    reloaded = KnowledgeBase.load(kb_dir)
    assert reloaded.approve_all() == 2
    assert reloaded.approve_all() == 0
    final = KnowledgeBase.load(kb_dir)
    assert final.counts()["templates_validated"] == 2
    assert final.pending() == []


def test_duplicate_entries_merge_support(kb_dir):
    kb = KnowledgeBase.init(kb_dir)
    kb.add_validated([make_template_entry(DISK, validated=True)])
    kb.add_validated([make_template_entry(DISK, validated=True)])
    assert kb.counts()["templates"] == 1
    assert kb.snapshot().templates[0].support_count == 2


def test_verify_flags_a_corrupted_embedding(storage_kb, kb_dir):
    storage_kb.save(kb_dir)
    assert KnowledgeBase.load(kb_dir).verify() == []
    lines = (kb_dir / TEMPLATES_FILE).read_text(encoding="utf-8").splitlines()
    rec = json.loads(lines[0])
    rec["embedding"]["values"][0] += 0.5
    lines[0] = json.dumps(rec)
    (kb_dir / TEMPLATES_FILE).write_text("\n".join(lines) + "\n", encoding="utf-8")
    problems = KnowledgeBase.load(kb_dir).verify()
    assert len(problems) == 1 and rec["template_id"] in problems[0]


def test_unvalidated_reports_wait_in_the_journal(storage_kb):
    before = storage_kb.counts()
    case = storage_kb.write_back(_local_report(validated=False))
    assert case is not None and not case.validated
    after = storage_kb.counts()
    assert after["cases"] == before["cases"] and after["cases_validated"] == before["cases_validated"]
    assert after["pending"] == before["pending"] + 1
    assert case.case_id not in [m.case_id for m in storage_kb.search_cases(DISK, 10)]

    storage_kb.approve(storage_kb.pending()[-1]["key"])
    assert storage_kb.counts()["cases_validated"] == before["cases_validated"] + 1
    assert case.case_id in [m.case_id for m in storage_kb.search_cases(case.indexed_text, 10)]


def test_validated_reports_apply_at_once_and_degraded_ones_never_queue(storage_kb):
    before = storage_kb.counts()
    degraded = _local_report(validated=False).model_copy(update={"degraded": True})
    assert storage_kb.write_back(degraded) is None
    assert storage_kb.counts()["pending"] == before["pending"]
    case = storage_kb.write_back(_local_report(validated=True))
    assert case is not None and case.validated
    assert storage_kb.counts()["cases"] == before["cases"] + 1
    assert storage_kb.counts()["pending"] == before["pending"]


def test_case_search_breaks_ties_by_case_id():
    kb = KnowledgeBase()
    kb.add_validated([
        make_case_entry("b-case", DISK, "cause b", "action b", validated=True),
        make_case_entry("a-case", DISK, "cause a", "action a", validated=True),
    ])
    matches = kb.search_cases(DISK, 2)
    assert [m.case_id for m in matches] == ["a-case", "b-case"]
    assert matches[0].similarity == pytest.approx(1.0)
    # no explicit mapping and no cause label shared with a mapped case
    assert matches[0].root_template_id is None


def test_cause_label_maps_through_other_cases(storage_kb):
    storage_kb.add_validated([make_case_entry("disk-2", "disk trouble", "Data disk failure", "swap it",
                                              validated=True)])
    match = [m for m in storage_kb.search_cases("disk trouble", 2) if m.case_id == "disk-2"][0]
    assert match.root_template_id == template_id_for(DISK)
