"""
Persistent knowledge base: reference templates (L2 retrieval), causal priors,
troubleshooting cases and the validation journal.

On disk a KB is a directory of JSONL files (templates, priors, cases,
pending), one canonical JSON object per line, each carrying `schema_version`.
Readers work on an immutable view that is swapped on every write, so a
lookup never waits on the validation queue.
"""
import hashlib
import json
import logging
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import ValidationError

from edge_rca.utils.embedding import DEFAULT_DIM, embed
from edge_rca.utils.errors import MissingDirectory, SchemaVersionMismatch, UnknownEntry
from edge_rca.utils.specs import (
    CaseMatch,
    KbCaseEntry,
    KbPriorEntry,
    KbTemplateEntry,
    RcaReport,
)
from edge_rca.utils.text import norm, template_id_for

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
TEMPLATES_FILE = "templates.jsonl"
PRIORS_FILE = "priors.jsonl"
CASES_FILE = "cases.jsonl"
PENDING_FILE = "pending.jsonl"

KbEntry = Union[KbTemplateEntry, KbPriorEntry, KbCaseEntry]
_KINDS = {"template": KbTemplateEntry, "prior": KbPriorEntry, "case": KbCaseEntry}


def canonical_line(record: Dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"), ensure_ascii=False) + "\n"


def _kind_of(entry: KbEntry) -> str:
    if isinstance(entry, KbTemplateEntry):
        return "template"
    if isinstance(entry, KbPriorEntry):
        return "prior"
    return "case"


def _entry_id(entry: KbEntry) -> str:
    if isinstance(entry, KbTemplateEntry):
        return entry.template_id
    if isinstance(entry, KbPriorEntry):
        return "|".join(entry.key)
    return entry.case_id


def make_template_entry(text: str, added_at: int = 0, validated: bool = False,
                        dim: int = DEFAULT_DIM) -> KbTemplateEntry:
    canonical = norm(text)
    return KbTemplateEntry(template_id=template_id_for(canonical), text=canonical,
                           embedding=embed(canonical, dim), validated=validated, added_at=added_at)


def make_prior_entry(src: str, dst: str, family: str = "intra", validated: bool = False) -> KbPriorEntry:
    return KbPriorEntry(src_template_id=src, dst_template_id=dst, family=family, validated=validated)


def make_case_entry(case_id: str, indexed_text: str, root_cause_label: str, repair_action: str,
                    template_refs: Sequence[str] = (), root_template_id: Optional[str] = None,
                    validated: bool = False, dim: int = DEFAULT_DIM) -> KbCaseEntry:
    canonical = norm(indexed_text)
    return KbCaseEntry(case_id=case_id, indexed_text=canonical, embedding=embed(canonical, dim),
                       root_cause_label=root_cause_label, repair_action=repair_action,
                       template_refs=list(template_refs), root_template_id=root_template_id,
                       validated=validated)


@dataclass(frozen=True, eq=False)
class KbView:
    """Point-in-time, validated-only view used by every reader."""
    templates: Tuple[KbTemplateEntry, ...] = ()
    template_matrix: np.ndarray = field(default_factory=lambda: np.zeros((0, DEFAULT_DIM)))
    priors: Tuple[KbPriorEntry, ...] = ()
    cases: Tuple[KbCaseEntry, ...] = ()
    case_matrix: np.ndarray = field(default_factory=lambda: np.zeros((0, DEFAULT_DIM)))
    # normalized root-cause label -> template id
    cause_map: Dict[str, str] = field(default_factory=dict)
    template_text: Dict[str, str] = field(default_factory=dict)

    def search_templates(self, query: str, delta_sim: float, dim: int = DEFAULT_DIM
                         ) -> Optional[Tuple[KbTemplateEntry, float]]:
        """Best template with cosine >= delta_sim; ties go to the lowest template_id."""
        if not self.templates:
            return None
        sims = self.template_matrix @ embed(query, dim).values
        best = float(sims.max())
        if best < delta_sim:
            return None
        # templates are sorted by id, so the first maximum is the lowest id
        idx = int(np.flatnonzero(sims >= best - 1e-12)[0])
        return self.templates[idx], min(best, 1.0)

    def search_cases(self, query: str, top_n: int, dim: int = DEFAULT_DIM) -> List[CaseMatch]:
        if not self.cases or top_n <= 0:
            return []
        sims = self.case_matrix @ embed(query, dim).values
        order = sorted(range(len(self.cases)), key=lambda i: (-round(float(sims[i]), 12), self.cases[i].case_id))
        matches = []
        for i in order[:top_n]:
            case = self.cases[i]
            mapped = case.root_template_id or self.cause_map.get(norm(case.root_cause_label))
            matches.append(CaseMatch(
                case_id=case.case_id,
                similarity=float(np.clip(sims[i], 0.0, 1.0)),
                root_cause_label=case.root_cause_label,
                repair_action=case.repair_action,
                root_template_id=mapped,
            ))
        return matches


class KnowledgeBase:
    """
    Single-writer / multi-reader store. `path=None` keeps everything in
    memory (harness cells); otherwise every write is persisted.
    """
    def __init__(self, path: Optional[Union[str, Path]] = None, dim: int = DEFAULT_DIM):
        self.path = Path(path) if path is not None else None
        self.dim = dim
        self._templates: Dict[str, KbTemplateEntry] = {}
        self._priors: Dict[Tuple[str, str, str], KbPriorEntry] = {}
        self._cases: Dict[str, KbCaseEntry] = {}
        self._pending: List[Dict] = []
        self._journal_size = 0
        self._lock = threading.RLock()
        self._view = KbView(template_matrix=np.zeros((0, dim)), case_matrix=np.zeros((0, dim)))
        self.diagnostics: List[str] = []

    # ------------------------------------------------------------------
    # persistence
    # ------------------------------------------------------------------

    @classmethod
    def init(cls, path: Union[str, Path], dim: int = DEFAULT_DIM) -> "KnowledgeBase":
        p = Path(path)
        p.mkdir(parents=True, exist_ok=True)
        for name in (TEMPLATES_FILE, PRIORS_FILE, CASES_FILE, PENDING_FILE):
            (p / name).touch(exist_ok=True)
        return cls.load(p, dim=dim)

    @classmethod
    def load(cls, path: Union[str, Path], dim: int = DEFAULT_DIM) -> "KnowledgeBase":
        p = Path(path)
        if not p.is_dir():
            raise MissingDirectory(f"knowledge base directory {p} does not exist")
        kb = cls(p, dim=dim)
        for rec in kb._read(TEMPLATES_FILE):
            entry = kb._parse(KbTemplateEntry, rec, TEMPLATES_FILE)
            if entry is not None:
                kb._templates[entry.template_id] = entry
        for rec in kb._read(PRIORS_FILE):
            entry = kb._parse(KbPriorEntry, rec, PRIORS_FILE)
            if entry is not None:
                kb._priors[entry.key] = entry
        for rec in kb._read(CASES_FILE):
            entry = kb._parse(KbCaseEntry, rec, CASES_FILE)
            if entry is not None:
                kb._cases[entry.case_id] = entry
        for rec in kb._read(PENDING_FILE):
            rec.pop("_line", None)
            if rec.get("kind") in _KINDS and "key" in rec and isinstance(rec.get("entry"), dict):
                kb._pending.append(rec)
            else:
                kb._diag(f"{PENDING_FILE}: record without kind/key/entry")
        # applied records are compacted out of pending.jsonl but keep their keys on the entries
        applied_keys = sum(len(e.journal_keys) for store in (kb._templates, kb._priors, kb._cases)
                           for e in store.values())
        kb._journal_size = len(kb._pending) + applied_keys
        kb._rebuild_view()
        logger.info("loaded KB %s: %s", p, kb.counts())
        return kb

    def _diag(self, message: str) -> None:
        self.diagnostics.append(message)
        logger.warning("KB: %s", message)

    def _read(self, name: str) -> List[Dict]:
        f = self.path / name
        if not f.is_file():
            return []
        records = []
        for lineno, line in enumerate(f.read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                self._diag(f"{name}:{lineno}: malformed JSON ({e.msg})")
                continue
            if not isinstance(rec, dict) or "schema_version" not in rec:
                self._diag(f"{name}:{lineno}: missing schema_version")
                continue
            if rec["schema_version"] != SCHEMA_VERSION:
                raise SchemaVersionMismatch(
                    f"{name}:{lineno}: schema_version {rec['schema_version']} != {SCHEMA_VERSION}")
            rec["_line"] = f"{name}:{lineno}"
            records.append(rec)
        return records

    def _parse(self, model, rec: Dict, name: str):
        where = rec.pop("_line", name)
        rec.pop("schema_version", None)
        try:
            return model.model_validate(rec)
        except ValidationError as e:
            self._diag(f"{where}: invalid entry ({e.error_count()} errors)")
            return None

    @staticmethod
    def _record(entry: KbEntry) -> Dict:
        return {"schema_version": SCHEMA_VERSION, **entry.model_dump(mode="json")}

    def save(self, path: Optional[Union[str, Path]] = None) -> None:
        """Rewrite all files canonically (sorted by id). Applied journal records are compacted away."""
        target = Path(path) if path is not None else self.path
        if target is None:
            return
        target.mkdir(parents=True, exist_ok=True)
        with self._lock:
            files = {
                TEMPLATES_FILE: [self._record(self._templates[k]) for k in sorted(self._templates)],
                PRIORS_FILE: [self._record(self._priors[k]) for k in sorted(self._priors)],
                CASES_FILE: [self._record(self._cases[k]) for k in sorted(self._cases)],
                PENDING_FILE: [r for r in self._pending if not self._is_applied(r)],
            }
            for name, records in files.items():
                tmp = target / (name + ".tmp")
                with tmp.open("w", encoding="utf-8", newline="\n") as fh:
                    fh.writelines(canonical_line(r) for r in records)
                tmp.replace(target / name)

    # ------------------------------------------------------------------
    # views
    # ------------------------------------------------------------------

    def _rebuild_view(self) -> None:
        templates = tuple(self._templates[k] for k in sorted(self._templates) if self._templates[k].validated)
        cases = tuple(self._cases[k] for k in sorted(self._cases) if self._cases[k].validated)
        priors = tuple(self._priors[k] for k in sorted(self._priors) if self._priors[k].validated)
        t_mat = np.vstack([t.embedding.values for t in templates]) if templates else np.zeros((0, self.dim))
        c_mat = np.vstack([c.embedding.values for c in cases]) if cases else np.zeros((0, self.dim))
        cause_map: Dict[str, str] = {}
        for c in cases:
            if c.root_template_id:
                cause_map.setdefault(norm(c.root_cause_label), c.root_template_id)
        self._view = KbView(templates=templates, template_matrix=t_mat, priors=priors, cases=cases,
                            case_matrix=c_mat, cause_map=cause_map,
                            template_text={t.template_id: t.text for t in templates})

    def snapshot(self) -> KbView:
        return self._view

    def search_templates(self, query: str, delta_sim: float) -> Optional[Tuple[KbTemplateEntry, float]]:
        return self._view.search_templates(query, delta_sim, self.dim)

    def search_cases(self, query: str, top_n: int) -> List[CaseMatch]:
        return self._view.search_cases(query, top_n, self.dim)

    def template_text(self, template_id: str) -> Optional[str]:
        return self._view.template_text.get(template_id)

    def priors_for(self, event_order: Sequence[str]) -> Tuple[List[Tuple[int, int]], List[Tuple[int, int]]]:
        """Validated prior pairs restricted to `event_order`, as (row, col) indices."""
        index = {tid: i for i, tid in enumerate(event_order)}
        p_w, p_a = set(), set()
        dropped = 0
        for prior in self._view.priors:
            i = index.get(prior.src_template_id)
            j = index.get(prior.dst_template_id)
            if i is None or j is None:
                dropped += 1
                continue
            if prior.family == "intra":
                if i != j:
                    p_w.add((i, j))
            else:
                p_a.add((i, j))
        if dropped:
            logger.debug("%d prior pair(s) reference templates outside this incident; dropped", dropped)
        return sorted(p_w), sorted(p_a)

    # ------------------------------------------------------------------
    # validation queue
    # ------------------------------------------------------------------

    def _is_applied(self, rec: Dict) -> bool:
        key = rec["key"]
        kind = rec["kind"]
        entry_id = rec.get("entry_id", "")
        store = {"template": self._templates, "case": self._cases}.get(kind)
        if kind == "prior":
            parts = tuple(entry_id.split("|"))
            target = self._priors.get(parts) if len(parts) == 3 else None
        else:
            target = store.get(entry_id) if store is not None else None
        return target is not None and key in target.journal_keys

    def enqueue_validation(self, entry: KbEntry) -> str:
        """Append to the pending journal and return its key. Never blocks readers."""
        kind = _kind_of(entry)
        entry_id = _entry_id(entry)
        with self._lock:
            key = hashlib.sha256(f"{kind}|{entry_id}|{self._journal_size}".encode("utf-8")).hexdigest()[:16]
            rec = {"schema_version": SCHEMA_VERSION, "kind": kind, "key": key, "entry_id": entry_id,
                   "entry": entry.model_dump(mode="json")}
            self._pending.append(rec)
            self._journal_size += 1
            if self.path is not None:
                self.path.mkdir(parents=True, exist_ok=True)
                with (self.path / PENDING_FILE).open("a", encoding="utf-8", newline="\n") as fh:
                    fh.write(canonical_line(rec))
        return key

    def pending(self) -> List[Dict]:
        with self._lock:
            return [r for r in self._pending if not self._is_applied(r)]

    def apply_validated(self, entry: KbEntry, journal_key: Optional[str] = None, persist: bool = True) -> KbEntry:
        """
        Move an entry into the main store with validated=true. Duplicates merge
        by id with a support_count increment; a journal key already applied is a
        no-op, so replaying the journal is idempotent.
        """
        kind = _kind_of(entry)
        entry_id = _entry_id(entry)
        with self._lock:
            if kind == "template":
                store = self._templates
                key = entry_id
            elif kind == "prior":
                store = self._priors
                key = entry.key
            else:
                store = self._cases
                key = entry_id
            existing = store.get(key)
            if existing is not None and journal_key is not None and journal_key in existing.journal_keys:
                return existing
            if existing is None:
                merged = entry.model_copy(update={"validated": True, "journal_keys": []})
            else:
                merged = existing.model_copy(update={
                    "validated": True,
                    "support_count": existing.support_count + entry.support_count,
                })
            if journal_key is not None:
                merged = merged.model_copy(update={"journal_keys": sorted(set(merged.journal_keys) | {journal_key})})
            store[key] = merged
            self._rebuild_view()
            if persist:
                self.save()
            return merged

    def approve(self, journal_key: str) -> KbEntry:
        with self._lock:
            for rec in self._pending:
                if rec["key"] == journal_key:
                    entry = _KINDS[rec["kind"]].model_validate(rec["entry"])
                    return self.apply_validated(entry, journal_key)
        raise UnknownEntry(f"no pending entry with key {journal_key}")

    def approve_all(self) -> int:
        """Apply every journal record; records already applied are skipped."""
        applied = 0
        with self._lock:
            for rec in list(self._pending):
                if self._is_applied(rec):
                    continue
                entry = _KINDS[rec["kind"]].model_validate(rec["entry"])
                self.apply_validated(entry, rec["key"], persist=False)
                applied += 1
            self.save()
        return applied

    def add_validated(self, entries: Sequence[KbEntry]) -> None:
        """Bulk load of already-validated fixture entries (harness, kb bootstrap)."""
        with self._lock:
            for entry in entries:
                self.apply_validated(entry, persist=False)
            self.save()

    def write_back(self, report: RcaReport) -> Optional[KbCaseEntry]:
        """
        Turn a diagnosis into a troubleshooting case. A validated report is applied
        right away. Anything else is only queued in the pending journal, so the
        main stores stay untouched until `approve` / `approve_all`. Degraded
        reports are never queued.
        """
        if report.degraded and not report.validated:
            logger.debug("degraded report; KB write-back skipped")
            return None
        texts = [c.get("text", "") for c in report.evidence.get("candidates", [])]
        indexed = " ".join(t for t in texts if t) or report.root_cause
        digest = hashlib.sha256(
            f"{report.root_template_id}|{norm(report.root_cause)}|{norm(report.action)}".encode("utf-8")
        ).hexdigest()[:12]
        case = make_case_entry(f"C{digest}", indexed, report.root_cause, report.action,
                               template_refs=[c.get("template_id", "") for c in report.evidence.get("candidates", [])],
                               root_template_id=report.root_template_id, dim=self.dim)
        key = self.enqueue_validation(case)
        if not report.validated:
            logger.info("diagnosis queued as case %s (journal key %s)", case.case_id, key)
            return case
        return self.apply_validated(case, key)

    # ------------------------------------------------------------------
    # maintenance
    # ------------------------------------------------------------------

    def verify(self, tol: float = 1e-9) -> List[str]:
        """Stored embeddings must equal embed(text)."""
        problems = []
        for t in self._templates.values():
            if t.template_id != template_id_for(t.text):
                problems.append(f"template {t.template_id}: id does not match its text")
            if not _same_vector(t.embedding.values, embed(t.text, self.dim).values, tol):
                problems.append(f"template {t.template_id}: embedding differs from embed(text)")
        for c in self._cases.values():
            if not _same_vector(c.embedding.values, embed(c.indexed_text, self.dim).values, tol):
                problems.append(f"case {c.case_id}: embedding differs from embed(indexed_text)")
        return problems

    def counts(self) -> Dict[str, int]:
        view = self._view
        return {
            "templates": len(self._templates),
            "templates_validated": len(view.templates),
            "priors_intra": sum(1 for p in view.priors if p.family == "intra"),
            "priors_inter": sum(1 for p in view.priors if p.family == "inter"),
            "cases": len(self._cases),
            "cases_validated": len(view.cases),
            "pending": len(self.pending()),
            "diagnostics": len(self.diagnostics),
        }

    def is_empty(self) -> bool:
        return not self._view.templates


def _same_vector(a: np.ndarray, b: np.ndarray, tol: float) -> bool:
    return a.shape == b.shape and bool(np.max(np.abs(a - b), initial=0.0) <= tol)
