"""
Benchmark suites: seeded synthetic incidents per dataset flavour, and
parsing-only suites cut from Loghub structured CSVs.

A synthetic incident is a run of tumbling windows. Background templates fire
at independent Poisson rates; the fault's root template fires in a few burst
windows and its effect template follows at ~1.5x the root count in the same
window.
"""
import logging
import re
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from edge_rca.data.loaders import DatasetEntry, load_manifest, load_structured_csv
from edge_rca.kb.knowledge_base import make_case_entry, make_prior_entry, make_template_entry
from edge_rca.utils.config import PipelineConfig
from edge_rca.utils.errors import DataError
from edge_rca.utils.specs import BenchmarkCase, BenchmarkSuite, RawLog
from edge_rca.utils.text import PLACEHOLDER, norm, template_id_for

logger = logging.getLogger(__name__)

_SLOT = re.compile(r"\{(\w+)\}")
BASE_MS = 1_700_000_000_000


@dataclass(frozen=True)
class Fault:
    name: str
    root: str
    effect: str
    root_cause: str
    action: str


@dataclass(frozen=True)
class Flavour:
    background: Tuple[str, ...]
    faults: Tuple[Fault, ...]
    # strftime format of the leading timestamp header
    ts_format: str


_SLOTS: Dict[str, Callable[[np.random.Generator], str]] = {
    "blk": lambda rng: f"blk_{'-' if rng.random() < 0.5 else ''}{int(rng.integers(10**9, 10**10))}",
    "addr": lambda rng: f"/10.{int(rng.integers(256))}.{int(rng.integers(256))}.{int(rng.integers(1, 255))}:50010",
    "ip": lambda rng: f"10.{int(rng.integers(256))}.{int(rng.integers(256))}.{int(rng.integers(1, 255))}",
    "num": lambda rng: str(int(rng.integers(1, 5000))),
    "float": lambda rng: f"{rng.uniform(0.01, 9.99):.2f}",
    "path": lambda rng: f"/data/dfs/dn{int(rng.integers(1, 12))}/current",
    "hex": lambda rng: f"a{int(rng.integers(0, 2**40)):010x}7",
}

STORAGE = Flavour(
    background=(
        "receiving block {blk} src: {addr} dest: {addr}",
        "received block {blk} of size {num} from {addr}",
        "packetresponder {num} for block {blk} terminating",
        "verification succeeded for {blk}",
        "deleting block {blk} file {path}",
    ),
    faults=(
        Fault("disk_failure",
              "disk error on volume {path} while serving block {blk}",
              "write pipeline failed for block {blk} status error",
              "data disk failure", "replace the failed disk and re-replicate its blocks"),
        Fault("network_partition",
              "connection to datanode {addr} timed out after {num} ms",
              "replication of {blk} failed with {num} pending retries",
              "datanode network partition", "restore network connectivity to the datanode"),
        Fault("namenode_pressure",
              "namenode heap usage {num} percent gc pause {num} ms",
              "rpc queue exhausted on port {num}",
              "namenode memory pressure", "increase namenode heap and restart it"),
    ),
    ts_format="%y%m%d %H%M%S",
)

CONTROL_PLANE = Flavour(
    background=(
        "get request for servers detail returned status {num} in {float} seconds",
        "instance {hex} spawned successfully in {float} seconds",
        "scheduler selected host {ip} for instance {hex}",
        "compute node {ip} heartbeat ok",
        "took {float} seconds to deallocate network for instance {hex}",
    ),
    faults=(
        Fault("mq_outage",
              "amqp server on {ip} is unreachable",
              "timed out waiting for a reply to message id {hex}",
              "message queue outage", "restart the message broker"),
        Fault("image_store",
              "image download failed with status {num}",
              "build of instance {hex} aborted after {num} retries",
              "image store unavailable", "restore the image service backend"),
        Fault("quota",
              "quota exceeded for project {hex} cores {num}",
              "no valid host was found for request {hex}",
              "compute quota exhausted", "raise the project quota"),
    ),
    ts_format="%Y-%m-%d %H:%M:%S.%f",
)

HETEROGENEOUS = Flavour(
    background=STORAGE.background[:2] + CONTROL_PLANE.background[:2] + (
        "user {num} login succeeded from {ip}",
        "cache miss for key {hex}",
        "connection pool size {num} active {num}",
    ),
    faults=(STORAGE.faults[0], CONTROL_PLANE.faults[0], Fault(
        "pool_exhaustion",
        "database connection pool exhausted active {num}",
        "http request {hex} failed with status {num}",
        "database connection pool exhaustion", "increase the pool size and recycle stale connections",
    )),
    ts_format="%Y-%m-%d %H:%M:%S.%f",
)

FLAVOURS: Dict[str, Flavour] = {
    "storage": STORAGE,
    "control_plane": CONTROL_PLANE,
    "heterogeneous": HETEROGENEOUS,
}


def truth_of(spec: str) -> str:
    return norm(_SLOT.sub(PLACEHOLDER, spec))


def render(spec: str, rng: np.random.Generator) -> str:
    return _SLOT.sub(lambda m: _SLOTS[m.group(1)](rng), spec)


def _stamp(ts_ms: int, fmt: str) -> str:
    moment = datetime.fromtimestamp(ts_ms // 1000, tz=timezone.utc) + timedelta(milliseconds=ts_ms % 1000)
    text = moment.strftime(fmt)
    # %f gives microseconds; keep millis
    return text[:-3] if fmt.endswith("%f") else text


def _incident(flavour: Flavour, fault: Fault, case_id: str, start_ms: int, windows: int,
              window_len_ms: int, rng: np.random.Generator) -> BenchmarkCase:
    rates = rng.uniform(2.0, 4.0, size=len(flavour.background))
    # roughly a quarter of the windows carry the fault burst
    bursts = set(rng.choice(windows, size=max(2, windows // 4), replace=False).tolist())
    stamped: List[Tuple[int, int, str, str]] = []
    for u in range(windows):
        w0 = start_ms + u * window_len_ms
        plan: List[Tuple[str, int]] = [(spec, int(rng.poisson(rate))) for spec, rate in zip(flavour.background, rates)]
        root_n = int(rng.poisson(6.0 if u in bursts else 0.5))
        # effect follows its root at ~1.5x, plus a little stray noise
        effect_n = int(round(1.5 * root_n)) + int(rng.poisson(0.3))
        plan += [(fault.root, root_n), (fault.effect, effect_n)]
        for spec, n in plan:
            for _ in range(n):
                ts = w0 + int(rng.integers(window_len_ms))
                stamped.append((ts, len(stamped), render(spec, rng), truth_of(spec)))
    stamped.sort()
    # seq is assigned after sorting so it follows time order
    logs, truths = [], []
    for seq, (ts, _, body, truth) in enumerate(stamped):
        logs.append(RawLog(line=f"{_stamp(ts, flavour.ts_format)} {body}", source_id=case_id, seq=seq))
        truths.append(truth)
    return BenchmarkCase(
        case_id=case_id,
        logs=logs,
        truth_templates=truths,
        root_relation=(template_id_for(truth_of(fault.root)), template_id_for(truth_of(fault.effect))),
        root_cause=fault.root_cause,
        action=fault.action,
    )


def synthetic_suite(dataset: str, n_cases: int = 10, seed: int = 42, windows: int = 24,
                    window_len_ms: int = 60_000, dim: int = 256) -> BenchmarkSuite:
    """Seeded incidents for one flavour plus the validated KB fixture they are diagnosed against."""
    if dataset not in FLAVOURS:
        raise DataError(f"unknown synthetic dataset {dataset!r}; known: {sorted(FLAVOURS)}")
    flavour = FLAVOURS[dataset]
    rng = np.random.default_rng(seed)

    specs = list(flavour.background) + [s for f in flavour.faults for s in (f.root, f.effect)]
    templates = [make_template_entry(truth_of(s), validated=True, dim=dim) for s in specs]
    priors, kb_cases = [], []
    for f in flavour.faults:
        root_id, effect_id = template_id_for(truth_of(f.root)), template_id_for(truth_of(f.effect))
        priors.append(make_prior_entry(root_id, effect_id, "intra", validated=True))
        kb_cases.append(make_case_entry(
            f"{dataset}-{f.name}", f"{truth_of(f.root)} {truth_of(f.effect)}", f.root_cause, f.action,
            template_refs=[root_id, effect_id], root_template_id=root_id, validated=True, dim=dim,
        ))

    cases = []
    for i in range(n_cases):
        fault = flavour.faults[int(rng.integers(len(flavour.faults)))]
        start = BASE_MS + i * (windows + 1) * window_len_ms
        cases.append(_incident(flavour, fault, f"{dataset}-{i:03d}", start, windows, window_len_ms, rng))
    return BenchmarkSuite(dataset=dataset, profile=dataset, kb_templates=templates, kb_priors=priors,
                          kb_cases=kb_cases, cases=cases)


def loghub_suite(entry: DatasetEntry, chunk_lines: int = 1000, dim: int = 256,
                 profile: str = "storage") -> BenchmarkSuite:
    """Parsing-only suite: the structured CSV cut into chunks; the KB holds every ground-truth template."""
    if not entry.structured:
        raise DataError(f"dataset {entry.name!r} has no structured CSV with ground-truth templates")
    contents, truths = load_structured_csv(entry.structured, entry.limit)
    truths = [norm(t) for t in truths]
    templates = [make_template_entry(t, validated=True, dim=dim) for t in sorted(set(truths))]
    cases = []
    for k, start in enumerate(range(0, len(contents), chunk_lines)):
        case_id = f"{entry.name}-{k:03d}"
        chunk = contents[start:start + chunk_lines]
        cases.append(BenchmarkCase(
            case_id=case_id,
            logs=[RawLog(line=line or PLACEHOLDER, source_id=case_id, seq=i) for i, line in enumerate(chunk)],
            truth_templates=truths[start:start + chunk_lines],
        ))
    logger.info("%s: %d lines, %d templates, %d chunk(s)", entry.name, len(contents), len(templates), len(cases))
    return BenchmarkSuite(dataset=entry.name, profile=entry.profile or profile, kb_templates=templates,
                          cases=cases, parsing_only=True)


def load_suite(name: str, cfg: PipelineConfig, manifest: Optional[str] = None) -> BenchmarkSuite:
    """A synthetic flavour by name, else a dataset listed in the manifest."""
    ev = cfg.eval
    if name in FLAVOURS:
        return synthetic_suite(name, ev.n_cases, ev.seed, ev.windows_per_case,
                               cfg.reasoning.window_len_ms, cfg.perception.embedding_dim)
    path = manifest or ev.manifest
    if path is None:
        raise DataError(f"dataset {name!r} is not a synthetic flavour and no manifest was given")
    entry = load_manifest(path).get(name)
    if entry is None:
        raise DataError(f"dataset {name!r} not found in manifest {path}")
    return loghub_suite(entry, dim=cfg.perception.embedding_dim, profile=ev.profile)
