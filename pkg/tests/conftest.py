import pytest

from edge_rca.clients.mock_client import MockModelClient
from edge_rca.harness.suite import synthetic_suite
from edge_rca.kb.knowledge_base import KnowledgeBase, make_case_entry, make_prior_entry, make_template_entry
from edge_rca.utils.config import PipelineConfig
from edge_rca.utils.specs import CausalEdge, CausalGraph
from edge_rca.utils.text import template_id_for

DISK = "disk error on volume <*> while serving block <*>"
PIPE = "write pipeline failed for block <*> status error"
RECV = "received block <*> of size <*> from <*>"


@pytest.fixture
def kb_dir(tmp_path):
    return tmp_path / "kb"


@pytest.fixture
def storage_kb():
    """In-memory KB with three validated templates, one prior and one case."""
    kb = KnowledgeBase()
    kb.add_validated([
        make_template_entry(DISK, validated=True),
        make_template_entry(PIPE, validated=True),
        make_template_entry(RECV, validated=True),
        make_prior_entry(template_id_for(DISK), template_id_for(PIPE), "intra", validated=True),
        make_case_entry("disk-1", f"{DISK} {PIPE}", "data disk failure", "replace the failed disk",
                        template_refs=[template_id_for(DISK), template_id_for(PIPE)],
                        root_template_id=template_id_for(DISK), validated=True),
    ])
    return kb


@pytest.fixture
def disk_graph():
    """DISK -> PIPE with a clear weight; DISK is the only root."""
    d, p = template_id_for(DISK), template_id_for(PIPE)
    return CausalGraph(nodes=[d, p], labels={d: DISK, p: PIPE},
                       intra_edges=[CausalEdge(src=d, dst=p, weight=0.9)])


@pytest.fixture
def mock_client():
    return MockModelClient()


@pytest.fixture
def fast_cfg():
    cfg = PipelineConfig()
    cfg.eval.n_cases = 2
    cfg.eval.windows_per_case = 12
    cfg.eval.levels = [0.0, 1.0]
    cfg.eval.sample_interval_ms = 20
    return cfg


@pytest.fixture
def small_suite():
    return synthetic_suite("storage", n_cases=2, seed=7, windows=12)
