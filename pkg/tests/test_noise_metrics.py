import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edge_rca.harness.metrics import avg_rank, correct_lines, edge_rank, parsing_accuracy, rca_and_e2e, sparsity
from edge_rca.harness.noise import inject_noise, profile_table
from edge_rca.utils.errors import LengthMismatch
from edge_rca.utils.specs import CausalEdge, CausalGraph, DeterministicCertificate, NoiseConfig, RcaReport

STORAGE_LINE = "Received block blk_-42 of size 67108864 from /10.0.0.1:50010, status error"


def _noisy(line, level, seed=42, profile="storage"):
    return inject_noise(line, NoiseConfig(level=level, seed=seed, profile=profile))


def _report(cause, action):
    cert = DeterministicCertificate(top_similarity=1.0, second_similarity=None, label_agrees=True,
                                    margin_ok=True, min_similarity=0.9, margin_ratio=0.8)
    return RcaReport(root_cause=cause, action=action, decision_path="local", certificate=cert)


# -------------------------------------------------------------------------
# noise
# -------------------------------------------------------------------------

def test_level_zero_is_identity():
    assert _noisy(STORAGE_LINE, 0.0) == STORAGE_LINE


def test_full_noise_rewrites_every_eligible_token():
    tokens = _noisy(STORAGE_LINE, 1.0).split(" ")
    assert tokens[0] in ("Got", "Accepted")
    assert tokens[1] in ("chunk", "blk")
    assert tokens[2] == "blk_-42" and tokens[3] == "of"
    assert tokens[4] in ("length", "bytes")
    assert tokens[7] == "/10.0.0.1:50010,"
    assert tokens[9] in ("failure", "fault")


def test_noise_is_deterministic():
    assert _noisy(STORAGE_LINE, 0.6, seed=7) == _noisy(STORAGE_LINE, 0.6, seed=7)


def test_profiles_choose_their_tables():
    line = "compute node 10.1.2.3 heartbeat ok"
    assert _noisy(line, 1.0, profile="control_plane") == line
    assert _noisy(line, 1.0, profile="storage").endswith(("fine", "healthy"))
    assert "block" not in profile_table("control_plane")


def test_unknown_levels_are_rejected():
    with pytest.raises(ValueError):
        NoiseConfig(level=0.3)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**32), low=st.sampled_from([0.2, 0.4, 0.6]),
       high=st.sampled_from([0.8, 1.0]))
def test_higher_levels_perturb_a_superset(seed, low, high):
    clean = STORAGE_LINE.split(" ")
    lo = _noisy(STORAGE_LINE, low, seed).split(" ")
    hi = _noisy(STORAGE_LINE, high, seed).split(" ")
    assert len(lo) == len(hi) == len(clean)
    changed_lo = {i for i, (a, b) in enumerate(zip(clean, lo)) if a != b}
    changed_hi = {i for i, (a, b) in enumerate(zip(clean, hi)) if a != b}
    assert changed_lo <= changed_hi
    for i in changed_lo:
        assert lo[i] == hi[i]


# -------------------------------------------------------------------------
# metrics
# -------------------------------------------------------------------------

def test_parsing_accuracy():
    assert parsing_accuracy(["a <*>", "B  <*>", "c"], ["a <*>", "b <*>", "d"]) == pytest.approx(2 / 3)
    assert correct_lines(["x"], ["X"]) == 1
    assert parsing_accuracy([], []) == 0.0
    with pytest.raises(LengthMismatch):
        parsing_accuracy(["a"], [])


def test_edge_rank_orders_by_weight():
    graph = CausalGraph(nodes=["a", "b", "c"],
                        intra_edges=[CausalEdge(src="a", dst="b", weight=0.2),
                                     CausalEdge(src="b", dst="c", weight=-0.9)],
                        inter_edges=[CausalEdge(src="a", dst="c", weight=0.5, lag=1)])
    assert edge_rank(graph, ("b", "c")) == (1, True)
    assert edge_rank(graph, ("a", "c")) == (2, True)
    assert edge_rank(graph, ("a", "b")) == (3, True)


def test_missing_relation_ranks_after_every_edge():
    nodes = [f"n{i}" for i in range(6)]
    edges = [CausalEdge(src=nodes[i], dst=nodes[i + 1], weight=0.1 * (i + 1)) for i in range(5)]
    graph = CausalGraph(nodes=nodes, intra_edges=edges)
    assert edge_rank(graph, ("n5", "n0")) == (6, False)
    assert edge_rank(CausalGraph(nodes=[]), ("a", "b")) == (1, False)


def test_rank_and_sparsity_means():
    assert avg_rank([1, 2, 3]) == 2.0
    assert avg_rank([]) == 0.0
    assert sparsity([2, 4]) == 3.0
    assert sparsity([]) == 0.0


def test_end_to_end_is_conjunctive():
    outcomes = [rca_and_e2e(_report("Disk Failure ", "replace disk"), "disk failure", "replace disk"),
                rca_and_e2e(_report("disk failure", "reboot"), "disk failure", "replace disk")]
    rca = sum(r for r, _ in outcomes) / len(outcomes)
    e2e = sum(e for _, e in outcomes) / len(outcomes)
    assert (rca, e2e) == (1.0, 0.5)
    assert rca_and_e2e(_report("network", "replace disk"), "disk failure", "replace disk") == (False, False)
