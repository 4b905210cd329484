import argparse

from edge_rca.harness.benchmark import run_case, summarize
from edge_rca.harness.methods import METHODS, get_method
from edge_rca.harness.suite import FLAVOURS, synthetic_suite
from edge_rca.utils.config import load_config
from edge_rca.utils.log import console, setup_logging
from edge_rca.utils.specs import NoiseConfig


def evaluate_pipeline(dataset: str, cases: int, method_name: str, noise: float, seed: int,
                      config: str = None, offline: bool = True):
    """Incident-by-incident walk through one method, printing each outcome as it lands."""
    overrides = ["client.backend=mock"] if offline else []
    cfg = load_config(config, overrides, {"eval.seed": seed})
    setup_logging(cfg.log_level)
    method = get_method(method_name)

    console.print(f"Building {dataset} suite ({cases} incidents, seed {seed})...")
    suite = synthetic_suite(dataset, cases, seed, cfg.eval.windows_per_case, cfg.reasoning.window_len_ms,
                            cfg.perception.embedding_dim)
    noise_cfg = NoiseConfig(level=noise, seed=seed, profile=suite.profile)

    console.print(f"Starting evaluation of {method.name} at noise {noise:.1f}...")
    outcomes = []
    for i, case in enumerate(suite.cases):
        o = run_case(method, case, suite, noise_cfg, cfg, cfg.config_hash())
        outcomes.append(o)
        console.print(f"Incident {i + 1}/{len(suite.cases)} [{case.case_id}]: "
                      f"PA={o.correct}/{o.n_lines}, Rank={o.rank}, RCA={o.rca_ok}, E2E={o.e2e_ok}, "
                      f"Local={o.local}, Calls={o.client_calls}")

    report = summarize(suite, method.name, noise_cfg.level, seed, outcomes)
    console.print("\nEvaluation Results:")
    console.print(f"Dataset: {dataset}")
    console.print(f"Incidents: {report.n_cases} ({report.n_logs} lines)")
    console.print(f"Parsing accuracy: {report.pa:.3f}")
    console.print(f"AvgRank: {report.avg_rank:.2f} ({report.misses} misses), edges/graph {report.sparsity:.1f}")
    console.print(f"RCA: {report.rca:.1%}  E2E: {report.e2e:.1%}")
    console.print(f"Routes: {report.route_counts}  model calls: {report.client_calls}")
    return report


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Evaluate one pipeline variant incident by incident")
    parser.add_argument("--dataset", type=str, default="storage", choices=sorted(FLAVOURS), help="Synthetic suite flavour")
    parser.add_argument("--cases", type=int, default=10, help="Number of incidents")
    parser.add_argument("--method", type=str, default="edge_pipeline", choices=sorted(METHODS), help="Method to evaluate")
    parser.add_argument("--noise", type=float, default=0.0, help="Noise level (0.0 .. 1.0 in steps of 0.2)")
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--config", type=str, default=None, help="YAML config file")
    parser.add_argument("--live", action="store_true", help="Use the configured model backend instead of the mock")

    args = parser.parse_args()

    evaluate_pipeline(args.dataset, args.cases, args.method, args.noise, args.seed, args.config, not args.live)
