from pathlib import Path

import pytest

from edge_rca.utils.config import PipelineConfig, load_config, parse_override
from edge_rca.utils.errors import ConfigError

DEFAULT_YAML = Path(__file__).resolve().parents[1] / "configs" / "default.yaml"


def test_reference_file_mirrors_the_defaults():
    assert load_config(str(DEFAULT_YAML)).config_hash() == PipelineConfig().config_hash()


def test_overrides_are_typed_and_applied_last(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text("reasoning:\n  solve:\n    lambda_w: 0.2\n", encoding="utf-8")
    cfg = load_config(str(path), ["reasoning.solve.lambda_w=0.05", "eval.levels=[0.0, 1.0]"],
                      {"eval.seed": 7, "paths.kb_dir": None})
    assert cfg.reasoning.solve.lambda_w == 0.05
    assert cfg.eval.levels == [0.0, 1.0]
    assert cfg.eval.seed == 7
    assert cfg.paths.kb_dir == "kb"


@pytest.mark.parametrize("overrides", [
    ["reasoning.solve.lambda=0.1"],
    ["perception.delta_sim=1.5"],
    ["eval.levels=[0.3]"],
    ["reasoning.stride_ms=120000"],
    ["log_level=LOUD"],
    ["eval.seed"],
    ["reasoning.window_len_ms.x=1"],
])
def test_bad_settings_raise_config_errors(overrides):
    with pytest.raises(ConfigError):
        load_config(None, overrides)


def test_bad_files(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "absent.yaml"))
    listing = tmp_path / "list.yaml"
    listing.write_text("- 1\n- 2\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(str(listing))


def test_hash_ignores_paths_and_log_level():
    base = load_config().config_hash()
    assert load_config(None, ["paths.kb_dir=/tmp/elsewhere", "log_level=debug"]).config_hash() == base
    assert load_config(None, ["reasoning.solve.lambda_w=0.2"]).config_hash() != base


def test_parse_override_uses_yaml_scalars():
    assert parse_override("a.b=true") == ("a.b", True)
    assert parse_override("a.b = 3") == ("a.b", 3)
    assert parse_override("a.b=x=y") == ("a.b", "x=y")
