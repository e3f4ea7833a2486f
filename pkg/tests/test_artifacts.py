import pytest

from functionality.artifacts import (
    apply_overrides,
    dump_config_text,
    load_config_text,
    read_config_file,
    read_json,
    require_artifact,
    write_config,
)
from functionality.errors import ConfigError, MissingArtifactError
from schemas.dataset import FeatureMode
from schemas.pipeline import PipelineConfig
from schemas.quantization import Granularity, QuantScheme


def test_config_text_round_trip(tmp_path):
    config = PipelineConfig(seed=9, records=["100", "101"], feature_mode=FeatureMode.SIX_PLUS_TWO)
    config = apply_overrides(config, {"detection.threshold_factor": 0.25, "train.frozen_layers": [0]})
    assert load_config_text(dump_config_text(config)) == config
    path = write_config(tmp_path, config)
    assert path.name == "pipeline_config.txt"
    assert read_config_file(path) == config


def test_config_file_lines():
    config = load_config_text("# comment\nseed = 4\ndetection.min_block_width = 10  # narrower\nrecords = 100, 119\n")
    assert config.seed == 4
    assert config.detection.min_block_width == 10
    assert config.records == ["100", "119"]


def test_config_errors():
    with pytest.raises(ConfigError, match="line 1"):
        load_config_text("seed 4")
    with pytest.raises(ConfigError, match="unknown key"):
        load_config_text("detection.window = 3")
    with pytest.raises(ConfigError, match="threads"):
        load_config_text("threads = 0")
    with pytest.raises(ConfigError, match="quantization.schemes"):
        load_config_text("quantization.schemes = fp32, int4")
    with pytest.raises(ConfigError):
        read_config_file("/nonexistent/pipeline_config.txt")


def test_overrides_skip_unset_flags():
    config = apply_overrides(PipelineConfig(), {"seed": None, "train.epochs": 3})
    assert config.seed == PipelineConfig().seed
    assert config.train.epochs == 3


def test_schemes_and_granularity_parse_to_enums():
    config = load_config_text("quantization.schemes = drq\nquantization.drq_granularity = per-sample\n")
    assert config.quantization.schemes == [QuantScheme.DRQ]
    assert config.quantization.drq_granularity is Granularity.PER_SAMPLE


def test_missing_artifact_names_the_stage(tmp_path):
    with pytest.raises(MissingArtifactError) as exc:
        require_artifact(tmp_path / "ingest" / "records.json", "ingest")
    assert "run `ingest` first" in exc.value.detail
    assert exc.value.exit_code == 1
    with pytest.raises(MissingArtifactError):
        read_json(tmp_path / "x.json", "features")
