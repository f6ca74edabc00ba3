"""
Settings (environment) and the pydantic run-configuration schema.
Run with pytest, or directly: python test_config.py
"""

import os
from pathlib import Path

import pytest
from pydantic import ValidationError

from swformer.config import Settings, settings
from swformer.models import (
    EpochRecord,
    ModelConfig,
    NeuronConfig,
    Polarity,
    RunConfig,
    RunRecord,
)
from swformer.testing import main_for


def test_settings_defaults():
    s = Settings(_env_file=None)
    assert s.SWF_THREADS == 0
    assert s.SWF_E_MAC_PJ == 4.6 and s.SWF_E_AC_PJ == 0.9
    assert s.SWF_RUN_SLOW is False
    assert isinstance(settings, Settings)


def test_settings_read_environment():
    previous = os.environ.get("SWF_THREADS")
    os.environ["SWF_THREADS"] = "2"
    try:
        assert Settings(_env_file=None).SWF_THREADS == 2
    finally:
        if previous is None:
            del os.environ["SWF_THREADS"]
        else:
            os.environ["SWF_THREADS"] = previous


def test_paths_resolve_against_data_dir():
    s = Settings(_env_file=None, SWF_DATA_DIR="/datasets", SWF_OUTPUT_DIR="out")
    assert s.get_data_path("mnist/x") == Path("/datasets/mnist/x")
    assert s.get_data_path("/abs/x") == Path("/abs/x")
    assert s.get_output_dir(Path("/work")) == Path("/work/out")


def test_run_config_defaults_and_extra_keys():
    cfg = RunConfig()
    assert cfg.model.wavelet_v_th == 1.0
    assert cfg.analysis.band == (0.5, 1.0)
    with pytest.raises(ValidationError):
        RunConfig.model_validate({"model": {"depth": 2, "heads": 8}})
    with pytest.raises(ValidationError):
        RunConfig.model_validate({"optimizer": {}})


def test_neuron_reset_defaults_follow_polarity():
    assert NeuronConfig().effective_reset == "hard"
    assert NeuronConfig(polarity=Polarity.TERNARY, beta=1.0).effective_reset == "subtract"
    assert NeuronConfig(reset_mode="subtract").effective_reset == "subtract"
    with pytest.raises(ValidationError):
        NeuronConfig(v_th=0.0)


def test_wavelet_neuron_follows_ablations():
    cfg = ModelConfig(input_size=(16, 16), wavelet_v_th=0.5)
    assert cfg.wavelet_neuron().polarity == Polarity.TERNARY
    assert cfg.wavelet_neuron().v_th == 0.5 and cfg.wavelet_neuron().beta == 1.0
    no_neg = ModelConfig(input_size=(16, 16), ablations=["no_neg", "no_neg"])
    assert no_neg.ablations == ["no_neg"]
    assert no_neg.wavelet_neuron().polarity == Polarity.BINARY


def test_model_geometry_properties():
    cfg = ModelConfig(embed_dim=32, blocks_k=4, input_size=(32, 32))
    assert cfg.token_side == 8 and cfg.num_tokens == 64 and cfg.block_dim == 8


def test_run_record_epoch_order():
    rec = RunRecord(epochs=[EpochRecord(epoch=1, split="train", loss=1.0, accuracy=0.5)])
    assert rec.final("train").accuracy == 0.5
    assert rec.final("val") is None
    with pytest.raises(ValidationError):
        RunRecord(
            epochs=[
                EpochRecord(epoch=2, split="train", loss=1.0, accuracy=0.5),
                EpochRecord(epoch=1, split="train", loss=1.0, accuracy=0.5),
            ]
        )


if __name__ == "__main__":
    main_for("CONFIG TEST", dict(globals()))
