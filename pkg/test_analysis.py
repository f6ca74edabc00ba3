"""
Feature-map spectra and synaptic-operation / energy accounting.
Run with pytest, or directly: python test_analysis.py
"""

import json
import math

import pytest
import torch

from swformer.analysis.energy import count_sops, energy_ratio, sops_matching, trace_model, write_energy_report
from swformer.analysis.spectrum import (
    NEG_INF,
    SpectrumProfile,
    compare_highfreq,
    spectrum,
    spectrum_of_map,
    write_gnuplot_data,
    write_spectrum_csv,
)
from swformer.data.datasets import Dataset, InputKind
from swformer.data.synthetic import synthetic_patterns
from swformer.errors import DimensionError, PreconditionError, UndefinedProfileError
from swformer.models import ModelConfig, TrainConfig
from swformer.network.swformer import SWformer, build_model, calibrate_norm_stats
from swformer.network.trace import LayerActivationTrace
from swformer.reports import read_csv
from swformer.testing import main_for, require_slow, scratch_dir
from swformer.training.ablation import variant_config
from swformer.training.trainer import train


def toy_model(**overrides) -> ModelConfig:
    base = dict(
        depth=1, embed_dim=16, blocks_k=2, timesteps=2, input_size=(16, 16),
        in_channels=1, num_classes=4, mlp_ratio=2,
    )
    base.update(overrides)
    return ModelConfig(**base)


def toy_images(batch: int = 4) -> torch.Tensor:
    return torch.rand(batch, 1, 16, 16, generator=torch.Generator().manual_seed(0))


# ============================================================
# SPECTRUM
# ============================================================


def test_constant_map_has_only_dc():
    profile = spectrum_of_map(torch.full((3, 16, 16), 0.4))
    assert profile.delta[0] == 0.0
    assert all(d == -math.inf for d in profile.delta[1:])
    assert profile.frequencies[0] == 0.0 and profile.frequencies[-1] == 1.0


def test_delta_map_is_flat():
    x = torch.zeros(1, 16, 16)
    x[0, 5, 9] = 1.0
    profile = spectrum_of_map(x)
    assert all(abs(d) < 1e-12 for d in profile.delta)


def test_white_noise_is_near_flat():
    g = torch.Generator().manual_seed(0)
    noise = torch.randn(100, 64, 64, generator=g, dtype=torch.float64)
    profile = spectrum_of_map(noise)
    assert all(abs(d) <= 0.5 for d in profile.delta)


def test_translation_does_not_change_profile():
    g = torch.Generator().manual_seed(1)
    x = torch.rand(2, 16, 16, generator=g, dtype=torch.float64)
    shifted = torch.roll(x, shifts=(3, 5), dims=(-2, -1))
    a, b = spectrum_of_map(x), spectrum_of_map(shifted)
    assert all(abs(p - q) < 1e-9 for p, q in zip(a.delta, b.delta))


def test_all_zero_map_is_undefined():
    with pytest.raises(UndefinedProfileError):
        spectrum_of_map(torch.zeros(2, 8, 8))
    with pytest.raises(DimensionError):
        spectrum_of_map(torch.ones(2, 8, 4))


def test_compare_highfreq_cases():
    x = torch.zeros(1, 16, 16)
    x[0, 0, 0] = 1.0
    delta = spectrum_of_map(x)
    const = spectrum_of_map(torch.ones(1, 16, 16))
    assert compare_highfreq(delta, delta) == 0.0
    assert compare_highfreq(delta, const) == math.inf
    g = torch.Generator().manual_seed(2)
    a = spectrum_of_map(torch.rand(2, 16, 16, generator=g))
    b = spectrum_of_map(torch.rand(2, 16, 16, generator=g))
    assert compare_highfreq(a, b) == pytest.approx(-compare_highfreq(b, a))
    with pytest.raises(DimensionError):
        compare_highfreq(a, spectrum_of_map(torch.rand(2, 8, 8, generator=g)))


def test_gap_between_two_empty_bands_is_undefined():
    freqs = (0.0, 0.25, 0.5, 0.75, 1.0)
    lm = torch.zeros(1, 8, 8)
    a = SpectrumProfile("a", freqs, (0.0, -1.0, NEG_INF, NEG_INF, NEG_INF), lm)
    b = SpectrumProfile("b", freqs, (0.0, -2.0, NEG_INF, NEG_INF, NEG_INF), lm)
    with pytest.raises(UndefinedProfileError):
        compare_highfreq(a, b)
    assert compare_highfreq(a, b, (0.25, 0.25)) == pytest.approx(1.0)


def test_magnitude_of_real_map_is_conjugate_symmetric():
    g = torch.Generator().manual_seed(4)
    profile = spectrum_of_map(torch.rand(3, 16, 16, generator=g, dtype=torch.float64))
    lm = profile.log_magnitude
    # centered index i mirrors to (size - i) mod size
    mirrored = torch.roll(torch.flip(lm, dims=(-2, -1)), shifts=(1, 1), dims=(-2, -1))
    assert torch.allclose(lm, mirrored, atol=1e-9)


def test_spectrum_of_traced_layers():
    model = calibrate_norm_stats(build_model(toy_model(), seed=0), toy_images(8))
    trace = trace_model(model, toy_images())
    profile = spectrum(trace, "block1.mixer")
    assert profile.layer == "block1.mixer"
    assert len(profile.frequencies) == 4 // 2 + 1
    with pytest.raises(PreconditionError):
        spectrum(trace, "block7.fl")


def test_spectrum_writers():
    x = torch.zeros(1, 8, 8)
    x[0, 0, 0] = 1.0
    profiles = [spectrum_of_map(x, "delta"), spectrum_of_map(torch.ones(1, 8, 8), "const")]
    tmp = scratch_dir()
    rows = read_csv(write_spectrum_csv(profiles, tmp / "spectrum.csv"))
    assert len(rows) == 2 * 5
    assert rows[-1]["delta_log_amp"] == "-inf"
    text = write_gnuplot_data(profiles, tmp / "spectrum.dat").read_text(encoding="utf-8")
    assert "# layer const" in text and "NaN" in text


def test_spectrum_direction_against_global_mean_control():
    require_slow("trained spectrum comparison")
    train_split, test = synthetic_patterns(4, 32, 16, seed=0)
    data = Dataset("patterns", 4, InputKind.STATIC_IMAGE, train_split, train_split.take(0), test)
    tcfg = TrainConfig(epochs=10, batch_size=16, learning_rate=5e-3, lr_schedule="constant", weight_decay=0.0)
    wins = 0
    for seed in (0, 1, 2):
        run = tcfg.model_copy(update={"seed": seed})
        base, _ = train(toy_model(), run, data)
        control, _ = train(variant_config(toy_model(), "global_mean"), run, data)
        inputs = test.inputs[:16]
        a = spectrum(trace_model(base, inputs), "block1.mixer")
        b = spectrum(trace_model(control, inputs), "block1.mixer")
        wins += compare_highfreq(a, b, (0.5, 1.0)) > 0
    assert wins >= 2


# ============================================================
# ENERGY
# ============================================================


def test_count_sops_needs_a_trace():
    with pytest.raises(PreconditionError):
        count_sops(None, toy_model())
    with pytest.raises(PreconditionError):
        count_sops(LayerActivationTrace(), toy_model())


def test_saturated_layer_sops():
    trace = LayerActivationTrace()
    t, b, n, fan_out = 2, 3, 10, 7
    trace.record_op("dense", torch.ones(t, b, n), macs=n * fan_out)
    report = count_sops(trace, toy_model(timesteps=t), e_mac_pj=4.6, e_ac_pj=0.9)
    layer = report.layers[0]
    assert layer.sops == n * fan_out * t
    assert layer.firing_rate == 1.0
    assert report.total_energy_mj == pytest.approx(0.9 * n * fan_out * t * 1e-9)


def test_silent_network_costs_only_the_encoding_layer():
    trace = LayerActivationTrace()
    trace.record_op("enc", torch.rand(2, 1, 5), macs=50, kind="encoding")
    trace.record_op("conv2", torch.zeros(2, 1, 8), macs=64)
    report = count_sops(trace, toy_model(timesteps=2), e_mac_pj=4.6, e_ac_pj=0.9)
    assert report.total_sops == 0.0
    assert report.total_energy_mj == pytest.approx(4.6 * 50 * 2 * 1e-9)


def test_report_totals_equal_layer_sums():
    model = calibrate_norm_stats(build_model(toy_model(), seed=0), toy_images(8))
    report = count_sops(trace_model(model, toy_images()), toy_model())
    assert report.total_sops == sum(l.sops for l in report.layers)
    assert report.total_energy_mj == sum(l.energy_mj for l in report.layers)
    assert report.ann_energy_mj == sum(l.ann_energy_mj for l in report.layers)
    assert report.layers[0].kind == "encoding"
    assert sops_matching(report, ".fl.") > 0
    assert energy_ratio(report) > 0

    tmp = scratch_dir()
    data = json.loads(write_energy_report(report, tmp / "energy.json").read_text(encoding="utf-8"))
    assert "ann_to_snn_ratio" in data and len(data["layers"]) == len(report.layers)


def test_traced_timesteps_must_match_config():
    model = build_model(toy_model(), seed=0)
    trace = trace_model(model, toy_images())
    with pytest.raises(DimensionError):
        count_sops(trace, toy_model(timesteps=4))


def test_higher_wavelet_threshold_reduces_sops():
    low_cfg = toy_model(wavelet_v_th=0.5)
    low = calibrate_norm_stats(build_model(low_cfg, seed=0), toy_images(8))
    high = SWformer(toy_model(wavelet_v_th=1.0))
    high.load_state_dict(low.state_dict())
    inputs = toy_images(8)
    low_report = count_sops(trace_model(low, inputs), low_cfg)
    high_report = count_sops(trace_model(high, inputs), high.cfg)
    assert high_report.total_sops < low_report.total_sops
    assert sops_matching(high_report, ".fl.") < sops_matching(low_report, ".fl.")


def test_repeating_every_timestep_doubles_sops():
    g = torch.Generator().manual_seed(3)
    spikes = torch.randint(-1, 2, (2, 3, 10), generator=g).float()
    short, long = LayerActivationTrace(), LayerActivationTrace()
    short.record_op("conv", spikes, macs=70)
    long.record_op("conv", torch.cat([spikes, spikes]), macs=70)
    a = count_sops(short, toy_model(timesteps=2))
    b = count_sops(long, toy_model(timesteps=4))
    assert b.total_sops == pytest.approx(2 * a.total_sops)
    assert b.total_energy_mj == pytest.approx(2 * a.total_energy_mj)


if __name__ == "__main__":
    main_for("ANALYSIS TEST", dict(globals()))
