"""
Neuron dynamics: LIF / ternary IF steps, surrogate window, sequences, rate code.
Run with pytest, or directly: python test_neurons.py
"""

import pytest
import torch

from swformer.core.neurons import (
    MembraneState,
    binary_spike,
    lif_step,
    make_neuron,
    rate_encode,
    run_sequence,
    surrogate_grad,
    ternary_if_step,
)
from swformer.errors import ConfigurationError, DimensionError
from swformer.models import NeuronConfig, Polarity
from swformer.testing import main_for

LIF = NeuronConfig(v_th=1.0, v_reset=0.0, beta=0.5)
IF = NeuronConfig(v_th=1.0, beta=1.0)
TERNARY = NeuronConfig(v_th=1.0, beta=1.0, polarity=Polarity.TERNARY)


def _state(v: float) -> MembraneState:
    t = torch.tensor([v], dtype=torch.float64)
    return MembraneState(u=t.clone(), v=t.clone())


def _current(i: float) -> torch.Tensor:
    return torch.tensor([i], dtype=torch.float64)


# ============================================================
# STEP FUNCTIONS
# ============================================================


def test_lif_fires_at_threshold_equality():
    s, state = lif_step(_state(0.0), _current(1.0), LIF)
    assert float(s) == 1.0
    assert float(state.u) == 1.0
    assert float(state.v) == 0.0


def test_lif_subthreshold_leak():
    s, state = lif_step(_state(0.2), _current(0.4), LIF)
    assert float(s) == 0.0
    assert float(state.u) == pytest.approx(0.6, abs=1e-12)
    assert float(state.v) == pytest.approx(0.3, abs=1e-12)


def test_lif_zero_input_never_fires():
    state = _state(0.0)
    for _ in range(10):
        s, state = lif_step(state, _current(0.0), LIF)
        assert float(s) == 0.0
    assert float(state.v) == 0.0


def test_ternary_negative_spike():
    s, state = ternary_if_step(_state(0.0), _current(-1.5), TERNARY)
    assert float(s) == -1.0
    assert float(state.v) == pytest.approx(-0.5)


def test_ternary_subthreshold_keeps_potential():
    s, state = ternary_if_step(_state(0.0), _current(0.3), TERNARY)
    assert float(s) == 0.0
    assert float(state.v) == pytest.approx(0.3)


def test_ternary_requires_if_dynamics():
    leaky = NeuronConfig(v_th=1.0, beta=0.5, polarity=Polarity.TERNARY)
    with pytest.raises(ConfigurationError):
        ternary_if_step(_state(0.0), _current(0.3), leaky)
    with pytest.raises(ConfigurationError):
        make_neuron(leaky)


def test_step_shape_mismatch():
    with pytest.raises(DimensionError):
        lif_step(_state(0.0), torch.zeros(2, dtype=torch.float64), LIF)


# ============================================================
# SURROGATE
# ============================================================


def test_surrogate_window_values():
    assert surrogate_grad(0.0, LIF) == 1.0
    assert surrogate_grad(2.0, LIF) == 0.0


def test_surrogate_integrates_to_one():
    step = 1e-3
    grid = torch.arange(-2.0, 2.0, step, dtype=torch.float64)
    total = float(surrogate_grad(grid, LIF).sum()) * step
    assert abs(total - 1.0) < 1e-2


def test_backward_uses_surrogate():
    x = torch.tensor([-0.7, -0.2, 0.0, 0.3, 0.9], dtype=torch.float64, requires_grad=True)
    binary_spike(x, 0.5).sum().backward()
    assert torch.equal(x.grad, surrogate_grad(x.detach(), LIF))


def test_smooth_mode_gradient_matches_surrogate():
    x = torch.tensor([-0.3, 0.1, 0.4], dtype=torch.float64, requires_grad=True)
    binary_spike(x, 0.5, spiking=False).sum().backward()
    assert torch.allclose(x.grad, surrogate_grad(x.detach(), LIF))


# ============================================================
# SEQUENCES
# ============================================================


def test_constant_input_first_spike_at_third_step():
    inputs = torch.full((5, 1), 0.4, dtype=torch.float64)
    spikes = run_sequence(IF, inputs).to_dense()
    assert spikes[:, 0].tolist()[:3] == [0.0, 0.0, 1.0]


def test_zero_input_gives_silent_train():
    spikes = run_sequence(LIF, torch.zeros(6, 3, dtype=torch.float64))
    assert spikes.nonzero_count() == 0


def test_ternary_sign_mirroring():
    g = torch.Generator().manual_seed(0)
    x = torch.randn(12, 8, generator=g, dtype=torch.float64) * 1.5
    pos = run_sequence(TERNARY, x).to_dense()
    neg = run_sequence(TERNARY, -x).to_dense()
    assert torch.equal(pos, -neg)


def test_causality_on_random_sequences():
    g = torch.Generator().manual_seed(1)
    for cfg in (LIF, TERNARY):
        for _ in range(50):
            x = torch.randn(10, 4, generator=g, dtype=torch.float64)
            t0 = int(torch.randint(1, 10, (1,), generator=g))
            y = x.clone()
            y[t0:] = torch.randn(10 - t0, 4, generator=g, dtype=torch.float64)
            a = run_sequence(cfg, x).to_dense()
            b = run_sequence(cfg, y).to_dense()
            assert torch.equal(a[:t0], b[:t0])


def test_rate_code_converges_within_one_over_t():
    g = torch.Generator().manual_seed(2)
    values = torch.rand(64, generator=g, dtype=torch.float64)
    for t in (2, 4, 8, 16, 32):
        rate = rate_encode(values, t).time_average()
        assert bool(((rate - values).abs() <= 1.0 / t + 1e-12).all())


def test_rate_encode_rejects_zero_timesteps():
    with pytest.raises(ConfigurationError):
        rate_encode(torch.zeros(2), 0)


def test_neuron_layer_records_membrane():
    layer = make_neuron(IF)
    layer.record = True
    layer(torch.full((3, 2), 0.4, dtype=torch.float64))
    assert layer.last_membrane.shape == (3, 2)
    assert float(layer.last_membrane[1, 0]) == pytest.approx(0.8)


if __name__ == "__main__":
    main_for("NEURON DYNAMICS TEST", dict(globals()))
