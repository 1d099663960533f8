import numpy as np
import pytest

from airgrad import channel
from airgrad.errors import ConfigurationError
from airgrad.rng import substream


def test_noise_model_halves_complex_variance():
    nm = channel.NoiseModel(complex_variance=1.0)
    assert nm.real_variance == 0.5
    assert channel.NoiseModel(0.34).real_variance == 0.17


def test_draw_cir_deterministic():
    a = channel.draw_cir(10, 0.1, substream(3, "channel", 1, 1))
    b = channel.draw_cir(10, 0.1, substream(3, "channel", 1, 1))
    assert np.array_equal(a.taps, b.taps)
    assert len(a.taps) == 10


def test_draw_cir_rejects_degenerate_configs():
    rng = np.random.default_rng(0)
    with pytest.raises(ConfigurationError):
        channel.draw_cir(1, 0.0, rng)
    with pytest.raises(ConfigurationError):
        channel.draw_cir(0, 0.1, rng)


def test_cir_tap_power_matches_profile():
    # uniform power delay profile: expected total power L * var = 1
    rng = np.random.default_rng(42)
    total = 0.0
    n = 100_000
    for _ in range(n):
        taps = channel.draw_cir(10, 0.1, rng).taps
        total += float(np.sum(np.abs(taps) ** 2))
    assert total / n == pytest.approx(1.0, abs=0.02)


def test_frequency_response_impulse_is_flat():
    cir = channel.Cir(taps=np.array([1.0 + 0j, 0, 0]))
    resp = channel.frequency_response(cir, 16)
    assert np.allclose(resp, 1.0)


def test_frequency_response_delayed_impulse():
    n_sub = 32
    cir = channel.Cir(taps=np.array([0, 1.0 + 0j, 0]))
    resp = channel.frequency_response(cir, n_sub)
    expected = np.exp(-2j * np.pi * np.arange(n_sub) / n_sub)
    assert np.allclose(resp, expected, atol=1e-12)
    assert np.allclose(np.abs(resp), 1.0, atol=1e-12)


def test_frequency_response_matches_naive_sum():
    rng = np.random.default_rng(5)
    taps = rng.standard_normal(10) + 1j * rng.standard_normal(10)
    n_sub = 64
    resp = channel.frequency_response(channel.Cir(taps=taps), n_sub)
    for f in range(n_sub):
        direct = sum(taps[l] * np.exp(-2j * np.pi * f * l / n_sub) for l in range(10))
        assert abs(resp[f] - direct) <= 1e-10


def test_frequency_response_parseval():
    rng = np.random.default_rng(6)
    taps = (rng.standard_normal(10) + 1j * rng.standard_normal(10)) * np.sqrt(0.05)
    resp = channel.frequency_response(channel.Cir(taps=taps), 1024)
    lhs = float(np.sum(np.abs(resp) ** 2)) / 1024
    rhs = float(np.sum(np.abs(taps) ** 2))
    assert abs(lhs - rhs) <= 1e-10


def test_frequency_response_rejects_excess_taps():
    with pytest.raises(ConfigurationError):
        channel.frequency_response(channel.Cir(taps=np.ones(8, dtype=complex)), 4)


def test_assemble_real_channel_stacks_re_im():
    rc = channel.assemble_real_channel(np.array([[1.0 + 1.0j]]), 1, 1)
    assert np.allclose(rc.matrix, [[1.0], [1.0]])


def test_assemble_real_channel_preserves_norms_and_order():
    rng = np.random.default_rng(7)
    responses = rng.standard_normal((2, 5)) + 1j * rng.standard_normal((2, 5))
    rc = channel.assemble_real_channel(responses, 5, 2)
    assert rc.matrix.shape == (10, 2)
    for k in range(2):
        assert np.linalg.norm(rc.matrix[:, k]) == pytest.approx(
            np.linalg.norm(responses[k]), abs=1e-12)
    assert np.allclose(rc.matrix[:5, 0], responses[0].real)
    assert np.allclose(rc.matrix[5:, 1], responses[1].imag)


def test_assemble_real_channel_shape_error():
    with pytest.raises(ValueError):
        channel.assemble_real_channel(np.zeros((2, 3), dtype=complex), 4, 2)


def test_resource_index_map_examples():
    assert channel.resource_index_map(1, 1024) == (1, 1)
    assert channel.resource_index_map(1024, 1024) == (1024, 1)
    assert channel.resource_index_map(1025, 1024) == (1, 2)


def test_resource_index_map_inverse():
    for n in (1, 2, 1023, 1024, 1025, 4096, 15910):
        f, u = channel.resource_index_map(n, 1024)
        assert 1 <= f <= 1024 and u >= 1
        assert f + (u - 1) * 1024 == n


def test_resource_index_map_range_error():
    with pytest.raises(ValueError):
        channel.resource_index_map(0, 1024)


def test_subcarrier_bins_match_map():
    bins = channel.subcarrier_bins(15910, 1024)
    for n in (1, 1024, 1025, 15910):
        f, _ = channel.resource_index_map(n, 1024)
        assert bins[n - 1] == f - 1


def test_transmit_noiseless_is_exact():
    rng = np.random.default_rng(8)
    responses = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
    rc = channel.assemble_real_channel(responses, 4, 3)
    x = np.array([1.0, -2.0, 0.5])
    y = channel.transmit_over_resource(rc, x, 0.0, rng)
    assert np.array_equal(y, rc.matrix @ x)
    single = channel.transmit_over_resource(rc, np.array([0.0, 3.0, 0.0]), 0.0, rng)
    assert np.allclose(single, rc.matrix[:, 1] * 3.0)


def test_transmit_noise_power():
    rng = np.random.default_rng(9)
    m = 4
    rc = channel.assemble_real_channel(np.zeros((2, m), dtype=complex), m, 2)
    var = 0.5
    total = 0.0
    n = 100_000
    for _ in range(n):
        y = channel.transmit_over_resource(rc, np.zeros(2), var, rng)
        total += float(y @ y)
    assert total / n == pytest.approx(2 * m * var, rel=0.02)


def test_transmit_deterministic_under_seed():
    rng_a = substream(1, "noise", 5)
    rng_b = substream(1, "noise", 5)
    rc = channel.assemble_real_channel(np.ones((2, 3), dtype=complex), 3, 2)
    ya = channel.transmit_over_resource(rc, np.ones(2), 0.25, rng_a)
    yb = channel.transmit_over_resource(rc, np.ones(2), 0.25, rng_b)
    assert np.array_equal(ya, yb)


def test_round_stack_matches_per_link_responses():
    cirs = channel.draw_round_cirs(11, 2, n_devices=3, n_antennas=2)
    n_sub = 32
    stack = channel.round_channel_stack(cirs, n_sub)
    assert stack.shape == (n_sub, 4, 3)
    for k in range(3):
        for m in range(2):
            resp = channel.frequency_response(channel.Cir(taps=cirs[k, m]), n_sub)
            assert np.allclose(stack[:, m, k], resp.real, atol=1e-12)
            assert np.allclose(stack[:, 2 + m, k], resp.imag, atol=1e-12)


def test_round_stack_energy_consistency():
    cirs = channel.draw_round_cirs(13, 1, n_devices=2, n_antennas=3)
    n_sub = 256
    stack = channel.round_channel_stack(cirs, n_sub)
    for k in range(2):
        energy = float(np.sum(stack[:, :, k] ** 2))
        taps_energy = float(np.sum(np.abs(cirs[k]) ** 2))
        assert abs(energy - n_sub * taps_energy) <= 1e-8 * max(energy, 1.0)


def test_round_cirs_deterministic_per_device():
    a = channel.draw_round_cirs(21, 4, n_devices=3, n_antennas=2)
    b = channel.draw_round_cirs(21, 4, n_devices=5, n_antennas=2)
    # adding devices never perturbs the first devices' channels
    assert np.array_equal(a, b[:3])
    c = channel.draw_round_cirs(21, 5, n_devices=3, n_antennas=2)
    assert not np.array_equal(a, c)
