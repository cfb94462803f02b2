import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mdcoherence.errors import InvalidSpec, ZeroPowerSignal
from mdcoherence.synth import (
    DopplerComponent,
    IqSeries,
    SceneSpec,
    SynthConfig,
    dataset_from_config,
    default_templates,
    generate_scene,
    inject_noise,
    make_dataset,
    measured_snr_db,
    noise_variance,
    split_counts,
)


def scene(*comps, duration=1.0, fs=64.0, label=0):
    return SceneSpec(label, tuple(comps), duration, fs)


def test_dc_component_is_constant_one():
    x = generate_scene(scene(DopplerComponent(1.0, 0.0, 0.0, 0.0)), seed=3, amplitude_jitter=0.0)
    np.testing.assert_allclose(x.samples, np.ones(64, dtype=complex), atol=0)


def test_tone_peaks_at_quarter_band():
    fs = 64.0
    x = generate_scene(scene(DopplerComponent(1.0, fs / 4, 0.0, 0.0), fs=fs), seed=0)
    spec = np.abs(np.fft.fft(x.samples))
    assert int(np.argmax(spec)) == len(x) // 4


def test_same_seed_bit_identical():
    s = scene(DopplerComponent(1.0, 3.0, 2.0, 1.5), DopplerComponent(0.4, -2.0, 5.0, 0.7))
    a = generate_scene(s, 99)
    b = generate_scene(s, 99)
    assert a.samples.tobytes() == b.samples.tobytes()
    assert generate_scene(s, 100).samples.tobytes() != a.samples.tobytes()


@given(st.lists(st.tuples(st.floats(0.1, 2.0), st.integers(-20, 20)), min_size=1, max_size=3, unique_by=lambda t: t[1]),
       st.integers(0, 2**32))
def test_tone_power_is_sum_of_squared_amplitudes(comps, seed):
    # integer-bin tones over a whole number of periods are orthogonal
    fs, n = 64.0, 64
    s = scene(*(DopplerComponent(a, float(k), 0.0, 0.0) for a, k in comps), duration=n / fs, fs=fs)
    x = generate_scene(s, seed, amplitude_jitter=0.0)
    want = sum(a * a for a, _ in comps)
    assert abs(x.power - want) <= 0.01 * want


def test_invalid_specs_rejected():
    with pytest.raises(InvalidSpec):
        generate_scene(scene(), 0)
    with pytest.raises(InvalidSpec):
        generate_scene(scene(DopplerComponent(-1.0, 0.0, 0.0, 0.0)), 0)
    with pytest.raises(InvalidSpec):
        generate_scene(scene(DopplerComponent(1.0, 0.0, 0.0, -1.0)), 0)
    with pytest.raises(InvalidSpec):
        generate_scene(scene(DopplerComponent(1.0, math.nan, 0.0, 0.0)), 0)
    with pytest.raises(InvalidSpec):
        generate_scene(scene(DopplerComponent(1.0, 0.0, 0.0, 0.0), duration=-1.0), 0)
    with pytest.raises(InvalidSpec):
        generate_scene(scene(DopplerComponent(1.0, 0.0, 0.0, 0.0), duration=0.1), 0, min_samples=128)


def test_noise_variance_examples():
    assert noise_variance(1.0, 0.0) == pytest.approx(1.0)
    assert noise_variance(1.0, 10.0) == pytest.approx(0.1)


def test_zero_power_rejected():
    with pytest.raises(ZeroPowerSignal):
        inject_noise(IqSeries(np.zeros(16, dtype=complex), 1.0), 0.0, 1)


def test_measured_snr_million_samples():
    x = IqSeries(np.exp(2j * np.pi * 0.01 * np.arange(10**6)), 1.0)
    y = inject_noise(x, -5.0, 7)
    assert abs(measured_snr_db(x, y) + 5.0) < 0.1


def test_measured_snr_twenty_seeds():
    x = IqSeries(np.exp(2j * np.pi * 0.123 * np.arange(10**5)) * 0.3, 1.0)
    for seed in range(20):
        assert abs(measured_snr_db(x, inject_noise(x, 3.0, seed)) - 3.0) < 0.2


def test_noise_is_circular():
    x = IqSeries(np.ones(200_000, dtype=complex), 1.0)
    n = inject_noise(x, 0.0, 5).samples - x.samples
    assert np.var(n.real) == pytest.approx(0.5, rel=0.02)
    assert np.var(n.imag) == pytest.approx(0.5, rel=0.02)
    assert abs(np.mean(n.real * n.imag)) < 0.01


def test_noise_deterministic():
    x = IqSeries(np.ones(64, dtype=complex), 1.0)
    assert inject_noise(x, 2.0, 11).samples.tobytes() == inject_noise(x, 2.0, 11).samples.tobytes()


@pytest.mark.parametrize("k,n,expect", [(3, 8, (4, 2, 2)), (2, 4, (2, 1, 1))])
def test_split_sizes(k, n, expect):
    cfg = SynthConfig(n_classes=k, n_per_class=n, duration_s=0.5)
    ds = dataset_from_config(cfg)
    assert len(ds) == k * n
    for c in range(k):
        counts = tuple(int(np.sum((ds.labels == c) & (ds.split == s))) for s in ("train", "val", "test"))
        assert counts == expect


@given(st.integers(4, 40))
def test_split_counts_partition(n):
    a, b, c = split_counts(n)
    assert a + b + c == n and min(a, b, c) >= 1


def test_dataset_deterministic_and_disjoint():
    cfg = SynthConfig(n_per_class=8, duration_s=0.5)
    a, b = dataset_from_config(cfg), dataset_from_config(cfg)
    assert list(a.split) == list(b.split)
    assert all(x.samples.tobytes() == y.samples.tobytes() for x, y in zip(a.iq, b.iq))
    parts = [set(a.indices(s)) for s in ("train", "val", "test")]
    assert set().union(*parts) == set(range(len(a)))
    assert sum(map(len, parts)) == len(a)


def test_make_dataset_preconditions():
    t = default_templates(SynthConfig(duration_s=0.5))
    with pytest.raises(InvalidSpec):
        make_dataset(t[:1], 8, 0)
    with pytest.raises(InvalidSpec):
        make_dataset(t, 3, 0)
