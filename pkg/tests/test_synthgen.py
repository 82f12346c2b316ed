import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from clmi3d.errors import BadSpec
from clmi3d.synthgen import SynthSpec, generate_dataset, pink_noise


def tone_power(x, freq, fs):
    """Power of ``x`` at ``freq`` by direct projection on sin/cos (last axis)."""
    t = np.arange(x.shape[-1]) / fs
    c = (x * np.cos(2 * np.pi * freq * t)).mean(-1)
    s = (x * np.sin(2 * np.pi * freq * t)).mean(-1)
    return 4 * (c**2 + s**2)  # amplitude**2 of a pure tone


def contrast(spec):
    """Mean alpha power on mapped channels over mean alpha power on unmapped ones."""
    ds = generate_dataset(spec)
    p = tone_power(ds.trials.astype(np.float64), spec.alpha_hz, spec.fs)
    cmap = spec.channel_map()
    ratios = []
    for c in range(spec.n_classes):
        rows = p[ds.labels == c]
        mapped = np.zeros(spec.n_channels, bool)
        mapped[cmap[c]] = True
        ratios.append(rows[:, mapped].mean() / rows[:, ~mapped].mean())
    return np.array(ratios)


def test_full_erd_silences_alpha_on_mapped_channel():
    spec = SynthSpec(n_trials_per_class=3, n_channels=4, n_samples=500, noise_scale=0.0, erd_depth=1.0,
                     class_channel_map=[[0], [1], [2], [3]])
    ds = generate_dataset(spec)
    p = tone_power(ds.trials.astype(np.float64), 10.0, 250.0)
    class0 = p[ds.labels == 0]
    assert class0[:, 0].max() < 1e-8
    assert np.allclose(class0[:, 1:], 1.0, atol=1e-4)


def test_same_seed_bitwise_identical():
    spec = SynthSpec(n_trials_per_class=4, n_samples=300, seed=17)
    a, b = generate_dataset(spec), generate_dataset(spec)
    assert a.trials.tobytes() == b.trials.tobytes()
    assert not np.array_equal(a.trials, generate_dataset(SynthSpec(n_trials_per_class=4, n_samples=300, seed=18)).trials)


def test_shapes_and_labels():
    ds = generate_dataset(SynthSpec(n_trials_per_class=5, n_channels=6, n_samples=200, n_classes=3))
    assert ds.trials.shape == (15, 6, 200) and ds.trials.dtype == np.float32
    assert np.bincount(ds.labels).tolist() == [5, 5, 5]
    assert ds.n_classes == 3 and ds.fs == 250.0


def test_band_power_contrast_below_half():
    spec = SynthSpec(n_trials_per_class=25, n_channels=8, n_samples=1000, erd_depth=0.8, noise_scale=0.1)
    assert contrast(spec).max() < 0.5


def test_contrast_monotone_in_erd_depth():
    base = dict(n_trials_per_class=10, n_samples=500, noise_scale=0.1, seed=4)
    means = [contrast(SynthSpec(erd_depth=d, **base)).mean() for d in (0.2, 0.5, 0.8)]
    assert means[0] > means[1] > means[2]


def test_no_effect_means_no_contrast():
    spec = SynthSpec(n_trials_per_class=25, n_samples=500, erd_depth=0.0, ers_gain=0.0, noise_scale=0.1)
    assert np.allclose(contrast(spec), 1.0, atol=0.1)


def test_ers_boosts_beta():
    spec = SynthSpec(n_trials_per_class=2, n_channels=4, n_samples=500, noise_scale=0.0, ers_gain=1.0,
                     class_channel_map=[[0], [1], [2], [3]])
    ds = generate_dataset(spec)
    p = tone_power(ds.trials.astype(np.float64), 22.0, 250.0)[ds.labels == 2]
    assert np.allclose(p[:, 2], 1.0, atol=1e-4)  # (0.5 * 2) ** 2
    assert np.allclose(p[:, 0], 0.25, atol=1e-4)


@pytest.mark.parametrize("kw", [
    dict(erd_depth=1.5), dict(erd_depth=-0.1), dict(ers_gain=-1.0), dict(noise_scale=-1.0),
    dict(class_channel_map=[[0], [1], [2], [8]]), dict(class_channel_map=[[0]]), dict(fs=0.0),
])
def test_bad_spec(kw):
    with pytest.raises(BadSpec):
        generate_dataset(SynthSpec(n_trials_per_class=1, n_samples=10, **kw))


@given(st.integers(0, 2**32 - 1), st.integers(64, 400))
def test_pink_noise_unit_variance_zero_mean(seed, n):
    x = pink_noise(np.random.default_rng(seed), 3, n, 250.0)
    assert np.allclose(x.std(-1), 1.0)
    assert np.abs(x.mean(-1)).max() < 1e-9


def test_pink_noise_spectrum_falls_off():
    x = pink_noise(np.random.default_rng(0), 64, 2000, 250.0)
    f = np.fft.rfftfreq(2000, 1 / 250.0)
    p = (np.abs(np.fft.rfft(x, axis=-1)) ** 2).mean(0)
    low, high = p[(f > 4) & (f < 6)].mean(), p[(f > 40) & (f < 60)].mean()
    # 1/f power: about a factor of 10 between 5 Hz and 50 Hz
    assert 5 < low / high < 20


@given(st.integers(0, 2**32 - 1), st.integers(1, 3))
def test_trials_independent_of_dataset_size(seed, extra):
    small = generate_dataset(SynthSpec(n_trials_per_class=1, n_classes=2, n_samples=64, seed=seed))
    large = generate_dataset(SynthSpec(n_trials_per_class=1 + extra, n_classes=2, n_samples=64, seed=seed))
    assert np.array_equal(small.trials[0], large.trials[0])
