import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stfusion.dsp import (DSPConfig, LogMelSpectrogram, hann_window, log_mel_gram, mel_bank, n_frames_for,
                          stft_power)
from stfusion.exceptions import ConfigError, DataError
from stfusion.io import AccelTrace

from oracles import direct_dft_power, hann, naive_mel_bank, rel_error

SR = 250


def test_hann_closed_form():
    np.testing.assert_allclose(hann_window(4), [0, 0.75, 0.75, 0], atol=1e-15)


@pytest.mark.parametrize("n", [2, 3, 16, 129, 256])
def test_hann_endpoints_and_symmetry(n):
    w = hann_window(n)
    assert w[0] == 0 and abs(w[-1]) < 1e-15
    np.testing.assert_allclose(w, w[::-1], atol=1e-15)
    np.testing.assert_allclose(w, hann(n), atol=1e-15)


def test_hann_too_short():
    with pytest.raises(ConfigError):
        hann_window(1)


def test_stft_zero_signal():
    assert not np.any(stft_power(np.zeros(600), 128, 50))


def test_stft_bin16_cosine():
    n_fft = 256
    t = np.arange(2048) / SR
    x = np.cos(2 * np.pi * (16 * SR / n_fft) * t)
    p = stft_power(x, n_fft, 128)
    assert np.all(np.argmax(p, axis=0) == 16)
    assert np.all(np.argmax(direct_dft_power(x, n_fft, 128), axis=0) == 16)


def test_stft_matches_direct_dft_1024():
    x = np.random.default_rng(0).normal(size=1024)
    got = stft_power(x, 256, 128)
    ref = direct_dft_power(x, 256, 128)
    assert got.shape == ref.shape == (129, 7)
    assert rel_error(got, ref) < 1e-6


@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([4, 8, 32, 64]), st.integers(1, 40), st.integers(0, 100))
def test_stft_matches_direct_dft_random(seed, n_fft, hop, extra):
    x = np.random.default_rng(seed).normal(size=n_fft + extra)
    got, ref = stft_power(x, n_fft, hop), direct_dft_power(x, n_fft, hop)
    assert got.shape == ref.shape
    assert got.shape[1] == n_frames_for(len(x), n_fft, hop)
    # scale-normalized error, applied per frame
    for f in range(ref.shape[1]):
        assert rel_error(got[:, f], ref[:, f]) < 1e-6


@pytest.mark.parametrize("n, n_fft, hop, exc", [(100, 128, 10, DataError), (300, 100, 10, ConfigError),
                                                (300, 128, 0, ConfigError)])
def test_stft_errors(n, n_fft, hop, exc):
    with pytest.raises(exc):
        stft_power(np.zeros(n), n_fft, hop)


def test_mel_rows_sum_to_one():
    bank = mel_bank(250, 256, 32, 0, 125)
    np.testing.assert_allclose(bank.weights.sum(axis=1), 1.0, atol=1e-6)
    assert np.all(bank.weights >= 0)
    assert np.all(np.diff(bank.center_hz) >= 0)
    assert np.all(np.diff(np.argmax(bank.weights, axis=1)) >= 0)


def test_mel_matches_formula_oracle():
    got = mel_bank(250, 256, 8, 0, 125).weights
    assert np.max(np.abs(got - naive_mel_bank(250, 256, 8, 0, 125))) < 1e-9


@given(st.sampled_from([(250, 256), (250, 512), (100, 128), (1000, 1024)]), st.integers(2, 12),
       st.floats(0.0, 0.3), st.floats(0.5, 1.0))
def test_mel_matches_formula_oracle_random(rate_fft, n_mels, lo_frac, hi_frac):
    sr, n_fft = rate_fft
    fmin, fmax = lo_frac * sr / 2, hi_frac * sr / 2
    try:
        got = mel_bank(sr, n_fft, n_mels, fmin, fmax).weights
    except ConfigError:
        return  # a filter narrower than one bin; rejected by design
    assert np.max(np.abs(got - naive_mel_bank(sr, n_fft, n_mels, fmin, fmax))) < 1e-9


@pytest.mark.parametrize("args", [(250, 256, 1, 0, 125), (250, 256, 8, 50, 40), (250, 256, 8, 0, 126),
                                  (250, 256, 8, -1, 100), (250, 16, 40, 0, 125)])
def test_mel_bad_config(args):
    with pytest.raises(ConfigError):
        mel_bank(*args)


def test_log_mel_zero_trace():
    cfg = DSPConfig()
    g = log_mel_gram(AccelTrace(SR, np.zeros((1000, 3))), cfg)
    np.testing.assert_array_equal(g.data, np.log(cfg.floor_eps))


def test_log_mel_shape():
    g = log_mel_gram(AccelTrace(SR, np.random.default_rng(1).normal(size=(15000, 3))))
    assert g.data.shape == (3, 32, 116)
    assert g.n_frames == 116


def test_log_mel_z_axis_tone():
    n = 15000
    t = np.arange(n) / SR
    samples = np.zeros((n, 3))
    samples[:, 2] = np.sin(2 * np.pi * 1.2 * t)
    samples += np.random.default_rng(2).normal(scale=1e-3, size=samples.shape)
    bank = mel_bank(SR, 256, 32, 0, 125)
    band = int(np.argmax(bank.weights[:, int(round(1.2 * 256 / SR))]))
    g = log_mel_gram(AccelTrace(SR, samples)).data
    assert np.all(np.argmax(g[:, band, :], axis=0) == 2)


@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 6))
def test_log_mel_shift_covariance(seed, n_extra):
    cfg = DSPConfig()
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(cfg.n_fft + cfg.hop * (n_extra + 2), 3))
    delayed = np.concatenate([rng.normal(size=(cfg.hop, 3)), x])
    a = log_mel_gram(AccelTrace(SR, x), cfg).data
    b = log_mel_gram(AccelTrace(SR, delayed), cfg).data
    assert b.shape[-1] == a.shape[-1] + 1
    # float32 storage of the trace makes both runs see identical samples
    np.testing.assert_allclose(b[..., 1:], a, atol=1e-6, rtol=0)


def test_log_mel_finite_for_finite_input():
    x = np.random.default_rng(3).normal(scale=1e3, size=(3000, 3))
    assert np.all(np.isfinite(log_mel_gram(AccelTrace(SR, x)).data))


def test_log_mel_too_short():
    with pytest.raises(DataError):
        log_mel_gram(AccelTrace(SR, np.zeros((100, 3))))


def test_transformer_matches_function():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(2, 2000, 3))
    out = LogMelSpectrogram().fit().transform(X)
    assert out.shape == (2, 3, 32, 14)
    np.testing.assert_array_equal(out[1], log_mel_gram(AccelTrace(SR, X[1])).data)
