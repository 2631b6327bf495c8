import numpy as np
import pytest
import scipy.fft

from stconv_kws import frontend
from stconv_kws.frontend import (
    FeatureCacheError,
    MalformedWavError,
    UnsupportedChannelCountError,
    UnsupportedSampleFormatError,
    UnsupportedSampleRateError,
    Waveform,
)
from conftest import wav_bytes, tone_samples


class TestDecodeWav:
    def test_silence(self):
        w = frontend.decode_wav(wav_bytes(np.zeros(16000, dtype=np.int16)))
        assert w.sample_rate == 16000
        np.testing.assert_array_equal(w.samples, np.zeros(16000))

    def test_short_clip_zero_padded(self):
        w = frontend.decode_wav(wav_bytes(np.ones(12000, dtype=np.int16)))
        assert w.samples.size == 16000
        assert np.all(w.samples[:12000] != 0)
        np.testing.assert_array_equal(w.samples[12000:], np.zeros(4000))

    def test_long_clip_truncated(self):
        w = frontend.decode_wav(wav_bytes(np.ones(20000, dtype=np.int16)))
        assert w.samples.size == 16000

    def test_int16_scaling(self):
        w = frontend.decode_wav(wav_bytes(np.full(16000, 16384, dtype=np.int16)))
        assert w.samples[0] == 0.5

    def test_malformed_header(self):
        with pytest.raises(MalformedWavError):
            frontend.decode_wav(b"definitely not a wav file")

    def test_wrong_sample_rate(self):
        with pytest.raises(UnsupportedSampleRateError):
            frontend.decode_wav(wav_bytes(np.zeros(8000, dtype=np.int16), rate=8000))

    def test_stereo_rejected(self):
        data = wav_bytes(np.zeros(2000, dtype=np.int16), channels=2)
        with pytest.raises(UnsupportedChannelCountError):
            frontend.decode_wav(data)

    def test_wrong_sample_width(self):
        data = wav_bytes(np.zeros(2000, dtype=np.int16), width=1)
        with pytest.raises(UnsupportedSampleFormatError):
            frontend.decode_wav(data)


def direct_mel_log_energies(w: Waveform):
    """Independent oracle: explicit framing, DFT matrix and mel triangles."""
    x = w.samples
    emph = np.concatenate([[x[0]], x[1:] - 0.97 * x[:-1]])
    padded = np.concatenate([emph, np.zeros(16080 - emph.size)])
    frames = np.stack([padded[160 * t : 160 * t + 400] for t in range(99)])
    frames = frames * np.hamming(400)
    # direct DFT over the first 257 bins of a 512-point transform
    n = np.arange(512)
    k = np.arange(257)
    angle = -2.0 * np.pi * np.outer(k, n) / 512.0
    padded_frames = np.pad(frames, ((0, 0), (0, 112)))
    re = padded_frames @ np.cos(angle).T
    im = padded_frames @ np.sin(angle).T
    mag = np.sqrt(re * re + im * im)
    # mel triangles rebuilt from the mel-scale formula
    def mel(f):
        return 2595.0 * np.log10(1.0 + f / 700.0)

    def inv_mel(m):
        return 700.0 * (10 ** (m / 2595.0) - 1.0)

    edges = inv_mel(np.linspace(mel(20.0), mel(7600.0), 42))
    bin_hz = k * 16000.0 / 512.0
    energies = np.zeros((99, 40))
    for m in range(40):
        lo, ce, hi = edges[m], edges[m + 1], edges[m + 2]
        wgt = np.maximum(0.0, np.minimum((bin_hz - lo) / (ce - lo), (hi - bin_hz) / (hi - ce)))
        energies[:, m] = mag @ wgt
    return np.log(np.maximum(energies, 1e-10))


class TestMfcc:
    def test_output_shape_99x40(self):
        w = frontend.decode_wav(wav_bytes(tone_samples(440.0)))
        assert frontend.mfcc(w).shape == (99, 40)

    def test_constant_on_silence(self):
        feats = frontend.mfcc(Waveform(np.zeros(16000)))
        # every frame identical; c0 is the log floor propagated through the DCT
        assert np.all(feats == feats[0])
        expected_c0 = np.log(1e-10) * np.sqrt(40.0)
        np.testing.assert_allclose(feats[0, 0], expected_c0, rtol=1e-12)
        np.testing.assert_allclose(feats[0, 1:], 0.0, atol=1e-9)

    def test_deterministic(self):
        data = wav_bytes(tone_samples(700.0))
        a = frontend.mfcc(frontend.decode_wav(data))
        b = frontend.mfcc(frontend.decode_wav(data))
        np.testing.assert_array_equal(a, b)

    @pytest.mark.parametrize("freq", [1000.0, 250.0])
    def test_mel_energies_match_direct_dft_oracle(self, freq):
        w = frontend.decode_wav(wav_bytes(tone_samples(freq, noise=0.0)))
        ours = frontend.mel_log_energies(w)
        oracle = direct_mel_log_energies(w)
        np.testing.assert_allclose(ours, oracle, atol=1e-6)

    def test_wrong_sample_rate_rejected(self):
        with pytest.raises(UnsupportedSampleRateError):
            frontend.mel_log_energies(Waveform(np.zeros(16000), sample_rate=8000))

    def test_dct_basis_orthonormal(self, rng):
        x = rng.normal(size=(5, 40))
        coeffs = scipy.fft.dct(x, type=2, norm="ortho", axis=1)
        back = scipy.fft.idct(coeffs, type=2, norm="ortho", axis=1)
        np.testing.assert_allclose(back, x, atol=1e-9)


class TestFeatureCache:
    def test_round_trip_bit_exact(self, tmp_path, rng):
        feats = rng.normal(size=(99, 40)).astype(np.float32).astype(np.float64)
        path = tmp_path / "f.stcf"
        frontend.write_feature_file(path, feats)
        np.testing.assert_array_equal(frontend.read_feature_file(path), feats)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.stcf"
        path.write_bytes(b"XXXX" + b"\0" * 12)
        with pytest.raises(FeatureCacheError):
            frontend.read_feature_file(path)

    def test_truncated(self, tmp_path, rng):
        path = tmp_path / "t.stcf"
        frontend.write_feature_file(path, rng.normal(size=(99, 40)))
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(FeatureCacheError):
            frontend.read_feature_file(path)
