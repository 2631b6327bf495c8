"""Audio frontend: WAV decoding and MFCC feature extraction.

Every clip is normalised to exactly one second at 16 kHz (pad/trim) and
turned into a 99x40 matrix of MFCC coefficients.  The frame arithmetic
(25 ms window, 10 ms shift) yields 98 full windows over 16000 samples,
so the waveform is zero-padded to 16080 samples before framing; this is
what makes the frame count come out at exactly 99, which the first conv
layer's cost accounting depends on.

Frontend constants (pre-emphasis 0.97, Hamming window, 512-point FFT,
40 triangular mel filters spanning 20-7600 Hz, log floor 1e-10,
orthonormal DCT-II) are frozen here so extracted features are
reproducible bit for bit.
"""

import io
import struct
import wave
from dataclasses import dataclass

import numpy as np
import scipy.fft

SAMPLE_RATE = 16000
CLIP_SAMPLES = 16000
NUM_FRAMES = 99
NUM_COEFFS = 40
FRAME_LENGTH = 400      # 25 ms
FRAME_SHIFT = 160       # 10 ms
PADDED_SAMPLES = FRAME_SHIFT * (NUM_FRAMES - 1) + FRAME_LENGTH  # 16080
FFT_SIZE = 512
NUM_MEL_FILTERS = 40
MEL_LOW_HZ = 20.0
MEL_HIGH_HZ = 7600.0
PREEMPHASIS = 0.97
LOG_FLOOR = 1e-10

CACHE_MAGIC = b"STCF"
CACHE_VERSION = 1


class FrontendError(Exception):
    """Base class for audio decoding / feature extraction failures."""


class MalformedWavError(FrontendError):
    """File is not a parseable RIFF/WAVE container."""


class UnsupportedSampleRateError(FrontendError):
    """WAV sample rate differs from 16 kHz."""


class UnsupportedSampleFormatError(FrontendError):
    """WAV samples are not 16-bit linear PCM."""


class UnsupportedChannelCountError(FrontendError):
    """WAV file is not mono."""


class FeatureCacheError(FrontendError):
    """Feature cache file is malformed or truncated."""


@dataclass
class Waveform:
    """One second of mono audio: 16000 float samples in [-1, 1] at 16 kHz."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE


def decode_wav(data: bytes) -> Waveform:
    """Decode 16-bit PCM mono 16 kHz WAV bytes into a one-second waveform.

    Samples are scaled by 1/32768.  Clips shorter than one second are
    zero-padded at the end; longer clips are truncated.
    """
    try:
        with wave.open(io.BytesIO(data), "rb") as wf:
            channels = wf.getnchannels()
            rate = wf.getframerate()
            width = wf.getsampwidth()
            comp = wf.getcomptype()
            n = wf.getnframes()
            raw = wf.readframes(n)
    except (wave.Error, EOFError) as exc:
        raise MalformedWavError(f"not a valid RIFF/WAVE file: {exc}") from exc
    if channels != 1:
        raise UnsupportedChannelCountError(f"expected mono audio, got {channels} channels")
    if rate != SAMPLE_RATE:
        raise UnsupportedSampleRateError(f"expected {SAMPLE_RATE} Hz, got {rate} Hz")
    if width != 2 or comp != "NONE":
        raise UnsupportedSampleFormatError(
            f"expected 16-bit linear PCM, got width={width} comp={comp!r}"
        )
    pcm = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    if pcm.size < CLIP_SAMPLES:
        pcm = np.concatenate([pcm, np.zeros(CLIP_SAMPLES - pcm.size)])
    elif pcm.size > CLIP_SAMPLES:
        pcm = pcm[:CLIP_SAMPLES]
    return Waveform(samples=pcm)


def load_wav(path) -> Waveform:
    with open(path, "rb") as fh:
        return decode_wav(fh.read())


def _hz_to_mel(hz):
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def _mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank() -> np.ndarray:
    """Triangular mel filter weights, shape (40, 257), over rfft bin centers."""
    edges_mel = np.linspace(
        _hz_to_mel(MEL_LOW_HZ), _hz_to_mel(MEL_HIGH_HZ), NUM_MEL_FILTERS + 2
    )
    edges_hz = _mel_to_hz(edges_mel)
    bin_hz = np.arange(FFT_SIZE // 2 + 1) * (SAMPLE_RATE / FFT_SIZE)
    weights = np.zeros((NUM_MEL_FILTERS, FFT_SIZE // 2 + 1))
    for m in range(NUM_MEL_FILTERS):
        left, center, right = edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]
        up = (bin_hz - left) / (center - left)
        down = (right - bin_hz) / (right - center)
        weights[m] = np.maximum(0.0, np.minimum(up, down))
    return weights


def _frame_signal(w: Waveform) -> np.ndarray:
    """Pre-emphasize, pad to 16080 samples and slice into 99 windows of 400."""
    x = w.samples
    emphasized = np.concatenate([[x[0]], x[1:] - PREEMPHASIS * x[:-1]])
    padded = np.concatenate([emphasized, np.zeros(PADDED_SAMPLES - emphasized.size)])
    idx = np.arange(FRAME_LENGTH)[None, :] + FRAME_SHIFT * np.arange(NUM_FRAMES)[:, None]
    return padded[idx]


def mel_log_energies(w: Waveform) -> np.ndarray:
    """Log mel-filterbank energies, shape (99, 40); the stage before the DCT."""
    if w.sample_rate != SAMPLE_RATE:
        raise UnsupportedSampleRateError(f"expected {SAMPLE_RATE} Hz, got {w.sample_rate} Hz")
    if w.samples.size != CLIP_SAMPLES:
        raise FrontendError(f"expected {CLIP_SAMPLES} samples, got {w.samples.size}")
    frames = _frame_signal(w) * np.hamming(FRAME_LENGTH)
    magnitude = np.abs(np.fft.rfft(frames, n=FFT_SIZE, axis=1))
    energies = magnitude @ mel_filterbank().T
    return np.log(np.maximum(energies, LOG_FLOOR))


def mfcc(w: Waveform) -> np.ndarray:
    """40-dimensional MFCC features, shape (99, 40)."""
    logmel = mel_log_energies(w)
    return scipy.fft.dct(logmel, type=2, norm="ortho", axis=1)[:, :NUM_COEFFS]


def write_feature_file(path, features: np.ndarray) -> None:
    """Write one utterance's feature matrix as little-endian float32 + header."""
    features = np.asarray(features)
    if features.ndim != 2:
        raise FeatureCacheError(f"feature matrix must be 2-D, got shape {features.shape}")
    rows, cols = features.shape
    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(struct.pack("<III", CACHE_VERSION, rows, cols))
        fh.write(np.ascontiguousarray(features, dtype="<f4").tobytes())


def read_feature_file(path) -> np.ndarray:
    """Read a cached feature matrix; returns float32 values as float64."""
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) != 16 or header[:4] != CACHE_MAGIC:
            raise FeatureCacheError(f"bad feature cache header in {path}")
        version, rows, cols = struct.unpack("<III", header[4:])
        if version != CACHE_VERSION:
            raise FeatureCacheError(f"unsupported feature cache version {version}")
        payload = fh.read(rows * cols * 4)
        if len(payload) != rows * cols * 4:
            raise FeatureCacheError(f"truncated feature cache file {path}")
    data = np.frombuffer(payload, dtype="<f4").reshape(rows, cols)
    return data.astype(np.float64)
