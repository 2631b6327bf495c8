import io
import wave
from pathlib import Path

import numpy as np
import pytest

from stconv_kws.model import ModelConfig


def rel_err(a, b):
    """Scale-free distance between two gradient arrays."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-8)
    return np.linalg.norm(a - b) / denom


def numeric_grad(f, arr, step=1e-5):
    """Central finite differences of scalar f() w.r.t. the array in place."""
    grad = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = arr[idx]
        arr[idx] = orig + step
        fp = f()
        arr[idx] = orig - step
        fm = f()
        arr[idx] = orig
        grad[idx] = (fp - fm) / (2.0 * step)
    return grad


def randomize(layer, rng, scale=0.5):
    """Fill a layer's parameter arrays with random values."""
    for arr in layer.params.values():
        arr[...] = rng.normal(scale=scale, size=arr.shape)


def wav_bytes(samples_i16, rate=16000, channels=1, width=2):
    """Build in-memory WAV bytes from int16 samples."""
    buf = io.BytesIO()
    with wave.open(buf, "wb") as wf:
        wf.setnchannels(channels)
        wf.setsampwidth(width)
        wf.setframerate(rate)
        wf.writeframes(np.asarray(samples_i16, dtype="<i2").tobytes())
    return buf.getvalue()


def tone_samples(freq_hz, n=16000, amp=0.4, noise=0.02, seed=0, rate=16000):
    rng = np.random.default_rng(seed)
    t = np.arange(n) / rate
    x = amp * np.sin(2 * np.pi * freq_hz * t) + noise * rng.standard_normal(n)
    return np.clip(x * 32767, -32768, 32767).astype(np.int16)


def build_tone_dataset(root: Path, word_freqs, n_train=6, n_dev=2, n_test=2):
    """Speech Commands style tree of pure-tone clips, one frequency per word."""
    root.mkdir(parents=True, exist_ok=True)
    dev_lines, test_lines = [], []
    seed = 0
    for word, freq in word_freqs.items():
        word_dir = root / word
        word_dir.mkdir(exist_ok=True)
        for i in range(n_train + n_dev + n_test):
            seed += 1
            name = f"{word}_{i:03d}.wav"
            samples = tone_samples(freq, seed=seed)
            (word_dir / name).write_bytes(wav_bytes(samples))
            rel = f"{word}/{name}"
            if i >= n_train + n_dev:
                test_lines.append(rel)
            elif i >= n_train:
                dev_lines.append(rel)
    (root / "validation_list.txt").write_text("\n".join(dev_lines) + "\n")
    (root / "testing_list.txt").write_text("\n".join(test_lines) + "\n")
    return root


def small_config(**overrides):
    """A desk-sized model configuration for oracle and gradient tests."""
    base = dict(
        channels=4,
        num_blocks=2,
        bgru_hidden=4,
        heads=2,
        fc_out=4,
        num_classes=3,
        query_index=3,
        num_frames=9,
        num_mfcc=5,
    )
    base.update(overrides)
    return ModelConfig(**base)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
