"""Speech Commands V1 ingestion: splits, labels and feature batching.

The archive layout is one directory per word plus `validation_list.txt`
and `testing_list.txt`; files on those lists go to the dev and test
splits, everything else is training data.  The 10 keywords map to
classes 0-9 in a fixed order and all 20 filler words collapse into
class 10.  The `_background_noise_` directory is ignored: the model has
no silence class.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from stconv_kws import frontend

logger = logging.getLogger(__name__)

KEYWORDS = ("down", "go", "left", "no", "off", "on", "right", "stop", "up", "yes")
FILLERS = (
    "bed", "bird", "cat", "dog", "happy", "house", "marvin", "sheila", "tree",
    "wow", "zero", "one", "two", "three", "four", "five", "six", "seven",
    "eight", "nine",
)
FILLER_CLASS = len(KEYWORDS)          # 10
NUM_CLASSES = FILLER_CLASS + 1        # 11
CLASS_NAMES = KEYWORDS + ("unknown",)

_LABELS = {w: i for i, w in enumerate(KEYWORDS)}
_LABELS.update({w: FILLER_CLASS for w in FILLERS})


class DatasetError(Exception):
    """Archive layout or file contents are not usable."""


def label_of(word: str) -> int:
    """Class index of a word: keywords 0-9, fillers 10; others rejected."""
    try:
        return _LABELS[word]
    except KeyError:
        raise DatasetError(f"unknown word {word!r}") from None


@dataclass(frozen=True)
class Example:
    path: str        # relative path within the archive, e.g. "yes/abc_nohash_0.wav"
    word: str
    label: int
    split: str       # train | dev | test


@dataclass
class SplitManifest:
    root: Path
    train: list = field(default_factory=list)
    dev: list = field(default_factory=list)
    test: list = field(default_factory=list)
    skipped_words: dict = field(default_factory=dict)   # word -> file count

    def split(self, name: str) -> list:
        try:
            return {"train": self.train, "dev": self.dev, "test": self.test}[name]
        except KeyError:
            raise DatasetError(f"unknown split {name!r}") from None

    def counts(self):
        return len(self.train), len(self.dev), len(self.test)


def _read_list(path: Path) -> set:
    if not path.is_file():
        raise DatasetError(f"missing split list {path}")
    with open(path) as fh:
        return {line.strip() for line in fh if line.strip()}


def ingest(root_dir) -> SplitManifest:
    """Enumerate the archive and assign every WAV file to exactly one split."""
    root = Path(root_dir)
    if not root.is_dir():
        raise DatasetError(f"dataset directory {root} does not exist")
    dev_list = _read_list(root / "validation_list.txt")
    test_list = _read_list(root / "testing_list.txt")
    manifest = SplitManifest(root=root)
    for word_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        word = word_dir.name
        if word == "_background_noise_":
            continue
        wavs = sorted(word_dir.glob("*.wav"))
        if word not in _LABELS:
            if wavs:
                logger.warning("skipping unknown word directory %r (%d files)", word, len(wavs))
                manifest.skipped_words[word] = len(wavs)
            continue
        label = _LABELS[word]
        for wav in wavs:
            rel = f"{word}/{wav.name}"
            if rel in dev_list:
                split = "dev"
            elif rel in test_list:
                split = "test"
            else:
                split = "train"
            manifest.split(split).append(Example(rel, word, label, split))
    if not any(manifest.counts()):
        raise DatasetError(f"no WAV files found under {root}")
    return manifest


def features_for(manifest: SplitManifest, example: Example, cache_dir=None) -> np.ndarray:
    """99x40 feature matrix for one example, via the cache when present.

    Features are quantised to float32 before use so that freshly
    computed and cached values are bit-identical.
    """
    if cache_dir is not None:
        cache_path = Path(cache_dir) / (example.path[: -len(".wav")] + ".stcf")
        if cache_path.is_file():
            return frontend.read_feature_file(cache_path)
    wav_path = manifest.root / example.path
    try:
        feats = frontend.mfcc(frontend.load_wav(wav_path))
    except (OSError, frontend.FrontendError) as exc:
        raise DatasetError(f"cannot extract features from {wav_path}: {exc}") from exc
    feats = feats.astype(np.float32).astype(np.float64)
    if cache_dir is not None:
        cache_path.parent.mkdir(parents=True, exist_ok=True)
        frontend.write_feature_file(cache_path, feats)
    return feats


def load_split(manifest: SplitManifest, split: str, cache_dir=None):
    """Materialise a whole split as (features (N, 99, 40), labels (N,))."""
    examples = manifest.split(split)
    if not examples:
        raise DatasetError(f"split {split!r} is empty")
    feats = np.empty((len(examples), frontend.NUM_FRAMES, frontend.NUM_COEFFS))
    labels = np.empty(len(examples), dtype=np.int64)
    for i, ex in enumerate(examples):
        feats[i] = features_for(manifest, ex, cache_dir)
        labels[i] = ex.label
    return feats, labels


def batches(manifest: SplitManifest, split: str, batch_size: int, seed: int, epoch: int,
            cache_dir=None):
    """Seeded per-epoch shuffled mini-batches of (features, labels).

    Deterministic given (seed, epoch); the final partial batch is kept.
    """
    examples = manifest.split(split)
    if not examples:
        raise DatasetError(f"split {split!r} is empty")
    order = np.random.default_rng([seed, epoch]).permutation(len(examples))
    for start in range(0, len(order), batch_size):
        idx = order[start : start + batch_size]
        feats = np.stack([features_for(manifest, examples[i], cache_dir) for i in idx])
        labels = np.array([examples[i].label for i in idx], dtype=np.int64)
        yield feats, labels
