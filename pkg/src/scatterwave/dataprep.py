"""Corpus handling: manifests, WAV ingestion, cleaning, splitting, preprocessing.

Manifest files are tab-separated text, one entry per line::

    path <TAB> label <TAB> sample_rate <TAB> split <TAB> hash

``#`` starts a comment line.  Paths are relative to the manifest's directory.
When preparing a user corpus, trailing fields may be omitted or written as
``-``; they are filled in (sample rate and hash from the decoded audio).
"""

from __future__ import annotations

import dataclasses
import functools
import hashlib
import logging
import math
import os
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
import scipy.io.wavfile
import scipy.signal

from . import dsp
from .errors import CorpusError, DegenerateInputError, InputError, ParameterError
from .features import FeatureImage
from .scattering import ScatteringConfig, build_scattering_bank, scatter_features

log = logging.getLogger(__name__)

SPLITS = ("train", "test", "unassigned")


@dataclass
class Signal:
    samples: np.ndarray
    sample_rate: float
    label: str | None = None
    source_id: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise InputError(f"signal {self.source_id!r} must be a non-empty 1-D array")
        if not self.sample_rate > 0:
            raise InputError(f"signal {self.source_id!r} has non-positive sample rate")

    def replace(self, samples=None, sample_rate=None) -> "Signal":
        return Signal(
            self.samples if samples is None else samples,
            self.sample_rate if sample_rate is None else sample_rate,
            self.label,
            self.source_id,
        )


@dataclass(frozen=True)
class PrepConfig:
    target_len: int = 8000
    target_rate: float = 47600.0
    min_class_count: int = 50
    train_fraction: float = 0.75
    seed: int = 0

    def __post_init__(self):
        if self.target_len < 1:
            raise ParameterError("target_len must be >= 1")
        if not 0.0 < self.train_fraction < 1.0:
            raise ParameterError("train_fraction must lie in (0, 1)")
        if not self.target_rate > 0:
            raise ParameterError("target_rate must be positive")
        if self.min_class_count < 1:
            raise ParameterError("min_class_count must be >= 1")


# --------------------------------------------------------------------------
# Per-signal operations
# --------------------------------------------------------------------------


def align(x: Signal, T: int) -> Signal:
    """Center-crop or zero-pad to exactly ``T`` samples.

    Odd leftovers go to the right: cropping keeps ``T//2`` samples before
    the center index ``K//2``; padding puts ``(T-K)//2`` zeros on the left.
    """
    if T < 1:
        raise ParameterError("T must be >= 1")
    s = x.samples
    K = s.size
    if K == T:
        return x.replace(samples=s.copy())
    if K > T:
        start = K // 2 - T // 2
        return x.replace(samples=s[start : start + T].copy())
    left = (T - K) // 2
    return x.replace(samples=np.pad(s, (left, T - K - left)))


def standardize(x: Signal) -> Signal:
    s = x.samples
    if s.size < 2:
        raise DegenerateInputError("standardize needs at least two samples")
    mu = s.mean()
    sigma = np.sqrt(np.sum((s - mu) ** 2) / (s.size - 1))
    if not sigma > 0:
        raise DegenerateInputError(f"signal {x.source_id!r} is constant; cannot standardize")
    return x.replace(samples=(s - mu) / sigma)


def _rate_ratio(target: float, current: float) -> Fraction:
    if float(target).is_integer() and float(current).is_integer():
        return Fraction(int(target), int(current))
    return Fraction(target / current).limit_denominator(10000)


def resample(x: Signal, target_rate: float) -> Signal:
    """Band-limited resampling (polyphase, Kaiser-windowed sinc).

    Output length is ``round(len * target_rate / sample_rate)``.
    """
    if not target_rate > 0:
        raise ParameterError("target_rate must be positive")
    if target_rate == x.sample_rate:
        return x.replace(samples=x.samples.copy())
    ratio = _rate_ratio(target_rate, x.sample_rate)
    y = scipy.signal.resample_poly(x.samples, ratio.numerator, ratio.denominator, window=("kaiser", 5.0))
    n_out = max(1, int(np.floor(x.samples.size * target_rate / x.sample_rate + 0.5)))
    if y.size >= n_out:
        y = y[:n_out]
    else:
        y = np.pad(y, (0, n_out - y.size))
    return x.replace(samples=y, sample_rate=float(target_rate))


# --------------------------------------------------------------------------
# Feature extraction
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Extractor:
    """Either a Mel spectrogram or a wavelet scattering transform."""

    kind: str = "mel"
    J: int = 6
    Q: int = 16
    mel: dsp.MelConfig = dsp.MelConfig()

    def __post_init__(self):
        if self.kind not in ("mel", "wst"):
            raise ParameterError(f"unknown extractor {self.kind!r}")

    @property
    def outputs(self) -> tuple[str, ...]:
        return ("mel",) if self.kind == "mel" else ("wst1", "wst2")


@functools.lru_cache(maxsize=8)
def _scattering_bank(cfg: ScatteringConfig):
    return build_scattering_bank(cfg)


def scattering_bank_for(extractor: Extractor, signal_len: int):
    return _scattering_bank(ScatteringConfig(extractor.J, extractor.Q, signal_len))


def preprocess(x: Signal, cfg: PrepConfig, extractor: Extractor) -> dict[str, FeatureImage]:
    """Resample, align, standardize, extract and median-normalize one signal."""
    y = resample(x, cfg.target_rate)
    y = align(y, cfg.target_len)
    y = standardize(y)
    if extractor.kind == "mel":
        img = dsp.mel_spectrogram(y.samples, y.sample_rate, extractor.mel)
        return {"mel": dsp.median_normalize(img)}
    bank = scattering_bank_for(extractor, cfg.target_len)
    s1, s2 = scatter_features(y.samples, bank)
    return {"wst1": s1, "wst2": s2}


# --------------------------------------------------------------------------
# WAV files
# --------------------------------------------------------------------------


def read_wav(path) -> tuple[np.ndarray, float]:
    """Decode PCM 8/16/24/32-bit or float WAV to mono float64."""
    rate, data = scipy.io.wavfile.read(path)
    if data.dtype == np.uint8:
        x = (data.astype(np.float64) - 128.0) / 128.0
    elif data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        x = data.astype(np.float64) / 2147483648.0
    elif data.dtype.kind == "f":
        x = data.astype(np.float64)
    else:
        raise InputError(f"{path}: unsupported WAV sample type {data.dtype}")
    if x.ndim == 2:
        x = x.mean(axis=1)
    return x, float(rate)


def write_wav(path, samples, sample_rate: float) -> None:
    scipy.io.wavfile.write(path, int(round(sample_rate)), np.asarray(samples, dtype=np.float32))


# --------------------------------------------------------------------------
# Manifest
# --------------------------------------------------------------------------


def content_hash(samples) -> int:
    """64-bit hash of the samples as canonical little-endian float32."""
    a = np.asarray(samples, dtype="<f4") + np.float32(0.0)  # folds -0.0 into 0.0
    a[np.isnan(a)] = np.nan
    return int.from_bytes(hashlib.blake2b(a.tobytes(), digest_size=8).digest(), "little")


@dataclass(frozen=True)
class ManifestEntry:
    label: str
    sample_rate: float
    path: str | None = None
    samples: np.ndarray | None = field(default=None, compare=False, repr=False)
    split: str = "unassigned"
    content_hash: int | None = None
    source_id: str = ""

    def load(self, root: Path | None = None) -> Signal:
        if self.samples is not None:
            return Signal(self.samples, self.sample_rate, self.label, self.source_id)
        if self.path is None:
            raise InputError(f"entry {self.source_id!r} has neither samples nor a path")
        p = Path(self.path)
        if root is not None and not p.is_absolute():
            p = Path(root) / p
        x, rate = read_wav(p)
        if rate != self.sample_rate:
            log.warning("%s: manifest says %g Hz, file says %g Hz; using the file", p, self.sample_rate, rate)
        return Signal(x, rate, self.label, self.source_id)


@dataclass
class Manifest:
    entries: list[ManifestEntry]
    root: Path | None = None

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def class_table(self) -> dict[str, int]:
        return {label: i for i, label in enumerate(sorted({e.label for e in self.entries}))}

    def label_ids(self) -> np.ndarray:
        table = self.class_table
        return np.array([table[e.label] for e in self.entries], dtype=np.int64)

    def class_counts(self) -> dict[str, int]:
        return dict(sorted(Counter(e.label for e in self.entries).items()))

    def subset(self, split: str) -> "Manifest":
        return Manifest([e for e in self.entries if e.split == split], self.root)

    def with_entries(self, entries) -> "Manifest":
        return Manifest(list(entries), self.root)


def _format_rate(rate: float) -> str:
    return str(int(rate)) if float(rate).is_integer() else repr(float(rate))


def format_manifest(m: Manifest) -> str:
    lines = ["# scatterwave manifest v1", "# path\tlabel\tsample_rate\tsplit\thash"]
    for e in m.entries:
        h = "-" if e.content_hash is None else f"{e.content_hash:016x}"
        lines.append("\t".join([e.path or "-", e.label, _format_rate(e.sample_rate), e.split, h]))
    return "\n".join(lines) + "\n"


def write_manifest(m: Manifest, path) -> None:
    Path(path).write_text(format_manifest(m), encoding="utf-8")


def read_manifest(path) -> Manifest:
    path = Path(path)
    entries = []
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) < 2 or len(fields) > 5:
            raise InputError(f"{path}:{lineno}: expected 2 to 5 tab-separated fields, got {len(fields)}")
        fields += ["-"] * (5 - len(fields))
        p, label, rate, split, h = fields
        if split == "-":
            split = "unassigned"
        if split not in SPLITS:
            raise InputError(f"{path}:{lineno}: unknown split {split!r}")
        try:
            rate_v = float("nan") if rate == "-" else float(rate)
            hash_v = None if h == "-" else int(h, 16)
        except ValueError as exc:
            raise InputError(f"{path}:{lineno}: {exc}") from None
        entries.append(ManifestEntry(label, rate_v, p, None, split, hash_v, Path(p).stem))
    return Manifest(entries, path.parent)


def complete_entries(m: Manifest) -> Manifest:
    """Fill in missing sample rates and content hashes by decoding the audio."""
    out = []
    for e in m.entries:
        if e.content_hash is not None and not math.isnan(e.sample_rate):
            out.append(e)
            continue
        if e.samples is not None:
            x, rate = e.samples, e.sample_rate
        else:
            p = Path(e.path) if m.root is None or Path(e.path).is_absolute() else m.root / e.path
            x, rate = read_wav(p)
        out.append(dataclasses.replace(e, sample_rate=rate, content_hash=content_hash(x)))
    return m.with_entries(out)


def dedup(m: Manifest) -> Manifest:
    """Keep one entry per content hash; drop every copy whose labels disagree."""
    groups: dict[int, list[int]] = defaultdict(list)
    for i, e in enumerate(m.entries):
        if e.content_hash is None:
            raise InputError(f"entry {e.source_id!r} has no content hash")
        groups[e.content_hash].append(i)
    keep = set()
    n_dup = n_conflict = 0
    for idx in groups.values():
        labels = {m.entries[i].label for i in idx}
        if len(labels) > 1:
            n_conflict += len(idx)
            continue
        keep.add(idx[0])
        n_dup += len(idx) - 1
    if n_dup or n_conflict:
        log.info("dedup: removed %d duplicate copies and %d entries with conflicting labels", n_dup, n_conflict)
    return m.with_entries(e for i, e in enumerate(m.entries) if i in keep)


def filter_classes(m: Manifest, min_count: int) -> Manifest:
    if min_count < 1:
        raise ParameterError("min_count must be >= 1")
    counts = Counter(e.label for e in m.entries)
    kept = {label for label, n in counts.items() if n >= min_count}
    dropped = sorted(set(counts) - kept)
    if dropped:
        log.info("filter_classes: dropping %d classes with fewer than %d entries: %s", len(dropped), min_count, dropped)
    if not kept:
        raise CorpusError(f"no class has at least {min_count} entries")
    return m.with_entries(e for e in m.entries if e.label in kept)


def stratified_split(m: Manifest, train_fraction: float, seed: int) -> Manifest:
    """Per class, tag ``round(n * train_fraction)`` entries as train, the rest test.

    Rounding is half-up; every class keeps at least one entry on each side.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ParameterError("train_fraction must lie in (0, 1)")
    by_label: dict[str, list[int]] = defaultdict(list)
    for i, e in enumerate(m.entries):
        by_label[e.label].append(i)
    rng = np.random.default_rng(seed)
    split = ["test"] * len(m.entries)
    for label in sorted(by_label):
        idx = by_label[label]
        n = len(idx)
        if n < 2:
            raise CorpusError(f"class {label!r} has {n} entry; stratified split needs at least 2")
        n_train = min(max(int(np.floor(n * train_fraction + 0.5)), 1), n - 1)
        order = rng.permutation(n)
        for k in order[:n_train]:
            split[idx[k]] = "train"
    return m.with_entries(dataclasses.replace(e, split=s) for e, s in zip(m.entries, split))


# --------------------------------------------------------------------------
# Synthetic corpus
# --------------------------------------------------------------------------


def make_synthetic_corpus(C: int, per_class: int, length: int, rate: float, seed: int,
                          imbalance: float = 1.0) -> Manifest:
    """Amplitude-modulated linear chirps in ``C`` disjoint bands plus noise.

    Class ``c`` sweeps inside band ``c`` of ``[0, rate/2]``; the noise level is
    drawn per signal for an SNR in [5, 20] dB.  ``imbalance < 1`` shrinks
    class ``c`` to ``round(per_class * imbalance**c)`` entries (at least 2).
    """
    if C < 2:
        raise ParameterError("need at least two classes")
    if per_class < 1 or length < 2:
        raise ParameterError("per_class must be >= 1 and length >= 2")
    if not 0.0 < imbalance <= 1.0:
        raise ParameterError("imbalance must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    t = np.arange(length) / rate
    duration = length / rate
    band = rate / 2.0 / C
    entries = []
    for c in range(C):
        count = max(2, int(np.floor(per_class * imbalance**c + 0.5)))
        lo, hi = c * band + 0.1 * band, (c + 1) * band - 0.1 * band
        for i in range(count):
            f0, f1 = rng.uniform(lo, hi, size=2)
            phase = rng.uniform(0, 2 * np.pi)
            inst_phase = 2 * np.pi * (f0 * t + 0.5 * (f1 - f0) / duration * t**2) + phase
            depth = rng.uniform(0.3, 0.8)
            am_cycles = rng.uniform(1.0, 6.0)
            am = 1.0 + depth * np.sin(2 * np.pi * am_cycles * t / duration + rng.uniform(0, 2 * np.pi))
            clean = rng.uniform(0.1, 1.0) * am * np.cos(inst_phase)
            snr_db = rng.uniform(5.0, 20.0)
            noise_power = np.mean(clean**2) / 10.0 ** (snr_db / 10.0)
            x = (clean + rng.standard_normal(length) * np.sqrt(noise_power)).astype(np.float32)
            sid = f"syn_c{c:02d}_{i:04d}"
            entries.append(ManifestEntry(
                label=f"class_{c:02d}", sample_rate=float(rate), path=f"{sid}.wav", samples=x,
                content_hash=content_hash(x), source_id=sid,
            ))
    return Manifest(entries)


def thread_count(default: int = 1) -> int:
    """Worker cap from ``SCATTERWAVE_THREADS``."""
    raw = os.environ.get("SCATTERWAVE_THREADS")
    if not raw:
        return default
    try:
        return max(1, int(raw))
    except ValueError:
        raise ParameterError(f"SCATTERWAVE_THREADS must be an integer, got {raw!r}") from None
