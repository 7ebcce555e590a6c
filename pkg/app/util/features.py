"""Spectral-temporal features: log-mel, deltas, zero-crossing rate, short-term energy.

A 1 s segment becomes a (rows x 79) matrix; the default ``FULL41`` set stacks
13 log-mel, 13 delta, 13 delta-delta, ZCR and STE rows in that order.
"""
import logging
import os
import struct
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import librosa
import numpy as np
from scipy import fft
from scipy.signal import get_window

from app.util.dsp import SAMPLE_RATE_HZ, DspConfig, preprocess
from app.util.errors import CorpusIOError, FeatureShapeError
from app.util.synthgen import SEGMENT_SAMPLES, Segment

logger = logging.getLogger(__name__)

FRAME_LEN = 1200
HOP = 600
N_FRAMES = (SEGMENT_SAMPLES - FRAME_LEN) // HOP + 1
N_FFT = 2048
MEL_LO_HZ = 300.0
MEL_HI_HZ = 5000.0
LOG_FLOOR = 1e-10
DELTA_WINDOW_N = 2

FEATURE_MAGIC = b"STLF"
FEATURE_VERSION = 1
_HEADER = struct.Struct("<4sIII")


class FeatureSet(str, Enum):
    LOGMEL13 = "logmel13"
    LOGMEL13_DELTA = "logmel13_delta"
    LOGMEL13_DELTA_DELTA = "logmel13_delta_delta"
    LOGMEL64 = "logmel64"
    FULL41 = "full41"

    @property
    def n_mels(self) -> int:
        return 64 if self == FeatureSet.LOGMEL64 else 13

    @property
    def n_rows(self) -> int:
        return {
            FeatureSet.LOGMEL13: 13,
            FeatureSet.LOGMEL13_DELTA: 26,
            FeatureSet.LOGMEL13_DELTA_DELTA: 39,
            FeatureSet.LOGMEL64: 64,
            FeatureSet.FULL41: 41,
        }[self]


@dataclass(frozen=True)
class MelFilterbank:
    weights: np.ndarray
    f_lo: float
    f_hi: float
    center_freqs_hz: np.ndarray

    @property
    def n_mels(self) -> int:
        return self.weights.shape[0]


@lru_cache(maxsize=None)
def make_mel_filterbank(n_mels: int = 13, f_lo: float = MEL_LO_HZ, f_hi: float = MEL_HI_HZ) -> MelFilterbank:
    """Triangular HTK-mel filters over [f_lo, f_hi], unnormalized peaks of 1."""
    weights = librosa.filters.mel(sr=SAMPLE_RATE_HZ, n_fft=N_FFT, n_mels=n_mels, fmin=f_lo, fmax=f_hi,
                                  htk=True, norm=None, dtype=np.float64)
    centers = librosa.mel_frequencies(n_mels=n_mels + 2, fmin=f_lo, fmax=f_hi, htk=True)[1:-1]
    return MelFilterbank(weights, f_lo, f_hi, centers)


@dataclass(frozen=True)
class FeatureMatrix:
    values: np.ndarray
    feature_set: FeatureSet = FeatureSet.FULL41

    def __post_init__(self):
        expected = (self.feature_set.n_rows, N_FRAMES)
        if self.values.shape != expected:
            raise FeatureShapeError(f"feature matrix must be {expected}, got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise FeatureShapeError("feature matrix contains non-finite values")


def _samples(seg) -> np.ndarray:
    x = seg.wave.samples if isinstance(seg, Segment) else np.asarray(getattr(seg, "samples", seg), dtype=np.float64)
    if x.shape != (SEGMENT_SAMPLES,):
        raise FeatureShapeError(f"expected a {SEGMENT_SAMPLES}-sample segment, got shape {x.shape}")
    return x


def frame(seg) -> np.ndarray:
    """(79, 1200) view; window i covers samples [600 i, 600 i + 1200)."""
    return np.lib.stride_tricks.sliding_window_view(_samples(seg), FRAME_LEN)[::HOP]


_WINDOW = get_window("hann", FRAME_LEN)


def power_spectrum(frames: np.ndarray) -> np.ndarray:
    """|rfft|^2 of Hann-windowed frames zero-padded to 2048 points, (n_frames, 1025)."""
    return np.abs(fft.rfft(frames * _WINDOW, n=N_FFT, axis=-1)) ** 2


def log_mel(seg, fb: MelFilterbank) -> np.ndarray:
    mel = power_spectrum(frame(seg)) @ fb.weights.T
    return np.log10(np.maximum(mel, LOG_FLOOR)).T


def delta(m: np.ndarray, window_n: int = DELTA_WINDOW_N) -> np.ndarray:
    """Regression delta along time with replicate-padded edges."""
    if window_n < 1:
        raise ValueError("delta window must be >= 1")
    return librosa.feature.delta(np.asarray(m, dtype=np.float64), width=2 * window_n + 1, order=1,
                                 axis=-1, mode="nearest")


def zcr(seg) -> np.ndarray:
    positive = frame(seg) >= 0
    crossings = np.count_nonzero(positive[:, 1:] != positive[:, :-1], axis=1)
    return (crossings / (FRAME_LEN - 1))[None, :]


def ste(seg) -> np.ndarray:
    frames = frame(seg)
    return np.sum(frames * frames, axis=1)[None, :]


def featurize(seg, fb: MelFilterbank = None, feature_set: FeatureSet = FeatureSet.FULL41) -> FeatureMatrix:
    feature_set = FeatureSet(feature_set)
    if fb is None or fb.n_mels != feature_set.n_mels:
        fb = make_mel_filterbank(feature_set.n_mels)
    mel = log_mel(seg, fb)
    if feature_set in (FeatureSet.LOGMEL13, FeatureSet.LOGMEL64):
        return FeatureMatrix(mel, feature_set)
    d1 = delta(mel)
    if feature_set == FeatureSet.LOGMEL13_DELTA:
        return FeatureMatrix(np.vstack([mel, d1]), feature_set)
    d2 = delta(d1)
    if feature_set == FeatureSet.LOGMEL13_DELTA_DELTA:
        return FeatureMatrix(np.vstack([mel, d1, d2]), feature_set)
    return FeatureMatrix(np.vstack([mel, d1, d2, zcr(seg), ste(seg)]), feature_set)


def segment_features(seg: Segment, feature_set: FeatureSet = FeatureSet.FULL41,
                     dsp_cfg: DspConfig = DspConfig()) -> FeatureMatrix:
    """Raw segment in, model input out: preprocess then featurize."""
    return featurize(preprocess(seg.wave, dsp_cfg), None, feature_set)


def write_feature_file(path: str, fm: FeatureMatrix) -> str:
    rows, cols = fm.values.shape
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    try:
        with open(path, "wb") as f:
            f.write(_HEADER.pack(FEATURE_MAGIC, FEATURE_VERSION, rows, cols))
            f.write(np.ascontiguousarray(fm.values, dtype="<f4").tobytes())
    except OSError as e:
        raise CorpusIOError(f"cannot write feature file: {e}", path) from e
    return path


def read_feature_file(path: str) -> np.ndarray:
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as e:
        raise CorpusIOError(f"cannot read feature file: {e}", path) from e
    if len(blob) < _HEADER.size:
        raise CorpusIOError("truncated feature file", path)
    magic, version, rows, cols = _HEADER.unpack_from(blob)
    if magic != FEATURE_MAGIC or version != FEATURE_VERSION:
        raise CorpusIOError(f"not a v{FEATURE_VERSION} feature file", path)
    data = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size)
    if data.size != rows * cols:
        raise CorpusIOError(f"expected {rows * cols} values, found {data.size}", path)
    return data.reshape(rows, cols).astype(np.float64)
