"""Rule-based segmentation of continuous recordings into labeled 1 s segments."""
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import uniform_filter1d
from scipy.signal import find_peaks

from app.util.dsp import SAMPLE_RATE_HZ, DspConfig, Waveform, preprocess
from app.util.synthgen import SEGMENT_SAMPLES, Label, Segment

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AnnotatorConfig:
    min_separation_s: float = 5.0
    prominence_factor_k: float = 8.0
    envelope_smooth_ms: float = 2.0
    pre_s: float = 0.25
    post_s: float = 0.75
    # a candidate this close before a surviving peak, and at least event_ratio
    # of its prominence, belongs to the same event (first click of a double)
    event_span_s: float = 0.5
    event_ratio: float = 0.3

    def __post_init__(self):
        if not math.isclose(self.pre_s + self.post_s, 1.0, abs_tol=1e-9):
            raise ValueError("pre_s + post_s must equal the 1 s segment length")
        if self.pre_s < 0 or self.post_s < 0:
            raise ValueError("pre_s and post_s must be nonnegative")
        if self.min_separation_s < self.pre_s + self.post_s:
            raise ValueError("min_separation_s must be at least one segment length")
        if not 0 <= self.event_span_s < self.min_separation_s:
            raise ValueError("event_span_s must lie in [0, min_separation_s)")
        if self.prominence_factor_k <= 0 or self.envelope_smooth_ms <= 0:
            raise ValueError("prominence factor and envelope window must be positive")


@dataclass(frozen=True)
class PeakList:
    indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    prominences: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __len__(self) -> int:
        return int(self.indices.shape[0])

    def times_s(self, fs_hz: int = SAMPLE_RATE_HZ) -> np.ndarray:
        return self.indices / fs_hz


def envelope(w: Waveform, smooth_ms: float) -> np.ndarray:
    width = max(1, int(round(smooth_ms * 1e-3 * w.sample_rate_hz)))
    return uniform_filter1d(np.abs(w.samples), size=width, mode="constant")


def _suppress(indices: np.ndarray, prominences: np.ndarray, min_gap: int) -> np.ndarray:
    """Greedy: most prominent first, drop anything within min_gap of a kept peak."""
    kept = []
    for i in np.argsort(-prominences, kind="stable"):
        if all(abs(int(indices[i]) - int(indices[j])) >= min_gap for j in kept):
            kept.append(i)
    return np.array(sorted(kept, key=lambda j: indices[j]), dtype=np.int64)


def detect_peaks(w: Waveform, cfg: AnnotatorConfig = AnnotatorConfig()) -> PeakList:
    env = envelope(w, cfg.envelope_smooth_ms)
    mad = float(np.median(np.abs(env - np.median(env))))
    threshold = max(cfg.prominence_factor_k * mad, np.finfo(np.float64).tiny)
    candidates, props = find_peaks(env, prominence=threshold)
    if candidates.size == 0:
        return PeakList()
    prominences = props["prominences"]

    fs = w.sample_rate_hz
    min_gap = int(round(cfg.min_separation_s * fs))
    span = int(round(cfg.event_span_s * fs))
    survivors = _suppress(candidates, prominences, min_gap)

    anchored, anchored_prom = [], []
    for i in survivors:
        peak, prom = candidates[i], prominences[i]
        same_event = (candidates >= peak - span) & (candidates < peak) & (prominences >= cfg.event_ratio * prom)
        anchored.append(int(candidates[same_event][0]) if np.any(same_event) else int(peak))
        anchored_prom.append(float(prom))

    # re-anchoring can pull a peak towards its predecessor; restore the gap rule
    keep = _suppress(np.array(anchored), np.array(anchored_prom), min_gap)
    return PeakList(np.array(anchored, dtype=np.int64)[keep], np.array(anchored_prom)[keep])


def extract_segments(w: Waveform, peaks: PeakList, cfg: AnnotatorConfig, label: Label,
                     participant_id: str = "", session_id: str = "session"):
    """Cuts [peak - pre_s, peak + post_s) around every peak.

    Returns:
        tuple: (list of Segment, number of peaks dropped at the recording edges)
    """
    pre = int(round(cfg.pre_s * w.sample_rate_hz))
    post = SEGMENT_SAMPLES - pre
    segments, dropped = [], 0
    for idx in peaks.indices:
        start, end = int(idx) - pre, int(idx) + post
        if start < 0 or end > len(w):
            dropped += 1
            continue
        segments.append(Segment(Waveform(w.samples[start:end]), label, participant_id, f"{session_id}@{start}"))
    if dropped:
        logger.info("%s: dropped %d boundary peak(s)", session_id, dropped)
    return segments, dropped


def segment_nonpattern(w: Waveform, label: Label, participant_id: str = "", session_id: str = "session") -> list:
    if label.is_pattern:
        raise ValueError("segment_nonpattern only applies to NoPattern streams")
    n = len(w) // SEGMENT_SAMPLES
    return [
        Segment(Waveform(w.samples[i * SEGMENT_SAMPLES:(i + 1) * SEGMENT_SAMPLES]), label, participant_id,
                f"{session_id}@{i * SEGMENT_SAMPLES}")
        for i in range(n)
    ]


@dataclass
class Annotation:
    segments: list
    peaks: PeakList
    n_dropped: int = 0


def annotate_recording(w: Waveform, label: Label, cfg: AnnotatorConfig = AnnotatorConfig(),
                       dsp_cfg: DspConfig = DspConfig(), participant_id: str = "",
                       session_id: str = "session") -> Annotation:
    """Detects on the preprocessed stream, cuts segments from the raw one."""
    if not label.is_pattern:
        return Annotation(segment_nonpattern(w, label, participant_id, session_id), PeakList())
    peaks = detect_peaks(preprocess(w, dsp_cfg), cfg)
    segments, dropped = extract_segments(w, peaks, cfg, label, participant_id, session_id)
    return Annotation(segments, peaks, dropped)
