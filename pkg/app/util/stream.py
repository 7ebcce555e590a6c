"""Sliding-window detection over a continuous recording: gate on click peaks, classify, debounce."""
import logging
from dataclasses import dataclass, field

import numpy as np

from app.util.annotator import AnnotatorConfig, detect_peaks
from app.util.dsp import DspConfig, Waveform, preprocess
from app.util.features import FeatureSet, segment_features
from app.util.model import Model, predict_proba
from app.util.my_math import argmax_lowest
from app.util.synthgen import SEGMENT_SAMPLES, EventClass, Label, Segment

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class StreamConfig:
    hop_s: float = 0.25
    gate: AnnotatorConfig = AnnotatorConfig(min_separation_s=1.0)
    debounce_s: float = 1.0
    min_confidence: float = 0.6
    # a window is classified only when a gate peak falls this early in it
    onset_zone_s: float = 0.5
    feature_set: FeatureSet = FeatureSet.FULL41
    dsp: DspConfig = DspConfig()

    def __post_init__(self):
        object.__setattr__(self, "feature_set", FeatureSet(self.feature_set))
        if not 0 < self.hop_s <= 1.0:
            raise ValueError(f"hop_s must lie in (0, 1], got {self.hop_s}")
        if self.debounce_s < self.hop_s:
            raise ValueError("debounce_s must be at least hop_s")
        if not 0.0 <= self.min_confidence <= 1.0:
            raise ValueError("min_confidence must lie in [0, 1]")
        if not 0 < self.onset_zone_s <= 1.0:
            raise ValueError("onset_zone_s must lie in (0, 1]")


@dataclass(frozen=True)
class DetectionEvent:
    onset_s: float
    label: Label
    confidence: float
    window_span_s: tuple = field(default=(0.0, 1.0))

    def __post_init__(self):
        if not self.label.is_pattern:
            raise ValueError("detections are pattern events only")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")

    def to_dict(self) -> dict:
        return {'onset_s': self.onset_s, 'label': str(self.label), 'confidence': self.confidence,
                'window_start_s': self.window_span_s[0], 'window_end_s': self.window_span_s[1]}


def window_probabilities(model: Model, window: Waveform, scfg: StreamConfig = StreamConfig()) -> np.ndarray:
    """Class probabilities of one raw 1 s window; what stream_detect logs for each event."""
    seg = Segment(window, Label(EventClass.NO_PATTERN, "silence"), "", "stream")
    values = segment_features(seg, scfg.feature_set, scfg.dsp).values
    return predict_proba(model, values[None])[0]


def stream_detect(w: Waveform, model: Model, scfg: StreamConfig = StreamConfig()) -> list:
    """
    Slides a 1 s window over ``w`` in hops of ``hop_s`` and emits pattern detections.

    The gate runs once on the preprocessed recording. A window is classified
    only when a gate peak lies in its first ``onset_zone_s``; each classified
    window is featurized from its raw samples on its own, so re-running
    ``window_probabilities`` on an emitted window reproduces its confidence.

    Args:
        w (Waveform): Raw recording.
        model (Model): Trained classifier.
        scfg (StreamConfig): Windowing, gating and debounce settings.

    Returns:
        list: DetectionEvent in time order, onsets at least ``debounce_s`` apart.
    """
    fs = w.sample_rate_hz
    if len(w) < SEGMENT_SAMPLES:
        return []
    gate_peaks = np.sort(detect_peaks(preprocess(w, scfg.dsp), scfg.gate).indices)
    hop = max(1, int(round(scfg.hop_s * fs)))
    zone = int(round(scfg.onset_zone_s * fs))

    events, last_onset_s, n_classified = [], -np.inf, 0
    for start in range(0, len(w) - SEGMENT_SAMPLES + 1, hop):
        lo = np.searchsorted(gate_peaks, start)
        if lo == len(gate_peaks) or gate_peaks[lo] >= start + zone:
            continue
        onset_s = float(gate_peaks[lo]) / fs
        if onset_s - last_onset_s < scfg.debounce_s:
            continue

        window = Waveform(w.samples[start:start + SEGMENT_SAMPLES], fs)
        probs = window_probabilities(model, window, scfg)
        n_classified += 1
        cls = int(argmax_lowest(probs))
        if cls == EventClass.NO_PATTERN or probs[cls] < scfg.min_confidence:
            continue
        events.append(DetectionEvent(onset_s, Label(EventClass(cls)), float(probs[cls]),
                                     (start / fs, (start + SEGMENT_SAMPLES) / fs)))
        last_onset_s = onset_s
        logger.debug("detected %s at %.3f s (p=%.3f)", EventClass(cls).slug, onset_s, probs[cls])

    logger.info("stream: %d gate peaks, %d windows classified, %d events", len(gate_peaks), n_classified, len(events))
    return events
