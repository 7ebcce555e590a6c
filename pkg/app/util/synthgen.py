"""Synthetic vibration corpus: per-participant click resonances, the two
target patterns, six no-pattern textures and protocol-timed sessions.

Everything is a deterministic function of the seeds handed in; callers derive
one generator per segment so output never depends on generation order.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from functools import lru_cache

import numpy as np
from scipy import signal

from app.util.dsp import SAMPLE_RATE_HZ, Waveform

logger = logging.getLogger(__name__)

SEGMENT_SAMPLES = SAMPLE_RATE_HZ
CLICK_WINDOW_S = 0.025
CLICK_TAPER_S = 0.005

MODE_FREQ_RANGE_HZ = (400.0, 5200.0)
# primary resonance band chosen by seed % 3: low, mid, high
PRIMARY_BANDS_HZ = ((400.0, 1000.0), (1000.0, 3000.0), (3000.0, 5200.0))
DECAY_TAU_RANGE_MS = (2.0, 8.0)
CLICK_AMP_RANGE = (0.2, 0.5)
CLICK_TO_FLOOR_RANGE = (40.0, 100.0)
AMP_JITTER_DB = 3.0

EVENT_OFFSET_S = 0.25
EVENT_JITTER_S = 0.05
DOUBLE_CLICK_GAP_S = (0.08, 0.4)
SESSION_GAP_S = (5.0, 8.0)
SESSION_LEAD_IN_S = (1.0, 2.0)
SESSION_TAIL_S = (2.0, 3.0)


class EventClass(IntEnum):
    NO_PATTERN = 0
    PATTERN1 = 1
    PATTERN2 = 2

    @property
    def slug(self) -> str:
        return {0: "nopattern", 1: "pattern1", 2: "pattern2"}[int(self)]


class NoPatternKind(str, Enum):
    SPEECH = "speech"
    CHEWING = "chewing"
    MOTION = "motion"
    BABBLE = "babble"
    MUSIC = "music"
    SILENCE = "silence"


NOISE_POOL_KINDS = (NoPatternKind.BABBLE, NoPatternKind.MUSIC, NoPatternKind.MOTION, NoPatternKind.CHEWING)


@dataclass(frozen=True)
class Label:
    cls: EventClass
    kind: NoPatternKind = None

    def __post_init__(self):
        object.__setattr__(self, "cls", EventClass(self.cls))
        if self.kind is not None:
            object.__setattr__(self, "kind", NoPatternKind(self.kind))
        if (self.kind is not None) != (self.cls == EventClass.NO_PATTERN):
            raise ValueError("nopattern kind must be given exactly when the label is NoPattern")

    @classmethod
    def parse(cls, text: str) -> "Label":
        """Accepts ``pattern1``, ``pattern2`` or ``nopattern:<kind>`` (a bare kind name also works)."""
        text = text.strip().lower()
        if text == "pattern1":
            return cls(EventClass.PATTERN1)
        if text == "pattern2":
            return cls(EventClass.PATTERN2)
        kind = text.split(":", 1)[1] if text.startswith("nopattern:") else text
        try:
            return cls(EventClass.NO_PATTERN, NoPatternKind(kind))
        except ValueError as e:
            raise ValueError(f"unknown label {text!r}") from e

    @property
    def is_pattern(self) -> bool:
        return self.cls != EventClass.NO_PATTERN

    def __str__(self) -> str:
        if self.kind is None:
            return self.cls.slug
        return f"nopattern:{self.kind.value}"


PATTERN1 = Label(EventClass.PATTERN1)
PATTERN2 = Label(EventClass.PATTERN2)


@dataclass(frozen=True)
class ClickMode:
    freq_hz: float
    decay_tau_ms: float
    relative_amp: float


@dataclass(frozen=True)
class ParticipantProfile:
    id: str
    modes: tuple
    click_amp: float
    noise_floor_rms: float
    rng_seed: int

    def __post_init__(self):
        if not 1 <= len(self.modes) <= 3:
            raise ValueError("a profile needs one to three resonant modes")
        lo, hi = MODE_FREQ_RANGE_HZ
        for mode in self.modes:
            if not lo <= mode.freq_hz < hi:
                raise ValueError(f"mode frequency {mode.freq_hz} Hz outside [{lo}, {hi})")
            if not 0 < mode.relative_amp <= 1:
                raise ValueError("relative mode amplitude must lie in (0, 1]")
        if self.noise_floor_rms <= 0 or self.click_amp / self.noise_floor_rms < 10:
            raise ValueError("click amplitude must be at least 10x the noise floor")

    @property
    def primary_freq_hz(self) -> float:
        return self.modes[0].freq_hz


@dataclass(frozen=True)
class Segment:
    wave: Waveform
    label: Label
    participant_id: str
    source: str = "synthetic-direct"

    def __post_init__(self):
        if len(self.wave) != SEGMENT_SAMPLES:
            raise ValueError(f"segment must hold exactly {SEGMENT_SAMPLES} samples, got {len(self.wave)}")

    def with_wave(self, samples: np.ndarray) -> "Segment":
        return Segment(Waveform(samples), self.label, self.participant_id, self.source)


@dataclass(frozen=True)
class SessionGroundTruth:
    event_onsets_s: tuple = ()
    event_labels: tuple = ()
    click_times_s: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if len(self.event_onsets_s) != len(self.event_labels):
            raise ValueError("onsets and labels must be parallel")
        gaps = np.diff(self.event_onsets_s)
        if np.any(gaps < SESSION_GAP_S[0]):
            raise ValueError("session events must be at least 5 s apart")


def make_profile(seed: int, participant_id: str = None) -> ParticipantProfile:
    """Draws a participant's click resonances.

    The primary mode falls in the low, mid or high band according to
    ``seed % 3`` so any run of consecutive seeds spans the whole
    400 Hz - 5.2 kHz range; secondary modes are uniform over it.
    """
    rng = np.random.default_rng(seed)
    n_modes = int(rng.integers(1, 4))
    band_lo, band_hi = PRIMARY_BANDS_HZ[seed % 3]
    modes = [ClickMode(float(rng.uniform(band_lo, band_hi)), float(rng.uniform(*DECAY_TAU_RANGE_MS)), 1.0)]
    for _ in range(n_modes - 1):
        modes.append(ClickMode(
            float(rng.uniform(*MODE_FREQ_RANGE_HZ)),
            float(rng.uniform(*DECAY_TAU_RANGE_MS)),
            float(rng.uniform(0.2, 1.0)),
        ))
    click_amp = float(rng.uniform(*CLICK_AMP_RANGE))
    noise_floor = click_amp / float(rng.uniform(*CLICK_TO_FLOOR_RANGE))
    return ParticipantProfile(
        id=participant_id or f"P{seed:03d}",
        modes=tuple(modes),
        click_amp=click_amp,
        noise_floor_rms=noise_floor,
        rng_seed=seed,
    )


def _click_kernel(p: ParticipantProfile, rng: np.random.Generator) -> np.ndarray:
    n = int(round(CLICK_WINDOW_S * SAMPLE_RATE_HZ))
    t = np.arange(n) / SAMPLE_RATE_HZ
    x = np.zeros(n)
    for mode in p.modes:
        phase = rng.uniform(0.0, 2 * np.pi)
        x += mode.relative_amp * np.exp(-t / (mode.decay_tau_ms * 1e-3)) * np.sin(2 * np.pi * mode.freq_hz * t + phase)
    norm = np.sqrt(sum(m.relative_amp ** 2 for m in p.modes))
    gain = 10.0 ** (rng.uniform(-AMP_JITTER_DB, AMP_JITTER_DB) / 20.0)
    n_taper = int(round(CLICK_TAPER_S * SAMPLE_RATE_HZ))
    x[-n_taper:] *= 0.5 * (1.0 + np.cos(np.pi * np.arange(1, n_taper + 1) / n_taper))
    return p.click_amp * gain * x / norm


def synth_click(p: ParticipantProfile, t0_s: float, rng: np.random.Generator) -> Waveform:
    """Damped multi-mode click starting at ``t0_s``; the buffer ends 25 ms after onset."""
    start = int(round(t0_s * SAMPLE_RATE_HZ))
    kernel = _click_kernel(p, rng)
    out = np.zeros(start + kernel.shape[0])
    out[start:] = kernel
    return Waveform(out)


def _place(buffer: np.ndarray, click: np.ndarray, start: int) -> None:
    end = min(buffer.shape[0], start + click.shape[0])
    if start < end:
        buffer[start:end] += click[: end - start]


@lru_cache(maxsize=None)
def _band_sos(lo_hz: float, hi_hz: float, order: int = 4) -> np.ndarray:
    if lo_hz <= 0:
        return signal.butter(order, hi_hz, btype="lowpass", output="sos", fs=SAMPLE_RATE_HZ)
    return signal.butter(order, [lo_hz, hi_hz], btype="bandpass", output="sos", fs=SAMPLE_RATE_HZ)


def _unit_rms(x: np.ndarray) -> np.ndarray:
    rms = np.sqrt(np.mean(x ** 2))
    return x / rms if rms > 0 else x


def _speech_like(n: int, rng: np.random.Generator) -> np.ndarray:
    t = np.arange(n) / SAMPLE_RATE_HZ
    carrier = _unit_rms(signal.sosfilt(_band_sos(300.0, 4000.0), rng.standard_normal(n)))
    rate = rng.uniform(3.0, 5.0)
    syllables = 0.5 * (1.0 + np.sin(2 * np.pi * rate * t + rng.uniform(0, 2 * np.pi)))
    drift = 0.75 + 0.25 * np.sin(2 * np.pi * rng.uniform(0.2, 0.6) * t + rng.uniform(0, 2 * np.pi))
    return _unit_rms(carrier * syllables ** 1.5 * drift)


def _chewing(n: int, rng: np.random.Generator) -> np.ndarray:
    out = np.zeros(n)
    rate = rng.uniform(1.0, 2.0)
    t = rng.uniform(0.0, 1.0 / rate)
    while t < n / SAMPLE_RATE_HZ:
        length = int(rng.uniform(0.08, 0.15) * SAMPLE_RATE_HZ)
        burst = signal.sosfilt(_band_sos(50.0, 600.0), rng.standard_normal(length)) * np.hanning(length)
        _place(out, _unit_rms(burst) * rng.uniform(0.6, 1.0), int(t * SAMPLE_RATE_HZ))
        t += 1.0 / rate
    return out


def _motion(n: int, rng: np.random.Generator) -> np.ndarray:
    t = np.arange(n) / SAMPLE_RATE_HZ
    out = np.zeros(n)
    for _ in range(3):
        out += rng.uniform(0.3, 1.0) * np.sin(2 * np.pi * rng.uniform(0.3, 15.0) * t + rng.uniform(0, 2 * np.pi))
    n_bumps = int(rng.integers(1, 4)) * max(1, n // SEGMENT_SAMPLES)
    for _ in range(n_bumps):
        length = int(rng.uniform(0.03, 0.1) * SAMPLE_RATE_HZ)
        bump = np.sin(np.pi * np.arange(length) / length) * rng.uniform(0.5, 1.5) * rng.choice([-1.0, 1.0])
        _place(out, bump, int(rng.integers(0, max(1, n - length))))
    return out


def _babble(n: int, rng: np.random.Generator) -> np.ndarray:
    return sum(_speech_like(n, rng) for _ in range(4)) / 2.0


def _music(n: int, rng: np.random.Generator) -> np.ndarray:
    t = np.arange(n) / SAMPLE_RATE_HZ
    f0 = rng.uniform(150.0, 500.0)
    # second note a few semitones away, switching halfway through
    f1 = f0 * 2.0 ** (int(rng.integers(-5, 6)) / 12.0)
    pitch = np.where(t < t[-1] / 2, f0, f1)
    phase = 2 * np.pi * np.cumsum(pitch) / SAMPLE_RATE_HZ
    tone = sum(np.sin(k * phase) / k for k in range(1, 7))
    envelope = 0.6 + 0.4 * np.sin(2 * np.pi * rng.uniform(0.3, 1.0) * t + rng.uniform(0, 2 * np.pi))
    return _unit_rms(tone * envelope)


# texture generator and rms level relative to the participant's click amplitude
_TEXTURES = {
    NoPatternKind.SPEECH: (_speech_like, (0.05, 0.25)),
    NoPatternKind.CHEWING: (_chewing, (0.2, 0.6)),
    NoPatternKind.MOTION: (_motion, (0.5, 2.0)),
    NoPatternKind.BABBLE: (_babble, (0.05, 0.2)),
    NoPatternKind.MUSIC: (_music, (0.05, 0.2)),
}


def synth_texture(p: ParticipantProfile, kind: NoPatternKind, n: int, rng: np.random.Generator) -> np.ndarray:
    """No-pattern texture of ``n`` samples on top of the participant's noise floor."""
    floor = rng.normal(0.0, p.noise_floor_rms, n)
    if kind == NoPatternKind.SILENCE:
        return floor
    generator, level = _TEXTURES[NoPatternKind(kind)]
    texture = generator(n, rng)
    rms = np.sqrt(np.mean(texture ** 2))
    scale = p.click_amp * rng.uniform(*level) / rms if rms > 0 else 0.0
    return floor + scale * texture


def _event_clicks(p: ParticipantProfile, cls: EventClass, onset_s: float, rng: np.random.Generator) -> list:
    times = [onset_s]
    if cls == EventClass.PATTERN2:
        times.append(onset_s + rng.uniform(*DOUBLE_CLICK_GAP_S))
    return times


def synth_segment(p: ParticipantProfile, label: Label, rng: np.random.Generator) -> Segment:
    if label.is_pattern:
        samples = rng.normal(0.0, p.noise_floor_rms, SEGMENT_SAMPLES)
        onset = EVENT_OFFSET_S + rng.uniform(-EVENT_JITTER_S, EVENT_JITTER_S)
        for t in _event_clicks(p, label.cls, onset, rng):
            _place(samples, _click_kernel(p, rng), int(round(t * SAMPLE_RATE_HZ)))
    else:
        samples = synth_texture(p, label.kind, SEGMENT_SAMPLES, rng)
    return Segment(Waveform(samples), label, p.id)


def synth_session(p: ParticipantProfile, n_events: int, label: Label, rng: np.random.Generator):
    """Continuous recording with protocol-timed events 5-8 s apart.

    No-pattern sessions follow the same timing but hold only the texture, so
    their ground truth is empty.

    Returns:
        tuple: (Waveform, SessionGroundTruth)
    """
    if n_events < 1:
        raise ValueError("a session needs at least one event")
    onsets = [rng.uniform(*SESSION_LEAD_IN_S)]
    for _ in range(n_events - 1):
        onsets.append(onsets[-1] + rng.uniform(*SESSION_GAP_S))
    n = int(round((onsets[-1] + rng.uniform(*SESSION_TAIL_S)) * SAMPLE_RATE_HZ))

    if not label.is_pattern:
        return Waveform(synth_texture(p, label.kind, n, rng)), SessionGroundTruth()

    samples = rng.normal(0.0, p.noise_floor_rms, n)
    clicks = []
    for onset in onsets:
        times = _event_clicks(p, label.cls, onset, rng)
        for t in times:
            _place(samples, _click_kernel(p, rng), int(round(t * SAMPLE_RATE_HZ)))
        clicks.append(tuple(times))
    truth = SessionGroundTruth(tuple(onsets), tuple([label] * n_events), tuple(clicks))
    logger.debug("session for %s: %d %s events over %.1f s", p.id, n_events, label, n / SAMPLE_RATE_HZ)
    return Waveform(samples), truth
