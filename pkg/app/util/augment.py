"""Training-time corruption: gain, circular shift and noise mixed at a target SNR."""
import logging
from dataclasses import dataclass, field

import numpy as np

from app.util.dsp import Waveform
from app.util.errors import EmptyNoisePoolError, SnrUndefinedError, ZeroPowerError
from app.util.synthgen import SEGMENT_SAMPLES, NoPatternKind, Segment

logger = logging.getLogger(__name__)

SWEEP_SNR_DB = (-23.0, -10.0, 0.0, 10.0, 23.0)


@dataclass(frozen=True)
class AugmentConfig:
    gain_db_range: tuple = (-6.0, 6.0)
    shift_range_s: tuple = (-0.2, 0.2)
    snr_db_range: tuple = (-23.0, 23.0)
    apply_prob: float = 0.7
    noise_enabled: bool = True

    def __post_init__(self):
        for name in ("gain_db_range", "shift_range_s", "snr_db_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} must be ordered, got ({lo}, {hi})")
            object.__setattr__(self, name, (float(lo), float(hi)))
        if not 0.0 <= self.apply_prob <= 1.0:
            raise ValueError(f"apply_prob must lie in [0, 1], got {self.apply_prob}")


@dataclass
class NoisePool:
    segments: list = field(default_factory=list)

    def __post_init__(self):
        for wave, kind in self.segments:
            if len(wave) != SEGMENT_SAMPLES:
                raise ValueError("noise pool entries must be exactly one segment long")
            NoPatternKind(kind)

    def __len__(self) -> int:
        return len(self.segments)

    def draw(self, rng: np.random.Generator) -> Waveform:
        if not self.segments:
            raise EmptyNoisePoolError("noise pool is empty but noise mixing is enabled")
        return self.segments[int(rng.integers(len(self.segments)))][0]


def _power(x: np.ndarray) -> float:
    return float(np.mean(np.square(x, dtype=np.float64)))


def snr_db(signal_plus_noise: Waveform, noise: Waveform) -> float:
    """10 log10((P_y - P_n) / P_n) for equal-length recordings."""
    if len(signal_plus_noise) != len(noise):
        raise ValueError("signal-plus-noise and noise recordings must have equal duration")
    p_y, p_n = _power(signal_plus_noise.samples), _power(noise.samples)
    if p_n <= 0 or p_y <= p_n:
        raise SnrUndefinedError(f"signal power {p_y:.3g} does not exceed noise power {p_n:.3g}")
    return 10.0 * np.log10((p_y - p_n) / p_n)


def apply_gain(w: Waveform, gain_db: float) -> Waveform:
    return Waveform(w.samples * 10.0 ** (gain_db / 20.0), w.sample_rate_hz)


def circular_shift(w: Waveform, n_samples: int) -> Waveform:
    """output[i] = input[(i - n) mod length]."""
    if abs(n_samples) > len(w):
        raise ValueError(f"shift of {n_samples} exceeds waveform length {len(w)}")
    return Waveform(np.roll(w.samples, int(n_samples)), w.sample_rate_hz)


def noise_gain(clean: Waveform, noise: Waveform, target_snr_db: float) -> float:
    p_clean, p_noise = _power(clean.samples), _power(noise.samples)
    if p_clean <= 0 or p_noise <= 0:
        raise ZeroPowerError("cannot mix at a target SNR with a silent clean or noise input")
    return float(np.sqrt(p_clean / (p_noise * 10.0 ** (target_snr_db / 10.0))))


def mix_at_snr(clean: Waveform, noise: Waveform, target_snr_db: float) -> Waveform:
    if len(clean) != len(noise):
        raise ValueError("clean and noise must have equal length")
    g = noise_gain(clean, noise, target_snr_db)
    return Waveform(clean.samples + g * noise.samples, clean.sample_rate_hz)


def augment(seg: Segment, cfg: AugmentConfig, pool: NoisePool, rng: np.random.Generator) -> Segment:
    """With probability apply_prob: gain, then circular shift, then noise at a random SNR."""
    if not seg.label.is_pattern:
        raise ValueError("only pattern segments are augmented")
    if cfg.noise_enabled and cfg.apply_prob > 0 and not len(pool):
        raise EmptyNoisePoolError("noise pool is empty but noise mixing is enabled")
    if rng.random() >= cfg.apply_prob:
        return seg

    w = apply_gain(seg.wave, rng.uniform(*cfg.gain_db_range))
    shift_s = rng.uniform(*cfg.shift_range_s)
    w = circular_shift(w, int(round(shift_s * w.sample_rate_hz)))
    if cfg.noise_enabled:
        w = mix_at_snr(w, pool.draw(rng), rng.uniform(*cfg.snr_db_range))
    return Segment(w, seg.label, seg.participant_id, seg.source)
