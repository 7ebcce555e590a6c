"""Causal IIR preprocessing: mains notch cascade and click-band bandpass.

Filters are held as cascades of second-order sections and applied with
``scipy.signal.sosfilt`` in float64, zero initial state.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from app.util.errors import FilterDesignError, FilterInstabilityError

logger = logging.getLogger(__name__)

SAMPLE_RATE_HZ = 48000

# Preprocess chain defaults
MAINS_HZ = 60.0
MAINS_HARMONICS = 3
NOTCH_Q = 30.0
BAND_LO_HZ = 300.0
BAND_HI_HZ = 5000.0
BAND_ORDER = 6


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate_hz: int = SAMPLE_RATE_HZ

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError(f"waveform must be mono, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("waveform contains non-finite samples")
        if self.sample_rate_hz != SAMPLE_RATE_HZ:
            raise ValueError(f"sample rate must be {SAMPLE_RATE_HZ} Hz, got {self.sample_rate_hz}")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate_hz


@dataclass(frozen=True)
class BiquadSection:
    b0: float
    b1: float
    b2: float
    a1: float
    a2: float

    @property
    def poles(self) -> np.ndarray:
        return np.roots([1.0, self.a1, self.a2])

    @property
    def is_stable(self) -> bool:
        return bool(np.all(np.abs(self.poles) < 1.0))

    def as_sos_row(self) -> list:
        return [self.b0, self.b1, self.b2, 1.0, self.a1, self.a2]


@dataclass(frozen=True)
class FilterCascade:
    sections: tuple = field(default_factory=tuple)
    description: str = ""

    @property
    def is_stable(self) -> bool:
        return all(section.is_stable for section in self.sections)

    def sos(self) -> np.ndarray:
        return np.array([s.as_sos_row() for s in self.sections], dtype=np.float64).reshape(-1, 6)

    def then(self, other: "FilterCascade") -> "FilterCascade":
        return FilterCascade(self.sections + other.sections, f"{self.description} -> {other.description}")


def _sections_from_sos(sos: np.ndarray) -> tuple:
    rows = []
    for b0, b1, b2, a0, a1, a2 in np.atleast_2d(sos):
        rows.append(BiquadSection(b0 / a0, b1 / a0, b2 / a0, a1 / a0, a2 / a0))
    return tuple(rows)


def design_notch_cascade(fs_hz: int, f0_hz: float, n_harmonics: int, q: float) -> FilterCascade:
    """One band-stop biquad per target frequency f0, 2·f0, ..., (n_harmonics + 1)·f0.

    Args:
        fs_hz: Sample rate.
        f0_hz: Fundamental to reject.
        n_harmonics: Number of harmonics above the fundamental.
        q: Quality factor of every notch.

    Returns:
        FilterCascade: ``n_harmonics + 1`` sections, lowest frequency first.
    """
    if n_harmonics < 0:
        raise FilterDesignError(f"n_harmonics must be >= 0, got {n_harmonics}")
    if q <= 0:
        raise FilterDesignError(f"notch Q must be positive, got {q}")
    top = f0_hz * (n_harmonics + 1)
    if not 0 < f0_hz or top >= fs_hz / 2:
        raise FilterDesignError(f"notch frequencies up to {top} Hz must lie in (0, {fs_hz / 2}) Hz")

    sections = []
    for k in range(1, n_harmonics + 2):
        b, a = signal.iirnotch(k * f0_hz, q, fs=fs_hz)
        sections.extend(_sections_from_sos(np.concatenate([b, a])[None, :]))
    return FilterCascade(tuple(sections), f"notch {f0_hz:g} Hz x{n_harmonics + 1} Q={q:g}")


def design_bandpass(fs_hz: int, f_lo_hz: float, f_hi_hz: float, order: int) -> FilterCascade:
    """Butterworth bandpass of the given (even) order as order/2 biquads."""
    if order < 2 or order % 2:
        raise FilterDesignError(f"bandpass order must be even and >= 2, got {order}")
    if not 0 < f_lo_hz < f_hi_hz < fs_hz / 2:
        raise FilterDesignError(f"band [{f_lo_hz}, {f_hi_hz}] Hz invalid for fs={fs_hz}")
    sos = signal.butter(order // 2, [f_lo_hz, f_hi_hz], btype="bandpass", output="sos", fs=fs_hz)
    return FilterCascade(_sections_from_sos(sos), f"butterworth bandpass {f_lo_hz:g}-{f_hi_hz:g} Hz order {order}")


def magnitude_response(cascade: FilterCascade, f_hz: float, fs_hz: int) -> float:
    if not 0 <= f_hz <= fs_hz / 2:
        raise ValueError(f"frequency {f_hz} Hz outside [0, {fs_hz / 2}]")
    if not cascade.sections:
        return 0.0
    _, h = signal.sosfreqz(cascade.sos(), worN=np.array([f_hz], dtype=np.float64), fs=fs_hz)
    magnitude = max(float(np.abs(h[0])), np.finfo(np.float64).tiny)
    return 20.0 * np.log10(magnitude)


def apply_filter(cascade: FilterCascade, w: Waveform) -> Waveform:
    if not cascade.sections:
        return Waveform(w.samples.copy(), w.sample_rate_hz)
    y = signal.sosfilt(cascade.sos(), w.samples.astype(np.float64))
    if not np.all(np.isfinite(y)):
        raise FilterInstabilityError(f"non-finite output from {cascade.description}")
    return Waveform(y, w.sample_rate_hz)


@dataclass(frozen=True)
class DspConfig:
    mains_hz: float = MAINS_HZ
    mains_harmonics: int = MAINS_HARMONICS
    notch_q: float = NOTCH_Q
    band_lo_hz: float = BAND_LO_HZ
    band_hi_hz: float = BAND_HI_HZ
    band_order: int = BAND_ORDER


_CHAINS: dict = {}


def preprocess_chain(cfg: DspConfig = DspConfig()) -> FilterCascade:
    """Notch cascade followed by bandpass; designs are cached per config."""
    if cfg not in _CHAINS:
        notch = design_notch_cascade(SAMPLE_RATE_HZ, cfg.mains_hz, cfg.mains_harmonics, cfg.notch_q)
        band = design_bandpass(SAMPLE_RATE_HZ, cfg.band_lo_hz, cfg.band_hi_hz, cfg.band_order)
        _CHAINS[cfg] = notch.then(band)
        logger.debug("designed preprocess chain: %s", _CHAINS[cfg].description)
    return _CHAINS[cfg]


def preprocess(w: Waveform, cfg: DspConfig = DspConfig()) -> Waveform:
    if w.sample_rate_hz != SAMPLE_RATE_HZ:
        raise ValueError(f"preprocess expects {SAMPLE_RATE_HZ} Hz input")
    return apply_filter(preprocess_chain(cfg), w)
