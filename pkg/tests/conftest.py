import numpy as np
import pytest

from app.util.model import ModelConfig
from app.util.synthgen import ClickMode, ParticipantProfile
from data.etl.corpus_etl import Composition, build_corpus

SMALL_COMPOSITION = Composition({'pattern1': 3, 'pattern2': 3, 'nopattern:silence': 1, 'nopattern:speech': 1,
                                 'nopattern:babble': 1, 'nopattern:music': 1}, {})


def single_mode_profile(freq_hz: float, pid: str = 'PT', tau_ms: float = 5.0, ratio: float = 100.0):
    """Profile with one resonance and a fixed click-to-floor ratio."""
    return ParticipantProfile(pid, (ClickMode(freq_hz, tau_ms, 1.0),), click_amp=0.3, noise_floor_rms=0.3 / ratio,
                              rng_seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def profile():
    return single_mode_profile(1500.0)


@pytest.fixture
def toy_model_cfg():
    """Small enough for finite differences in double precision."""
    return ModelConfig(block_channels=(2, 2, 3), input_T=6, input_F=5)


@pytest.fixture(scope='session')
def small_corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp('corpus')
    return build_corpus(4, SMALL_COMPOSITION, seed=3, out_dir=str(out), workers=1)
