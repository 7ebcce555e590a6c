import numpy as np
import pytest

from app.util.augment import (AugmentConfig, NoisePool, apply_gain, augment, circular_shift, mix_at_snr, noise_gain,
                              snr_db)
from app.util.dsp import SAMPLE_RATE_HZ, Waveform
from app.util.errors import EmptyNoisePoolError, SnrUndefinedError, ZeroPowerError
from app.util.synthgen import PATTERN1, SEGMENT_SAMPLES, EventClass, Label, NoPatternKind, Segment

T = np.arange(SEGMENT_SAMPLES) / SAMPLE_RATE_HZ


def power(x):
    return float(np.mean(np.square(x)))


@pytest.fixture
def pattern_segment(rng):
    return Segment(Waveform(np.sin(2 * np.pi * 1200 * T) + 0.01 * rng.standard_normal(SEGMENT_SAMPLES)), PATTERN1,
                   'P000')


@pytest.fixture
def pool(rng):
    return NoisePool([(Waveform(rng.standard_normal(SEGMENT_SAMPLES)), NoPatternKind.BABBLE),
                      (Waveform(0.3 * rng.standard_normal(SEGMENT_SAMPLES)), NoPatternKind.MUSIC)])


class TestMixing:
    @pytest.mark.parametrize('target', [-23.0, -10.0, 0.0, 10.0, 23.0])
    def test_scaled_noise_hits_target(self, rng, target):
        clean = Waveform(np.sin(2 * np.pi * 700 * T))
        noise = Waveform(rng.standard_normal(SEGMENT_SAMPLES))
        mixed = mix_at_snr(clean, noise, target)
        added = mixed.samples - clean.samples
        assert 10 * np.log10(power(clean.samples) / power(added)) == pytest.approx(target, abs=1e-9)

    def test_random_targets_hit_within_hundredth_db(self, rng):
        n = SEGMENT_SAMPLES // 10
        for target in rng.uniform(-23.0, 23.0, size=1000):
            clean = Waveform(rng.uniform(0.1, 2.0) * rng.standard_normal(n))
            noise = Waveform(rng.uniform(0.1, 2.0) * rng.standard_normal(n))
            added = mix_at_snr(clean, noise, target).samples - clean.samples
            assert abs(10 * np.log10(power(clean.samples) / power(added)) - target) <= 0.01

    def test_added_energy_falls_as_snr_rises(self, rng):
        clean = Waveform(np.sin(2 * np.pi * 700 * T))
        noise = Waveform(rng.standard_normal(SEGMENT_SAMPLES))
        energies = [power(mix_at_snr(clean, noise, s).samples - clean.samples) for s in np.linspace(-23, 23, 47)]
        assert np.all(np.diff(energies) < 0)

    def test_snr_estimate_from_recordings(self, rng):
        noise = np.sqrt(0.05) * rng.standard_normal(SEGMENT_SAMPLES)
        y = np.sin(2 * np.pi * 1000 * T) + noise
        assert snr_db(Waveform(y), Waveform(noise)) == pytest.approx(10.0, abs=0.1)

    def test_snr_undefined_when_noise_dominates(self, rng):
        noise = Waveform(rng.standard_normal(SEGMENT_SAMPLES))
        with pytest.raises(SnrUndefinedError):
            snr_db(noise, noise)

    def test_silent_input_rejected(self, rng):
        with pytest.raises(ZeroPowerError):
            noise_gain(Waveform(np.zeros(SEGMENT_SAMPLES)), Waveform(rng.standard_normal(SEGMENT_SAMPLES)), 0.0)

    def test_length_mismatch(self, rng):
        with pytest.raises(ValueError):
            mix_at_snr(Waveform(np.ones(100)), Waveform(np.ones(99)), 0.0)


class TestGainAndShift:
    def test_six_db_doubles(self):
        np.testing.assert_allclose(apply_gain(Waveform(np.ones(10)), 20 * np.log10(2.0)).samples, 2.0)

    def test_opposite_gains_cancel(self, rng):
        x = Waveform(rng.standard_normal(1000))
        np.testing.assert_allclose(apply_gain(apply_gain(x, -6.0), 6.0).samples, x.samples, rtol=0, atol=1e-9)
        np.testing.assert_allclose(apply_gain(apply_gain(x, 6.0), -6.0).samples, x.samples, rtol=0, atol=1e-9)

    def test_circular_shift_wraps(self):
        x = np.arange(10, dtype=float)
        out = circular_shift(Waveform(x), 3).samples
        np.testing.assert_array_equal(out, x[(np.arange(10) - 3) % 10])
        np.testing.assert_array_equal(circular_shift(Waveform(x), -3).samples, x[(np.arange(10) + 3) % 10])

    def test_shift_bounded_by_length(self):
        with pytest.raises(ValueError):
            circular_shift(Waveform(np.zeros(10)), 11)


class TestAugment:
    def test_never_applied(self, pattern_segment, pool, rng):
        assert augment(pattern_segment, AugmentConfig(apply_prob=0.0), pool, rng) is pattern_segment

    def test_neutral_transform_is_identity(self, pattern_segment, pool, rng):
        cfg = AugmentConfig(gain_db_range=(0, 0), shift_range_s=(0, 0), apply_prob=1.0, noise_enabled=False)
        out = augment(pattern_segment, cfg, pool, rng)
        np.testing.assert_array_equal(out.wave.samples, pattern_segment.wave.samples)

    def test_negligible_noise_leaves_segment(self, pattern_segment, pool, rng):
        cfg = AugmentConfig(gain_db_range=(0, 0), shift_range_s=(0, 0), snr_db_range=(200, 200), apply_prob=1.0,
                            noise_enabled=True)
        out = augment(pattern_segment, cfg, pool, rng)
        np.testing.assert_allclose(out.wave.samples, pattern_segment.wave.samples, rtol=0, atol=1e-8)

    def test_label_and_length_kept(self, pattern_segment, pool, rng):
        out = augment(pattern_segment, AugmentConfig(apply_prob=1.0), pool, rng)
        assert out.label == PATTERN1
        assert out.participant_id == 'P000'
        assert len(out.wave) == SEGMENT_SAMPLES

    def test_deterministic_given_seed(self, pattern_segment, pool):
        cfg = AugmentConfig(apply_prob=1.0)
        a = augment(pattern_segment, cfg, pool, np.random.default_rng(5))
        b = augment(pattern_segment, cfg, pool, np.random.default_rng(5))
        np.testing.assert_array_equal(a.wave.samples, b.wave.samples)

    def test_empty_pool_with_noise_enabled(self, pattern_segment, rng):
        with pytest.raises(EmptyNoisePoolError):
            augment(pattern_segment, AugmentConfig(), NoisePool(), rng)

    def test_nopattern_segments_not_augmented(self, pool, rng):
        seg = Segment(Waveform(np.ones(SEGMENT_SAMPLES)), Label(EventClass.NO_PATTERN, NoPatternKind.SPEECH), 'P000')
        with pytest.raises(ValueError):
            augment(seg, AugmentConfig(), pool, rng)


class TestConfigAndPool:
    def test_ranges_must_be_ordered(self):
        with pytest.raises(ValueError):
            AugmentConfig(snr_db_range=(10.0, -10.0))

    def test_probability_range(self):
        with pytest.raises(ValueError):
            AugmentConfig(apply_prob=1.5)

    def test_pool_entries_one_segment_long(self):
        with pytest.raises(ValueError):
            NoisePool([(Waveform(np.zeros(100)), NoPatternKind.BABBLE)])

    def test_draw_from_empty_pool(self, rng):
        with pytest.raises(EmptyNoisePoolError):
            NoisePool().draw(rng)
