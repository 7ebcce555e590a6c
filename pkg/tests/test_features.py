import numpy as np
import pytest

from app.util.dsp import SAMPLE_RATE_HZ, Waveform, preprocess
from app.util.errors import CorpusIOError, FeatureShapeError
from app.util.features import (HOP, LOG_FLOOR, N_FFT, N_FRAMES, FeatureMatrix, FeatureSet, delta, featurize, frame,
                               log_mel, make_mel_filterbank, power_spectrum, read_feature_file, segment_features, ste,
                               write_feature_file, zcr)
from app.util.synthgen import PATTERN1, SEGMENT_SAMPLES, Segment

T = np.arange(SEGMENT_SAMPLES) / SAMPLE_RATE_HZ


def tone(freq_hz, amp=0.5, phase=0.0):
    return Waveform(amp * np.sin(2 * np.pi * freq_hz * T + phase))


class TestFraming:
    def test_frame_count(self):
        assert N_FRAMES == 79
        assert frame(np.zeros(SEGMENT_SAMPLES)).shape == (79, 1200)

    def test_frame_offsets(self, rng):
        x = rng.standard_normal(SEGMENT_SAMPLES)
        frames = frame(x)
        np.testing.assert_array_equal(frames[10], x[6000:7200])
        np.testing.assert_array_equal(frames[-1], x[46800:48000])

    def test_wrong_length_rejected(self):
        with pytest.raises(FeatureShapeError):
            featurize(np.zeros(SEGMENT_SAMPLES - 1))


class TestMelFilterbank:
    def test_filters_inside_band(self):
        fb = make_mel_filterbank(13)
        assert fb.weights.shape == (13, 1025)
        assert np.all(fb.weights >= 0)
        assert fb.weights.max() <= 1.0 + 1e-9
        assert np.all(np.diff(fb.center_freqs_hz) > 0)
        assert fb.center_freqs_hz[0] > 300.0 and fb.center_freqs_hz[-1] < 5000.0
        assert np.all(fb.weights.sum(axis=1) > 0)

    def test_tone_lands_in_nearest_filter(self):
        fb = make_mel_filterbank(13)
        for band in (2, 6, 10):
            mel = log_mel(tone(fb.center_freqs_hz[band]), fb)
            assert int(np.argmax(mel.mean(axis=1))) == band


class TestDelta:
    def test_constant_rows_have_zero_delta(self):
        np.testing.assert_allclose(delta(np.full((13, 79), 3.5)), 0.0, atol=1e-12)

    def test_linear_ramp_has_unit_delta_inside(self):
        ramp = np.tile(np.arange(79, dtype=float), (2, 1))
        d = delta(ramp)
        np.testing.assert_allclose(d[:, 2:-2], 1.0, rtol=1e-9)
        assert np.all(d[:, 0] < 1.0)

    def test_window_must_be_positive(self):
        with pytest.raises(ValueError):
            delta(np.zeros((2, 79)), window_n=0)


class TestFrameStatistics:
    def test_zcr_extremes(self):
        alternating = np.where(np.arange(SEGMENT_SAMPLES) % 2 == 0, 1.0, -1.0)
        np.testing.assert_allclose(zcr(alternating), 1.0)
        np.testing.assert_allclose(zcr(np.ones(SEGMENT_SAMPLES)), 0.0)

    def test_ste_scales_with_square_of_gain(self, rng):
        x = rng.standard_normal(SEGMENT_SAMPLES)
        np.testing.assert_allclose(ste(2.0 * x), 4.0 * ste(x), rtol=1e-12)
        assert ste(x).shape == (1, 79)

    def test_zcr_of_1khz_tone(self):
        # 25 periods per 1200-sample frame, two crossings each
        np.testing.assert_allclose(zcr(tone(1000.0, phase=0.3)), 0.0417, atol=1e-3)

    def test_ste_of_unit_sine_and_constant(self):
        np.testing.assert_allclose(ste(tone(1000.0, amp=1.0, phase=0.3)), 600.0, rtol=1e-6)
        np.testing.assert_allclose(ste(np.ones(SEGMENT_SAMPLES)), 1200.0, rtol=1e-12)


class TestSpectrum:
    def test_power_spectrum_keeps_frame_energy(self, rng):
        frames = frame(rng.standard_normal(SEGMENT_SAMPLES))
        power = power_spectrum(frames)
        two_sided = 2 * power.sum(axis=1) - power[:, 0] - power[:, -1]
        windowed = frames * np.hanning(frames.shape[1] + 1)[:-1]
        np.testing.assert_allclose(two_sided, N_FFT * np.sum(windowed ** 2, axis=1), rtol=1e-9)

    def test_in_band_tone_energy_lands_in_mel_bands(self):
        # adjacent triangles sum to one between the outer centers
        x = tone(2000.0)
        mel = 10.0 ** log_mel(x, make_mel_filterbank(13))
        np.testing.assert_allclose(mel.sum(axis=0), power_spectrum(frame(x)).sum(axis=1), rtol=1e-3)

    def test_one_hop_shift_moves_one_frame(self, rng):
        y = rng.standard_normal(SEGMENT_SAMPLES + HOP)
        early, late = y[:SEGMENT_SAMPLES], y[HOP:]
        fb = make_mel_filterbank(13)
        np.testing.assert_allclose(log_mel(late, fb)[:, :-1], log_mel(early, fb)[:, 1:], rtol=1e-12, atol=1e-12)
        np.testing.assert_array_equal(zcr(late)[:, :-1], zcr(early)[:, 1:])
        np.testing.assert_allclose(ste(late)[:, :-1], ste(early)[:, 1:], rtol=1e-12)


class TestFeaturize:
    @pytest.mark.parametrize('feature_set', list(FeatureSet))
    def test_shapes(self, feature_set, rng):
        fm = featurize(rng.standard_normal(SEGMENT_SAMPLES), feature_set=feature_set)
        assert fm.values.shape == (feature_set.n_rows, 79)

    def test_full_set_row_order(self, rng):
        x = rng.standard_normal(SEGMENT_SAMPLES)
        fm = featurize(x).values
        mel = featurize(x, feature_set=FeatureSet.LOGMEL13).values
        np.testing.assert_array_equal(fm[:13], mel)
        np.testing.assert_allclose(fm[13:26], delta(mel))
        np.testing.assert_allclose(fm[39], zcr(x)[0])
        np.testing.assert_allclose(fm[40], ste(x)[0])

    def test_silence_hits_log_floor(self):
        values = featurize(np.zeros(SEGMENT_SAMPLES)).values
        np.testing.assert_allclose(values[:13], np.log10(LOG_FLOOR))
        np.testing.assert_allclose(values[13:39], 0.0, atol=1e-12)
        assert np.all(np.isfinite(values))

    def test_gain_shifts_log_mel(self, rng):
        x = 0.1 * rng.standard_normal(SEGMENT_SAMPLES)
        quiet = featurize(x, feature_set=FeatureSet.LOGMEL13).values
        loud = featurize(2.0 * x, feature_set=FeatureSet.LOGMEL13).values
        np.testing.assert_allclose(loud - quiet, np.log10(4.0), atol=1e-9)

    def test_segment_features_preprocess_first(self, rng):
        seg = Segment(Waveform(rng.standard_normal(SEGMENT_SAMPLES)), PATTERN1, 'P000')
        np.testing.assert_array_equal(segment_features(seg).values, featurize(preprocess(seg.wave)).values)


class TestFeatureMatrix:
    def test_shape_checked(self):
        with pytest.raises(FeatureShapeError):
            FeatureMatrix(np.zeros((40, 79)))

    def test_non_finite_rejected(self):
        values = np.zeros((41, 79))
        values[3, 7] = np.nan
        with pytest.raises(FeatureShapeError):
            FeatureMatrix(values)


class TestFeatureFile:
    def test_written_values_read_back(self, tmp_path, rng):
        fm = featurize(rng.standard_normal(SEGMENT_SAMPLES))
        path = write_feature_file(str(tmp_path / 'a' / 'seg.stlf'), fm)
        np.testing.assert_allclose(read_feature_file(path), fm.values, rtol=1e-6, atol=1e-6)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / 'bad.stlf'
        path.write_bytes(b'XXXX' + bytes(12))
        with pytest.raises(CorpusIOError) as e:
            read_feature_file(str(path))
        assert e.value.path == str(path)

    def test_truncated(self, tmp_path, rng):
        path = write_feature_file(str(tmp_path / 'seg.stlf'), featurize(rng.standard_normal(SEGMENT_SAMPLES)))
        with open(path, 'rb') as f:
            blob = f.read()
        with open(path, 'wb') as f:
            f.write(blob[:-4])
        with pytest.raises(CorpusIOError):
            read_feature_file(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(CorpusIOError):
            read_feature_file(str(tmp_path / 'nope.stlf'))
