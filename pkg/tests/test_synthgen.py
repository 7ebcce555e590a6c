import numpy as np
import pytest
from scipy.fft import rfft, rfftfreq
from scipy.signal import find_peaks

from app.util.annotator import envelope
from app.util.dsp import SAMPLE_RATE_HZ, preprocess
from app.util.features import log_mel, make_mel_filterbank
from app.util.synthgen import (MODE_FREQ_RANGE_HZ, PATTERN1, PATTERN2, SEGMENT_SAMPLES, EventClass, Label,
                               NoPatternKind, make_profile, synth_click, synth_segment, synth_session)
from tests.conftest import single_mode_profile

FS = SAMPLE_RATE_HZ


def strong_peaks(seg, floor_rms):
    env = envelope(seg.wave, 2.0)
    peaks, _ = find_peaks(env, height=5 * floor_rms, distance=int(0.06 * FS))
    return peaks


class TestProfiles:
    def test_deterministic(self):
        assert make_profile(11) == make_profile(11)

    def test_primary_modes_span_low_and_high(self):
        primaries = [make_profile(seed).primary_freq_hz for seed in range(20)]
        assert sum(f < 1000.0 for f in primaries) >= 5
        assert sum(f > 3000.0 for f in primaries) >= 5

    def test_mode_frequencies_in_range(self):
        lo, hi = MODE_FREQ_RANGE_HZ
        for seed in range(50):
            for mode in make_profile(seed).modes:
                assert lo <= mode.freq_hz <= hi

    def test_default_id(self):
        assert make_profile(7).id == 'P007'
        assert make_profile(7, 'alice').id == 'alice'


class TestLabels:
    @pytest.mark.parametrize('text, cls', [('pattern1', EventClass.PATTERN1), ('pattern2', EventClass.PATTERN2),
                                           ('nopattern:speech', EventClass.NO_PATTERN), ('music', EventClass.NO_PATTERN)])
    def test_parse(self, text, cls):
        assert Label.parse(text).cls == cls

    def test_str_round_trips_through_parse(self):
        label = Label(EventClass.NO_PATTERN, NoPatternKind.CHEWING)
        assert Label.parse(str(label)) == label

    def test_kind_required_exactly_for_nopattern(self):
        with pytest.raises(ValueError):
            Label(EventClass.NO_PATTERN)
        with pytest.raises(ValueError):
            Label(EventClass.PATTERN1, NoPatternKind.SPEECH)

    def test_unknown_label(self):
        with pytest.raises(ValueError):
            Label.parse('pattern3')


class TestClick:
    def test_spectral_peak_at_mode(self, rng):
        click = synth_click(single_mode_profile(600.0), 0.0, rng)
        spectrum = np.abs(rfft(click.samples, n=FS))
        assert rfftfreq(FS, 1 / FS)[np.argmax(spectrum)] == pytest.approx(600.0, abs=50.0)

    def test_decayed_after_25_ms(self, rng):
        click = synth_click(single_mode_profile(600.0, tau_ms=8.0), 0.0, rng).samples
        assert len(click) == int(0.025 * FS)
        assert np.max(np.abs(click[-48:])) <= 0.01 * np.max(np.abs(click))

    def test_silent_before_onset(self, rng):
        click = synth_click(single_mode_profile(600.0), 0.1, rng).samples
        assert not np.any(click[:int(0.1 * FS)])

    def test_same_rng_state_same_click(self, profile):
        a = synth_click(profile, 0.0, np.random.default_rng(5))
        b = synth_click(profile, 0.0, np.random.default_rng(5))
        np.testing.assert_array_equal(a.samples, b.samples)


class TestSegments:
    @pytest.mark.parametrize('label', [PATTERN1, PATTERN2] + [Label(EventClass.NO_PATTERN, k) for k in NoPatternKind])
    def test_exactly_one_second(self, label, profile, rng):
        seg = synth_segment(profile, label, rng)
        assert len(seg.wave) == SEGMENT_SAMPLES
        assert seg.label == label

    def test_silence_rms_matches_floor(self, profile, rng):
        seg = synth_segment(profile, Label(EventClass.NO_PATTERN, NoPatternKind.SILENCE), rng)
        rms = np.sqrt(np.mean(seg.wave.samples ** 2))
        assert rms == pytest.approx(profile.noise_floor_rms, rel=0.2)

    def test_pattern1_has_one_click(self, profile):
        for seed in range(10):
            seg = synth_segment(profile, PATTERN1, np.random.default_rng(seed))
            assert len(strong_peaks(seg, profile.noise_floor_rms)) == 1

    def test_pattern2_has_two_clicks_within_gap(self, profile):
        for seed in range(10):
            seg = synth_segment(profile, PATTERN2, np.random.default_rng(seed))
            peaks = strong_peaks(seg, profile.noise_floor_rms)
            assert len(peaks) == 2
            gap_ms = 1e3 * (peaks[1] - peaks[0]) / FS
            assert 75.0 <= gap_ms <= 405.0

    def test_click_placed_near_quarter_second(self, profile):
        for seed in range(10):
            seg = synth_segment(profile, PATTERN1, np.random.default_rng(seed))
            onset_s = strong_peaks(seg, profile.noise_floor_rms)[0] / FS
            assert 0.19 <= onset_s <= 0.32

    def test_pattern_energy_inside_click_band(self, profile, rng):
        seg = synth_segment(profile, PATTERN1, rng)
        x = preprocess(seg.wave).samples
        power = np.abs(rfft(x)) ** 2
        freqs = rfftfreq(len(x), 1 / FS)
        in_band = power[(freqs >= 300.0) & (freqs <= 5000.0)].sum()
        assert in_band / power.sum() >= 0.9

    def test_profiles_apart_in_frequency_differ_in_log_mel(self):
        fb = make_mel_filterbank(13)

        def mean_log_mel(freq):
            p = single_mode_profile(freq, ratio=50.0)
            mats = [log_mel(preprocess(synth_segment(p, PATTERN1, np.random.default_rng(s)).wave), fb)
                    for s in range(5)]
            return np.mean(mats, axis=0)

        assert np.linalg.norm(mean_log_mel(700.0) - mean_log_mel(2500.0)) >= 1.0


class TestSessions:
    def test_onsets_spaced_by_protocol(self, profile, rng):
        wave, truth = synth_session(profile, 10, PATTERN1, rng)
        assert len(truth.event_onsets_s) == 10
        assert np.all(np.diff(truth.event_onsets_s) >= 5.0)
        assert wave.duration_s >= 5.0 * 9

    def test_pattern2_truth_has_two_clicks_per_event(self, profile, rng):
        _, truth = synth_session(profile, 4, PATTERN2, rng)
        for onset, clicks in zip(truth.event_onsets_s, truth.click_times_s):
            assert len(clicks) == 2
            assert clicks[0] == onset
            assert 0.08 <= clicks[1] - clicks[0] <= 0.4

    def test_nopattern_session_has_empty_truth(self, profile, rng):
        wave, truth = synth_session(profile, 3, Label(EventClass.NO_PATTERN, NoPatternKind.SPEECH), rng)
        assert truth.event_onsets_s == ()
        assert wave.duration_s >= 10.0

    def test_needs_an_event(self, profile, rng):
        with pytest.raises(ValueError):
            synth_session(profile, 0, PATTERN1, rng)

    def test_deterministic(self, profile):
        a, _ = synth_session(profile, 3, PATTERN2, np.random.default_rng(1))
        b, _ = synth_session(profile, 3, PATTERN2, np.random.default_rng(1))
        np.testing.assert_array_equal(a.samples, b.samples)
