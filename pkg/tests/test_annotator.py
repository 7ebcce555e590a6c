import numpy as np
import pytest

from app.util.annotator import (AnnotatorConfig, PeakList, annotate_recording, detect_peaks, extract_segments,
                                segment_nonpattern)
from app.util.dsp import SAMPLE_RATE_HZ, Waveform, preprocess
from app.util.synthgen import PATTERN1, PATTERN2, EventClass, Label, NoPatternKind, make_profile, synth_click, synth_session
from tests.conftest import single_mode_profile

FS = SAMPLE_RATE_HZ
SPEECH = Label(EventClass.NO_PATTERN, NoPatternKind.SPEECH)


def clicks_on_floor(profile, times_s, duration_s, rng, amps=None):
    x = rng.normal(0.0, profile.noise_floor_rms, int(duration_s * FS))
    for i, t in enumerate(times_s):
        click = synth_click(profile, t, rng).samples
        x[:len(click)] += click * (1.0 if amps is None else amps[i])
    return Waveform(x)


def match(detected_s, truth_s, tol_s=0.010):
    """Greedy one-to-one matching; returns the number of matched pairs."""
    used, hits = set(), 0
    for t in truth_s:
        for j, d in enumerate(detected_s):
            if j not in used and abs(d - t) <= tol_s:
                used.add(j)
                hits += 1
                break
    return hits


class TestConfig:
    def test_segment_split_must_cover_one_second(self):
        with pytest.raises(ValueError):
            AnnotatorConfig(pre_s=0.3, post_s=0.6)

    def test_separation_at_least_one_segment(self):
        with pytest.raises(ValueError):
            AnnotatorConfig(min_separation_s=0.5)


class TestDetectPeaks:
    def test_all_zero_waveform(self):
        assert len(detect_peaks(Waveform(np.zeros(5 * FS)))) == 0

    def test_known_onsets(self, profile, rng):
        w = preprocess(clicks_on_floor(profile, [2.0, 9.0, 16.0], 20.0, rng))
        peaks = detect_peaks(w)
        assert len(peaks) == 3
        np.testing.assert_allclose(peaks.times_s(), [2.0, 9.0, 16.0], atol=0.010)

    @pytest.mark.parametrize('amps', [(1.0, 0.25), (0.25, 1.0)])
    def test_close_clicks_keep_the_more_prominent(self, profile, rng, amps):
        w = preprocess(clicks_on_floor(profile, [2.0, 3.0], 6.0, rng, amps))
        peaks = detect_peaks(w)
        assert len(peaks) == 1
        strong = 2.0 if amps[0] > amps[1] else 3.0
        assert peaks.times_s()[0] == pytest.approx(strong, abs=0.010)

    def test_peaks_sorted_and_separated(self, rng):
        p = make_profile(4)
        wave, _ = synth_session(p, 8, PATTERN1, rng)
        peaks = detect_peaks(preprocess(wave))
        assert np.all(np.diff(peaks.indices) >= 5 * FS)

    @pytest.mark.parametrize('alpha', [0.5, 2.0, 4.0])
    def test_amplitude_scale_invariant(self, profile, rng, alpha):
        w = preprocess(clicks_on_floor(profile, [1.5, 7.0], 10.0, rng))
        scaled = Waveform(alpha * w.samples)
        np.testing.assert_array_equal(detect_peaks(scaled).indices, detect_peaks(w).indices)

    def test_double_click_anchored_on_first_click(self, profile, rng):
        # second click louder than the first
        w = preprocess(clicks_on_floor(profile, [3.0, 3.2], 6.0, rng, amps=(0.8, 1.0)))
        peaks = detect_peaks(w)
        assert len(peaks) == 1
        assert peaks.times_s()[0] == pytest.approx(3.0, abs=0.010)


class TestSessionOracle:
    def test_recall_and_precision(self):
        hits = n_true = n_detected = 0
        for seed in range(20):
            rng = np.random.default_rng(1000 + seed)
            label = PATTERN1 if seed % 2 == 0 else PATTERN2
            wave, truth = synth_session(make_profile(seed), 6, label, rng)
            detected = detect_peaks(preprocess(wave)).times_s()
            hits += match(list(detected), truth.event_onsets_s)
            n_true += len(truth.event_onsets_s)
            n_detected += len(detected)
        assert hits / n_true >= 0.95
        assert hits / n_detected >= 0.95

    def test_pattern2_segments_hold_both_clicks(self):
        for seed in range(5):
            rng = np.random.default_rng(2000 + seed)
            wave, truth = synth_session(make_profile(seed), 6, PATTERN2, rng)
            annotation = annotate_recording(wave, PATTERN2, session_id='s')
            assert annotation.segments
            all_clicks = [t for clicks in truth.click_times_s for t in clicks]
            for seg in annotation.segments:
                start_s = int(seg.source.split('@')[1]) / FS
                inside = [t for t in all_clicks if start_s <= t < start_s + 1.0]
                assert len(inside) == 2


class TestExtractSegments:
    def test_quarter_second_before_peak(self, rng):
        w = Waveform(rng.standard_normal(10 * FS))
        segs, dropped = extract_segments(w, PeakList(np.array([96000]), np.array([1.0])), AnnotatorConfig(), PATTERN1)
        assert dropped == 0
        np.testing.assert_array_equal(segs[0].wave.samples, w.samples[84000:132000])

    def test_boundary_peaks_dropped_and_counted(self, rng):
        w = Waveform(rng.standard_normal(10 * FS))
        peaks = PeakList(np.array([1000, 5 * FS, 10 * FS - 1000]), np.ones(3))
        segs, dropped = extract_segments(w, peaks, AnnotatorConfig(), PATTERN1)
        assert len(segs) == 1
        assert dropped == 2

    def test_segments_carry_label_and_provenance(self, rng):
        w = Waveform(rng.standard_normal(3 * FS))
        segs, _ = extract_segments(w, PeakList(np.array([FS]), np.ones(1)), AnnotatorConfig(), PATTERN2, 'P001', 'sess')
        assert segs[0].label == PATTERN2
        assert segs[0].participant_id == 'P001'
        assert segs[0].source == f"sess@{FS - FS // 4}"


class TestSegmentNonpattern:
    def test_floor_division(self):
        assert len(segment_nonpattern(Waveform(np.zeros(int(10.5 * FS))), SPEECH)) == 10
        assert segment_nonpattern(Waveform(np.zeros(int(0.9 * FS))), SPEECH) == []

    def test_partition(self, rng):
        w = Waveform(rng.standard_normal(int(10.5 * FS)))
        segs = segment_nonpattern(w, SPEECH)
        np.testing.assert_array_equal(np.concatenate([s.wave.samples for s in segs]), w.samples[:10 * FS])

    def test_pattern_label_rejected(self):
        with pytest.raises(ValueError):
            segment_nonpattern(Waveform(np.zeros(FS)), PATTERN1)

    def test_annotate_nopattern_stream(self, rng):
        annotation = annotate_recording(Waveform(rng.standard_normal(3 * FS)), SPEECH)
        assert len(annotation.segments) == 3
        assert len(annotation.peaks) == 0
