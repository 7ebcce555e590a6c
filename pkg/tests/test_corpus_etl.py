import os

import numpy as np
import pytest

from app.util import util
from app.util.data_processing import MANIFEST_NAME, class_summary, load_and_preprocess_manifest, row_label
from app.util.errors import ConfigError, EmptyNoisePoolError
from app.util.synthgen import PATTERN1, EventClass, Label, NoPatternKind
from data.etl.corpus_etl import (Composition, SynthConfig, build_corpus, check_ratio, expected_class_totals,
                                 segment_path)
from data.etl.noisy_corpus_etl import build_noisy_corpus, level_dir


class TestComposition:
    def test_reference_totals_within_five_percent(self):
        assert expected_class_totals(21) == {'nopattern': 1184, 'pattern1': 336, 'pattern2': 378}
        assert check_ratio(21) <= 0.05

    def test_pooled_kinds_dealt_round_robin(self):
        plan = Composition().plan(7)
        chewing = [pi for pi, text, _ in plan if text == 'nopattern:chewing']
        assert len(chewing) == 20
        assert np.bincount(chewing).tolist() == [3, 3, 3, 3, 3, 3, 2]

    def test_negative_count(self):
        with pytest.raises(ConfigError):
            Composition({'pattern1': -1}, {})

    def test_participant_bounds(self):
        with pytest.raises(ConfigError):
            SynthConfig(n_participants=2)

    def test_segment_paths(self):
        assert segment_path('P000', PATTERN1, 3) == 'P000/pattern1_0003.wav'
        speech = Label(EventClass.NO_PATTERN, NoPatternKind.SPEECH)
        assert segment_path('P000', speech, 3) == 'P000/nopattern-speech_0003.wav'


class TestBuildCorpus:
    def test_files_and_manifest(self, tmp_path):
        manifest = build_corpus(3, Composition.uniform(2), seed=0, out_dir=str(tmp_path), workers=2)
        assert len(manifest) == 18
        assert manifest.class_counts.to_dict() == {'nopattern': 6, 'pattern1': 6, 'pattern2': 6}
        assert manifest.participants == ['P000', 'P001', 'P002']
        for path in manifest.entries['path']:
            assert os.path.isfile(os.path.join(str(tmp_path), path))
        reloaded = load_and_preprocess_manifest(str(tmp_path))
        assert reloaded.entries['path'].tolist() == manifest.entries['path'].tolist()

    def test_byte_identical_across_worker_counts(self, tmp_path):
        a = build_corpus(3, Composition.uniform(1), seed=7, out_dir=str(tmp_path / 'a'), workers=3)
        build_corpus(3, Composition.uniform(1), seed=7, out_dir=str(tmp_path / 'b'), workers=1)
        for name in [MANIFEST_NAME, *a.entries['path']]:
            assert (tmp_path / 'a' / name).read_bytes() == (tmp_path / 'b' / name).read_bytes()

    def test_seed_changes_audio(self, tmp_path):
        build_corpus(3, Composition.uniform(1), seed=1, out_dir=str(tmp_path / 'a'), workers=1)
        build_corpus(3, Composition.uniform(1), seed=2, out_dir=str(tmp_path / 'b'), workers=1)
        path = 'P000/pattern1_0000.wav'
        assert (tmp_path / 'a' / path).read_bytes() != (tmp_path / 'b' / path).read_bytes()


class TestClassSummary:
    def test_counts_per_participant_and_total(self, small_corpus):
        summary = class_summary(small_corpus)
        assert list(summary.index) == ['P000', 'P001', 'P002', 'P003', 'total']
        assert summary.loc['P001', 'pattern1'] == 3
        assert summary.loc['P002', 'nopattern:babble'] == 1
        assert summary.loc['total', 'pattern2'] == 12
        assert summary.drop(index='total').to_numpy().sum() == len(small_corpus)


class TestNoisyCorpus:
    def test_level_directories(self):
        assert level_dir(-10.0) == 'snr_-10dB'
        assert level_dir(0.0) == 'snr_+0dB'

    def test_patterns_mixed_at_level(self, small_corpus, tmp_path):
        noisy = build_noisy_corpus(small_corpus, str(tmp_path), snr_levels=(0.0, 10.0), seed=0)
        assert len(noisy) == 2 * len(small_corpus)
        assert set(noisy.entries['split_hint']) == {'snr=0', 'snr=10'}
        for _, row in noisy.entries.iterrows():
            source = row['path'].split('/', 1)[1]
            clean = util.read_wav(small_corpus.abs_path(source)).samples
            mixed = util.read_wav(noisy.abs_path(row['path'])).samples
            if row_label(row).is_pattern:
                assert row['augmented']
                added = mixed - clean
                level = 10 * np.log10(np.mean(clean ** 2) / np.mean(added ** 2))
                assert level == pytest.approx(float(row['split_hint'].split('=')[1]), abs=0.1)
            else:
                assert not row['augmented']
                np.testing.assert_array_equal(mixed, clean)

    def test_no_noise_segments(self, tmp_path):
        manifest = build_corpus(3, Composition.uniform(1), seed=0, out_dir=str(tmp_path / 'c'), workers=1)
        with pytest.raises(EmptyNoisePoolError):
            build_noisy_corpus(manifest, str(tmp_path / 'n'), snr_levels=(0.0,))
