import numpy as np
import pandas as pd
import pytest

from app.util import report_graphs
from app.util.augment import AugmentConfig
from app.util.experiments import (axis_comparison, characterize_snr, cross_validate, model_size_sweep, prepare_fold,
                                  robustness_experiment, snr_summary)
from app.util.model import ModelConfig
from app.util.train_eval import TrainConfig, make_splits

TINY_MODEL = ModelConfig(block_channels=(2, 2))
ONE_EPOCH = TrainConfig(batch_size=8, max_epochs=2, patience=0, augment=AugmentConfig(apply_prob=0.5), workers=1)


@pytest.fixture(scope='module')
def fold(small_corpus):
    return prepare_fold(small_corpus, make_splits(small_corpus, n_folds=1)[0], snr_levels=(-10.0, 10.0))


class TestSnrSurvey:
    def test_one_row_per_pattern_segment(self, small_corpus):
        table = characterize_snr(small_corpus)
        assert list(table.columns) == ['participant', 'label', 'path', 'snr_db']
        assert set(table['label']) <= {'pattern1', 'pattern2'}
        assert len(table) <= int((small_corpus.entries['label'] != 'nopattern').sum())
        assert np.all(np.isfinite(table['snr_db']))

    def test_summary(self, small_corpus):
        summary = snr_summary(characterize_snr(small_corpus))
        assert summary[0]['measure'] == 'all'
        assert summary[0]['min'] <= summary[0]['median'] <= summary[0]['max']


class TestFold:
    def test_pools_from_own_participants(self, fold):
        assert {s.participant_id for s in fold.train_segments} == fold.split.train_participants
        assert {s.participant_id for s in fold.test_segments} == fold.split.test_participants
        assert len(fold.train_pool) > 0 and len(fold.test_pool) > 0


@pytest.mark.slow
class TestGrids:
    def test_robustness_table(self, fold):
        result = robustness_experiment(fold, TINY_MODEL, ONE_EPOCH)
        assert result.table['snr_db'].tolist()[:2] == [-10.0, 10.0]
        assert np.isinf(result.table['snr_db'].iloc[-1])
        assert 'mean_gap' in result.to_dict()

    def test_model_size_rows(self, fold):
        result = model_size_sweep(fold, TINY_MODEL, ONE_EPOCH, scales=(1.0, 2.0))
        assert result.table['scale'].tolist() == [1.0, 2.0]
        assert result.table['params'].iloc[0] < result.table['params'].iloc[1]

    def test_both_broadcast_axes_on_one_split(self, fold):
        result = axis_comparison(fold, TINY_MODEL, ONE_EPOCH)
        assert result.table['broadcast_axis'].tolist() == ['temporal', 'feature']
        assert set(result.reports) == {'temporal', 'feature'}
        assert result.table['params'].nunique() == 2

    def test_fold_results_independent_of_worker_count(self, small_corpus):
        splits = make_splits(small_corpus, n_folds=2)
        serial = cross_validate(small_corpus, splits, TINY_MODEL, ONE_EPOCH, (-10.0,), workers=1)
        parallel = cross_validate(small_corpus, splits, TINY_MODEL, ONE_EPOCH, (-10.0,), workers=2)
        pd.testing.assert_frame_equal(serial.table, parallel.table)
        assert serial.extra == parallel.extra


class TestFigures:
    def test_confusion_figure_written(self, tmp_path):
        fig = report_graphs.plot_confusion_matrix(np.array([[3, 1, 0], [0, 4, 0], [1, 0, 2]]))
        path = report_graphs.save_figure(fig, str(tmp_path / 'figs' / 'cm.html'), 'cm')
        assert 'id="cm"' in open(path, encoding='utf-8').read()

    def test_loss_curve_marks_best_epoch(self):
        history = pd.DataFrame({'epoch': [1, 2, 3], 'train_loss': [1.0, 0.7, 0.6], 'val_loss': [0.9, 0.6, 0.8],
                                'is_best': [True, True, False]})
        fig = report_graphs.plot_loss_curves(history)
        assert len(fig.data) == 2
        assert fig.layout.shapes[0].x0 == 2

    def test_robustness_curve_labels_clean_level(self):
        table = pd.DataFrame({'snr_db': [0.0, np.inf], 'clean_trained': [0.4, 0.9], 'augmented_trained': [0.6, 0.9]})
        fig = report_graphs.plot_robustness_curve(table)
        assert list(fig.data[0].x) == ['0 dB', 'clean']
