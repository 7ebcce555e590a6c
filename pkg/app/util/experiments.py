"""Comparison grids run on a shared participant split.

Every grid trains its arms on the same fold and scores them on the same
clean and noisy test segments, so rows of one table are comparable.
"""
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import pandas as pd

from app.util import my_math
from app.util.augment import SWEEP_SNR_DB, NoisePool, snr_db
from app.util.data_processing import CorpusManifest, build_noise_pool
from app.util.errors import SnrUndefinedError
from app.util.features import FeatureSet
from app.util.model import BroadcastAxis, ModelConfig, count_macs, count_params
from app.util.synthgen import EventClass, NoPatternKind
from app.util.train_eval import (SplitPlan, TrainConfig, evaluate, evaluate_noisy, model_config_for,
                                 robustness_sweep, train)

logger = logging.getLogger(__name__)

MODEL_SCALES = (0.25, 0.5, 1.0, 1.5, 2.0)
ABLATION_FEATURE_SETS = (FeatureSet.LOGMEL13, FeatureSet.LOGMEL13_DELTA, FeatureSet.LOGMEL13_DELTA_DELTA,
                         FeatureSet.LOGMEL64, FeatureSet.FULL41)


@dataclass
class FoldData:
    """Everything one fold's arms share."""
    manifest: CorpusManifest
    split: SplitPlan
    train_segments: list
    test_segments: list
    train_pool: NoisePool
    test_pool: NoisePool
    snr_levels: tuple = SWEEP_SNR_DB
    noise_seed: int = 0


def prepare_fold(manifest: CorpusManifest, split: SplitPlan, snr_levels=SWEEP_SNR_DB, noise_seed: int = 0) -> FoldData:
    """Loads the fold's segments; test noise comes from test participants when they have any."""
    entries = manifest.entries
    train_segments = manifest.subset(entries['participant'].isin(split.train_participants)).load_segments()
    test_segments = manifest.subset(entries['participant'].isin(split.test_participants)).load_segments()
    train_pool = build_noise_pool(manifest, split.train_participants)
    test_pool = build_noise_pool(manifest, split.test_participants)
    if not len(test_pool):
        logger.warning("fold %d: test participants have no noise-pool segments; using training noise", split.fold_id)
        test_pool = train_pool
    return FoldData(manifest, split, train_segments, test_segments, train_pool, test_pool, tuple(snr_levels), noise_seed)


def train_and_score(fold: FoldData, mcfg: ModelConfig, tcfg: TrainConfig) -> dict:
    """Trains one arm and scores it on clean and noisy test segments."""
    model, history = train(fold.manifest, fold.split, mcfg, tcfg, fold.train_pool, fold.train_segments)
    clean = evaluate(model, fold.test_segments, tcfg.feature_set, fold.split.fold_id)
    noisy = evaluate_noisy(model, fold.test_segments, fold.test_pool, fold.snr_levels, fold.noise_seed,
                           tcfg.feature_set, fold.split.fold_id)
    return {
        'model': model,
        'history': history,
        'clean': clean,
        'noisy': noisy,
        'row': {
            'params': count_params(mcfg),
            'macs': count_macs(mcfg),
            'epochs': len(history),
            'clean_balanced_accuracy': clean.balanced_accuracy,
            'noisy_balanced_accuracy': noisy.balanced_accuracy,
        },
    }


@dataclass
class GridResult:
    name: str
    table: pd.DataFrame
    reports: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            'grid': self.name,
            'table': self.table.to_dict(orient='records'),
            'reports': {k: {'clean': v['clean'].to_dict(), 'noisy': v['noisy'].to_dict()} for k, v in self.reports.items()},
            **self.extra,
        }


def model_size_sweep(fold: FoldData, mcfg: ModelConfig, tcfg: TrainConfig, scales=MODEL_SCALES) -> GridResult:
    rows, reports = [], {}
    for scale in scales:
        arm = train_and_score(fold, mcfg.scaled(scale), tcfg)
        rows.append({'scale': float(scale), **arm['row']})
        reports[f"scale={scale:g}"] = arm
        logger.info("scale %.2f: %d params, %d MACs, clean %.3f", scale, arm['row']['params'], arm['row']['macs'],
                    arm['row']['clean_balanced_accuracy'])
    return GridResult('model_size', pd.DataFrame(rows), reports)


def feature_ablation(fold: FoldData, mcfg: ModelConfig, tcfg: TrainConfig,
                     feature_sets=ABLATION_FEATURE_SETS) -> GridResult:
    rows, reports = [], {}
    for feature_set in feature_sets:
        feature_set = FeatureSet(feature_set)
        arm = train_and_score(fold, model_config_for(feature_set, mcfg), replace(tcfg, feature_set=feature_set))
        rows.append({'feature_set': feature_set.value, 'rows': feature_set.n_rows, **arm['row']})
        reports[feature_set.value] = arm
    return GridResult('features', pd.DataFrame(rows), reports)


def axis_comparison(fold: FoldData, mcfg: ModelConfig, tcfg: TrainConfig) -> GridResult:
    """Temporal and feature broadcasting trained on the same split."""
    rows, reports = [], {}
    for axis in BroadcastAxis:
        arm = train_and_score(fold, ModelConfig(**{**mcfg.to_dict(), 'broadcast_axis': axis.value}), tcfg)
        rows.append({'broadcast_axis': axis.value, **arm['row']})
        reports[axis.value] = arm
    return GridResult('axis', pd.DataFrame(rows), reports)


def robustness_experiment(fold: FoldData, mcfg: ModelConfig, tcfg: TrainConfig) -> GridResult:
    """Clean-only training (apply_prob 0) against augmented training over the SNR grid plus clean."""
    clean_tcfg = replace(tcfg, augment=replace(tcfg.augment, apply_prob=0.0))
    m_clean, h_clean = train(fold.manifest, fold.split, mcfg, clean_tcfg, fold.train_pool, fold.train_segments)
    m_aug, h_aug = train(fold.manifest, fold.split, mcfg, tcfg, fold.train_pool, fold.train_segments)
    levels = tuple(fold.snr_levels) + (math.inf,)
    sweep = robustness_sweep(m_clean, m_aug, fold.test_segments, fold.test_pool, levels, fold.noise_seed,
                             tcfg.feature_set, fold.split.fold_id)
    logger.info("robustness: mean gap %.3f (augmented minus clean-trained)", sweep.mean_gap)
    return GridResult('robustness', sweep.table, extra={
        'mean_gap': sweep.mean_gap,
        'clean_trained': sweep.clean_model.to_dict(),
        'augmented_trained': sweep.augmented_model.to_dict(),
        'epochs': {'clean_trained': len(h_clean), 'augmented_trained': len(h_aug)},
    })


def _score_fold(manifest: CorpusManifest, split: SplitPlan, mcfg: ModelConfig, tcfg: TrainConfig, snr_levels,
                noise_seed: int) -> dict:
    return train_and_score(prepare_fold(manifest, split, snr_levels, noise_seed), mcfg, tcfg)


def cross_validate(manifest: CorpusManifest, splits: list, mcfg: ModelConfig, tcfg: TrainConfig,
                   snr_levels=SWEEP_SNR_DB, noise_seed: int = 0, workers: int = 1) -> GridResult:
    """Full participant rotation; the headline numbers are fold means with sample std.

    With ``workers`` > 1 folds train in separate processes. Every fold seeds
    its own streams, so the result does not depend on the worker count.
    """
    jobs = [(manifest, split, mcfg, tcfg, tuple(snr_levels), noise_seed) for split in splits]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as executor:
            arms = list(executor.map(_score_fold, *zip(*jobs)))
    else:
        arms = [_score_fold(*job) for job in jobs]

    rows, reports = [], {}
    for split, arm in zip(splits, arms):
        rows.append({'fold_id': split.fold_id, 'test_participants': ','.join(sorted(split.test_participants)),
                     **arm['row']})
        reports[f"fold={split.fold_id}"] = arm
    table = pd.DataFrame(rows)
    summary = my_math.mean_std_summary(table, ['clean_balanced_accuracy', 'noisy_balanced_accuracy'])
    return GridResult('folds', table, reports, {'summary': summary.to_dict(orient='records')})


def characterize_snr(manifest: CorpusManifest) -> pd.DataFrame:
    """
    SNR of each pattern segment against a silence segment of the same participant.

    Pattern segments pair with the participant's silence segments in turn;
    pairs whose pattern power does not exceed the silence power are skipped.

    Returns:
        pd.DataFrame: One row per measured pair (participant, label, path, snr_db).
    """
    entries = manifest.entries
    rows = []
    for pid in manifest.participants:
        mine = entries[entries['participant'] == pid]
        silence = mine[(mine['label'] == EventClass.NO_PATTERN.slug) & (mine['kind'] == NoPatternKind.SILENCE.value)]
        patterns = mine[mine['label'] != EventClass.NO_PATTERN.slug]
        if silence.empty or patterns.empty:
            continue
        noise = manifest.subset(entries['path'].isin(silence['path'])).load_segments()
        signal = manifest.subset(entries['path'].isin(patterns['path'])).load_segments()
        for i, seg in enumerate(signal):
            try:
                value = snr_db(seg.wave, noise[i % len(noise)].wave)
            except SnrUndefinedError:
                logger.debug("%s: SNR undefined", seg.source)
                continue
            rows.append({'participant': pid, 'label': seg.label.cls.slug, 'path': seg.source, 'snr_db': value})
    return pd.DataFrame(rows, columns=['participant', 'label', 'path', 'snr_db'])


def snr_summary(table: pd.DataFrame) -> list:
    """Observed SNR range overall and per class."""
    summary = [my_math.summarize_range(table['snr_db'], 'all')]
    for label, group in table.groupby('label'):
        summary.append(my_math.summarize_range(group['snr_db'], label))
    return summary


GRIDS = {
    'model_size': model_size_sweep,
    'features': feature_ablation,
    'axis': axis_comparison,
    'robustness': robustness_experiment,
}
