"""Leave-participants-out training and evaluation.

Training draws class-balanced batches, augments pattern segments on the fly,
and keeps the minimum-validation-loss model. Evaluation reports confusion
matrices, balanced accuracy and per-class F1, optionally under noise.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from sklearn.model_selection import train_test_split

from app.util import my_math
from app.util.augment import AugmentConfig, NoisePool, augment, mix_at_snr
from app.util.data_processing import CorpusManifest
from app.util.errors import ConfigError, SplitError, TrainingDivergedError
from app.util.features import FeatureSet, segment_features
from app.util.model import AdamState, Model, ModelConfig, apply_gradients, build_model, cross_entropy, loss_and_grad, predict_proba
from app.util.synthgen import EventClass, Label, Segment
from app.util.util import derive_rng

logger = logging.getLogger(__name__)

HISTORY_COLUMNS = ['epoch', 'train_loss', 'val_loss', 'is_best']


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 128
    max_epochs: int = 200
    patience: int = 15
    augment: AugmentConfig = AugmentConfig()
    seed: int = 0
    feature_set: FeatureSet = FeatureSet.FULL41
    deterministic: bool = True
    workers: int = 4

    def __post_init__(self):
        object.__setattr__(self, "feature_set", FeatureSet(self.feature_set))
        if self.lr <= 0 or self.batch_size <= 0 or self.max_epochs <= 0:
            raise ValueError("lr, batch_size and max_epochs must be positive")
        if not 0 <= self.patience < self.max_epochs:
            raise ValueError("patience must be nonnegative and below max_epochs")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass(frozen=True)
class SplitPlan:
    fold_id: int
    train_participants: frozenset
    test_participants: frozenset
    val_fraction: float
    val_paths: frozenset = frozenset()

    def __post_init__(self):
        overlap = self.train_participants & self.test_participants
        if overlap:
            raise SplitError(f"participants in both train and test: {sorted(overlap)}")
        if not self.test_participants or not self.train_participants:
            raise SplitError("a split needs at least one train and one test participant")

    def check_against(self, manifest: CorpusManifest) -> None:
        """No segment of a held-out participant may feed training or validation."""
        rows = manifest.entries
        leaked = rows[rows['path'].isin(self.val_paths) & rows['participant'].isin(self.test_participants)]
        if not leaked.empty:
            raise SplitError(f"fold {self.fold_id}: validation holds test-participant segments", leaked['path'].iloc[0])

    def describe(self) -> dict:
        return {
            'fold_id': self.fold_id,
            'train_participants': sorted(self.train_participants),
            'test_participants': sorted(self.test_participants),
            'val_fraction': self.val_fraction,
            'n_val_segments': len(self.val_paths),
        }


def make_splits(manifest: CorpusManifest, holdout_frac: float = 0.1, n_folds: int = None, seed: int = 0,
                val_fraction: float = 0.15) -> list:
    """Participant rotation: every fold holds out a distinct ceil(holdout_frac * P) participants."""
    participants = manifest.participants
    n_participants = len(participants)
    if n_participants < 2:
        raise SplitError(f"leave-participants-out needs at least 2 participants, got {n_participants}")
    if not 0 < holdout_frac < 1 or not 0 <= val_fraction < 1:
        raise SplitError("holdout_frac must lie in (0, 1) and val_fraction in [0, 1)")
    if n_participants < math.ceil(1 / holdout_frac):
        logger.warning("only %d participants for a %.0f%% holdout", n_participants, 100 * holdout_frac)

    k = min(n_participants - 1, max(1, math.ceil(holdout_frac * n_participants - 1e-9)))
    rotation = math.ceil(n_participants / k)
    n_folds = rotation if n_folds is None else n_folds
    if not 1 <= n_folds <= rotation:
        raise SplitError(f"n_folds must lie in [1, {rotation}] for {n_participants} participants")

    order = np.random.default_rng(seed).permutation(n_participants)
    shuffled = [participants[i] for i in order]
    plans = []
    for fold in range(n_folds):
        test = frozenset(shuffled[fold * k:(fold + 1) * k])
        train = frozenset(participants) - test
        rows = manifest.entries[manifest.entries['participant'].isin(train)]
        plans.append(SplitPlan(fold, train, test, val_fraction,
                               _stratified_val_paths(rows, val_fraction, seed + fold)))
    return plans


def _stratified_val_paths(rows: pd.DataFrame, val_fraction: float, seed: int) -> frozenset:
    if val_fraction <= 0 or len(rows) < 2:
        return frozenset()
    paths = rows['path'].to_numpy()
    try:
        _, val = train_test_split(paths, test_size=val_fraction, stratify=rows['label'].to_numpy(),
                                  random_state=seed % (2 ** 32))
    except ValueError:
        logger.warning("class counts too small to stratify the validation split; sampling uniformly")
        _, val = train_test_split(paths, test_size=val_fraction, random_state=seed % (2 ** 32))
    return frozenset(val)


def balanced_sampler(labels, rng: np.random.Generator, chunk: int = 1024):
    """Infinite stream of indices drawn with replacement, weight 1 / count(class)."""
    y = np.array([int(l.cls) if isinstance(l, Label) else int(l) for l in labels])
    counts = np.bincount(y, minlength=len(EventClass))
    if np.any(counts == 0):
        missing = [EventClass(i).slug for i in np.flatnonzero(counts == 0)]
        raise ValueError(f"balanced sampling needs every class, missing {missing}")
    weights = 1.0 / counts[y]
    weights /= weights.sum()
    while True:
        yield from (int(i) for i in rng.choice(len(y), size=chunk, p=weights))


def _featurize_all(segments: list, feature_set: FeatureSet, workers: int = 1) -> np.ndarray:
    if not segments:
        return np.zeros((0, feature_set.n_rows, 79), dtype=np.float32)

    def one(seg):
        return segment_features(seg, feature_set).values.astype(np.float32)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return np.stack(list(pool.map(one, segments)))
    return np.stack([one(seg) for seg in segments])


def _targets(segments: list) -> np.ndarray:
    return np.array([int(seg.label.cls) for seg in segments], dtype=np.int64)


def model_config_for(feature_set: FeatureSet, base: ModelConfig = ModelConfig()) -> ModelConfig:
    return ModelConfig(**{**base.to_dict(), "input_F": FeatureSet(feature_set).n_rows})


def select_best_epoch(history: pd.DataFrame) -> int:
    """Epoch with the lowest validation loss; the earliest wins ties."""
    if history.empty:
        raise ValueError("empty training history")
    return int(history.loc[history['val_loss'].idxmin(), 'epoch'])


def train(manifest: CorpusManifest, split: SplitPlan, mcfg: ModelConfig, tcfg: TrainConfig, pool: NoisePool,
          segments: list = None, on_epoch=None):
    """
    Trains one fold and returns the minimum-validation-loss model.

    Args:
        manifest: Corpus the split was made from.
        split: Fold description; test participants never reach this function's data.
        mcfg: Architecture; ``input_F`` must match ``tcfg.feature_set``.
        tcfg: Optimization, augmentation and early-stopping settings.
        pool: Noise pool for augmentation.
        segments: Optional preloaded segments of the train participants.
        on_epoch: Optional callable(epoch, model, val_loss) run after every epoch.

    Returns:
        tuple: (Model in eval mode, history DataFrame with one row per epoch)
    """
    if mcfg.input_F != tcfg.feature_set.n_rows:
        raise ConfigError(f"model input_F={mcfg.input_F} but feature set {tcfg.feature_set.value} "
                          f"has {tcfg.feature_set.n_rows} rows")
    split.check_against(manifest)

    if segments is None:
        rows = manifest.subset(manifest.entries['participant'].isin(split.train_participants))
        segments = rows.load_segments()
    segments = [s for s in segments if s.participant_id in split.train_participants]
    val_segments = [s for s in segments if s.source in split.val_paths]
    train_segments = [s for s in segments if s.source not in split.val_paths]
    if not train_segments:
        raise SplitError(f"fold {split.fold_id} has no training segments")
    if not val_segments:
        logger.warning("fold %d has no validation segments; early stopping follows training loss", split.fold_id)

    workers = 1 if tcfg.deterministic else tcfg.workers
    fs = tcfg.feature_set
    X_clean = _featurize_all(train_segments, fs, workers)
    y_train = _targets(train_segments)
    X_val = _featurize_all(val_segments, fs, workers)
    y_val = _targets(val_segments)
    logger.info("fold %d: %d train / %d val segments, class counts %s", split.fold_id, len(train_segments),
                len(val_segments), np.bincount(y_train, minlength=len(EventClass)).tolist())

    model = build_model(mcfg, tcfg.seed)
    opt = AdamState()
    sampler = balanced_sampler(y_train, derive_rng(tcfg.seed, split.fold_id, 1))
    n_steps = math.ceil(len(train_segments) / tcfg.batch_size)
    augmenting = tcfg.augment.apply_prob > 0

    best_model, best_loss, since_best = None, math.inf, 0
    history = []
    for epoch in range(1, tcfg.max_epochs + 1):
        model.train()
        epoch_losses = []
        for step in range(n_steps):
            idx = np.array([next(sampler) for _ in range(tcfg.batch_size)])
            X = X_clean[idx].copy()
            if augmenting:
                _augment_batch(X, idx, train_segments, tcfg, pool, epoch, step, workers)
            loss, grads = loss_and_grad(model, (X, y_train[idx]))
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch, loss)
            apply_gradients(model, grads, opt, tcfg.lr)
            epoch_losses.append(loss)

        train_loss = float(np.mean(epoch_losses))
        val_loss = cross_entropy(predict_proba(model, X_val), y_val) if len(y_val) else train_loss
        if not np.isfinite(val_loss):
            raise TrainingDivergedError(epoch, val_loss)
        improved = val_loss < best_loss
        if improved:
            best_model, best_loss, since_best = model.copy(), val_loss, 0
        else:
            since_best += 1
        history.append({'epoch': epoch, 'train_loss': train_loss, 'val_loss': val_loss, 'is_best': improved})
        logger.info("fold %d epoch %d: train %.4f val %.4f%s", split.fold_id, epoch, train_loss, val_loss,
                    " *" if improved else "")
        if on_epoch is not None:
            on_epoch(epoch, model, val_loss)
        if since_best >= tcfg.patience:
            break

    history_df = pd.DataFrame(history, columns=HISTORY_COLUMNS)
    logger.info("fold %d: best epoch %d (val %.4f)", split.fold_id, select_best_epoch(history_df), best_loss)
    return best_model.eval(), history_df


def _augment_batch(X: np.ndarray, idx: np.ndarray, segments: list, tcfg: TrainConfig, pool: NoisePool,
                   epoch: int, step: int, workers: int) -> None:
    """Replaces the features of augmented pattern draws in place."""
    def one(pos):
        i = int(idx[pos])
        seg = segments[i]
        if not seg.label.is_pattern:
            return pos, None
        rng = derive_rng(tcfg.seed, epoch, step, pos, i)
        out = augment(seg, tcfg.augment, pool, rng)
        if out is seg:
            return pos, None
        return pos, segment_features(out, tcfg.feature_set).values.astype(np.float32)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(one, range(len(idx))))
    else:
        results = [one(pos) for pos in range(len(idx))]
    for pos, values in results:
        if values is not None:
            X[pos] = values


# --- Evaluation ---

@dataclass
class EvalReport:
    confusion: np.ndarray
    balanced_accuracy: float
    f1_per_class: tuple
    fold_id: int = None
    snr_table: dict = field(default=None)

    def __post_init__(self):
        for v in (self.balanced_accuracy, *self.f1_per_class):
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"metric {v} outside [0, 1]")

    @property
    def n_segments(self) -> int:
        return int(self.confusion.sum())

    def to_dict(self) -> dict:
        d = {
            'fold_id': self.fold_id,
            'n_segments': self.n_segments,
            'confusion': self.confusion.tolist(),
            'balanced_accuracy': self.balanced_accuracy,
            'f1_per_class': dict(zip([c.slug for c in EventClass], self.f1_per_class)),
        }
        if self.snr_table is not None:
            d['snr_table'] = {_level_key(level): entry for level, entry in self.snr_table.items()}
        return d

    def confusion_frame(self) -> pd.DataFrame:
        names = [c.slug for c in EventClass]
        return pd.DataFrame(self.confusion, index=pd.Index(names, name='true'), columns=names)


def _level_key(level: float) -> str:
    return "clean" if math.isinf(level) else f"{level:g}"


def report_from_predictions(y_true: np.ndarray, y_pred: np.ndarray, fold_id: int = None) -> EvalReport:
    cm = my_math.confusion_matrix(y_true, y_pred)
    return EvalReport(cm, my_math.balanced_accuracy(cm), my_math.f1_per_class(cm), fold_id)


def evaluate_features(model: Model, X: np.ndarray, y: np.ndarray, fold_id: int = None) -> EvalReport:
    return report_from_predictions(y, my_math.argmax_lowest(predict_proba(model, X)), fold_id)


def evaluate(model: Model, segments: list, feature_set: FeatureSet = FeatureSet.FULL41, fold_id: int = None,
             workers: int = 1) -> EvalReport:
    """Featurize, classify and score; argmax ties go to the lowest class index."""
    X = _featurize_all(segments, FeatureSet(feature_set), workers)
    return evaluate_features(model, X, _targets(segments), fold_id)


def corrupt_patterns(segments: list, pool: NoisePool, snr_db, rng: np.random.Generator) -> list:
    """Mixes pool noise into every pattern segment; ``snr_db`` may be one level or a grid to draw from."""
    levels = np.atleast_1d(np.asarray(snr_db, dtype=np.float64))
    out = []
    for seg in segments:
        if not seg.label.is_pattern:
            out.append(seg)
            continue
        level = float(levels[int(rng.integers(len(levels)))]) if len(levels) > 1 else float(levels[0])
        noise = pool.draw(rng)
        if math.isinf(level):
            out.append(seg)
        else:
            out.append(Segment(mix_at_snr(seg.wave, noise, level), seg.label, seg.participant_id, seg.source))
    return out


def evaluate_noisy(model: Model, segments: list, pool: NoisePool, snr_levels, seed: int = 0,
                   feature_set: FeatureSet = FeatureSet.FULL41, fold_id: int = None) -> EvalReport:
    """Each pattern segment is corrupted at an SNR drawn uniformly from the grid."""
    noisy = corrupt_patterns(segments, pool, list(snr_levels), derive_rng(seed, 7))
    return evaluate(model, noisy, feature_set, fold_id)


@dataclass
class RobustnessSweep:
    clean_model: EvalReport
    augmented_model: EvalReport
    table: pd.DataFrame
    mean_gap: float

    def to_dict(self) -> dict:
        return {
            'clean_trained': self.clean_model.to_dict(),
            'augmented_trained': self.augmented_model.to_dict(),
            'table': self.table.to_dict(orient='records'),
            'mean_gap': self.mean_gap,
        }


def robustness_sweep(m_clean: Model, m_augmented: Model, test_segments: list, pool: NoisePool, snr_levels,
                     seed: int = 0, feature_set: FeatureSet = FeatureSet.FULL41, fold_id: int = None) -> RobustnessSweep:
    """Both models on the same corrupted test set per SNR level.

    Levels of ``inf`` leave the test set untouched. The mean gap is taken over
    the finite levels (all levels if none are finite).
    """
    y = _targets(test_segments)
    rows, tables = [], ({}, {})
    for level_index, level in enumerate(snr_levels):
        level = float(level)
        corrupted = corrupt_patterns(test_segments, pool, level, derive_rng(seed, level_index))
        X = _featurize_all(corrupted, FeatureSet(feature_set))
        reports = [evaluate_features(m, X, y, fold_id) for m in (m_clean, m_augmented)]
        for table, report in zip(tables, reports):
            table[level] = {'balanced_accuracy': report.balanced_accuracy, 'f1_per_class': list(report.f1_per_class)}
        rows.append({'snr_db': level, 'clean_trained': reports[0].balanced_accuracy,
                     'augmented_trained': reports[1].balanced_accuracy,
                     'gap': reports[1].balanced_accuracy - reports[0].balanced_accuracy})
        logger.info("SNR %s dB: clean-trained %.3f, augmented-trained %.3f", _level_key(level),
                    rows[-1]['clean_trained'], rows[-1]['augmented_trained'])

    table = pd.DataFrame(rows, columns=['snr_db', 'clean_trained', 'augmented_trained', 'gap'])
    finite = table[np.isfinite(table['snr_db'])]
    mean_gap = float((finite if len(finite) else table)['gap'].mean()) if len(table) else 0.0

    X_clean = _featurize_all(test_segments, FeatureSet(feature_set))
    clean_report = evaluate_features(m_clean, X_clean, y, fold_id)
    aug_report = evaluate_features(m_augmented, X_clean, y, fold_id)
    clean_report.snr_table, aug_report.snr_table = tables
    return RobustnessSweep(clean_report, aug_report, table, mean_gap)
