"""Helpers shared by the subcommand pages."""
import argparse
import os

from app.util.config import PipelineConfig, config_hash
from app.util.data_processing import CorpusManifest, load_and_preprocess_manifest
from app.util.errors import ConfigError
from app.util.train_eval import SplitPlan, make_splits


def add_common_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--config', default=None, help='INI config file')
    parser.add_argument('--preset', default='default', choices=['default', 'tiny'])
    parser.add_argument('-v', '--verbosity', type=int, default=1, choices=[0, 1, 2],
                        help='0=DEBUG, 1=INFO, 2=WARNING')


def report_header(cfg: PipelineConfig) -> dict:
    return {'config_hash': config_hash(cfg), 'preset': cfg.preset}


def load_manifest(path: str) -> CorpusManifest:
    return load_and_preprocess_manifest(path)


def all_splits(manifest: CorpusManifest, cfg: PipelineConfig) -> list:
    s = cfg.split
    return make_splits(manifest, s.holdout_frac, s.n_folds or None, s.seed, s.val_fraction)


def selected_split(manifest: CorpusManifest, cfg: PipelineConfig) -> SplitPlan:
    """The configured fold; train and eval recompute the same plan from the same config."""
    splits = all_splits(manifest, cfg)
    if cfg.split.fold >= len(splits):
        raise ConfigError(f"split.fold={cfg.split.fold} but only {len(splits)} fold(s) exist")
    return splits[cfg.split.fold]


def sibling_path(out_path: str, suffix: str) -> str:
    """``reports/eval.json`` + ``_confusion.csv`` -> ``reports/eval_confusion.csv``."""
    stem, _ = os.path.splitext(out_path)
    return stem + suffix
