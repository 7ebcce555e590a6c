import logging
import os

import pandas as pd

from app.util import util
from app.util.augment import NoisePool
from app.util.errors import CorpusIOError
from app.util.synthgen import NOISE_POOL_KINDS, EventClass, Label, NoPatternKind, Segment

logger = logging.getLogger(__name__)

MANIFEST_COLUMNS = ['path', 'participant', 'label', 'kind', 'augmented', 'split_hint']
MANIFEST_NAME = 'manifest.jsonl'


class CorpusManifest:
    """One row per segment WAV; paths are relative to ``root``."""

    def __init__(self, entries: pd.DataFrame, root: str):
        self.entries = entries.reset_index(drop=True)
        self.root = root
        self._validate()

    def _validate(self):
        missing = [col for col in MANIFEST_COLUMNS if col not in self.entries.columns]
        if missing:
            raise CorpusIOError(f"manifest missing required columns {missing}", self.root)
        duplicated = self.entries['path'][self.entries['path'].duplicated()]
        if not duplicated.empty:
            raise CorpusIOError(f"duplicate manifest paths, e.g. {duplicated.iloc[0]!r}", self.root)

    @classmethod
    def from_records(cls, records: list, root: str) -> 'CorpusManifest':
        return cls(pd.DataFrame(records, columns=MANIFEST_COLUMNS), root)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def counts(self) -> pd.Series:
        """Segments per label string (``pattern1``, ``nopattern:speech``, ...)."""
        labels = self.entries.apply(lambda row: str(row_label(row)), axis=1) if len(self) else pd.Series(dtype=str)
        return labels.value_counts().sort_index()

    @property
    def class_counts(self) -> pd.Series:
        return self.entries['label'].value_counts().reindex([c.slug for c in EventClass], fill_value=0)

    @property
    def participants(self) -> list:
        return sorted(self.entries['participant'].unique())

    def subset(self, mask) -> 'CorpusManifest':
        return CorpusManifest(self.entries[mask], self.root)

    def abs_path(self, rel_path: str) -> str:
        return os.path.join(self.root, rel_path)

    def targets(self) -> pd.Series:
        return self.entries['label'].map({c.slug: int(c) for c in EventClass})

    def load_segments(self) -> list:
        segments = []
        for _, row in self.entries.iterrows():
            wave = util.read_wav(self.abs_path(row['path']))
            segments.append(Segment(wave, row_label(row), row['participant'], row['path']))
        return segments

    def write(self, path: str = None) -> str:
        path = path or os.path.join(self.root, MANIFEST_NAME)
        util.ensure_dir(os.path.dirname(os.path.abspath(path)))
        try:
            self.entries[MANIFEST_COLUMNS].to_json(path, orient='records', lines=True)
        except OSError as e:
            raise CorpusIOError(f"cannot write manifest: {e}", path) from e
        return path


def row_label(row) -> Label:
    cls = {c.slug: c for c in EventClass}[row['label']]
    kind = row['kind'] if cls == EventClass.NO_PATTERN else None
    return Label(cls, kind)


def load_and_preprocess_manifest(path: str) -> CorpusManifest:
    """Reads a JSON-lines manifest; segment paths resolve against its directory.

    Args:
        path (str): Manifest file, or a corpus directory holding ``manifest.jsonl``.

    Returns:
        CorpusManifest: Validated manifest with normalized column types.
    """
    if os.path.isdir(path):
        path = os.path.join(path, MANIFEST_NAME)
    if not os.path.isfile(path):
        raise CorpusIOError("manifest not found", path)
    try:
        df = pd.read_json(path, orient='records', lines=True, dtype=False)
    except ValueError as e:
        raise CorpusIOError(f"malformed manifest: {e}", path) from e
    if df.empty:
        df = pd.DataFrame(columns=MANIFEST_COLUMNS)

    required_cols = ['path', 'participant', 'label']
    if not all(col in df.columns for col in required_cols):
        raise CorpusIOError(f"manifest missing required columns {required_cols}", path)

    for col, default in (('kind', None), ('augmented', False), ('split_hint', 'clean')):
        if col not in df.columns:
            df[col] = default
    df['participant'] = df['participant'].astype(str)
    df['label'] = df['label'].astype(str).str.lower()
    df['kind'] = df['kind'].where(df['label'] == EventClass.NO_PATTERN.slug, None)
    df['augmented'] = df['augmented'].fillna(False).astype(bool)
    df['split_hint'] = df['split_hint'].fillna('clean').astype(str)

    unknown = set(df['label']) - {c.slug for c in EventClass}
    if unknown:
        raise CorpusIOError(f"unknown labels in manifest: {sorted(unknown)}", path)
    return CorpusManifest(df[MANIFEST_COLUMNS], os.path.dirname(os.path.abspath(path)))


def build_noise_pool(manifest: CorpusManifest, participants=None) -> NoisePool:
    """Acoustic and motion artifact segments (babble, music, motion, chewing) as a noise pool."""
    kinds = [k.value for k in NOISE_POOL_KINDS]
    mask = manifest.entries['kind'].isin(kinds)
    if participants is not None:
        mask &= manifest.entries['participant'].isin(list(participants))
    pool_rows = manifest.entries[mask]
    entries = [(util.read_wav(manifest.abs_path(row['path'])), NoPatternKind(row['kind']))
               for _, row in pool_rows.iterrows()]
    logger.info("noise pool: %d segments (%s)", len(entries),
                pool_rows['kind'].value_counts().to_dict() if len(pool_rows) else {})
    return NoisePool(entries)


def class_summary(manifest: CorpusManifest) -> pd.DataFrame:
    """Per-participant segment counts by label with a totals row."""
    if not len(manifest):
        return pd.DataFrame()
    df = manifest.entries.copy()
    df['label_name'] = df.apply(lambda row: str(row_label(row)), axis=1)
    summary = df.groupby(['participant', 'label_name']).size().unstack(fill_value=0)
    summary.loc['total'] = summary.sum()
    return summary
