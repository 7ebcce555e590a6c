"""Offline noisy evaluation corpus: every pattern segment re-mixed with pooled noise at fixed SNR levels."""
import logging
import os

from app.util import util
from app.util.augment import SWEEP_SNR_DB, mix_at_snr
from app.util.data_processing import CorpusManifest, build_noise_pool, row_label
from app.util.errors import EmptyNoisePoolError

logger = logging.getLogger(__name__)


def level_dir(level: float) -> str:
    return f"snr_{level:+g}dB"


def build_noisy_corpus(manifest: CorpusManifest, out_dir: str, snr_levels=SWEEP_SNR_DB, seed: int = 0,
                       participants=None) -> CorpusManifest:
    """
    Writes one copy of the selected segments per SNR level.

    Pattern segments are mixed with a noise-pool draw at exactly that level;
    no-pattern segments are copied unchanged. Rows carry ``split_hint``
    ``snr=<level>`` and ``augmented`` marks the mixed ones.

    Args:
        manifest (CorpusManifest): Clean source corpus.
        out_dir (str): Destination; receives ``snr_<level>dB/<source path>`` and a manifest.
        snr_levels: Target SNRs in dB.
        seed (int): Noise draws come from a stream per (seed, level).
        participants: Restrict segments and noise to these participants.

    Returns:
        CorpusManifest: The noisy corpus manifest.
    """
    # Step 1: Select source rows and the noise pool
    entries = manifest.entries
    if participants is not None:
        entries = entries[entries['participant'].isin(list(participants))]
    pool = build_noise_pool(manifest, participants)
    if not len(pool):
        raise EmptyNoisePoolError("source corpus has no babble, music, motion or chewing segments", manifest.root)
    logger.info("noisy corpus: %d source segments x %d levels", len(entries), len(snr_levels))

    # Step 2: Mix or copy every segment at every level
    records = []
    for li, level in enumerate(snr_levels):
        rng = util.derive_rng(seed, li)
        for _, row in entries.iterrows():
            label = row_label(row)
            wave = util.read_wav(manifest.abs_path(row['path']))
            if label.is_pattern:
                wave = mix_at_snr(wave, pool.draw(rng), float(level))
            rel_path = f"{level_dir(float(level))}/{row['path']}"
            util.write_wav(os.path.join(out_dir, rel_path), wave)
            records.append({
                'path': rel_path,
                'participant': row['participant'],
                'label': row['label'],
                'kind': row['kind'],
                'augmented': bool(label.is_pattern),
                'split_hint': f"snr={float(level):g}",
            })

    # Step 3: Write the manifest
    noisy = CorpusManifest.from_records(records, os.path.abspath(out_dir))
    noisy.write()
    return noisy
