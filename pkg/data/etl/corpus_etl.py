"""Materializes a synthetic participant corpus: one WAV per segment plus a JSON-lines manifest."""
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from app.util import util
from app.util.data_processing import CorpusManifest
from app.util.errors import ConfigError
from app.util.synthgen import EventClass, Label, make_profile, synth_segment

logger = logging.getLogger(__name__)

# Reference corpus: 21 participants, 840 speech / 60 chewing / 45 motion / 30 babble /
# 20 music / 180 silence / 343 single click / 381 double click.
REFERENCE_PARTICIPANTS = 21
DEFAULT_PER_PARTICIPANT = {'nopattern:speech': 40, 'pattern1': 16, 'pattern2': 18, 'nopattern:silence': 9}
DEFAULT_POOLED = {'nopattern:chewing': 60, 'nopattern:motion': 45, 'nopattern:babble': 30, 'nopattern:music': 20}
MAX_PARTICIPANTS = 1000


@dataclass(frozen=True)
class Composition:
    """Segments per participant, plus totals drawn across participants.

    ``pooled`` totals are given for the reference corpus size and scale with
    the number of participants; they are dealt round-robin.
    """
    per_participant: dict = field(default_factory=lambda: dict(DEFAULT_PER_PARTICIPANT))
    pooled: dict = field(default_factory=lambda: dict(DEFAULT_POOLED))

    def __post_init__(self):
        for text, count in {**self.per_participant, **self.pooled}.items():
            Label.parse(text)
            if int(count) < 0:
                raise ConfigError(f"negative segment count for {text}")

    @classmethod
    def uniform(cls, k: int) -> 'Composition':
        """k segments of each class per participant (silence stands in for NoPattern)."""
        return cls({'pattern1': k, 'pattern2': k, 'nopattern:silence': k}, {})

    def pooled_totals(self, n_participants: int) -> dict:
        return {text: int(round(count * n_participants / REFERENCE_PARTICIPANTS)) for text, count in self.pooled.items()}

    def plan(self, n_participants: int) -> list:
        """(participant index, label text, index within that participant and label) for every segment."""
        rows = []
        for pi in range(n_participants):
            for text, count in sorted(self.per_participant.items()):
                rows.extend((pi, text, j) for j in range(int(count)))
        for text, total in sorted(self.pooled_totals(n_participants).items()):
            base = sum(int(c) for t, c in self.per_participant.items() if t == text)
            for n in range(total):
                pi = n % n_participants
                rows.append((pi, text, base + n // n_participants))
        return rows

    def to_dict(self) -> dict:
        return {'per_participant': dict(sorted(self.per_participant.items())),
                'pooled': dict(sorted(self.pooled.items()))}


@dataclass(frozen=True)
class SynthConfig:
    n_participants: int = 20
    seed: int = 0
    composition: Composition = Composition()
    workers: int = 4

    def __post_init__(self):
        if not 3 <= self.n_participants <= MAX_PARTICIPANTS:
            raise ConfigError(f"n_participants must lie in [3, {MAX_PARTICIPANTS}], got {self.n_participants}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")


def participant_id(index: int) -> str:
    return f"P{index:03d}"


def segment_path(pid: str, label: Label, index: int) -> str:
    name = label.cls.slug if label.is_pattern else f"{label.cls.slug}-{label.kind.value}"
    return f"{pid}/{name}_{index:04d}.wav"


def build_corpus(n_participants: int, composition: Composition = None, seed: int = 0, out_dir: str = 'corpus',
                 workers: int = 4) -> CorpusManifest:
    """
    Generates every segment of the corpus and writes it under ``out_dir``.

    Each segment draws from its own stream derived from (seed, participant,
    label, index), so the corpus does not depend on generation order.

    Args:
        n_participants (int): At least 3.
        composition (Composition): Defaults to the reference class proportions.
        seed (int): Corpus seed.
        out_dir (str): Corpus directory; receives ``<participant>/<segment>.wav`` and ``manifest.jsonl``.
        workers (int): Threads used for synthesis and WAV writes.

    Returns:
        CorpusManifest: The written manifest.
    """
    cfg = SynthConfig(n_participants, seed, composition or Composition(), workers)
    # Step 1: Draw one spectral profile per participant
    profiles = [make_profile(seed * MAX_PARTICIPANTS + pi, participant_id(pi)) for pi in range(n_participants)]
    for p in profiles:
        logger.debug("%s: primary mode %.0f Hz, floor rms %.2e", p.id, p.primary_freq_hz, p.noise_floor_rms)

    # Step 2: Lay out every segment to generate
    plan = cfg.composition.plan(n_participants)
    label_order = {text: i for i, text in enumerate(sorted({text for _, text, _ in plan}))}
    logger.info("synthesizing %d segments for %d participants into %s", len(plan), n_participants, out_dir)

    # Step 3: Synthesize and write each segment from its own derived stream
    def one(item):
        pi, text, j = item
        label = Label.parse(text)
        rng = util.derive_rng(seed, pi, label_order[text], j)
        seg = synth_segment(profiles[pi], label, rng)
        rel_path = segment_path(profiles[pi].id, label, j)
        util.write_wav(os.path.join(out_dir, rel_path), seg.wave)
        return {
            'path': rel_path,
            'participant': profiles[pi].id,
            'label': label.cls.slug,
            'kind': None if label.is_pattern else label.kind.value,
            'augmented': False,
            'split_hint': 'clean',
        }

    util.ensure_dir(out_dir)
    for pid in {p.id for p in profiles}:
        util.ensure_dir(os.path.join(out_dir, pid))
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            records = list(pool.map(one, plan))
    else:
        records = [one(item) for item in plan]

    # Step 4: Write the manifest in a stable order
    records.sort(key=lambda r: r['path'])
    manifest = CorpusManifest.from_records(records, os.path.abspath(out_dir))
    manifest.write()
    logger.info("class totals: %s", manifest.class_counts.to_dict())
    return manifest


def expected_class_totals(n_participants: int, composition: Composition = None) -> dict:
    """Class totals the plan will produce, keyed by class slug."""
    composition = composition or Composition()
    totals = {c.slug: 0 for c in EventClass}
    for _, text, _ in composition.plan(n_participants):
        totals[Label.parse(text).cls.slug] += 1
    return totals


def reference_ratios() -> dict:
    """Class proportions of the reference corpus."""
    counts = {'nopattern': 840 + 60 + 45 + 30 + 20 + 180, 'pattern1': 343, 'pattern2': 381}
    total = sum(counts.values())
    return {k: v / total for k, v in counts.items()}


def tiny_composition() -> Composition:
    """A few segments of every class and every noise-pool kind per participant."""
    return Composition({'pattern1': 6, 'pattern2': 6, 'nopattern:speech': 2, 'nopattern:silence': 2,
                        'nopattern:babble': 1, 'nopattern:music': 1, 'nopattern:motion': 1,
                        'nopattern:chewing': 1}, {})


def check_ratio(n_participants: int, composition: Composition = None) -> float:
    """Largest relative deviation of class proportions from the reference ones."""
    totals = expected_class_totals(n_participants, composition)
    n = sum(totals.values())
    return max(abs(totals[k] / n - r) / r for k, r in reference_ratios().items()) if n else math.inf
