import json
import logging
import os
import sys

import numpy as np
import soundfile as sf

from app.util.dsp import SAMPLE_RATE_HZ, Waveform
from app.util.errors import CorpusIOError

LOG_FORMAT = "[%(asctime)s][%(filename)s][line:%(lineno)d][%(levelname)s] %(message)s"


def setup_logger(verbosity: int = 1, name: str = None, log_path: str = None) -> logging.Logger:
    """
    Configure the package logger. Logs always go to standard error.

    Args:
        verbosity: Logging level (0=DEBUG, 1=INFO, 2=WARNING)
        name: Logger name, ``None`` for the root logger
        log_path: Optional extra log file

    Returns:
        logging.Logger: Configured logger instance
    """
    level_dict = {0: logging.DEBUG, 1: logging.INFO, 2: logging.WARNING}
    formatter = logging.Formatter(LOG_FORMAT)

    logger = logging.getLogger(name)
    logger.setLevel(level_dict.get(verbosity, logging.INFO))
    for handler in list(logger.handlers):
        logger.removeHandler(handler)

    stream_handler = logging.StreamHandler(sys.stderr)
    stream_handler.setFormatter(formatter)
    logger.addHandler(stream_handler)

    if log_path:
        log_dir = os.path.dirname(os.path.abspath(log_path))
        os.makedirs(log_dir, exist_ok=True)
        file_handler = logging.FileHandler(log_path, "w")
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)
    return logger


def derive_rng(*keys: int) -> np.random.Generator:
    """Independent generator for a tuple of integer keys (seed, item, epoch, ...)."""
    return np.random.default_rng(np.random.SeedSequence([int(k) & 0xFFFFFFFF for k in keys]))


def ensure_dir(path: str) -> str:
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as e:
        raise CorpusIOError(f"cannot create directory: {e}", path) from e
    return path


def read_wav(path: str) -> Waveform:
    """Reads a mono 48 kHz WAV; PCM files come back normalized to [-1, 1]."""
    if not os.path.isfile(path):
        raise CorpusIOError("WAV file not found", path)
    try:
        data, rate = sf.read(path, dtype="float64", always_2d=True)
    except RuntimeError as e:
        raise CorpusIOError(f"unreadable WAV: {e}", path) from e
    if rate != SAMPLE_RATE_HZ:
        raise CorpusIOError(f"expected {SAMPLE_RATE_HZ} Hz, file is {rate} Hz", path)
    # multi-channel captures are averaged to mono at ingestion
    return Waveform(data.mean(axis=1))


def write_wav(path: str, w: Waveform) -> str:
    ensure_dir(os.path.dirname(os.path.abspath(path)))
    try:
        sf.write(path, w.samples.astype(np.float32), w.sample_rate_hz, subtype="FLOAT")
    except (RuntimeError, OSError) as e:
        raise CorpusIOError(f"cannot write WAV: {e}", path) from e
    return path


def _to_builtin(value):
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (set, frozenset)):
        return sorted(value)
    raise TypeError(f"not JSON serializable: {type(value).__name__}")


def dumps_report(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2, default=_to_builtin, allow_nan=True)


def write_json(path: str, report: dict) -> str:
    ensure_dir(os.path.dirname(os.path.abspath(path)))
    try:
        with open(path, "w", encoding="utf-8") as f:
            f.write(dumps_report(report))
            f.write("\n")
    except OSError as e:
        raise CorpusIOError(f"cannot write report: {e}", path) from e
    return path


def read_json(path: str) -> dict:
    if not os.path.isfile(path):
        raise CorpusIOError("JSON file not found", path)
    with open(path, encoding="utf-8") as f:
        return json.load(f)
