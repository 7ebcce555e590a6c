import numpy as np
import pandas as pd
from sklearn.metrics import confusion_matrix as sk_confusion_matrix

from app.util.errors import MetricUndefinedError

N_CLASSES = 3


def confusion_matrix(y_true, y_pred, n_classes: int = N_CLASSES) -> np.ndarray:
    """Rows are true classes, columns predicted classes."""
    if len(y_true) == 0:
        return np.zeros((n_classes, n_classes), dtype=np.int64)
    return sk_confusion_matrix(y_true, y_pred, labels=list(range(n_classes))).astype(np.int64)


def argmax_lowest(probs: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximum, so ties go to the lowest class index
    return np.argmax(probs, axis=-1)


def balanced_accuracy(cm: np.ndarray) -> float:
    """Mean per-class recall."""
    cm = np.asarray(cm)
    rows = cm.sum(axis=1)
    if np.any(rows == 0):
        empty = [int(i) for i in np.flatnonzero(rows == 0)]
        raise MetricUndefinedError(f"balanced accuracy undefined: no true samples for class(es) {empty}")
    return float(np.mean(np.diag(cm) / rows))


def f1_per_class(cm: np.ndarray) -> tuple:
    """F1 = TP / (TP + (FP + FN) / 2) per class, 0 where the denominator vanishes."""
    cm = np.asarray(cm, dtype=np.float64)
    tp = np.diag(cm)
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp
    denom = tp + 0.5 * (fp + fn)
    f1 = np.divide(tp, denom, out=np.zeros_like(tp), where=denom > 0)
    return tuple(float(v) for v in f1)


def mean_std_summary(df: pd.DataFrame, columns: list) -> pd.DataFrame:
    """Mean and sample std of the given metric columns, one row per column."""
    present = [col for col in columns if col in df.columns]
    if df.empty or not present:
        return pd.DataFrame(columns=['metric', 'mean', 'std', 'n'])
    stats = df[present].agg(['mean', 'std', 'count']).T.reset_index()
    stats.columns = ['metric', 'mean', 'std', 'n']
    stats['std'] = stats['std'].fillna(0.0)
    return stats


def summarize_range(values, name: str) -> dict:
    """Min / median / max of a measurement, ignoring NaNs."""
    arr = np.asarray(values, dtype=np.float64)
    arr = arr[np.isfinite(arr)]
    if arr.size == 0:
        return {'measure': name, 'n': 0, 'min': None, 'median': None, 'max': None}
    return {'measure': name, 'n': int(arr.size), 'min': float(arr.min()),
            'median': float(np.median(arr)), 'max': float(arr.max())}
