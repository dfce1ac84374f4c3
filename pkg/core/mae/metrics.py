import numpy as np

from core.utils.errors import MetricError, ShapeMismatchError

__all__ = ["nmse", "nmse_db", "mae_metric", "accuracy"]


def _pair(a, b):
    a = np.asarray(getattr(a, "value", a))
    b = np.asarray(getattr(b, "value", b))
    if a.shape != b.shape:
        raise ShapeMismatchError(f"metric inputs differ in shape: {a.shape} vs {b.shape}")
    return a, b


def nmse(H_gt, H_re):
    """||H_gt - H_re||_F^2 / ||H_gt||_F^2."""
    H_gt, H_re = _pair(H_gt, H_re)
    ref = np.sum(np.abs(H_gt) ** 2)
    if ref == 0:
        raise MetricError("NMSE is undefined for an all-zero ground truth")
    return float(np.sum(np.abs(H_gt - H_re) ** 2) / ref)


def nmse_db(H_gt, H_re):
    return 10.0 * np.log10(nmse(H_gt, H_re))


def mae_metric(y, y_hat):
    """Mean absolute error over all entries."""
    y, y_hat = _pair(y, y_hat)
    if y.size == 0:
        raise MetricError("MAE of an empty set")
    return float(np.mean(np.abs(y - y_hat)))


def accuracy(labels, scores, k=1):
    """Fraction of rows whose label is among the k highest scores."""
    labels = np.asarray(labels)
    scores = np.asarray(scores)
    if scores.ndim != 2 or len(labels) != len(scores):
        raise ShapeMismatchError(f"accuracy needs scores [N, classes] for N labels, got {scores.shape} and {labels.shape}")
    if not 1 <= k <= scores.shape[1]:
        raise MetricError(f"k={k} outside [1, {scores.shape[1]}]")
    top = np.argsort(-scores, axis=1, kind="stable")[:, :k]
    return float(np.mean((top == labels[:, None]).any(axis=1)))
