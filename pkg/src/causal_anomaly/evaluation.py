"""Root-cause ranking and classification metrics, plus the Marg baseline."""

from __future__ import annotations

import math

import numpy as np
from scipy import stats
from sklearn.metrics import average_precision_score, roc_auc_score

from .noise import silverman_bandwidth
from ._kernels import kde_logpdf

CLASS_MECH = "mechanistic"
CLASS_MEAS = "measurement"
METRIC_KEYS = ("top_k_recall", "top_3", "top_5", "average_precision", "auc",
               "classification_accuracy", "f1")


def _ranking(scores_row):
    """Feature indices by descending score, ties to the lower index."""
    s = np.asarray(scores_row, dtype=np.float64)
    return np.lexsort((np.arange(s.size), -s))


def top_k_recall(scores, roots, k=None) -> float | None:
    """Mean recall of true roots among the ``k`` best-scored features.

    ``k=None`` uses the per-sample number of true roots (dynamic k).  Samples
    without true roots are skipped; returns ``None`` if none remain.
    """
    scores = np.asarray(scores, dtype=np.float64)
    roots = np.asarray(roots, dtype=bool)
    vals = []
    for i in range(roots.shape[0]):
        n_true = int(roots[i].sum())
        if n_true == 0:
            continue
        kk = n_true if k is None else k
        top = _ranking(scores[i])[:kk]
        vals.append(roots[i, top].sum() / min(kk, n_true) if k is not None
                    else roots[i, top].sum() / kk)
    return float(np.mean(vals)) if vals else None


def per_sample_ap_auc(scores, roots):
    """Average precision and ROC-AUC per anomalous sample, then averaged."""
    scores = np.asarray(scores, dtype=np.float64)
    roots = np.asarray(roots, dtype=bool)
    aps, aucs = [], []
    for i in range(roots.shape[0]):
        y = roots[i]
        if not y.any():
            continue
        s = np.nan_to_num(scores[i], nan=-np.inf, neginf=-1e300, posinf=1e300)
        aps.append(average_precision_score(y, s))
        if not y.all():
            aucs.append(roc_auc_score(y, s))
    ap = float(np.mean(aps)) if aps else None
    auc = float(np.mean(aucs)) if aucs else None
    return ap, auc


def classification_accuracy(labels, Z_true, W_true) -> float | None:
    """Accuracy of class labels over true roots that were assigned (label != none).

    A cell that is truly both kinds counts as correct for either label.
    """
    labels = np.asarray(labels, dtype=object)
    Z_true = np.asarray(Z_true, dtype=bool)
    W_true = np.asarray(W_true, dtype=bool)
    detected = (Z_true | W_true) & (labels != "none")
    if not detected.any():
        return None
    ok = ((labels == CLASS_MECH) & Z_true) | ((labels == CLASS_MEAS) & W_true)
    return float(ok[detected].mean())


def f1(assigned, roots) -> float | None:
    """Cell-level F1 of assigned root causes against the truth."""
    assigned = np.asarray(assigned, dtype=bool)
    roots = np.asarray(roots, dtype=bool)
    tp = int((assigned & roots).sum())
    fp = int((assigned & ~roots).sum())
    fn = int((~assigned & roots).sum())
    if tp + fp + fn == 0:
        return None
    return 2 * tp / (2 * tp + fp + fn)


def metric_suite(scores, labels, Z_true, W_true, seed=None) -> dict:
    roots = np.asarray(Z_true, dtype=bool) | np.asarray(W_true, dtype=bool)
    ap, auc = per_sample_ap_auc(scores, roots)
    labels = np.asarray(labels, dtype=object)
    return {
        "top_k_recall": top_k_recall(scores, roots),
        "top_3": top_k_recall(scores, roots, 3),
        "top_5": top_k_recall(scores, roots, 5),
        "average_precision": ap,
        "auc": auc,
        "classification_accuracy": classification_accuracy(labels, Z_true, W_true),
        "f1": f1(labels != "none", roots),
        "n_anomalous": int(roots.any(axis=1).sum()),
        "seed": seed,
    }


def marginal_pvalues(data) -> np.ndarray:
    """One-sided p-value of density lowness per cell.

    Each column gets an untrimmed Gaussian KDE (Silverman bandwidth); the p-value of
    a cell is the fraction of the column whose density is at most the cell's.
    """
    data = np.asarray(data, dtype=np.float64)
    n, d = data.shape
    out = np.empty((n, d))
    for j in range(d):
        col = data[:, j]
        h = max(silverman_bandwidth(col), 1e-9)
        dens = kde_logpdf(col, np.sort(col), h)
        out[:, j] = stats.rankdata(dens, method="max") / n
    return out


def marg_classify(data, dag, detected_roots, alpha: float = 0.01, pvalues=None):
    """Label each detected root ``(i, j)``: mechanistic iff some child is significant.

    A child is significant when its Bonferroni-adjusted p-value
    ``min(1, p * |Ch(j)|)`` is at most ``alpha``.  Sink nodes are always measurement.
    """
    pv = marginal_pvalues(data) if pvalues is None else pvalues
    out = {}
    for i, j in detected_roots:
        ch = dag.children(j)
        label = CLASS_MEAS
        if ch:
            adj = np.minimum(1.0, pv[i, list(ch)] * len(ch))
            if np.any(adj <= alpha):
                label = CLASS_MECH
        out[(int(i), int(j))] = label
    return out


def aggregate(runs: list, confidence: float = 0.95) -> dict:
    """Mean and t-based confidence half-width of each metric over runs."""
    out = {}
    for key in METRIC_KEYS:
        vals = [r[key] for r in runs if r.get(key) is not None]
        if not vals:
            out[key] = {"mean": None, "ci": None, "n": 0}
            continue
        arr = np.asarray(vals, dtype=np.float64)
        mean = float(arr.mean())
        if arr.size > 1:
            half = float(stats.t.ppf(0.5 + confidence / 2, arr.size - 1)
                         * arr.std(ddof=1) / math.sqrt(arr.size))
        else:
            half = None
        out[key] = {"mean": mean, "ci": half, "n": int(arr.size)}
    return out
