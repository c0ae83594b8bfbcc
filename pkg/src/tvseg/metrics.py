"""Clustering evaluation: optimal label mapping, Acc, NMI, pairwise Pr, ARI.

All metrics are invariant under relabeling of either argument.  Degenerate
cases follow fixed conventions (recorded in the result's ``flags``): NMI of
two single-cluster partitions is 1 and of a single- vs multi-cluster pair
is 0; ARI with a zero denominator is 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import InvalidInputError, UndefinedMetricError


def _check_labels(true_labels, pred_labels, min_len=1):
    t = np.asarray(true_labels, dtype=int)
    p = np.asarray(pred_labels, dtype=int)
    if t.ndim != 1 or p.ndim != 1:
        raise InvalidInputError("label vectors must be 1-D")
    if t.shape != p.shape:
        raise InvalidInputError(f"length mismatch: {t.size} vs {p.size}")
    if t.size < min_len:
        raise InvalidInputError(f"need at least {min_len} samples")
    return t, p


def contingency(true_labels, pred_labels) -> np.ndarray:
    """Count matrix n[t, p] over compacted label alphabets."""
    t, p = _check_labels(true_labels, pred_labels)
    _, ti = np.unique(t, return_inverse=True)
    _, pi = np.unique(p, return_inverse=True)
    table = np.zeros((ti.max() + 1, pi.max() + 1), dtype=np.int64)
    np.add.at(table, (ti, pi), 1)
    return table


def hungarian_map(confusion: np.ndarray) -> np.ndarray:
    """Permutation sigma maximizing sum_k confusion[k, sigma(k)].

    Rectangular inputs are padded with zero rows/columns to square.  The
    returned array maps row index -> matched column index and is optimal,
    not greedy.
    """
    c = np.asarray(confusion)
    if c.ndim != 2 or np.any(c < 0):
        raise InvalidInputError("confusion must be a nonnegative 2-D count matrix")
    size = max(c.shape)
    padded = np.zeros((size, size), dtype=float)
    padded[: c.shape[0], : c.shape[1]] = c
    rows, cols = linear_sum_assignment(-padded)
    sigma = np.empty(size, dtype=int)
    sigma[rows] = cols
    return sigma


def accuracy(true_labels, pred_labels) -> float:
    """Fraction of samples matched under the best prediction-to-truth mapping."""
    t, p = _check_labels(true_labels, pred_labels)
    table = contingency(p, t)  # rows: predicted clusters, cols: true clusters
    sigma = hungarian_map(table)
    matched = sum(
        table[r, sigma[r]] for r in range(table.shape[0]) if sigma[r] < table.shape[1]
    )
    return float(matched) / t.size


def nmi(true_labels, pred_labels) -> float:
    """Mutual information normalized by the geometric mean of the entropies."""
    value, _ = _nmi_with_flag(true_labels, pred_labels)
    return value


def _nmi_with_flag(true_labels, pred_labels):
    t, p = _check_labels(true_labels, pred_labels, min_len=2)
    table = contingency(t, p).astype(float)
    n = table.sum()
    pt = table.sum(axis=1) / n
    pp = table.sum(axis=0) / n
    ht = -float(np.sum(pt * np.log(pt, where=pt > 0, out=np.zeros_like(pt))))
    hp = -float(np.sum(pp * np.log(pp, where=pp > 0, out=np.zeros_like(pp))))
    if ht == 0.0 and hp == 0.0:
        return 1.0, "nmi_both_single_cluster"
    if ht == 0.0 or hp == 0.0:
        return 0.0, "nmi_one_single_cluster"
    pij = table / n
    outer = pt[:, None] * pp[None, :]
    mask = pij > 0
    mi = float(np.sum(pij[mask] * np.log(pij[mask] / outer[mask])))
    value = mi / math.sqrt(ht * hp)
    return min(max(value, 0.0), 1.0), None


def pair_precision(true_labels, pred_labels) -> float:
    """Among unordered pairs predicted same-cluster, the fraction truly same-cluster."""
    t, p = _check_labels(true_labels, pred_labels)
    table = contingency(t, p)
    pred_sizes = table.sum(axis=0)
    predicted_same = int(np.sum(pred_sizes * (pred_sizes - 1) // 2))
    if predicted_same == 0:
        raise UndefinedMetricError("no predicted same-cluster pairs")
    true_positive = int(np.sum(table * (table - 1) // 2))
    return true_positive / predicted_same


def ari(true_labels, pred_labels) -> float:
    """Adjusted Rand index from the contingency table."""
    value, _ = _ari_with_flag(true_labels, pred_labels)
    return value


def _ari_with_flag(true_labels, pred_labels):
    t, p = _check_labels(true_labels, pred_labels)
    table = contingency(t, p).astype(np.int64)
    n = t.size
    sum_cells = float(np.sum(table * (table - 1) // 2))
    a = table.sum(axis=1)
    b = table.sum(axis=0)
    sum_a = float(np.sum(a * (a - 1) // 2))
    sum_b = float(np.sum(b * (b - 1) // 2))
    pairs = n * (n - 1) / 2.0
    expected = sum_a * sum_b / pairs if pairs > 0 else 0.0
    max_index = 0.5 * (sum_a + sum_b)
    denom = max_index - expected
    if denom == 0.0:
        return 1.0, "ari_degenerate_denominator"
    return (sum_cells - expected) / denom, None


@dataclass(frozen=True)
class EvaluationResult:
    """All four metrics plus the mapping and confusion table behind Acc."""

    acc: float
    nmi: float
    precision: float
    ari: float
    mapping: np.ndarray
    confusion: np.ndarray
    flags: tuple = ()

    def to_dict(self):
        return {
            "acc": self.acc,
            "nmi": self.nmi,
            "precision": self.precision,
            "ari": self.ari,
            "mapping": self.mapping.tolist(),
            "confusion": self.confusion.tolist(),
            "flags": list(self.flags),
        }


def evaluate(true_labels, pred_labels) -> EvaluationResult:
    """Compute Acc, NMI, Pr and ARI for a predicted labeling against truth."""
    t, p = _check_labels(true_labels, pred_labels, min_len=2)
    flags = []
    table = contingency(p, t)
    sigma = hungarian_map(table)
    nmi_value, nmi_flag = _nmi_with_flag(t, p)
    if nmi_flag:
        flags.append(nmi_flag)
    ari_value, ari_flag = _ari_with_flag(t, p)
    if ari_flag:
        flags.append(ari_flag)
    return EvaluationResult(
        acc=accuracy(t, p),
        nmi=nmi_value,
        precision=pair_precision(t, p),
        ari=ari_value,
        mapping=sigma,
        confusion=table,
        flags=tuple(flags),
    )
