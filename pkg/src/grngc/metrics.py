"""Threshold-free evaluation of a causal score matrix against ground truth:
AUROC (Mann-Whitney with midrank ties) and AUPRC (average precision with
tied scores grouped into one threshold step)."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

FULL = "full"
OFF_DIAGONAL = "off_diagonal"


class MetricError(Exception):
    pass


@dataclass
class EdgeScorePairs:
    scores: np.ndarray
    labels: np.ndarray
    mode: str = FULL

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=bool)
        if self.scores.shape != self.labels.shape or self.scores.ndim != 1 or self.scores.size < 1:
            raise MetricError(
                f"scores/labels must be equal-length vectors, got "
                f"{self.scores.shape} and {self.labels.shape}")


def flatten(gc_scores: np.ndarray, truth: np.ndarray, mode: str = FULL) -> EdgeScorePairs:
    """Pair up matrix cells with truth labels; both in (target, source)
    orientation. off_diagonal drops self-edges."""
    gc_scores = np.asarray(gc_scores, dtype=np.float64)
    truth = np.asarray(truth, dtype=bool)
    if gc_scores.shape != truth.shape or gc_scores.ndim != 2 \
            or gc_scores.shape[0] != gc_scores.shape[1]:
        raise MetricError(f"shape mismatch: scores {gc_scores.shape}, truth {truth.shape}")
    if mode == FULL:
        return EdgeScorePairs(gc_scores.reshape(-1), truth.reshape(-1), mode)
    if mode == OFF_DIAGONAL:
        keep = ~np.eye(gc_scores.shape[0], dtype=bool)
        return EdgeScorePairs(gc_scores[keep], truth[keep], mode)
    raise MetricError(f"unknown mode {mode!r}")


def _midranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x))
    sx = x[order]
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auroc(pairs: EdgeScorePairs) -> float:
    n_pos = int(pairs.labels.sum())
    n_neg = pairs.labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError(f"AUROC needs both classes, got {n_pos} positives, {n_neg} negatives")
    ranks = _midranks(pairs.scores)
    return float((ranks[pairs.labels].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def auprc(pairs: EdgeScorePairs) -> float:
    n_pos = int(pairs.labels.sum())
    if n_pos == 0:
        raise MetricError("AUPRC needs at least one positive label")
    order = np.argsort(-pairs.scores, kind="stable")
    scores = pairs.scores[order]
    labels = pairs.labels[order]
    area = 0.0
    tp = fp = 0
    prev_recall = 0.0
    i = 0
    n = len(scores)
    while i < n:
        j = i
        while j + 1 < n and scores[j + 1] == scores[i]:
            j += 1
        tp += int(labels[i:j + 1].sum())
        fp += (j - i + 1) - int(labels[i:j + 1].sum())
        recall = tp / n_pos
        precision = tp / (tp + fp)
        area += (recall - prev_recall) * precision
        prev_recall = recall
        i = j + 1
    return float(area)


def evaluate(gc_scores: np.ndarray, truth: np.ndarray, mode: str = FULL) -> dict:
    pairs = flatten(gc_scores, truth, mode)
    return {
        "auroc": auroc(pairs),
        "auprc": auprc(pairs),
        "n_edges": int(pairs.scores.size),
        "mode": mode,
    }


def write_metrics(metrics: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(metrics, fh, indent=2)
