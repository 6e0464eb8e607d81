"""Segmentation covering and margin-matched F1 for change-point sets.

Both metrics follow the conventions of the public change-point benchmark:
index 0 counts as a (trivial) change-point, covering is normalized by the
series length, and scores over several annotators are averaged.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import rankdata


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class MatchConfig:
    margin: int = 5
    include_trivial_start: bool = True

    def __post_init__(self):
        if self.margin < 0:
            raise MetricError("margin must be non-negative")


@dataclass(frozen=True)
class F1Result:
    f1: float
    precision: float
    recall: float
    degenerate: bool = False

    def __iter__(self):
        return iter((self.f1, self.precision, self.recall))


@dataclass(frozen=True)
class AnnotationSet:
    dataset: str
    n: int
    annotations: Mapping[str, tuple]

    def __post_init__(self):
        if self.n <= 0:
            raise MetricError("series length must be positive")
        if not self.annotations:
            raise MetricError("need at least one annotator")
        clean = {}
        for uid, pts in self.annotations.items():
            pts = sorted(set(int(p) for p in pts))
            if pts and (pts[0] < 0 or pts[-1] >= self.n):
                raise MetricError(f"annotator {uid}: index outside [0, {self.n})")
            clean[str(uid)] = tuple(pts)
        object.__setattr__(self, "annotations", clean)

    @classmethod
    def single(cls, points, n: int, dataset: str = "") -> "AnnotationSet":
        return cls(dataset, n, {"1": tuple(points)})

    @property
    def union(self) -> set:
        out = set()
        for pts in self.annotations.values():
            out.update(pts)
        return out

    @classmethod
    def load(cls, path) -> "AnnotationSet":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except FileNotFoundError:
            raise MetricError(f"annotation file not found: {path}") from None
        for key in ("dataset", "n", "annotations"):
            if key not in doc:
                raise MetricError(f"{path}: missing field '{key}'")
        return cls(doc["dataset"], int(doc["n"]), doc["annotations"])

    def to_json(self) -> dict:
        return {"dataset": self.dataset, "n": self.n, "annotations": {k: list(v) for k, v in self.annotations.items()}}


def _as_annotations(truth, n) -> AnnotationSet:
    if isinstance(truth, AnnotationSet):
        return truth
    if isinstance(truth, Mapping):
        return AnnotationSet("", n, truth)
    return AnnotationSet.single(truth, n)


def _boundaries(points, n: int) -> list[int]:
    pts = set(int(p) for p in points)
    for p in pts:
        if not 0 <= p < n:
            raise MetricError(f"change-point {p} outside [0, {n})")
    pts.discard(0)
    return [0] + sorted(pts) + [n]


def covering_single(predicted, annotated, n: int) -> float:
    """Covering of one annotator's segmentation by the predicted one."""
    a = _boundaries(annotated, n)
    p = np.array(_boundaries(predicted, n))
    p_lo, p_hi = p[:-1], p[1:]
    total = 0.0
    for lo, hi in zip(a[:-1], a[1:]):
        inter = np.clip(np.minimum(hi, p_hi) - np.maximum(lo, p_lo), 0, None)
        union = (hi - lo) + (p_hi - p_lo) - inter
        total += (hi - lo) * float(np.max(inter / union))
    return total / n


def covering(predicted, truth, n: int) -> float:
    if n <= 0:
        raise MetricError("series length must be positive")
    truth = _as_annotations(truth, n)
    scores = [covering_single(predicted, pts, n) for pts in truth.annotations.values()]
    return float(np.mean(scores))


def true_positives(truth_points, predicted, margin: int) -> set:
    """Greedy one-to-one matching within ``margin``.

    Ground-truth points are visited in increasing order; each takes the
    nearest still-unmatched prediction (lower index on equal distance).
    """
    remaining = set(predicted)
    tp = set()
    for tau in sorted(truth_points):
        close = sorted((abs(tau - x), x) for x in remaining if abs(tau - x) <= margin)
        if close:
            tp.add(tau)
            remaining.remove(close[0][1])
    return tp


def f1_score(predicted, truth, cfg: MatchConfig = MatchConfig(), n: int | None = None) -> F1Result:
    if n is None:
        n = truth.n if isinstance(truth, AnnotationSet) else max(list(predicted) + [0]) + 1
    truth = _as_annotations(truth, n)
    X = set(int(p) for p in predicted)
    Gs = [set(pts) for pts in truth.annotations.values()]
    if cfg.include_trivial_start:
        X.add(0)
        for g in Gs:
            g.add(0)
    union = set().union(*Gs)
    recalls = []
    for g in Gs:
        recalls.append(len(true_positives(g, X, cfg.margin)) / len(g) if g else 0.0)
    R = float(np.mean(recalls))
    if not X:
        return F1Result(0.0, 0.0, R, degenerate=True)
    P = len(true_positives(union, X, cfg.margin)) / len(X)
    F = 0.0 if P + R == 0 else 2 * P * R / (P + R)
    return F1Result(F, P, R)


def recall_by_label(predicted, labelled_truth: Mapping[str, Sequence[int]], margin: int = 5) -> dict:
    """Recall per event type, e.g. per activity transition."""
    out = {}
    for label, pts in labelled_truth.items():
        pts = set(pts)
        out[label] = len(true_positives(pts, set(predicted), margin)) / len(pts) if pts else float("nan")
    return out


def average_rank(scores: Mapping[str, Mapping[str, float]]) -> dict:
    """Mean rank per method over datasets (1 = best, ties share the mean rank).

    ``scores[method][dataset]`` holds a higher-is-better score.
    """
    methods = sorted(scores)
    if not methods:
        return {}
    datasets = sorted(set().union(*(scores[m].keys() for m in methods)))
    table = np.empty((len(methods), len(datasets)))
    for i, m in enumerate(methods):
        for j, d in enumerate(datasets):
            if d not in scores[m] or scores[m][d] is None:
                raise MetricError(f"missing score for method {m!r} on dataset {d!r}")
            table[i, j] = scores[m][d]
    ranks = np.column_stack([rankdata(-table[:, j], method="average") for j in range(len(datasets))])
    return {m: float(ranks[i].mean()) for i, m in enumerate(methods)}
