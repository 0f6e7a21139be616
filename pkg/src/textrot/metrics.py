"""Confusion-matrix statistics and the Hmean (per-class F1) score.

Hmean for a class is the harmonic mean of its precision and recall; the
headline number is the macro average over both classes. Zero-denominator
cases map to 0 so degenerate models still produce reports.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

from textrot.core import CLASS_ORDER, RotationClass


@dataclass(frozen=True)
class ClassCounts:
    """Binary confusion counts from one class's point of view."""

    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class ConfusionCounts:
    """Per-class confusion counts over one evaluated sample set."""

    per_class: dict[RotationClass, ClassCounts]
    n_samples: int


@dataclass(frozen=True)
class EvalReport:
    """Precision/recall/hmean per class plus the macro Hmean."""

    counts: ConfusionCounts
    precision: dict[RotationClass, float]
    recall: dict[RotationClass, float]
    hmean_per_class: dict[RotationClass, float]
    macro_hmean: float

    def to_dict(self) -> dict:
        return {
            "n_samples": self.counts.n_samples,
            "counts": {
                c.value: {
                    "tp": cc.tp, "fp": cc.fp, "fn": cc.fn, "tn": cc.tn,
                }
                for c, cc in self.counts.per_class.items()
            },
            "precision": {c.value: self.precision[c] for c in CLASS_ORDER},
            "recall": {c.value: self.recall[c] for c in CLASS_ORDER},
            "hmean": {c.value: self.hmean_per_class[c] for c in CLASS_ORDER},
            "macro_hmean": self.macro_hmean,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def confusion(
    predictions: Sequence[RotationClass], truths: Sequence[RotationClass]
) -> ConfusionCounts:
    """Tabulate per-class confusion counts for paired predictions/truths."""
    if len(predictions) != len(truths):
        raise ValueError(
            f"length mismatch: {len(predictions)} predictions vs {len(truths)} truths"
        )
    if not predictions:
        raise ValueError("cannot tabulate an empty sample set")
    per_class = {}
    for cls in CLASS_ORDER:
        tp = fp = fn = tn = 0
        for p, t in zip(predictions, truths):
            if p is cls and t is cls:
                tp += 1
            elif p is cls:
                fp += 1
            elif t is cls:
                fn += 1
            else:
                tn += 1
        per_class[cls] = ClassCounts(tp=tp, fp=fp, fn=fn, tn=tn)
    return ConfusionCounts(per_class=per_class, n_samples=len(predictions))


def _safe_div(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def hmean(counts: ConfusionCounts) -> EvalReport:
    """Per-class precision/recall/Hmean and their macro average."""
    precision, recall, per_class_h = {}, {}, {}
    for cls, cc in counts.per_class.items():
        p = _safe_div(cc.tp, cc.tp + cc.fp)
        r = _safe_div(cc.tp, cc.tp + cc.fn)
        precision[cls] = p
        recall[cls] = r
        per_class_h[cls] = _safe_div(2.0 * p * r, p + r)
    macro = sum(per_class_h[c] for c in CLASS_ORDER) / len(CLASS_ORDER)
    return EvalReport(
        counts=counts,
        precision=precision,
        recall=recall,
        hmean_per_class=per_class_h,
        macro_hmean=macro,
    )
