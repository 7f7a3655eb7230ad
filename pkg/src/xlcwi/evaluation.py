"""Macro-F1 scoring of span predictions, with the complex class as positive.

Every 0/0 that appears in precision, recall, or F1 evaluates to 0.
"""

from __future__ import annotations

from dataclasses import dataclass

from .corpus import Corpus, to_sequences
from .errors import ValidationError
from .tagger import ClassifierInterface

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValidationError("negative confusion count")

    @property
    def total(self):
        return self.tp + self.fp + self.fn + self.tn

    def as_dict(self):
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}


def _safe_div(num: float, den: float) -> float:
    return num / den if den else 0.0


def f1_for_class(counts: ConfusionCounts, positive_class: str = "complex") -> float:
    """F1 of one class; for "noncomplex" the roles of tp/tn and fp/fn swap."""
    if positive_class == "complex":
        tp, fp, fn = counts.tp, counts.fp, counts.fn
    elif positive_class == "noncomplex":
        tp, fp, fn = counts.tn, counts.fn, counts.fp
    else:
        raise ValidationError(f"unknown class {positive_class!r}")
    precision = _safe_div(tp, tp + fp)
    recall = _safe_div(tp, tp + fn)
    return _safe_div(2.0 * precision * recall, precision + recall)


def macro_f1(counts: ConfusionCounts) -> float:
    return (f1_for_class(counts, "complex") + f1_for_class(counts, "noncomplex")) / 2.0


@dataclass(frozen=True)
class EvalReport:
    train_languages: tuple[str, ...]
    shots: int
    target: str
    counts: ConfusionCounts
    f1_complex: float
    f1_noncomplex: float
    macro_f1: float
    seed: int
    model_id: str

    def as_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "train_languages": list(self.train_languages),
            "shots": self.shots,
            "target": self.target,
            "counts": self.counts.as_dict(),
            "f1_complex": self.f1_complex,
            "f1_noncomplex": self.f1_noncomplex,
            "macro_f1": self.macro_f1,
            "seed": self.seed,
            "model_id": self.model_id,
        }


def confusion_from_pairs(pairs) -> ConfusionCounts:
    tp = fp = fn = tn = 0
    for gold, pred in pairs:
        if gold == 1 and pred == 1:
            tp += 1
        elif gold == 0 and pred == 1:
            fp += 1
        elif gold == 1 and pred == 0:
            fn += 1
        else:
            tn += 1
    return ConfusionCounts(tp, fp, fn, tn)


def evaluate(
    classifier: ClassifierInterface,
    corpus: Corpus,
    *,
    train_languages: tuple[str, ...] = (),
    shots: int = 0,
    target: str = "",
    seed: int = 0,
) -> EvalReport:
    """One prediction per instance, thresholded at the classifier's threshold."""
    threshold = getattr(classifier, "threshold", 0.5)
    pairs = []
    for seq in to_sequences(corpus):
        for idx in sorted(seq.instance_refs):
            inst = corpus.instances[idx]
            try:
                prob = classifier.predict_instance(seq, idx)
            except Exception as exc:
                raise ValidationError(f"prediction failed for {inst.hit_id}: {exc}") from exc
            if not 0.0 <= prob <= 1.0:
                raise ValidationError(f"{inst.hit_id}: probability {prob} outside [0,1]")
            pairs.append((inst.binary_label, 1 if prob >= threshold else 0))
    counts = confusion_from_pairs(pairs)
    f1c = f1_for_class(counts, "complex")
    f1n = f1_for_class(counts, "noncomplex")
    return EvalReport(
        train_languages=tuple(train_languages),
        shots=shots,
        target=target or f"{corpus.language}:{corpus.split}",
        counts=counts,
        f1_complex=f1c,
        f1_noncomplex=f1n,
        macro_f1=(f1c + f1n) / 2.0,
        seed=seed,
        model_id=getattr(classifier, "model_id", "classifier"),
    )
