"""Scoring: word error rate, weighted/unweighted accuracy, and the
frame-wise emotion diarization error rate with its three-way breakdown."""

from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError


def edit_distance(ref, hyp) -> int:
    """Levenshtein distance with unit substitution/insertion/deletion costs."""
    n, m = len(ref), len(hyp)
    prev = list(range(m + 1))
    for i in range(1, n + 1):
        cur = [i] + [0] * m
        for j in range(1, m + 1):
            sub = prev[j - 1] + (ref[i - 1] != hyp[j - 1])
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, sub)
        prev = cur
    return prev[m]


def wer(reference, hypothesis) -> float:
    """Edit distance over words divided by reference length; may exceed 1."""
    reference = list(reference)
    hypothesis = list(hypothesis)
    if not reference:
        raise ArgumentError("WER needs a nonempty reference")
    return edit_distance(reference, hypothesis) / len(reference)


def per_class_recall(predictions, labels) -> dict:
    recalls = {}
    labels = np.asarray(labels)
    predictions = np.asarray(predictions)
    for cls in np.unique(labels):
        mask = labels == cls
        recalls[cls.item()] = float((predictions[mask] == cls).mean())
    return recalls


def wa_ua(predictions, labels):
    """Weighted accuracy (overall) and unweighted accuracy (mean class recall).

    UA averages over the classes present in the labels only.
    """
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape or labels.size == 0:
        raise ArgumentError("predictions and labels must be equal-length, nonempty")
    wa = float((predictions == labels).mean())
    recalls = per_class_recall(predictions, labels)
    ua = float(np.mean(list(recalls.values())))
    return wa, ua


def _frame_labels(segments, total_frames: int, neutral: int) -> np.ndarray:
    """Expand segments to a per-frame label track; uncovered frames are neutral."""
    track = np.full(total_frames, neutral, dtype=np.int64)
    covered = np.zeros(total_frames, dtype=bool)
    for seg in segments:
        start, end, label = seg.start, seg.end, seg.label
        if not 0 <= start < end <= total_frames:
            raise ArgumentError(
                f"segment ({start}, {end}) out of range [0, {total_frames})"
            )
        if covered[start:end].any():
            raise ArgumentError(f"segment ({start}, {end}) overlaps another")
        covered[start:end] = True
        track[start:end] = label
    return track


def eder_counts(ref_segments, hyp_segments, total_frames: int, neutral: int):
    """Raw frame counts (missed, false_alarm, confusion) for exact pooling."""
    if total_frames < 1:
        raise ArgumentError("total_frames must be >= 1")
    ref = _frame_labels(ref_segments, total_frames, neutral)
    hyp = _frame_labels(hyp_segments, total_frames, neutral)
    ref_emo = ref != neutral
    hyp_emo = hyp != neutral
    missed = int((ref_emo & ~hyp_emo).sum())
    false_alarm = int((~ref_emo & hyp_emo).sum())
    confusion = int((ref_emo & hyp_emo & (ref != hyp)).sum())
    return missed, false_alarm, confusion


def eder(ref_segments, hyp_segments, total_frames: int, neutral: int):
    """Frame-wise emotion diarization error rate and its breakdown.

    Errors split into missed emotion (reference emotional, hypothesis
    neutral), false alarm (reference neutral, hypothesis emotional), and
    confusion (both emotional, labels differ); each is a fraction of the
    timeline and the three sum exactly to the total.
    """
    missed, false_alarm, confusion = eder_counts(
        ref_segments, hyp_segments, total_frames, neutral
    )
    breakdown = {
        "missed": missed / total_frames,
        "false_alarm": false_alarm / total_frames,
        "confusion": confusion / total_frames,
    }
    total = (missed + false_alarm + confusion) / total_frames
    return total, breakdown


@dataclass
class EvalReport:
    wer: float
    wa: float
    ua: float
    eder: float
    eder_missed: float
    eder_false_alarm: float
    eder_confusion: float
    per_class_recall: dict = field(default_factory=dict)
    n_utterances: int = 0

    def to_dict(self) -> dict:
        return {
            "wer": self.wer,
            "wa": self.wa,
            "ua": self.ua,
            "eder": self.eder,
            "eder_missed": self.eder_missed,
            "eder_false_alarm": self.eder_false_alarm,
            "eder_confusion": self.eder_confusion,
            "per_class_recall": self.per_class_recall,
            "n_utterances": self.n_utterances,
        }
