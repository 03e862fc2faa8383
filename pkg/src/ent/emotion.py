"""Emotion probabilities over the alignment lattice and their supervision losses.

The emotion joint network maps every lattice node (t, u) to a distribution
over K emotion classes. Supervision is weak: only the utterance label (and
its designated neutral counterpart) is known, so the losses select nodes —
a single max/min pair, a whole row, a whole column, the full lattice, or
frame regions — and apply cross-entropy there.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError
from .numerics import Linear, softmax, softmax_backward


@dataclass
class EmotionLattice:
    """probs[t, u, k]: emotion distribution at node (t, u); sums to 1 per node."""

    probs: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.ndim != 3:
            raise ArgumentError("emotion lattice must be 3-D (T, U+1, K)")
        if self.probs.shape[2] < 2:
            raise ArgumentError("emotion lattice needs K >= 2 classes")

    @property
    def T(self) -> int:
        return self.probs.shape[0]

    @property
    def U(self) -> int:
        return self.probs.shape[1] - 1

    @property
    def K(self) -> int:
        return self.probs.shape[2]


@dataclass
class SelectedNodes:
    """Argmax node of the target class and argmin node of the neutral class."""

    pos: tuple[int, int]
    neg: tuple[int, int]


def _check_classes(lat: EmotionLattice, k_star: int, k_neutral: int) -> None:
    if lat.K < 2:
        raise ArgumentError("need K >= 2 emotion classes")
    for k in (k_star, k_neutral):
        if not 0 <= k < lat.K:
            raise ArgumentError(f"class index {k} out of range [0, {lat.K})")
    if k_star == k_neutral:
        raise ArgumentError("target and neutral class must differ")


def select_nodes(lat: EmotionLattice, k_star: int, k_neutral: int) -> SelectedNodes:
    """Most-confident target node and least-neutral node.

    Ties break to the smallest t, then smallest u (first occurrence in
    row-major order), keeping runs reproducible.
    """
    _check_classes(lat, k_star, k_neutral)
    pos_flat = int(np.argmax(lat.probs[:, :, k_star]))
    neg_flat = int(np.argmin(lat.probs[:, :, k_neutral]))
    U1 = lat.U + 1
    return SelectedNodes(
        pos=(pos_flat // U1, pos_flat % U1),
        neg=(neg_flat // U1, neg_flat % U1),
    )


def lattice_max_pool_loss(lat: EmotionLattice, k_star: int, k_neutral: int):
    """-log max p(target) - log min p(neutral); returns (loss, SelectedNodes).

    Gradient flows only through the selected node(s); both terms are kept
    even when the argmax and argmin land on the same node.
    """
    nodes = select_nodes(lat, k_star, k_neutral)
    p_pos = lat.probs[nodes.pos[0], nodes.pos[1], k_star]
    p_neg = lat.probs[nodes.neg[0], nodes.neg[1], k_neutral]
    loss = -np.log(p_pos) - np.log(p_neg)
    return float(loss), nodes


def lattice_max_pool_grad(
    lat: EmotionLattice, nodes: SelectedNodes, k_star: int, k_neutral: int
) -> np.ndarray:
    """d(loss)/d(probs): nonzero only at the two selected entries."""
    dprobs = np.zeros_like(lat.probs)
    tp, up = nodes.pos
    tn, un = nodes.neg
    dprobs[tp, up, k_star] -= 1.0 / lat.probs[tp, up, k_star]
    dprobs[tn, un, k_neutral] -= 1.0 / lat.probs[tn, un, k_neutral]
    return dprobs


def temporal_lattice_loss(lat: EmotionLattice, k_star: int, k_neutral: int) -> float:
    """Row variant: cross-entropy over every u in the selected timestamp rows."""
    nodes = select_nodes(lat, k_star, k_neutral)
    t_pos, t_neg = nodes.pos[0], nodes.neg[0]
    loss = -np.log(lat.probs[t_pos, :, k_star]).sum()
    loss -= np.log(lat.probs[t_neg, :, k_neutral]).sum()
    return float(loss)


def temporal_lattice_grad(lat: EmotionLattice, k_star: int, k_neutral: int):
    nodes = select_nodes(lat, k_star, k_neutral)
    t_pos, t_neg = nodes.pos[0], nodes.neg[0]
    dprobs = np.zeros_like(lat.probs)
    dprobs[t_pos, :, k_star] -= 1.0 / lat.probs[t_pos, :, k_star]
    dprobs[t_neg, :, k_neutral] -= 1.0 / lat.probs[t_neg, :, k_neutral]
    return dprobs


def token_lattice_loss(lat: EmotionLattice, k_star: int, k_neutral: int) -> float:
    """Column variant: cross-entropy over every t in the selected token columns."""
    nodes = select_nodes(lat, k_star, k_neutral)
    u_pos, u_neg = nodes.pos[1], nodes.neg[1]
    loss = -np.log(lat.probs[:, u_pos, k_star]).sum()
    loss -= np.log(lat.probs[:, u_neg, k_neutral]).sum()
    return float(loss)


def token_lattice_grad(lat: EmotionLattice, k_star: int, k_neutral: int):
    nodes = select_nodes(lat, k_star, k_neutral)
    u_pos, u_neg = nodes.pos[1], nodes.neg[1]
    dprobs = np.zeros_like(lat.probs)
    dprobs[:, u_pos, k_star] -= 1.0 / lat.probs[:, u_pos, k_star]
    dprobs[:, u_neg, k_neutral] -= 1.0 / lat.probs[:, u_neg, k_neutral]
    return dprobs


def full_lattice_loss(lat: EmotionLattice, k_star: int) -> float:
    """Mean cross-entropy of the target class over all T*(U+1) nodes."""
    if not 0 <= k_star < lat.K:
        raise ArgumentError(f"class index {k_star} out of range [0, {lat.K})")
    return float(-np.log(lat.probs[:, :, k_star]).mean())


def full_lattice_grad(lat: EmotionLattice, k_star: int) -> np.ndarray:
    n_nodes = lat.T * (lat.U + 1)
    dprobs = np.zeros_like(lat.probs)
    dprobs[:, :, k_star] = -1.0 / (lat.probs[:, :, k_star] * n_nodes)
    return dprobs


def _region_labels(lat: EmotionLattice, regions) -> np.ndarray:
    """Validate that regions partition [0, T) and expand to per-frame labels."""
    if not regions:
        raise ArgumentError("empty region list")
    ordered = sorted(regions, key=lambda r: r[0])
    labels = np.empty(lat.T, dtype=np.int64)
    cursor = 0
    for start, end, label in ordered:
        if start != cursor:
            raise ArgumentError(
                f"regions must partition [0, {lat.T}) without gaps or overlap; "
                f"got boundary {start} after {cursor}"
            )
        if not start < end <= lat.T:
            raise ArgumentError(f"region ({start}, {end}) out of range [0, {lat.T})")
        if not 0 <= label < lat.K:
            raise ArgumentError(f"region label {label} out of range [0, {lat.K})")
        labels[start:end] = label
        cursor = end
    if cursor != lat.T:
        raise ArgumentError(f"regions cover [0, {cursor}) but lattice has T={lat.T}")
    return labels


def region_supervised_loss(lat: EmotionLattice, regions) -> float:
    """Mean node cross-entropy against each frame's region label.

    `regions` is a list of (start_frame, end_frame, class) intervals that
    must partition [0, T); the frame label applies across all u.
    """
    labels = _region_labels(lat, regions)
    per_frame = lat.probs[np.arange(lat.T), :, labels]  # (T, U+1)
    return float(-np.log(per_frame).mean())


def region_supervised_grad(lat: EmotionLattice, regions) -> np.ndarray:
    labels = _region_labels(lat, regions)
    n_nodes = lat.T * (lat.U + 1)
    dprobs = np.zeros_like(lat.probs)
    ts = np.arange(lat.T)
    dprobs[ts, :, labels] = -1.0 / (lat.probs[ts, :, labels] * n_nodes)
    return dprobs


# ---------------------------------------------------------------------------
# emotion joint network
# ---------------------------------------------------------------------------


def emotion_joint(h: np.ndarray, g: np.ndarray, joint: Linear):
    """softmax(linear(h_t + g_u)) at every node; returns (lattice, cache)."""
    if h.ndim != 2 or g.ndim != 2 or h.shape[1] != g.shape[1]:
        raise ArgumentError(
            f"encoder/predictor dims {h.shape} / {g.shape} are incompatible"
        )
    fused = h[:, None, :] + g[None, :, :]  # (T, U+1, H)
    logits, lin_cache = joint.forward(fused)
    probs = softmax(logits)
    return EmotionLattice(probs=probs), (lin_cache, probs)


def emotion_joint_backward(cache, dprobs: np.ndarray, joint: Linear):
    """Chain dL/dprobs through the softmax and linear; returns (dh, dg)."""
    lin_cache, probs = cache
    dlogits = softmax_backward(probs, dprobs)
    dfused = joint.backward(lin_cache, dlogits)
    return dfused.sum(axis=1), dfused.sum(axis=0)
