"""Greedy decoding with per-frame emotion read-out.

At each frame the decoder emits the argmax symbol; non-blank advances the
predictor state, blank closes the frame and records the emotion argmax at
the node just traversed. ENT reads emotion from the shared predictor
state; FENT fuses the encoder frame with the blank predictor's state. Ties
break toward blank, then the lowest token id (argmax index order).
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError
from .model import EntParams, FentParams, ModelConfig


@dataclass
class EmotionSegment:
    start: int  # inclusive frame
    end: int  # exclusive frame
    label: int

    def __post_init__(self):
        if self.start >= self.end:
            raise ArgumentError(f"empty segment ({self.start}, {self.end})")


@dataclass
class DecodeResult:
    tokens: list
    frame_emotions: np.ndarray  # (T,) emotion class per frame
    events: list  # (t, u_at_t, emotion) recorded at each blank
    utt_logits: np.ndarray | None = None  # utterance head over decoded states
    forced_blank_frames: list = field(default_factory=list)
    counters: dict = field(default_factory=dict)


def _lstm_state_step(cell, emb, state):
    h, c, _ = cell.step(emb, state[0], state[1])
    return h, (h, c)


def greedy_decode(params, features: np.ndarray, cfg: ModelConfig) -> DecodeResult:
    """Decode one utterance; returns tokens, per-frame emotions, blank events.

    Exhausting max_symbols_per_frame forces a blank (recorded, not fatal),
    so decoding always terminates after exactly T blank events.
    """
    if features.ndim != 2 or features.shape[0] < 1:
        raise ArgumentError("features must be (T, D) with T >= 1")
    if isinstance(params, EntParams):
        return _greedy_ent(params, features, cfg)
    if isinstance(params, FentParams):
        return _greedy_fent(params, features, cfg)
    raise ArgumentError(f"unknown params object {type(params)!r}")


def _greedy_ent(params: EntParams, features, cfg) -> DecodeResult:
    h_all, _ = params.encoder.forward(features)
    T = h_all.shape[0]
    zeros = np.zeros(cfg.hidden_dim)
    emb0, _ = params.embed.forward(np.array([0]))
    g, state = _lstm_state_step(params.predictor, emb0[0], (zeros, zeros))

    tokens: list[int] = []
    g_states = [g]
    frame_emotions = np.zeros(T, dtype=np.int64)
    events = []
    forced = []
    counters = {"joint_evals": 0, "emotion_evals": 0}
    for t in range(T):
        emitted = 0
        while True:
            fused = h_all[t] + g
            logits, _ = params.joint.forward(fused)
            counters["joint_evals"] += 1
            sym = int(np.argmax(logits))
            if sym != 0 and emitted >= cfg.max_symbols_per_frame:
                forced.append(t)
                sym = 0
            if sym == 0:
                emo_logits, _ = params.emotion_joint.forward(fused)
                counters["emotion_evals"] += 1
                k = int(np.argmax(emo_logits))
                frame_emotions[t] = k
                events.append((t, len(tokens), k))
                break
            tokens.append(sym)
            emitted += 1
            emb, _ = params.embed.forward(np.array([sym]))
            g, state = _lstm_state_step(params.predictor, emb[0], state)
            g_states.append(g)
    pooled = h_all.mean(axis=0) + np.mean(g_states, axis=0)
    utt_logits, _ = params.utterance_head.forward(pooled)
    return DecodeResult(tokens=tokens, frame_emotions=frame_emotions, events=events,
                        utt_logits=utt_logits, forced_blank_frames=forced,
                        counters=counters)


def _greedy_fent(params: FentParams, features, cfg) -> DecodeResult:
    h_all, _ = params.encoder.forward(features)
    T = h_all.shape[0]
    zeros = np.zeros(cfg.hidden_dim)
    embv0, _ = params.embed_v.forward(np.array([0]))
    g_v, state_v = _lstm_state_step(params.predictor_v, embv0[0], (zeros, zeros))
    embb0, _ = params.embed_b.forward(np.array([0]))
    g_b, state_b = _lstm_state_step(params.predictor_b, embb0[0], (zeros, zeros))

    tokens: list[int] = []
    gb_states = [g_b]
    frame_emotions = np.zeros(T, dtype=np.int64)
    events = []
    forced = []
    counters = {"vocab_joint_evals": 0, "blank_joint_evals": 0, "emotion_evals": 0}
    for t in range(T):
        emitted = 0
        while True:
            logit_b, _ = params.joint_blank.forward(h_all[t] + g_b)
            counters["blank_joint_evals"] += 1
            logits_v, _ = params.joint_vocab.forward(h_all[t] + g_v)
            counters["vocab_joint_evals"] += 1
            full = np.concatenate([logit_b, logits_v])
            sym = int(np.argmax(full))
            if sym != 0 and emitted >= cfg.max_symbols_per_frame:
                forced.append(t)
                sym = 0
            if sym == 0:
                # blank emitted: emotion from acoustic + blank representation
                emo_logits, _ = params.emotion_joint.forward(h_all[t] + g_b)
                counters["emotion_evals"] += 1
                k = int(np.argmax(emo_logits))
                frame_emotions[t] = k
                events.append((t, len(tokens), k))
                break
            tokens.append(sym)
            emitted += 1
            # both predictors consume the emitted token
            emb_v, _ = params.embed_v.forward(np.array([sym]))
            g_v, state_v = _lstm_state_step(params.predictor_v, emb_v[0], state_v)
            emb_b, _ = params.embed_b.forward(np.array([sym]))
            g_b, state_b = _lstm_state_step(params.predictor_b, emb_b[0], state_b)
            gb_states.append(g_b)
    pooled = h_all.mean(axis=0) + np.mean(gb_states, axis=0)
    utt_logits, _ = params.utterance_head.forward(pooled)
    return DecodeResult(tokens=tokens, frame_emotions=frame_emotions, events=events,
                        utt_logits=utt_logits, forced_blank_frames=forced,
                        counters=counters)


def frames_to_segments(frame_emotions, min_run: int = 1) -> list:
    """Merge the frame track into segments, absorbing runs shorter than min_run.

    A short run inherits the previous segment's label; the first run is
    exempt. The output partitions [0, T) with no adjacent equal labels.
    """
    track = np.asarray(frame_emotions, dtype=np.int64)
    if track.size == 0:
        raise ArgumentError("empty emotion track")
    if min_run < 1:
        raise ArgumentError("min_run must be >= 1")

    runs = []
    start = 0
    for i in range(1, track.size):
        if track[i] != track[start]:
            runs.append((start, i, int(track[start])))
            start = i
    runs.append((start, track.size, int(track[start])))

    segments: list[EmotionSegment] = []
    for start, end, label in runs:
        if segments and end - start < min_run:
            label = segments[-1].label  # absorbed
        if segments and segments[-1].label == label:
            segments[-1].end = end
        else:
            segments.append(EmotionSegment(start=start, end=end, label=label))
    return segments


def write_hypotheses(path, records) -> None:
    """Line-delimited decode records: id, transcript, frame_emotions, segments."""
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps(rec, sort_keys=True) + "\n")
