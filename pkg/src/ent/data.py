"""Dataset I/O and the synthetic benchmark task.

Manifests are line-delimited JSON records; features live in a small
binary container (magic ENTF, float32 little-endian, widened to float64
on load). The synthetic generator renders each character as a block of
frames built from an orthogonal token basis plus an emotion offset in
disjoint dimensions, so token identity and emotion region are separable
by construction and training-convergence checks are meaningful.
"""

import json
import os
import struct
from dataclasses import dataclass, field, fields

import numpy as np

from .errors import ArgumentError, FormatError
from .numerics import SplitMix64

FEATURE_MAGIC = b"ENTF"
FEATURE_VERSION = 1


# ---------------------------------------------------------------------------
# manifests
# ---------------------------------------------------------------------------


@dataclass
class ManifestRecord:
    id: str
    features: str  # path, relative to the manifest file
    transcript: str
    emotion: str
    n_frames: int
    segments: list | None = None  # [(start_frame, end_frame, label), ...]

    def to_json(self) -> str:
        d = {
            "id": self.id,
            "features": self.features,
            "transcript": self.transcript,
            "emotion": self.emotion,
            "n_frames": self.n_frames,
        }
        if self.segments is not None:
            d["segments"] = [[s, e, lab] for s, e, lab in self.segments]
        return json.dumps(d, sort_keys=True)


def _validate_record(d: dict, line_no: int) -> ManifestRecord:
    for key in ("id", "features", "transcript", "emotion", "n_frames"):
        if key not in d:
            raise FormatError(f"manifest line {line_no}: missing field {key!r}")
    rec = ManifestRecord(
        id=str(d["id"]),
        features=str(d["features"]),
        transcript=str(d["transcript"]),
        emotion=str(d["emotion"]),
        n_frames=int(d["n_frames"]),
        segments=None,
    )
    if rec.n_frames < 1:
        raise FormatError(f"manifest line {line_no} ({rec.id}): n_frames < 1")
    if "segments" in d and d["segments"] is not None:
        segments = []
        for raw in d["segments"]:
            start, end, label = int(raw[0]), int(raw[1]), str(raw[2])
            if not 0 <= start < end <= rec.n_frames:
                raise FormatError(
                    f"manifest line {line_no} ({rec.id}): segment "
                    f"({start}, {end}) outside [0, {rec.n_frames})"
                )
            segments.append((start, end, label))
        rec.segments = segments
    return rec


def load_manifest(path, check_features: bool = True) -> list:
    """Read and validate a line-delimited manifest; errors name the line."""
    records = []
    base = os.path.dirname(os.path.abspath(path))
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                d = json.loads(line)
            except json.JSONDecodeError as e:
                raise FormatError(f"manifest line {line_no}: bad JSON: {e}") from e
            rec = _validate_record(d, line_no)
            if check_features and not os.path.exists(os.path.join(base, rec.features)):
                raise FormatError(
                    f"manifest line {line_no} ({rec.id}): feature file "
                    f"{rec.features!r} not found"
                )
            records.append(rec)
    return records


def write_manifest(path, records) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(rec.to_json() + "\n")


def feature_path(manifest_path, record: ManifestRecord) -> str:
    return os.path.join(os.path.dirname(os.path.abspath(manifest_path)), record.features)


# ---------------------------------------------------------------------------
# binary feature files
# ---------------------------------------------------------------------------


def write_features(path, features: np.ndarray) -> None:
    arr = np.ascontiguousarray(features, dtype="<f4")
    if arr.ndim != 2:
        raise ArgumentError("features must be 2-D (frames, dim)")
    with open(path, "wb") as f:
        f.write(FEATURE_MAGIC)
        f.write(struct.pack("<III", FEATURE_VERSION, arr.shape[0], arr.shape[1]))
        f.write(arr.tobytes())


def read_features(path) -> np.ndarray:
    """Load a feature file, widening float32 to float64."""
    with open(path, "rb") as f:
        header = f.read(16)
        if len(header) != 16 or header[:4] != FEATURE_MAGIC:
            raise FormatError(f"{path}: bad feature file magic/header")
        version, n_frames, dim = struct.unpack("<III", header[4:])
        if version != FEATURE_VERSION:
            raise FormatError(f"{path}: unsupported feature version {version}")
        payload = f.read()
    if n_frames < 1:
        raise ArgumentError(f"{path}: zero-frame feature file")
    expected = n_frames * dim * 4
    if len(payload) != expected:
        raise FormatError(
            f"{path}: payload is {len(payload)} bytes, expected {expected}"
        )
    arr = np.frombuffer(payload, dtype="<f4").reshape(n_frames, dim)
    return arr.astype(np.float64)


# ---------------------------------------------------------------------------
# character tokenizer
# ---------------------------------------------------------------------------


class CharVocab:
    """Character-to-id map; blank is 0, characters are 1..V in given order."""

    def __init__(self, chars: str):
        if len(set(chars)) != len(chars):
            raise ArgumentError("vocabulary characters must be unique")
        self.chars = chars
        self.char_to_id = {c: i + 1 for i, c in enumerate(chars)}

    @property
    def size(self) -> int:
        return len(self.chars)

    def id_to_char(self, token_id: int) -> str:
        if not 1 <= token_id <= self.size:
            raise ArgumentError(f"token id {token_id} out of range [1, {self.size}]")
        return self.chars[token_id - 1]

    def detokenize(self, token_ids) -> str:
        return "".join(self.id_to_char(int(t)) for t in token_ids)


def char_tokenize(transcript: str, vocab: CharVocab, record_id: str = "") -> np.ndarray:
    """One token per character; whitespace maps to the space token."""
    ids = []
    for ch in transcript:
        if ch.isspace():
            ch = " "
        if ch not in vocab.char_to_id:
            where = f" in record {record_id!r}" if record_id else ""
            raise ArgumentError(f"out-of-vocabulary character {ch!r}{where}")
        ids.append(vocab.char_to_id[ch])
    return np.array(ids, dtype=np.int64)


# ---------------------------------------------------------------------------
# synthetic task
# ---------------------------------------------------------------------------


@dataclass
class SyntheticTaskConfig:
    vocab_size: int = 8  # letters; a space token is added on top
    emotion_count: int = 5
    neutral_index: int = 0
    emotions: tuple = ()  # default derived from emotion_count
    frames_per_token: int = 4
    feature_dim: int = 16
    noise_std: float = 0.1
    region_fraction: tuple = (0.35, 0.6)
    words_per_utterance: tuple = (2, 4)
    word_length: tuple = (2, 4)
    neutral_fraction: float = 0.0
    mix: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.vocab_size < 2 or self.vocab_size > 26:
            raise ArgumentError("vocab_size must be in [2, 26]")
        if self.emotion_count < 2:
            raise ArgumentError("emotion_count must be >= 2")
        if not 0 <= self.neutral_index < self.emotion_count:
            raise ArgumentError("neutral_index out of range")
        if self.frames_per_token < 1:
            raise ArgumentError("frames_per_token must be >= 1")
        if self.noise_std < 0:
            raise ArgumentError("noise_std must be >= 0")
        lo, hi = self.region_fraction
        if not 0 < lo <= hi <= 1:
            raise ArgumentError("region_fraction must satisfy 0 < lo <= hi <= 1")
        if not 0 <= self.neutral_fraction <= 1:
            raise ArgumentError("neutral_fraction must be in [0, 1]")
        # token bases and emotion offsets occupy disjoint feature dimensions
        needed = (self.vocab_size + 1) + (self.emotion_count - 1)
        if self.feature_dim < needed:
            raise ArgumentError(
                f"feature_dim {self.feature_dim} too small: need >= {needed} "
                f"for {self.vocab_size}+space token bases and "
                f"{self.emotion_count - 1} emotion offsets"
            )
        if not self.emotions:
            self.emotions = default_emotions(self.emotion_count, self.neutral_index)
        self.emotions = tuple(self.emotions)
        if len(self.emotions) != self.emotion_count:
            raise ArgumentError("emotions list length must equal emotion_count")

    @property
    def vocab_chars(self) -> str:
        return "abcdefghijklmnopqrstuvwxyz"[: self.vocab_size] + " "

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticTaskConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ArgumentError(f"unknown synth config keys: {sorted(unknown)}")
        for key in ("region_fraction", "words_per_utterance", "word_length", "emotions"):
            if key in d and isinstance(d[key], list):
                d = dict(d)
                d[key] = tuple(d[key])
        return cls(**d)


def default_emotions(count: int, neutral_index: int) -> tuple:
    stock = ["angry", "happy", "sad", "excited", "fear", "disgust", "surprise"]
    names = []
    cursor = 0
    for k in range(count):
        if k == neutral_index:
            names.append("neutral")
        else:
            names.append(stock[cursor] if cursor < len(stock) else f"emotion{cursor}")
            cursor += 1
    return tuple(names)


def token_basis(cfg: SyntheticTaskConfig) -> np.ndarray:
    """(V+1, D) orthogonal basis rows; row i-1 belongs to token id i."""
    basis = np.zeros((cfg.vocab_size + 1, cfg.feature_dim))
    for i in range(cfg.vocab_size + 1):
        basis[i, i] = 1.0
    return basis


def emotion_offsets(cfg: SyntheticTaskConfig) -> np.ndarray:
    """(K, D) additive offsets; neutral is zero, others occupy top dims."""
    offsets = np.zeros((cfg.emotion_count, cfg.feature_dim))
    rank = 0
    for k in range(cfg.emotion_count):
        if k == cfg.neutral_index:
            continue
        offsets[k, cfg.feature_dim - 1 - rank] = 1.0
        rank += 1
    return offsets


def _render_utterance(cfg, rng, tokens, frame_emotion):
    """Frames = token basis + emotion offset + gaussian noise."""
    basis = token_basis(cfg)
    offsets = emotion_offsets(cfg)
    m = cfg.frames_per_token
    T = m * len(tokens)
    feats = np.zeros((T, cfg.feature_dim))
    for i, tok in enumerate(tokens):
        feats[i * m : (i + 1) * m] = basis[tok - 1]
    feats += offsets[frame_emotion]
    if cfg.noise_std > 0:
        feats += rng.normal_array((T, cfg.feature_dim), std=cfg.noise_std)
    return feats


def _random_transcript(cfg, rng) -> str:
    letters = cfg.vocab_chars[:-1]
    w_lo, w_hi = cfg.words_per_utterance
    l_lo, l_hi = cfg.word_length
    n_words = w_lo + rng.randint(w_hi - w_lo + 1)
    words = []
    for _ in range(n_words):
        length = l_lo + rng.randint(l_hi - l_lo + 1)
        words.append("".join(letters[rng.randint(len(letters))] for _ in range(length)))
    return " ".join(words)


def _generate_one(cfg, rng, uid: str, vocab: CharVocab, neutral_utt: bool,
                  full_region: bool = False):
    transcript = _random_transcript(cfg, rng)
    tokens = char_tokenize(transcript, vocab)
    T = cfg.frames_per_token * len(tokens)
    neutral = cfg.neutral_index

    frame_emotion = np.full(T, neutral, dtype=np.int64)
    if neutral_utt:
        label_idx = neutral
        segments = [(0, T, cfg.emotions[neutral])]
    else:
        non_neutral = [k for k in range(cfg.emotion_count) if k != neutral]
        label_idx = non_neutral[rng.randint(len(non_neutral))]
        if full_region:
            length = T
        else:
            lo, hi = cfg.region_fraction
            frac = rng.uniform(lo, hi)
            length = max(1, int(round(frac * T)))
            length = min(length, T)
        start = rng.randint(T - length + 1)
        frame_emotion[start : start + length] = label_idx
        segments = []
        if start > 0:
            segments.append((0, start, cfg.emotions[neutral]))
        segments.append((start, start + length, cfg.emotions[label_idx]))
        if start + length < T:
            segments.append((start + length, T, cfg.emotions[neutral]))

    feats = _render_utterance(cfg, rng, tokens, frame_emotion)
    rec = ManifestRecord(
        id=uid,
        features=f"features/{uid}.entf",
        transcript=transcript,
        emotion=cfg.emotions[label_idx],
        n_frames=T,
        segments=segments,
    )
    return rec, feats


def synth_generate(cfg: SyntheticTaskConfig, n_utterances: int, out_dir) -> list:
    """Write `n_utterances` synthetic records plus features under out_dir.

    With cfg.mix set, each record is a neutral recording concatenated with
    a fully-emotional one (interval-labeled training data); otherwise each
    utterance carries one contiguous emotional region over a neutral bed,
    or is fully neutral with probability cfg.neutral_fraction.
    """
    if n_utterances < 1:
        raise ArgumentError("n_utterances must be >= 1")
    rng = SplitMix64(cfg.seed)
    vocab = CharVocab(cfg.vocab_chars)
    os.makedirs(os.path.join(out_dir, "features"), exist_ok=True)
    records = []
    for i in range(n_utterances):
        uid = f"utt{i:05d}"
        if cfg.mix:
            rec_n, feats_n = _generate_one(cfg, rng, f"{uid}n", vocab, neutral_utt=True)
            rec_e, feats_e = _generate_one(cfg, rng, f"{uid}e", vocab,
                                           neutral_utt=False, full_region=True)
            rec, feats = mix_segments(
                rec_n, rec_e, feats_n, feats_e,
                mixed_id=uid,
                features_rel_path=f"features/{uid}.entf",
                neutral_label=cfg.emotions[cfg.neutral_index],
            )
        else:
            neutral_utt = rng.uniform() < cfg.neutral_fraction
            rec, feats = _generate_one(cfg, rng, uid, vocab, neutral_utt=neutral_utt)
        write_features(os.path.join(out_dir, rec.features), feats)
        records.append(rec)
    write_manifest(os.path.join(out_dir, "manifest.jsonl"), records)
    return records


def mix_segments(neutral_record: ManifestRecord, emotional_record: ManifestRecord,
                 neutral_features: np.ndarray, emotional_features: np.ndarray,
                 mixed_id: str, features_rel_path: str,
                 neutral_label: str = "neutral"):
    """Concatenate a neutral recording with an emotional one.

    Returns (record, features) where the record carries the two-interval
    segment annotation and the transcripts joined by a single space.
    """
    if neutral_record.emotion != neutral_label:
        raise ArgumentError(
            f"first record must be neutral-labeled, got {neutral_record.emotion!r}"
        )
    if neutral_features.shape[0] < 1 or emotional_features.shape[0] < 1:
        raise ArgumentError("cannot mix zero-frame recordings")
    if neutral_features.shape[1] != emotional_features.shape[1]:
        raise ArgumentError(
            f"feature dims differ: {neutral_features.shape[1]} vs "
            f"{emotional_features.shape[1]}"
        )
    t_n = neutral_features.shape[0]
    t_e = emotional_features.shape[0]
    feats = np.concatenate([neutral_features, emotional_features], axis=0)
    rec = ManifestRecord(
        id=mixed_id,
        features=features_rel_path,
        transcript=f"{neutral_record.transcript} {emotional_record.transcript}",
        emotion=emotional_record.emotion,
        n_frames=t_n + t_e,
        segments=[
            (0, t_n, neutral_label),
            (t_n, t_n + t_e, emotional_record.emotion),
        ],
    )
    return rec, feats
