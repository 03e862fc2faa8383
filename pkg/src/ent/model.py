"""End-to-end model assembly for both transducer variants.

ENT: one vocabulary predictor; the joint network scores blank plus V
tokens per lattice node, and the emotion joint rides on the same encoder
and predictor states.

FENT: separate vocabulary and blank predictors. The vocabulary joint
scores V tokens, the blank joint scores a single logit, and the per-node
distribution is the softmax of their concatenation. The blank predictor
is shared with emotion prediction, so the blank symbol doubles as the
emotion read-out trigger; the utterance head pools the blank predictor's
states for the same reason.

Blank is vocabulary id 0 throughout; real tokens are 1..V.
"""

import io
import json
import os
import struct
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import emotion as emo
from .errors import ArgumentError, FormatError, NumericError
from .numerics import (
    AdamState,
    Embedding,
    Linear,
    Lstm,
    SplitMix64,
    adam_step,
    global_grad_norm,
    log_softmax,
    log_softmax_backward,
    softmax,
)
from .transducer import VocabLogProbLattice, transducer_grad, transducer_loss

VARIANTS = ("ENT", "FENT")
LATTICE_LOSSES = ("none", "maxpool", "temporal", "token", "full", "region")

CHECKPOINT_MAGIC = b"ENTC"
CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    variant: str = "ENT"
    hidden_dim: int = 64
    feature_dim: int = 16
    vocab_chars: str = "abcdefgh "
    emotions: tuple = ("neutral", "angry", "happy", "sad", "excited")
    neutral_index: int = 0
    lattice_loss: str = "maxpool"
    lambda_utt: float = 1.0
    lambda_lat: float = 1.0
    lr: float = 5e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 1
    max_symbols_per_frame: int = 10

    def __post_init__(self):
        self.emotions = tuple(self.emotions)
        self.validate()

    def validate(self):
        if self.variant not in VARIANTS:
            raise ArgumentError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.lattice_loss not in LATTICE_LOSSES:
            raise ArgumentError(
                f"lattice_loss must be one of {LATTICE_LOSSES}, got {self.lattice_loss!r}"
            )
        if self.hidden_dim < 1 or self.feature_dim < 1:
            raise ArgumentError("hidden_dim and feature_dim must be >= 1")
        if len(self.vocab_chars) < 1:
            raise ArgumentError("vocab_chars must be nonempty")
        if len(set(self.vocab_chars)) != len(self.vocab_chars):
            raise ArgumentError("vocab_chars contains duplicates")
        if len(self.emotions) < 2:
            raise ArgumentError("need at least 2 emotion classes")
        if not 0 <= self.neutral_index < len(self.emotions):
            raise ArgumentError("neutral_index out of range")
        if self.lambda_utt < 0 or self.lambda_lat < 0:
            raise ArgumentError("loss weights must be nonnegative")
        if self.max_symbols_per_frame < 1:
            raise ArgumentError("max_symbols_per_frame must be >= 1")

    @property
    def vocab_size(self) -> int:
        """Character count V, excluding blank."""
        return len(self.vocab_chars)

    @property
    def emotion_count(self) -> int:
        return len(self.emotions)

    def canonical_json(self) -> str:
        d = asdict(self)
        d["emotions"] = list(self.emotions)
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ArgumentError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


class EntParams:
    """Parameter container for the single-predictor variant."""

    variant = "ENT"

    def __init__(self, cfg: ModelConfig):
        rng = SplitMix64(cfg.seed)
        H, D, V, K = cfg.hidden_dim, cfg.feature_dim, cfg.vocab_size, cfg.emotion_count
        self.encoder = Lstm(D, H, rng, "encoder")
        self.embed = Embedding(V + 1, H, rng, "predictor.embed")
        self.predictor = Lstm(H, H, rng, "predictor.lstm")
        self.joint = Linear(H, V + 1, rng, "joint.vocab")
        self.emotion_joint = Linear(H, K, rng, "joint.emotion")
        self.utterance_head = Linear(H, K, rng, "utterance_head")

    def params(self):
        out = []
        for layer in (self.encoder, self.embed, self.predictor, self.joint,
                      self.emotion_joint, self.utterance_head):
            out.extend(layer.params())
        return out


class FentParams:
    """Parameter container for the factorized variant."""

    variant = "FENT"

    def __init__(self, cfg: ModelConfig):
        rng = SplitMix64(cfg.seed)
        H, D, V, K = cfg.hidden_dim, cfg.feature_dim, cfg.vocab_size, cfg.emotion_count
        self.encoder = Lstm(D, H, rng, "encoder")
        self.embed_v = Embedding(V + 1, H, rng, "predictor_vocab.embed")
        self.predictor_v = Lstm(H, H, rng, "predictor_vocab.lstm")
        self.embed_b = Embedding(V + 1, H, rng, "predictor_blank.embed")
        self.predictor_b = Lstm(H, H, rng, "predictor_blank.lstm")
        self.joint_vocab = Linear(H, V, rng, "joint.vocab")
        self.joint_blank = Linear(H, 1, rng, "joint.blank")
        self.emotion_joint = Linear(H, K, rng, "joint.emotion")
        self.utterance_head = Linear(H, K, rng, "utterance_head")

    def params(self):
        out = []
        for layer in (self.encoder, self.embed_v, self.predictor_v, self.embed_b,
                      self.predictor_b, self.joint_vocab, self.joint_blank,
                      self.emotion_joint, self.utterance_head):
            out.extend(layer.params())
        return out


def build_params(cfg: ModelConfig):
    return EntParams(cfg) if cfg.variant == "ENT" else FentParams(cfg)


@dataclass
class ForwardOutputs:
    vocab_lsm: np.ndarray  # (T, U+1, V+1) log-probs, blank at index 0
    lattice: VocabLogProbLattice
    emotion: emo.EmotionLattice
    utt_logits: np.ndarray  # (K,)
    cache: dict


def _check_tokens(tokens: np.ndarray, vocab_size: int) -> np.ndarray:
    tokens = np.asarray(tokens, dtype=np.int64)
    if tokens.size and (tokens.min() < 1 or tokens.max() > vocab_size):
        raise ArgumentError(
            f"token ids must be in [1, {vocab_size}], got range "
            f"[{tokens.min()}, {tokens.max()}]"
        )
    return tokens


def _gather_token_lp(vocab_lsm: np.ndarray, tokens: np.ndarray) -> np.ndarray:
    T = vocab_lsm.shape[0]
    U = tokens.size
    token_lp = np.empty((T, U))
    for u in range(U):
        token_lp[:, u] = vocab_lsm[:, u, tokens[u]]
    return token_lp


def ent_forward(features: np.ndarray, tokens: np.ndarray, params: EntParams,
                cfg: ModelConfig) -> ForwardOutputs:
    if features.ndim != 2 or features.shape[1] != cfg.feature_dim:
        raise ArgumentError(f"features must be (T, {cfg.feature_dim})")
    if features.shape[0] < 1:
        raise ArgumentError("need at least one frame")
    tokens = _check_tokens(tokens, cfg.vocab_size)

    h, enc_cache = params.encoder.forward(features)
    pred_ids = np.concatenate([[0], tokens])  # blank id doubles as start symbol
    embedded, emb_cache = params.embed.forward(pred_ids)
    g, pred_cache = params.predictor.forward(embedded)

    fused = h[:, None, :] + g[None, :, :]
    logits, joint_cache = params.joint.forward(fused)
    vocab_lsm = log_softmax(logits)
    lattice = VocabLogProbLattice(
        blank_lp=vocab_lsm[:, :, 0], token_lp=_gather_token_lp(vocab_lsm, tokens)
    )

    emotion, emo_cache = emo.emotion_joint(h, g, params.emotion_joint)

    pooled = h.mean(axis=0) + g.mean(axis=0)
    utt_logits, utt_cache = params.utterance_head.forward(pooled)

    cache = dict(tokens=tokens, h=h, g=g, enc_cache=enc_cache, emb_cache=emb_cache,
                 pred_cache=pred_cache, joint_cache=joint_cache, vocab_lsm=vocab_lsm,
                 emo_cache=emo_cache, utt_cache=utt_cache)
    return ForwardOutputs(vocab_lsm=vocab_lsm, lattice=lattice, emotion=emotion,
                          utt_logits=utt_logits, cache=cache)


def ent_backward(outputs: ForwardOutputs, grads: "LossGrads", params: EntParams) -> None:
    c = outputs.cache
    tokens = c["tokens"]
    T, U = c["h"].shape[0], tokens.size

    dlsm = np.zeros_like(outputs.vocab_lsm)
    dlsm[:, :, 0] += grads.grad_blank
    for u in range(U):
        dlsm[:, u, tokens[u]] += grads.grad_token[:, u]
    dlogits = log_softmax_backward(outputs.vocab_lsm, dlsm)
    dfused = params.joint.backward(c["joint_cache"], dlogits)
    dh = dfused.sum(axis=1)
    dg = dfused.sum(axis=0)

    dh_e, dg_e = emo.emotion_joint_backward(c["emo_cache"], grads.demotion,
                                            params.emotion_joint)
    dh += dh_e
    dg += dg_e

    dpooled = params.utterance_head.backward(c["utt_cache"], grads.dutt)
    dh += dpooled / T
    dg += dpooled / (U + 1)

    dembedded = params.predictor.backward(c["pred_cache"], dg)
    params.embed.backward(c["emb_cache"], dembedded)
    params.encoder.backward(c["enc_cache"], dh)


def fent_forward(features: np.ndarray, tokens: np.ndarray, params: FentParams,
                 cfg: ModelConfig) -> ForwardOutputs:
    if features.ndim != 2 or features.shape[1] != cfg.feature_dim:
        raise ArgumentError(f"features must be (T, {cfg.feature_dim})")
    if features.shape[0] < 1:
        raise ArgumentError("need at least one frame")
    tokens = _check_tokens(tokens, cfg.vocab_size)

    h, enc_cache = params.encoder.forward(features)
    pred_ids = np.concatenate([[0], tokens])
    emb_v, embv_cache = params.embed_v.forward(pred_ids)
    g_v, predv_cache = params.predictor_v.forward(emb_v)
    emb_b, embb_cache = params.embed_b.forward(pred_ids)
    g_b, predb_cache = params.predictor_b.forward(emb_b)

    fused_v = h[:, None, :] + g_v[None, :, :]
    logits_v, jv_cache = params.joint_vocab.forward(fused_v)  # (T, U+1, V)
    fused_b = h[:, None, :] + g_b[None, :, :]
    logit_b, jb_cache = params.joint_blank.forward(fused_b)  # (T, U+1, 1)

    full_logits = np.concatenate([logit_b, logits_v], axis=-1)  # blank first
    vocab_lsm = log_softmax(full_logits)
    lattice = VocabLogProbLattice(
        blank_lp=vocab_lsm[:, :, 0], token_lp=_gather_token_lp(vocab_lsm, tokens)
    )

    # emotion rides on the blank predictor's states
    emotion, emo_cache = emo.emotion_joint(h, g_b, params.emotion_joint)

    pooled = h.mean(axis=0) + g_b.mean(axis=0)
    utt_logits, utt_cache = params.utterance_head.forward(pooled)

    cache = dict(tokens=tokens, h=h, g_v=g_v, g_b=g_b, enc_cache=enc_cache,
                 embv_cache=embv_cache, predv_cache=predv_cache,
                 embb_cache=embb_cache, predb_cache=predb_cache,
                 jv_cache=jv_cache, jb_cache=jb_cache, vocab_lsm=vocab_lsm,
                 emo_cache=emo_cache, utt_cache=utt_cache)
    return ForwardOutputs(vocab_lsm=vocab_lsm, lattice=lattice, emotion=emotion,
                          utt_logits=utt_logits, cache=cache)


def fent_backward(outputs: ForwardOutputs, grads: "LossGrads", params: FentParams) -> None:
    c = outputs.cache
    tokens = c["tokens"]
    T, U = c["h"].shape[0], tokens.size

    dlsm = np.zeros_like(outputs.vocab_lsm)
    dlsm[:, :, 0] += grads.grad_blank
    for u in range(U):
        dlsm[:, u, tokens[u]] += grads.grad_token[:, u]
    dfull = log_softmax_backward(outputs.vocab_lsm, dlsm)

    dfused_b = params.joint_blank.backward(c["jb_cache"], dfull[:, :, :1])
    dfused_v = params.joint_vocab.backward(c["jv_cache"], dfull[:, :, 1:])
    dh = dfused_b.sum(axis=1) + dfused_v.sum(axis=1)
    dg_b = dfused_b.sum(axis=0)
    dg_v = dfused_v.sum(axis=0)

    dh_e, dg_e = emo.emotion_joint_backward(c["emo_cache"], grads.demotion,
                                            params.emotion_joint)
    dh += dh_e
    dg_b += dg_e

    dpooled = params.utterance_head.backward(c["utt_cache"], grads.dutt)
    dh += dpooled / T
    dg_b += dpooled / (U + 1)

    demb_v = params.predictor_v.backward(c["predv_cache"], dg_v)
    params.embed_v.backward(c["embv_cache"], demb_v)
    demb_b = params.predictor_b.backward(c["predb_cache"], dg_b)
    params.embed_b.backward(c["embb_cache"], demb_b)
    params.encoder.backward(c["enc_cache"], dh)


def forward(features, tokens, params, cfg: ModelConfig) -> ForwardOutputs:
    if params.variant == "ENT":
        return ent_forward(features, tokens, params, cfg)
    return fent_forward(features, tokens, params, cfg)


def backward(outputs, grads, params) -> None:
    if params.variant == "ENT":
        ent_backward(outputs, grads, params)
    else:
        fent_backward(outputs, grads, params)


# ---------------------------------------------------------------------------
# combined loss
# ---------------------------------------------------------------------------


@dataclass
class LossGrads:
    grad_blank: np.ndarray
    grad_token: np.ndarray
    demotion: np.ndarray
    dutt: np.ndarray


def _lattice_term(outputs, target_emotion, cfg, regions):
    """Selected lattice-loss value and d(loss)/d(probs), before weighting."""
    kind = cfg.lattice_loss
    lat = outputs.emotion
    k_star = target_emotion
    k_neutral = cfg.neutral_index
    if kind == "none":
        return 0.0, np.zeros_like(lat.probs)
    if kind == "full":
        return emo.full_lattice_loss(lat, k_star), emo.full_lattice_grad(lat, k_star)
    if kind == "region":
        if regions is None:
            raise ArgumentError("lattice_loss=region requires frame regions")
        return (emo.region_supervised_loss(lat, regions),
                emo.region_supervised_grad(lat, regions))
    if k_star == k_neutral:
        # pooling variants contrast the target against neutral; a neutral
        # utterance has no contrast, so the term drops out
        return 0.0, np.zeros_like(lat.probs)
    if kind == "maxpool":
        loss, nodes = emo.lattice_max_pool_loss(lat, k_star, k_neutral)
        return loss, emo.lattice_max_pool_grad(lat, nodes, k_star, k_neutral)
    if kind == "temporal":
        return (emo.temporal_lattice_loss(lat, k_star, k_neutral),
                emo.temporal_lattice_grad(lat, k_star, k_neutral))
    return (emo.token_lattice_loss(lat, k_star, k_neutral),
            emo.token_lattice_grad(lat, k_star, k_neutral))


def total_loss(outputs: ForwardOutputs, target_emotion: int, cfg: ModelConfig,
               regions=None):
    """Transducer + weighted utterance CE + weighted lattice supervision.

    Returns (loss, breakdown dict, LossGrads). The breakdown terms are the
    weighted contributions and sum to the total.
    """
    if not 0 <= target_emotion < cfg.emotion_count:
        raise ArgumentError(f"target emotion {target_emotion} out of range")
    l_trans, post = transducer_loss(outputs.lattice)
    if not np.isfinite(l_trans):
        raise NumericError("transducer term is non-finite")
    grad_blank, grad_token = transducer_grad(outputs.lattice, post)

    utt_lsm = log_softmax(outputs.utt_logits)
    l_utt = -float(utt_lsm[target_emotion])
    dutt = softmax(outputs.utt_logits)
    dutt[target_emotion] -= 1.0
    dutt *= cfg.lambda_utt

    l_lat, dprobs = _lattice_term(outputs, target_emotion, cfg, regions)

    terms = {
        "transducer": l_trans,
        "utterance": cfg.lambda_utt * l_utt,
        "lattice": cfg.lambda_lat * l_lat,
    }
    total = terms["transducer"] + terms["utterance"] + terms["lattice"]
    terms["total"] = total
    for name, value in terms.items():
        if not np.isfinite(value):
            raise NumericError(f"{name} term is non-finite")
    grads = LossGrads(grad_blank=grad_blank, grad_token=grad_token,
                      demotion=cfg.lambda_lat * dprobs, dutt=dutt)
    return total, terms, grads


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


@dataclass
class TrainExample:
    features: np.ndarray
    tokens: np.ndarray
    emotion: int
    regions: list | None = None
    uid: str = ""


def scale_grads(grads: LossGrads, factor: float) -> LossGrads:
    return LossGrads(grad_blank=grads.grad_blank * factor,
                     grad_token=grads.grad_token * factor,
                     demotion=grads.demotion * factor,
                     dutt=grads.dutt * factor)


def train_step(batch, params, cfg: ModelConfig, adam: AdamState) -> dict:
    """Mean-gradient step over `batch`; returns per-term means and grad norm."""
    if not batch:
        raise ArgumentError("empty training batch")
    for p in params.params():
        p.zero_grad()
    sums = {"transducer": 0.0, "utterance": 0.0, "lattice": 0.0, "total": 0.0}
    scale = 1.0 / len(batch)
    for ex in batch:
        outputs = forward(ex.features, ex.tokens, params, cfg)
        try:
            loss, terms, grads = total_loss(outputs, ex.emotion, cfg, ex.regions)
        except NumericError as e:
            raise NumericError(f"{e} (utterance {ex.uid!r})") from e
        for k in sums:
            sums[k] += terms[k] * scale
        backward(outputs, scale_grads(grads, scale), params)
    grad_norm = global_grad_norm(params.params())
    if not np.isfinite(grad_norm):
        raise NumericError("gradient norm is non-finite")
    adam_step(params.params(), adam)
    sums["grad_norm"] = grad_norm
    return sums


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(path, params, cfg: ModelConfig, extra: dict | None = None) -> None:
    """Atomically write config plus named f64 tensors (magic ENTC)."""
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<I", CHECKPOINT_VERSION))
    cfg_bytes = cfg.canonical_json().encode("utf-8")
    buf.write(struct.pack("<I", len(cfg_bytes)))
    buf.write(cfg_bytes)
    tensors = [(p.name, p.value) for p in params.params()]
    for name, value in sorted((extra or {}).items()):
        tensors.append((name, np.asarray(value, dtype=np.float64)))
    buf.write(struct.pack("<I", len(tensors)))
    for name, value in tensors:
        name_b = name.encode("utf-8")
        buf.write(struct.pack("<I", len(name_b)))
        buf.write(name_b)
        buf.write(struct.pack("<I", value.ndim))
        for d in value.shape:
            buf.write(struct.pack("<I", d))
        buf.write(np.ascontiguousarray(value, dtype="<f8").tobytes())
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(buf.getvalue())
    os.replace(tmp, path)


def _read_exact(f, n: int) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise FormatError("checkpoint truncated")
    return data


def load_checkpoint(path, expected_variant: str | None = None):
    """Read a checkpoint; returns (params, config, extra tensors).

    Rejects wrong magic/version, truncation, and variant mismatch before
    building any state.
    """
    with open(path, "rb") as f:
        if _read_exact(f, 4) != CHECKPOINT_MAGIC:
            raise FormatError(f"{path}: bad checkpoint magic")
        (version,) = struct.unpack("<I", _read_exact(f, 4))
        if version != CHECKPOINT_VERSION:
            raise FormatError(f"{path}: unsupported checkpoint version {version}")
        (cfg_len,) = struct.unpack("<I", _read_exact(f, 4))
        try:
            cfg_dict = json.loads(_read_exact(f, cfg_len).decode("utf-8"))
            cfg = ModelConfig.from_dict(cfg_dict)
        except (ValueError, ArgumentError) as e:
            raise FormatError(f"{path}: bad embedded config: {e}") from e
        if expected_variant is not None and cfg.variant != expected_variant:
            raise FormatError(
                f"{path}: checkpoint is for variant {cfg.variant}, "
                f"expected {expected_variant}"
            )
        (n_tensors,) = struct.unpack("<I", _read_exact(f, 4))
        tensors = {}
        for _ in range(n_tensors):
            (name_len,) = struct.unpack("<I", _read_exact(f, 4))
            name = _read_exact(f, name_len).decode("utf-8")
            (ndim,) = struct.unpack("<I", _read_exact(f, 4))
            shape = tuple(
                struct.unpack("<I", _read_exact(f, 4))[0] for _ in range(ndim)
            )
            count = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(_read_exact(f, count * 8), dtype="<f8")
            tensors[name] = data.reshape(shape).astype(np.float64)
        if f.read(1):
            raise FormatError(f"{path}: trailing bytes after checkpoint payload")

    params = build_params(cfg)
    extra = {}
    expected_names = {p.name for p in params.params()}
    for p in params.params():
        if p.name not in tensors:
            raise FormatError(f"{path}: missing tensor {p.name}")
        value = tensors[p.name]
        if value.shape != p.value.shape:
            raise FormatError(
                f"{path}: tensor {p.name} has shape {value.shape}, "
                f"expected {p.value.shape}"
            )
        p.value[...] = value
    for name, value in tensors.items():
        if name not in expected_names:
            extra[name] = value
    return params, cfg, extra


def tiny_config(variant: str = "ENT", lattice_loss: str = "maxpool",
                seed: int = 7) -> ModelConfig:
    """Smallest config that exercises every code path; used by FD checks."""
    return ModelConfig(
        variant=variant,
        hidden_dim=4,
        feature_dim=3,
        vocab_chars="abc",
        emotions=("neutral", "angry", "happy"),
        neutral_index=0,
        lattice_loss=lattice_loss,
        seed=seed,
    )


def model_grad_check(cfg: ModelConfig, T: int = 3, tokens=(1, 2), target_emotion: int = 2,
                     data_seed: int = 99, eps: float = 1e-5) -> float:
    """Finite-difference check of total_loss through the whole model.

    Returns the worst relative error across every parameter coordinate.
    """
    from .numerics import grad_check

    rng = SplitMix64(data_seed)
    params = build_params(cfg)
    features = rng.uniform_array((T, cfg.feature_dim), -1.0, 1.0)
    tokens = np.asarray(tokens, dtype=np.int64)
    regions = None
    if cfg.lattice_loss == "region":
        split = max(1, T // 2)
        non_neutral = [k for k in range(cfg.emotion_count) if k != cfg.neutral_index]
        regions = [(0, split, cfg.neutral_index), (split, T, non_neutral[0])]

    def compute(with_grad: bool) -> float:
        outputs = forward(features, tokens, params, cfg)
        loss, _, grads = total_loss(outputs, target_emotion, cfg, regions)
        if with_grad:
            backward(outputs, grads, params)
        return loss

    for p in params.params():
        p.zero_grad()
    compute(with_grad=True)
    return grad_check(lambda: compute(False), params.params(), eps=eps)


def make_optimizer(params, cfg: ModelConfig) -> AdamState:
    from .numerics import make_adam_state

    return make_adam_state(params.params(), lr=cfg.lr, beta1=cfg.beta1,
                           beta2=cfg.beta2, eps=cfg.adam_eps)


def optimizer_extra_tensors(adam: AdamState) -> dict:
    """Flatten Adam state into named tensors for checkpoint embedding."""
    extra = {"opt.step_count": np.array(float(adam.step_count))}
    for name, m in adam.m.items():
        extra[f"opt.m.{name}"] = m
    for name, v in adam.v.items():
        extra[f"opt.v.{name}"] = v
    return extra


def restore_optimizer(extra: dict, params, cfg: ModelConfig) -> AdamState:
    adam = make_optimizer(params, cfg)
    if "opt.step_count" not in extra:
        return adam
    adam.step_count = int(extra["opt.step_count"])
    for p in params.params():
        if f"opt.m.{p.name}" in extra:
            adam.m[p.name] = extra[f"opt.m.{p.name}"].copy()
            adam.v[p.name] = extra[f"opt.v.{p.name}"].copy()
    return adam
