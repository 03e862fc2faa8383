"""Command-line entry point: synth, train, eval, gradcheck.

Every command is deterministic given (config, seed, inputs). Exit codes:
0 success, 2 argument error, 3 format error, 4 numeric error. The env var
ENT_LOG_LEVEL (error|info|debug) controls verbosity.
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import data as data_mod
from . import metrics as metrics_mod
from .config import RunConfig, load_run_config
from .decode import frames_to_segments, greedy_decode, write_hypotheses
from .errors import ArgumentError, EntError, FormatError, NumericError
from .model import (
    ModelConfig,
    TrainExample,
    build_params,
    load_checkpoint,
    make_optimizer,
    model_grad_check,
    optimizer_extra_tensors,
    restore_optimizer,
    save_checkpoint,
    tiny_config,
    train_step,
)
from .numerics import (
    Embedding,
    Linear,
    Lstm,
    SplitMix64,
    grad_check,
    log_softmax,
    log_softmax_backward,
)

log = logging.getLogger("ent")

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging() -> None:
    raw = os.environ.get("ENT_LOG_LEVEL", "info").strip().lower()
    if raw not in LOG_LEVELS:
        raise ArgumentError(
            f"ENT_LOG_LEVEL must be one of {sorted(LOG_LEVELS)}, got {raw!r}"
        )
    logging.basicConfig(level=LOG_LEVELS[raw], format="%(levelname)s %(message)s")


# ---------------------------------------------------------------------------
# dataset loading helpers
# ---------------------------------------------------------------------------


def _emotion_id(label: str, cfg: ModelConfig, uid: str) -> int:
    try:
        return cfg.emotions.index(label)
    except ValueError:
        raise ArgumentError(
            f"utterance {uid!r}: emotion {label!r} not in configured set "
            f"{list(cfg.emotions)}"
        ) from None


def _segments_to_ids(segments, cfg: ModelConfig, uid: str):
    return [(s, e, _emotion_id(lab, cfg, uid)) for s, e, lab in segments]


def load_examples(manifest_path: str, cfg: ModelConfig, need_regions: bool = False):
    """Manifest records -> TrainExamples with features, token ids, emotion ids."""
    vocab = data_mod.CharVocab(cfg.vocab_chars)
    records = data_mod.load_manifest(manifest_path)
    examples = []
    for rec in records:
        feats = data_mod.read_features(data_mod.feature_path(manifest_path, rec))
        if feats.shape[1] != cfg.feature_dim:
            raise ArgumentError(
                f"utterance {rec.id!r}: feature dim {feats.shape[1]} != "
                f"model feature_dim {cfg.feature_dim}"
            )
        tokens = data_mod.char_tokenize(rec.transcript, vocab, record_id=rec.id)
        regions = None
        if rec.segments is not None:
            regions = _segments_to_ids(rec.segments, cfg, rec.id)
        if need_regions and regions is None:
            raise ArgumentError(
                f"utterance {rec.id!r}: lattice_loss=region needs manifest segments"
            )
        examples.append(
            TrainExample(features=feats, tokens=tokens,
                         emotion=_emotion_id(rec.emotion, cfg, rec.id),
                         regions=regions, uid=rec.id)
        )
    return examples, records


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_synth(run_cfg: RunConfig, out_dir: str, force: bool = False) -> dict:
    if not out_dir:
        raise ArgumentError("synth requires --out DIR")
    manifest = os.path.join(out_dir, "manifest.jsonl")
    if os.path.exists(manifest) and not force:
        raise ArgumentError(f"{manifest} exists; pass --force to overwrite")
    records = data_mod.synth_generate(run_cfg.synth, run_cfg.synth_utterances, out_dir)
    total_frames = sum(r.n_frames for r in records)
    summary = {
        "utterances": len(records),
        "total_frames": total_frames,
        "feature_dim": run_cfg.synth.feature_dim,
        "manifest": manifest,
    }
    log.info("synth: wrote %d utterances (%d frames, dim %d) to %s",
             len(records), total_frames, run_cfg.synth.feature_dim, out_dir)
    return summary


def cmd_train(run_cfg: RunConfig, out_dir: str, checkpoint: str | None = None) -> dict:
    if not out_dir:
        raise ArgumentError("train requires --out DIR")
    if not run_cfg.train.manifest:
        raise ArgumentError("train.manifest is not set")
    cfg = run_cfg.model
    os.makedirs(out_dir, exist_ok=True)

    need_regions = cfg.lattice_loss == "region"
    examples, _ = load_examples(run_cfg.train.manifest, cfg, need_regions=need_regions)
    if not examples:
        raise ArgumentError(f"{run_cfg.train.manifest}: no training utterances")

    if checkpoint:
        params, ckpt_cfg, extra = load_checkpoint(checkpoint, expected_variant=cfg.variant)
        cfg = ckpt_cfg
        adam = restore_optimizer(extra, params, cfg)
        log.info("resumed from %s at step %d", checkpoint, adam.step_count)
    else:
        params = build_params(cfg)
        adam = make_optimizer(params, cfg)

    shuffle_rng = SplitMix64(cfg.seed ^ 0x5EED5EED)
    batch_size = run_cfg.train.batch_size
    log_path = os.path.join(out_dir, "train_log.jsonl")
    best_loss = float("inf")
    history = []
    with open(log_path, "w", encoding="utf-8") as log_file:
        for epoch in range(run_cfg.train.epochs):
            order = list(range(len(examples)))
            if run_cfg.train.shuffle:
                shuffle_rng.shuffle(order)
            sums = {"total": 0.0, "transducer": 0.0, "utterance": 0.0,
                    "lattice": 0.0, "grad_norm": 0.0}
            n_steps = 0
            for lo in range(0, len(order), batch_size):
                batch = [examples[i] for i in order[lo : lo + batch_size]]
                try:
                    step_metrics = train_step(batch, params, cfg, adam)
                except NumericError as e:
                    raise NumericError(f"{e} at step {adam.step_count + 1}") from e
                for k in sums:
                    sums[k] += step_metrics[k]
                n_steps += 1
            means = {k: v / n_steps for k, v in sums.items()}
            line = {"epoch": epoch, "step": adam.step_count, **means}
            log_file.write(json.dumps(line, sort_keys=True) + "\n")
            history.append(line)
            log.info("epoch %d step %d loss %.4f (trans %.4f utt %.4f lat %.4f)",
                     epoch, adam.step_count, means["total"], means["transducer"],
                     means["utterance"], means["lattice"])
            if means["total"] < best_loss:
                best_loss = means["total"]
                save_checkpoint(os.path.join(out_dir, "best.ckpt"), params, cfg,
                                extra=optimizer_extra_tensors(adam))
    save_checkpoint(os.path.join(out_dir, "last.ckpt"), params, cfg,
                    extra=optimizer_extra_tensors(adam))
    return {
        "history": history,
        "best_loss": best_loss,
        "steps": adam.step_count,
        "last_checkpoint": os.path.join(out_dir, "last.ckpt"),
        "best_checkpoint": os.path.join(out_dir, "best.ckpt"),
        "log_path": log_path,
    }


def cmd_eval(run_cfg: RunConfig, checkpoint: str, out_dir: str) -> dict:
    if not checkpoint:
        raise ArgumentError("eval requires --checkpoint PATH")
    if not out_dir:
        raise ArgumentError("eval requires --out DIR")
    if not run_cfg.eval.manifest:
        raise ArgumentError("eval.manifest is not set")
    params, cfg, _ = load_checkpoint(checkpoint)
    os.makedirs(out_dir, exist_ok=True)
    vocab = data_mod.CharVocab(cfg.vocab_chars)
    examples, records = load_examples(run_cfg.eval.manifest, cfg)

    compute_eder = run_cfg.eval.compute_eder
    if compute_eder:
        missing = [r.id for r in records if r.segments is None]
        if missing:
            raise ArgumentError(
                f"EDER requested but segments missing for {missing[:5]}"
            )

    total_edits = 0
    total_ref_words = 0
    emo_preds = []
    emo_labels = []
    err_frames = np.zeros(3, dtype=np.int64)  # missed, false alarm, confusion
    total_frames = 0
    hyp_records = []
    for ex, rec in zip(examples, records):
        result = greedy_decode(params, ex.features, cfg)
        hyp_transcript = vocab.detokenize(result.tokens)
        ref_words = rec.transcript.split()
        total_edits += metrics_mod.edit_distance(ref_words, hyp_transcript.split())
        total_ref_words += len(ref_words)
        emo_preds.append(int(np.argmax(result.utt_logits)))
        emo_labels.append(ex.emotion)
        segments = frames_to_segments(result.frame_emotions, run_cfg.eval.min_run)
        if compute_eder:
            counts = metrics_mod.eder_counts(
                _id_segments(ex.regions), segments, rec.n_frames, cfg.neutral_index
            )
            err_frames += np.array(counts)
            total_frames += rec.n_frames
        hyp_records.append({
            "id": rec.id,
            "transcript": hyp_transcript,
            "frame_emotions": result.frame_emotions.tolist(),
            "segments": [[s.start, s.end, cfg.emotions[s.label]] for s in segments],
        })

    wer_value = total_edits / total_ref_words if total_ref_words else 0.0
    wa, ua = metrics_mod.wa_ua(emo_preds, emo_labels)
    recalls = metrics_mod.per_class_recall(emo_preds, emo_labels)
    if compute_eder and total_frames:
        eder_parts = err_frames / total_frames
    else:
        eder_parts = np.zeros(3)
    report = metrics_mod.EvalReport(
        wer=wer_value,
        wa=wa,
        ua=ua,
        eder=float(eder_parts.sum()),
        eder_missed=float(eder_parts[0]),
        eder_false_alarm=float(eder_parts[1]),
        eder_confusion=float(eder_parts[2]),
        per_class_recall={cfg.emotions[k]: v for k, v in recalls.items()},
        n_utterances=len(examples),
    )
    report_path = os.path.join(out_dir, "report.json")
    with open(report_path, "w", encoding="utf-8") as f:
        json.dump(report.to_dict(), f, sort_keys=True, indent=2)
        f.write("\n")
    write_hypotheses(os.path.join(out_dir, "hypotheses.jsonl"), hyp_records)
    log.info("eval: wer %.4f wa %.4f ua %.4f eder %.4f (%d utterances)",
             report.wer, report.wa, report.ua, report.eder, len(examples))
    return {"report": report, "report_path": report_path,
            "hypotheses_path": os.path.join(out_dir, "hypotheses.jsonl")}


def _id_segments(regions):
    from .decode import EmotionSegment

    return [EmotionSegment(start=s, end=e, label=lab) for s, e, lab in regions]


# ---------------------------------------------------------------------------
# gradcheck command
# ---------------------------------------------------------------------------


def _primitive_rows():
    """FD checks for each trainable primitive in isolation."""
    rows = []
    rng = SplitMix64(404)

    lin = Linear(4, 3, rng, "linear")
    x = rng.uniform_array((5, 4), -1.0, 1.0)

    def lin_loss(with_grad):
        y, cache = lin.forward(x)
        lsm = log_softmax(y)
        if with_grad:
            dlsm = np.zeros_like(lsm)
            dlsm[:, 1] = -1.0
            lin.backward(cache, log_softmax_backward(lsm, dlsm))
        return float(-lsm[:, 1].sum())

    rows.append(("linear+log_softmax", lin, lin_loss))

    emb = Embedding(5, 3, rng, "embedding")
    ids = np.array([0, 3, 3, 4])
    w_emb = rng.uniform_array((4, 3), -1.0, 1.0)

    def emb_loss(with_grad):
        out, cache = emb.forward(ids)
        if with_grad:
            emb.backward(cache, w_emb)
        return float((out * w_emb).sum())

    rows.append(("embedding", emb, emb_loss))

    lstm = Lstm(3, 4, rng, "lstm")
    xs = rng.uniform_array((4, 3), -1.0, 1.0)
    w_seq = rng.uniform_array((4, 4), -1.0, 1.0)

    def lstm_loss(with_grad):
        hs, cache = lstm.forward(xs)
        if with_grad:
            lstm.backward(cache, w_seq)
        return float((hs * w_seq).sum())

    rows.append(("lstm_sequence", lstm, lstm_loss))

    cell = Lstm(3, 4, rng, "lstm_step")
    x1 = rng.uniform_array(3, -1.0, 1.0)
    h1 = rng.uniform_array(4, -1.0, 1.0)
    c1 = rng.uniform_array(4, -1.0, 1.0)
    wh = rng.uniform_array(4, -1.0, 1.0)
    wc = rng.uniform_array(4, -1.0, 1.0)

    def cell_loss(with_grad):
        h2, c2, cache = cell.step(x1, h1, c1)
        if with_grad:
            cell.step_backward(cache, wh, wc)
        return float((h2 * wh).sum() + (c2 * wc).sum())

    rows.append(("lstm_step", cell, cell_loss))
    return rows


def gradcheck_table(inject_bug: bool = False, tolerance: float = 1e-4):
    """(name, worst_rel_err, passed) per primitive, variant, and lattice loss."""
    results = []
    for name, layer, loss in _primitive_rows():
        for p in layer.params():
            p.zero_grad()
        loss(True)
        if inject_bug and name == "linear+log_softmax":
            layer.params()[0].grad[0, 0] += 1.0
        err = grad_check(lambda: loss(False), layer.params(), eps=1e-5)
        results.append((name, err, err <= tolerance))

    for variant in ("ENT", "FENT"):
        err = model_grad_check(tiny_config(variant=variant, lattice_loss="maxpool"))
        results.append((f"{variant.lower()}_total_loss", err, err <= tolerance))

    for lattice_loss in ("maxpool", "temporal", "token", "full", "region"):
        err = model_grad_check(tiny_config(variant="ENT", lattice_loss=lattice_loss))
        results.append((f"lattice_{lattice_loss}", err, err <= tolerance))
    return results


def cmd_gradcheck(inject_bug: bool = False) -> int:
    results = gradcheck_table(inject_bug=inject_bug)
    width = max(len(name) for name, _, _ in results)
    failures = 0
    for name, err, passed in results:
        print(f"{name:<{width}}  rel_err {err:.3e}  {'PASS' if passed else 'FAIL'}")
        failures += not passed
    print(f"gradcheck: {len(results) - failures}/{len(results)} passed")
    return 1 if failures else 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ent",
        description="Transducer-based speech recognition with fine-grained "
        "emotion tagging; synthetic data, training, evaluation, and "
        "gradient verification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("synth", "generate a synthetic dataset"),
        ("train", "train a model from a manifest"),
        ("eval", "decode and score an eval manifest"),
        ("gradcheck", "finite-difference checks for all gradients"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="override model and synth seeds")
        p.add_argument("--out", help="output directory")
        p.add_argument("--checkpoint", help="checkpoint path (train resume / eval)")
        p.add_argument("--force", action="store_true", help="overwrite outputs")
        p.add_argument("overrides", nargs="*", metavar="KEY=VALUE",
                       help="dotted config overrides, e.g. model.hidden_dim=64")
        if name == "gradcheck":
            p.add_argument("--inject-bug", action="store_true",
                           help="corrupt one gradient to prove the harness catches it")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _setup_logging()
        run_cfg = load_run_config(args.config, args.overrides, seed=args.seed)
        if args.command == "synth":
            cmd_synth(run_cfg, args.out, force=args.force)
        elif args.command == "train":
            cmd_train(run_cfg, args.out, checkpoint=args.checkpoint)
        elif args.command == "eval":
            cmd_eval(run_cfg, args.checkpoint, args.out)
        elif args.command == "gradcheck":
            return cmd_gradcheck(inject_bug=args.inject_bug)
        return 0
    except EntError as e:
        log.error("%s", e)
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
