import numpy as np
import pytest

from ent.errors import ArgumentError, FormatError, NumericError
from ent.model import (
    ModelConfig,
    TrainExample,
    build_params,
    forward,
    load_checkpoint,
    make_optimizer,
    model_grad_check,
    optimizer_extra_tensors,
    save_checkpoint,
    tiny_config,
    total_loss,
    train_step,
)
from ent.numerics import SplitMix64


def tiny_example(cfg, T=4, tokens=(1, 2), seed=5):
    rng = SplitMix64(seed)
    return TrainExample(
        features=rng.uniform_array((T, cfg.feature_dim), -1.0, 1.0),
        tokens=np.array(tokens, dtype=np.int64),
        emotion=1,
        uid="ex",
    )


class TestConfig:
    def test_defaults_valid(self):
        cfg = ModelConfig()
        assert cfg.vocab_size == 9
        assert cfg.emotion_count == 5

    def test_bad_variant(self):
        with pytest.raises(ArgumentError):
            ModelConfig(variant="RNNT")

    def test_bad_lattice_loss(self):
        with pytest.raises(ArgumentError):
            ModelConfig(lattice_loss="softmax")

    def test_bad_neutral_index(self):
        with pytest.raises(ArgumentError):
            ModelConfig(neutral_index=9)

    def test_unknown_key_rejected(self):
        with pytest.raises(ArgumentError):
            ModelConfig.from_dict({"variant": "ENT", "dropout": 0.5})

    def test_canonical_json_round_trip(self):
        cfg = tiny_config()
        import json

        cfg2 = ModelConfig.from_dict(json.loads(cfg.canonical_json()))
        assert cfg2 == cfg


class TestForward:
    @pytest.mark.parametrize("variant", ["ENT", "FENT"])
    def test_vocab_nodes_normalized(self, variant):
        cfg = tiny_config(variant=variant)
        params = build_params(cfg)
        ex = tiny_example(cfg)
        out = forward(ex.features, ex.tokens, params, cfg)
        sums = np.exp(out.vocab_lsm).sum(axis=-1)
        assert np.allclose(sums, 1.0, atol=1e-9)
        assert out.vocab_lsm.shape == (4, 3, cfg.vocab_size + 1)

    @pytest.mark.parametrize("variant", ["ENT", "FENT"])
    def test_emotion_nodes_normalized(self, variant):
        cfg = tiny_config(variant=variant)
        params = build_params(cfg)
        ex = tiny_example(cfg)
        out = forward(ex.features, ex.tokens, params, cfg)
        assert np.allclose(out.emotion.probs.sum(axis=-1), 1.0, atol=1e-9)

    def test_one_by_one_lattice(self):
        cfg = tiny_config()
        params = build_params(cfg)
        rng = SplitMix64(3)
        feats = rng.uniform_array((1, cfg.feature_dim), -1.0, 1.0)
        out = forward(feats, np.array([], dtype=np.int64), params, cfg)
        assert out.vocab_lsm.shape[0] == 1 and out.vocab_lsm.shape[1] == 1
        loss, terms, _ = total_loss(out, 1, cfg)
        assert terms["transducer"] == pytest.approx(-out.lattice.blank_lp[0, 0], abs=1e-12)

    def test_unknown_token_rejected(self):
        cfg = tiny_config()
        params = build_params(cfg)
        ex = tiny_example(cfg)
        with pytest.raises(ArgumentError):
            forward(ex.features, np.array([7]), params, cfg)

    def test_variants_same_lattice_shape(self):
        ex = None
        shapes = []
        for variant in ("ENT", "FENT"):
            cfg = tiny_config(variant=variant)
            params = build_params(cfg)
            ex = tiny_example(cfg)
            out = forward(ex.features, ex.tokens, params, cfg)
            shapes.append(out.vocab_lsm.shape)
        assert shapes[0] == shapes[1]

    def test_pooling_permutation_invariant_for_stub_encoder(self):
        # mean pooling: permuting encoder state rows leaves the head output alone
        cfg = tiny_config()
        params = build_params(cfg)
        rng = SplitMix64(44)
        h = rng.uniform_array((6, cfg.hidden_dim), -1.0, 1.0)
        g = rng.uniform_array((3, cfg.hidden_dim), -1.0, 1.0)
        pooled = h.mean(axis=0) + g.mean(axis=0)
        out1, _ = params.utterance_head.forward(pooled)
        perm = [3, 1, 5, 0, 4, 2]
        pooled2 = h[perm].mean(axis=0) + g.mean(axis=0)
        out2, _ = params.utterance_head.forward(pooled2)
        assert np.allclose(out1, out2, atol=1e-12)


class TestTotalLoss:
    def test_zero_weights_equal_transducer(self):
        cfg = tiny_config()
        cfg.lambda_utt = 0.0
        cfg.lambda_lat = 0.0
        params = build_params(cfg)
        ex = tiny_example(cfg)
        out = forward(ex.features, ex.tokens, params, cfg)
        loss, terms, _ = total_loss(out, 1, cfg)
        assert loss == pytest.approx(terms["transducer"], abs=1e-15)
        assert terms["utterance"] == 0.0 and terms["lattice"] == 0.0

    @pytest.mark.parametrize("variant", ["ENT", "FENT"])
    def test_breakdown_sums(self, variant):
        cfg = tiny_config(variant=variant)
        params = build_params(cfg)
        ex = tiny_example(cfg)
        out = forward(ex.features, ex.tokens, params, cfg)
        loss, terms, _ = total_loss(out, 2, cfg)
        assert abs(terms["transducer"] + terms["utterance"] + terms["lattice"]
                   - terms["total"]) <= 1e-12
        assert loss == terms["total"]
        assert all(v >= 0.0 for k, v in terms.items())

    def test_region_requires_regions(self):
        cfg = tiny_config(lattice_loss="region")
        params = build_params(cfg)
        ex = tiny_example(cfg)
        out = forward(ex.features, ex.tokens, params, cfg)
        with pytest.raises(ArgumentError):
            total_loss(out, 1, cfg, regions=None)

    def test_neutral_target_skips_pooling_lattice_term(self):
        cfg = tiny_config(lattice_loss="maxpool")
        params = build_params(cfg)
        ex = tiny_example(cfg)
        out = forward(ex.features, ex.tokens, params, cfg)
        loss, terms, grads = total_loss(out, cfg.neutral_index, cfg)
        assert terms["lattice"] == 0.0
        assert np.all(grads.demotion == 0.0)


class TestGradients:
    @pytest.mark.parametrize("variant", ["ENT", "FENT"])
    def test_whole_model_fd(self, variant):
        err = model_grad_check(tiny_config(variant=variant))
        assert err <= 1e-4

    @pytest.mark.parametrize("lattice_loss", ["none", "maxpool", "temporal",
                                              "token", "full", "region"])
    def test_lattice_variants_fd(self, lattice_loss):
        err = model_grad_check(tiny_config(lattice_loss=lattice_loss))
        assert err <= 1e-4


class TestTrainStep:
    def test_loss_decreases_on_fixed_batch(self):
        cfg = tiny_config()
        cfg.lr = 0.01
        params = build_params(cfg)
        adam = make_optimizer(params, cfg)
        batch = [tiny_example(cfg, T=4, tokens=(1, 2), seed=s) for s in range(3)]
        first = train_step(batch, params, cfg, adam)["total"]
        last = first
        for _ in range(49):
            last = train_step(batch, params, cfg, adam)["total"]
        assert last < first

    def test_identical_seeds_identical_params(self):
        def run():
            cfg = tiny_config()
            params = build_params(cfg)
            adam = make_optimizer(params, cfg)
            batch = [tiny_example(cfg, seed=s) for s in range(2)]
            for _ in range(5):
                train_step(batch, params, cfg, adam)
            return np.concatenate([p.value.ravel() for p in params.params()])

        assert np.array_equal(run(), run())

    def test_grad_norm_finite(self):
        cfg = tiny_config()
        params = build_params(cfg)
        adam = make_optimizer(params, cfg)
        batch = [tiny_example(cfg)]
        for _ in range(5):
            metrics = train_step(batch, params, cfg, adam)
            assert np.isfinite(metrics["grad_norm"])

    def test_empty_batch_rejected(self):
        cfg = tiny_config()
        params = build_params(cfg)
        adam = make_optimizer(params, cfg)
        with pytest.raises(ArgumentError):
            train_step([], params, cfg, adam)


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        cfg = tiny_config()
        params = build_params(cfg)
        ex = tiny_example(cfg)
        out1 = forward(ex.features, ex.tokens, params, cfg)
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, params, cfg)
        params2, cfg2, _ = load_checkpoint(path)
        assert cfg2 == cfg
        for p1, p2 in zip(params.params(), params2.params()):
            assert np.array_equal(p1.value, p2.value)
        out2 = forward(ex.features, ex.tokens, params2, cfg2)
        assert np.array_equal(out1.vocab_lsm, out2.vocab_lsm)
        assert np.array_equal(out1.utt_logits, out2.utt_logits)

    def test_truncated_rejected(self, tmp_path):
        cfg = tiny_config()
        params = build_params(cfg)
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, params, cfg)
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) - 20])
        with pytest.raises(FormatError):
            load_checkpoint(path)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(FormatError):
            load_checkpoint(path)

    def test_variant_mismatch_rejected(self, tmp_path):
        cfg = tiny_config(variant="ENT")
        params = build_params(cfg)
        path = tmp_path / "ent.ckpt"
        save_checkpoint(path, params, cfg)
        with pytest.raises(FormatError):
            load_checkpoint(path, expected_variant="FENT")

    def test_optimizer_state_round_trip(self, tmp_path):
        cfg = tiny_config()
        params = build_params(cfg)
        adam = make_optimizer(params, cfg)
        batch = [tiny_example(cfg)]
        train_step(batch, params, cfg, adam)
        train_step(batch, params, cfg, adam)
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, params, cfg, extra=optimizer_extra_tensors(adam))
        from ent.model import restore_optimizer

        params2, cfg2, extra = load_checkpoint(path)
        adam2 = restore_optimizer(extra, params2, cfg2)
        assert adam2.step_count == 2
        for name in adam.m:
            assert np.array_equal(adam.m[name], adam2.m[name])


class TestFentSpecifics:
    def test_blank_bias_forces_blanks(self):
        cfg = tiny_config(variant="FENT")
        params = build_params(cfg)
        params.joint_blank.b.value[...] = 50.0  # blank overwhelms every token
        from ent.decode import greedy_decode

        rng = SplitMix64(9)
        feats = rng.uniform_array((5, cfg.feature_dim), -1.0, 1.0)
        result = greedy_decode(params, feats, cfg)
        assert result.tokens == []
        assert len(result.events) == 5
