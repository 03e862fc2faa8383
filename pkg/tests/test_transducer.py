import math

import numpy as np
import pytest

from conftest import random_normalized_lattice

from ent import backend
from ent.errors import ArgumentError, NumericError
from ent.numerics import SplitMix64, log_softmax, log_softmax_backward, logsumexp
from ent.transducer import (
    VocabLogProbLattice,
    brute_force_loss,
    transducer_grad,
    transducer_loss,
)


def uniform_two_symbol_lattice(T, U):
    lp = math.log(0.5)
    return VocabLogProbLattice(
        blank_lp=np.full((T, U + 1), lp), token_lp=np.full((T, U), lp)
    )


class TestBruteForce:
    def test_single_path_two_frames(self):
        lat = uniform_two_symbol_lattice(2, 0)
        assert brute_force_loss(lat) == pytest.approx(2 * math.log(2.0), abs=1e-12)

    def test_zero_probability_path(self):
        lat = uniform_two_symbol_lattice(2, 1)
        lat.token_lp[:, 0] = -np.inf  # the only emission is impossible at all t
        assert brute_force_loss(lat) == np.inf

    def test_enumeration_bound(self):
        lat = uniform_two_symbol_lattice(12, 3)
        with pytest.raises(ArgumentError):
            brute_force_loss(lat)


class TestTransducerLoss:
    def test_two_frames_no_tokens(self):
        loss, _ = transducer_loss(uniform_two_symbol_lattice(2, 0))
        assert loss == pytest.approx(1.386294, abs=1e-6)

    def test_single_node(self):
        lat = random_normalized_lattice(1, 0, seed=5)
        loss, _ = transducer_loss(lat)
        assert loss == pytest.approx(-lat.blank_lp[0, 0], abs=1e-12)

    def test_small_case_matches_enumeration(self):
        lat = random_normalized_lattice(2, 1, seed=17)
        loss, _ = transducer_loss(lat)
        assert loss == pytest.approx(brute_force_loss(lat), abs=1e-9)

    @pytest.mark.parametrize("T", [1, 2, 3, 4])
    @pytest.mark.parametrize("U", [0, 1, 2, 3])
    def test_dp_equals_oracle_sweep(self, T, U):
        for seed in range(20):
            lat = random_normalized_lattice(T, U, seed=1000 * T + 100 * U + seed)
            loss, _ = transducer_loss(lat)
            assert loss == pytest.approx(brute_force_loss(lat), abs=1e-9)

    def test_loss_nonnegative_when_normalized(self):
        for seed in range(10):
            lat = random_normalized_lattice(3, 2, seed=seed)
            loss, _ = transducer_loss(lat)
            assert loss >= 0.0

    def test_constant_shift(self):
        lat = random_normalized_lattice(3, 2, seed=77)
        c = 0.37
        shifted = VocabLogProbLattice(
            blank_lp=lat.blank_lp + c, token_lp=lat.token_lp + c
        )
        base, _ = transducer_loss(lat)
        moved, _ = transducer_loss(shifted)
        assert moved == pytest.approx(base - (3 + 2) * c, abs=1e-9)

    def test_impossible_lattice_inf(self):
        lat = uniform_two_symbol_lattice(2, 1)
        lat.token_lp[:, 0] = -np.inf
        loss, post = transducer_loss(lat)
        assert loss == np.inf
        with pytest.raises(NumericError):
            transducer_grad(lat, post)

    def test_zero_frames_rejected(self):
        with pytest.raises(ArgumentError):
            VocabLogProbLattice(
                blank_lp=np.zeros((0, 1)), token_lp=np.zeros((0, 0))
            )

    def test_nan_rejected(self):
        with pytest.raises(NumericError):
            VocabLogProbLattice(
                blank_lp=np.array([[float("nan")]]), token_lp=np.zeros((1, 0))
            )


class TestCutConsistency:
    @pytest.mark.parametrize("seed", range(20))
    def test_antidiagonal_cuts(self, seed):
        rng = SplitMix64(seed)
        T = 2 + rng.randint(4)
        U = rng.randint(4)
        lat = random_normalized_lattice(T, U, seed=seed + 500)
        loss, post = transducer_loss(lat)
        transducer_grad(lat, post)
        for n in range(T + U):
            vals = [
                post.alpha[t, n - t] + post.beta[t, n - t]
                for t in range(max(0, n - U), min(T - 1, n) + 1)
            ]
            assert logsumexp(vals) == pytest.approx(-loss, abs=1e-9)


class TestGradients:
    def test_single_node_grad(self):
        lat = random_normalized_lattice(1, 0, seed=3)
        loss, post = transducer_loss(lat)
        gb, gt = transducer_grad(lat, post)
        assert gb[0, 0] == pytest.approx(-1.0, abs=1e-12)

    @pytest.mark.parametrize("seed", range(10))
    def test_flow_conservation(self, seed):
        T, U = 4, 3
        lat = random_normalized_lattice(T, U, seed=seed + 900)
        loss, post = transducer_loss(lat)
        gb, gt = transducer_grad(lat, post)
        for n in range(T + U):
            total = 0.0
            for t in range(max(0, n - U), min(T - 1, n) + 1):
                u = n - t
                total += -gb[t, u]
                if u < U:
                    total += -gt[t, u]
            assert total == pytest.approx(1.0, abs=1e-9)

    def test_fd_through_log_softmax(self):
        # loss as a function of raw joint logits, chained through log_softmax
        rng = SplitMix64(123)
        T, U, V = 3, 2, 4
        logits = rng.uniform_array((T, U + 1, V + 1), -1.5, 1.5)
        tokens = [2, 3]

        def lattice_from(lg):
            lsm = log_softmax(lg)
            token_lp = np.stack([lsm[:, u, tokens[u]] for u in range(U)], axis=1)
            return VocabLogProbLattice(blank_lp=lsm[:, :, 0], token_lp=token_lp)

        loss, post = transducer_loss(lattice_from(logits))
        gb, gt = transducer_grad(lattice_from(logits), post)
        lsm = log_softmax(logits)
        dlsm = np.zeros_like(lsm)
        dlsm[:, :, 0] += gb
        for u in range(U):
            dlsm[:, u, tokens[u]] += gt[:, u]
        dlogits = log_softmax_backward(lsm, dlsm)

        eps = 1e-5
        worst = 0.0
        flat = logits.reshape(-1)
        dflat = dlogits.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp, _ = transducer_loss(lattice_from(logits))
            flat[i] = orig - eps
            fm, _ = transducer_loss(lattice_from(logits))
            flat[i] = orig
            fd = (fp - fm) / (2 * eps)
            worst = max(worst, abs(fd - dflat[i]) / max(abs(fd), abs(dflat[i]), 1.0))
        assert worst <= 1e-4


class TestBackendParity:
    def test_numba_and_numpy_agree(self, monkeypatch):
        if not backend.HAVE_NUMBA:
            pytest.skip("numba unavailable")
        lat = random_normalized_lattice(5, 4, seed=42)

        monkeypatch.setenv(backend.ENV_VAR, "numba")
        loss_nb, post_nb = transducer_loss(lat)
        gb_nb, gt_nb = transducer_grad(lat, post_nb)

        monkeypatch.setenv(backend.ENV_VAR, "numpy")
        loss_np, post_np = transducer_loss(lat)
        gb_np, gt_np = transducer_grad(lat, post_np)

        assert loss_nb == pytest.approx(loss_np, abs=1e-12)
        assert np.allclose(post_nb.alpha, post_np.alpha, atol=1e-12)
        assert np.allclose(post_nb.beta, post_np.beta, atol=1e-12)
        assert np.allclose(gb_nb, gb_np, atol=1e-12)
        assert np.allclose(gt_nb, gt_np, atol=1e-12)

    def test_bad_backend_value(self, monkeypatch):
        monkeypatch.setenv(backend.ENV_VAR, "gpu")
        with pytest.raises(ArgumentError):
            backend.backend_name()
