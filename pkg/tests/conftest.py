import numpy as np
import pytest

from ent.numerics import SplitMix64, log_softmax
from ent.transducer import VocabLogProbLattice


def random_normalized_lattice(T: int, U: int, seed: int, vocab: int = 4):
    """Random lattice whose per-node distribution over blank+vocab sums to 1."""
    rng = SplitMix64(seed)
    logits = rng.uniform_array((T, U + 1, vocab + 1), -2.0, 2.0)
    lsm = log_softmax(logits)
    tokens = np.array([1 + rng.randint(vocab) for _ in range(U)], dtype=np.int64)
    blank_lp = lsm[:, :, 0]
    token_lp = np.empty((T, U))
    for u in range(U):
        token_lp[:, u] = lsm[:, u, tokens[u]]
    return VocabLogProbLattice(blank_lp=blank_lp, token_lp=token_lp)


def random_emotion_probs(T: int, U: int, K: int, seed: int) -> np.ndarray:
    rng = SplitMix64(seed)
    logits = rng.uniform_array((T, U + 1, K), -1.5, 1.5)
    return np.exp(log_softmax(logits))


@pytest.fixture
def rng():
    return SplitMix64(20240817)
