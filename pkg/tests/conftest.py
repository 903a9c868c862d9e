"""Shared fixtures: deterministic RNGs and a desk-sized scenario.

The small scenario trades corpus size and net width for speed so the
pipeline and CLI tests run in well under a second per invocation. The
full bundled scenario lives in test_acceptance.py only.
"""

import numpy as np
import pytest

from harmoq.corpus import CorpusConfig, generate_corpus
from harmoq.pipeline import PipelineConfig
from harmoq.toynet import ToyNetConfig, build_toynet


def rand_spd(rng: np.random.Generator, d: int, ridge: float = 0.1) -> np.ndarray:
    g = rng.standard_normal((d, 2 * d))
    return g @ g.T / (2 * d) + ridge * np.eye(d)


def correlated_moments(rng: np.random.Generator, d: int):
    """Exact joint moments of x ~ N(0, C), dx = A x + B n, n ~ N(0, I).

    Returns (s_xx, s_dx, s_dd, a_map, b_map, chol) so tests can both feed
    the analytic moments and sample the matching joint distribution.
    """
    c = rand_spd(rng, d)
    a = 0.2 * rng.standard_normal((d, d))
    b = 0.1 * rng.standard_normal((d, d))
    s_xx = c
    s_dx = a @ c
    s_dd = a @ c @ a.T + b @ b.T
    return s_xx, s_dx, s_dd, a, b, np.linalg.cholesky(c)


SMALL_CORPUS = CorpusConfig(images=6, eval_images=2, lr_size=16)
SMALL_NET = ToyNetConfig(layer_dims=(8, 8))
# 6 images x 4 tiles = 24 calibration rows, so the statistics warmup
# must fit inside that
SMALL_PIPELINE = PipelineConfig(stats_warmup=16, batch_size=24, max_iters=40)

SMALL_CLI_OVERRIDES = [
    "corpus.images=6",
    "corpus.eval_images=2",
    "net.layer_dims=8,8",
    "stats.warmup=16",
    "pipeline.batch_size=24",
    "pipeline.max_iters=40",
]


@pytest.fixture(scope="session")
def small_scenario():
    calib_pairs, eval_pairs = generate_corpus(SMALL_CORPUS, seed=3)
    net = build_toynet(SMALL_NET)
    return {
        "net": net,
        "calib": [lr for lr, _ in calib_pairs],
        "eval": [lr for lr, _ in eval_pairs],
        "cfg": SMALL_PIPELINE,
    }
