"""Naive MLP baseline: budget matching, fitting, determinism."""

import numpy as np

from symdyn.baseline import MLPBaseline, hidden_for_budget, mlp_rollout, train_mlp_baseline
from symdyn.trajectory import Trajectory


def constant_corpus(n=3, T=30, d=1):
    out = []
    for i in range(n):
        v = 0.2 + 0.05 * i
        out.append(Trajectory(np.full((T, d), v), np.full((T, d), -v),
                              np.zeros((T, 0)), 0.1))
    return out


def test_constant_data_converges():
    corpus = constant_corpus()
    model, hist = train_mlp_baseline(corpus, c=3, hidden=8, epochs=800, lr=1e-2,
                                     seed=0, val_frac=0.0)
    assert hist["train"][-1] < 1e-4


def test_budget_matching_within_20_percent():
    for target in (500, 2000, 10_000):
        h = hidden_for_budget(in_dim=30, out_dim=4, target_params=target)
        model = MLPBaseline(30, h, 4)
        assert abs(model.n_params() - target) / target <= 0.2


def test_deterministic_per_seed():
    corpus = constant_corpus()
    runs = []
    for _ in range(2):
        model, _ = train_mlp_baseline(corpus, c=3, hidden=8, epochs=10, seed=4)
        runs.append([t.data.copy() for t in model.parameters()])
    for a, b in zip(*runs):
        assert np.array_equal(a, b)


def test_rollout_interface():
    corpus = constant_corpus()
    model, _ = train_mlp_baseline(corpus, c=3, hidden=8, epochs=800, lr=1e-2, seed=1,
                                  val_frac=0.0)
    seed_win = corpus[0].slice(0, 3)
    pred = mlp_rollout(model, seed_win, None, 10, c=3)
    assert pred.T == 10 and pred.d == 1
    # constant dynamics should be tracked closely after fitting
    assert np.abs(pred.qs - corpus[0].qs[0, 0]).max() < 0.05
