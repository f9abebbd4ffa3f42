"""Rollout mechanics: no information beyond the seed window, clean metrics."""

import numpy as np
import pytest

from symdyn.config import DecoderSettings
from symdyn.decoder import AdaptiveDecoder
from symdyn.encoder import SymplecticEncoder
from symdyn.errors import ShapeError
from symdyn.rollout import evaluate_rollout, persistence_rollout, rollout
from symdyn.trajectory import Trajectory


def setup_models(d=2, c=4, seed=0):
    enc = SymplecticEncoder.create(d=d, blocks=1, seed=seed)
    settings = DecoderSettings(heads=2, hidden=8, context_window=c)
    dec = AdaptiveDecoder(d=d, m=0, settings=settings, seed=seed)
    zeta = dec.new_zeta(np.random.default_rng(seed))
    return enc, dec, zeta


def toy_traj(rng, T=30, d=2, dt=0.05):
    return Trajectory(rng.normal(size=(T, d)) * 0.1, rng.normal(size=(T, d)) * 0.1,
                      np.zeros((T, 0)), dt)


class TestRollout:
    def test_zero_horizon_empty(self):
        enc, dec, zeta = setup_models()
        rng = np.random.default_rng(0)
        seed_win = toy_traj(rng, T=4)
        pred, info = rollout(enc, dec, zeta, seed_win, None, 0)
        assert pred.T == 0 and info["steps"] == 0 and not info["halted"]

    def test_wrong_seed_window_length(self):
        enc, dec, zeta = setup_models(c=4)
        rng = np.random.default_rng(1)
        with pytest.raises(ShapeError):
            rollout(enc, dec, zeta, toy_traj(rng, T=5), None, 3)

    def test_no_leakage_beyond_seed_window(self):
        # predictions depend only on the seed window, never on later truth
        enc, dec, zeta = setup_models()
        rng = np.random.default_rng(2)
        traj = toy_traj(rng, T=30)
        seed_win = traj.slice(0, 4)
        pred1, _ = rollout(enc, dec, zeta, seed_win, None, 10)

        corrupted = Trajectory(traj.qs.copy(), traj.ps.copy(), traj.us.copy(), traj.dt)
        corrupted.qs[4:] += 1e6
        corrupted.ps[4:] -= 1e6
        pred2, _ = rollout(enc, dec, zeta, corrupted.slice(0, 4), None, 10)
        assert np.array_equal(pred1.qs, pred2.qs)
        assert np.array_equal(pred1.ps, pred2.ps)

    def test_rollout_is_deterministic(self):
        enc, dec, zeta = setup_models()
        rng = np.random.default_rng(3)
        seed_win = toy_traj(rng, T=4)
        a, _ = rollout(enc, dec, zeta, seed_win, None, 8)
        b, _ = rollout(enc, dec, zeta, seed_win, None, 8)
        assert np.array_equal(a.qs, b.qs) and np.array_equal(a.ps, b.ps)

    def test_divergence_halts_with_partial_output(self):
        enc, dec, zeta = setup_models()
        # blow up the output head so feedback explodes quickly
        dec.theta.mlp_w2.data = dec.theta.mlp_w2.data * 0 + 50.0
        dec.theta.mlp_b2.data[:] = 200.0
        rng = np.random.default_rng(4)
        seed_win = toy_traj(rng, T=4)
        pred, info = rollout(enc, dec, zeta, seed_win, None, 400)
        if info["halted"]:
            assert pred.T < 400
        else:
            assert np.all(np.isfinite(pred.qs))

    def test_controls_required_when_m_positive(self):
        enc = SymplecticEncoder.create(d=1, blocks=1, seed=0)
        settings = DecoderSettings(heads=2, hidden=8, context_window=3)
        dec = AdaptiveDecoder(d=1, m=1, settings=settings, seed=0)
        zeta = dec.new_zeta(np.random.default_rng(0))
        rng = np.random.default_rng(5)
        seed_win = Trajectory(rng.normal(size=(3, 1)), rng.normal(size=(3, 1)),
                              rng.normal(size=(3, 1)), 0.1)
        with pytest.raises(ShapeError):
            rollout(enc, dec, zeta, seed_win, np.zeros((2, 1)), 5)
        pred, _ = rollout(enc, dec, zeta, seed_win, rng.normal(size=(5, 1)), 5)
        assert pred.T == 5 and pred.m == 1


class TestEvaluate:
    def test_identical_zero(self):
        rng = np.random.default_rng(6)
        t = toy_traj(rng, T=10)
        assert evaluate_rollout(t, t)["mse"] == 0.0

    def test_constant_offset_one(self):
        rng = np.random.default_rng(7)
        t = toy_traj(rng, T=10)
        shifted = Trajectory(t.qs + 1.0, t.ps + 1.0, t.us, t.dt)
        assert abs(evaluate_rollout(shifted, t)["mse"] - 1.0) <= 1e-12

    def test_matches_scalar_loop(self):
        rng = np.random.default_rng(8)
        a, b = toy_traj(rng, T=7, d=3), toy_traj(rng, T=7, d=3)
        got = evaluate_rollout(a, b)["mse"]
        total = 0.0
        count = 0
        for t in range(7):
            for j in range(3):
                total += (a.qs[t, j] - b.qs[t, j]) ** 2
                total += (a.ps[t, j] - b.ps[t, j]) ** 2
                count += 2
        assert abs(got - total / count) <= 1e-12

    def test_length_mismatch(self):
        rng = np.random.default_rng(9)
        with pytest.raises(ShapeError):
            evaluate_rollout(toy_traj(rng, T=5), toy_traj(rng, T=6))

    def test_persistence_rollout_is_frozen_last_state(self):
        rng = np.random.default_rng(10)
        seed_win = toy_traj(rng, T=4)
        pred = persistence_rollout(seed_win, 6)
        assert pred.T == 6
        assert np.all(pred.qs == seed_win.qs[-1])
        assert np.all(pred.ps == seed_win.ps[-1])
