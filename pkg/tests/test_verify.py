"""Verification-metric tests: defect modes agree, areas exact, drift slopes,
perturbation-bound degenerate and scaling cases."""

import numpy as np
import pytest

from symdyn.config import DecoderSettings
from symdyn.datagen import OscillatorSystem, gen_oscillator, oscillator_energy
from symdyn.decoder import AdaptiveDecoder
from symdyn.encoder import SymplecticEncoder
from symdyn.errors import ShapeError
from symdyn.sympnet import la_stack
from symdyn.trajectory import Trajectory
from symdyn.verify import (
    closed_orbit_slice,
    composed_step_map,
    energy_drift,
    perturbation_bound_estimate,
    scale_decoder_output,
    shoelace_area,
    symplectic_defect,
)


class TestSymplecticDefect:
    def test_identity_map(self):
        rep = symplectic_defect(lambda x: x.copy(), np.random.default_rng(0).normal(size=(5, 4)))
        assert rep.defect <= 1e-9 and rep.det_dev <= 1e-9

    def test_encoder_structural(self):
        stack = la_stack(3, blocks=3, rng=np.random.default_rng(1))
        pts = np.random.default_rng(2).normal(size=(20, 6))
        rep = symplectic_defect(stack, pts, dt=0.1, mode="analytic")
        assert rep.defect <= 1e-8 and rep.det_dev <= 1e-8

    def test_analytic_vs_finite_difference(self):
        stack = la_stack(2, blocks=2, rng=np.random.default_rng(3))
        pts = np.random.default_rng(4).normal(size=(5, 4))
        ana = symplectic_defect(stack, pts, dt=0.2, mode="analytic")
        fd = symplectic_defect(stack, pts, dt=0.2, mode="fd")
        assert abs(ana.defect - fd.defect) <= 1e-4
        for a, f in zip(ana.per_point, fd.per_point):
            assert abs(a - f) <= 1e-4

    def test_non_symplectic_map_flagged(self):
        rep = symplectic_defect(lambda x: 2.0 * x, np.ones((3, 4)))
        assert rep.defect > 1.0


class TestShoelace:
    def test_unit_square(self):
        q = np.array([0.0, 1.0, 1.0, 0.0])
        p = np.array([0.0, 0.0, 1.0, 1.0])
        assert shoelace_area(q, p) == 1.0

    def test_circle_refinement(self):
        th = np.linspace(0, 2 * np.pi, 10_000, endpoint=False)
        assert abs(shoelace_area(np.cos(th), np.sin(th)) - np.pi) <= 1e-6

    def test_second_order_convergence(self):
        errs = []
        for n in (100, 200, 400):
            th = np.linspace(0, 2 * np.pi, n, endpoint=False)
            errs.append(abs(shoelace_area(2 * np.cos(th), np.sin(th)) - 2 * np.pi))
        assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)
        assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.1)

    def test_too_few_points(self):
        with pytest.raises(ShapeError):
            shoelace_area(np.array([0.0, 1.0]), np.array([0.0, 1.0]))

    def test_closed_orbit_slice_on_ellipse(self):
        sys = OscillatorSystem(m=1.0, k=2.0, x0=1.0, v0=0.0, dt=0.01, steps=800)
        tr = gen_oscillator(sys)
        sl = closed_orbit_slice(tr.qs, tr.ps)
        # one period of omega = sqrt(2): T = 2 pi / sqrt(2) = 4.44 -> 445 steps
        assert abs((sl.stop - 1) * 0.01 - 2 * np.pi / np.sqrt(2.0)) <= 0.05
        area = shoelace_area(tr.qs[sl], tr.ps[sl])
        # analytic orbit area: pi * x0 * (m w x0) = pi * sqrt(2)
        assert abs(area - np.pi * np.sqrt(2.0)) / (np.pi * np.sqrt(2.0)) <= 2e-3


class TestEnergyDrift:
    def test_analytic_oscillator(self):
        sys = OscillatorSystem(m=1.0, k=1.5, x0=0.9, v0=0.2, dt=0.01, steps=600)
        tr = gen_oscillator(sys)
        e = oscillator_energy(tr.qs, tr.ps, sys.m, sys.k)
        drift = energy_drift(e)
        assert drift["max_rel"] <= 1e-12
        assert abs(drift["slope_per_step"]) <= 1e-14

    def test_linear_drift_slope(self):
        e = 1.0 + np.arange(100) * 1e-3
        drift = energy_drift(e)
        assert drift["slope_per_step"] == pytest.approx(1e-3, rel=1e-6)

    def test_zero_initial_energy_rejected(self):
        with pytest.raises(ShapeError):
            energy_drift(np.zeros(10))


def build_pipeline(d=2, c=4, seed=0):
    enc = SymplecticEncoder.create(d=d, blocks=2, seed=seed)
    settings = DecoderSettings(heads=2, hidden=8, context_window=c)
    dec = AdaptiveDecoder(d=d, m=0, settings=settings, seed=seed)
    zeta = dec.new_zeta(np.random.default_rng(seed))
    rng = np.random.default_rng(seed + 1)
    win = Trajectory(rng.normal(size=(c, d)) * 0.3, rng.normal(size=(c, d)) * 0.3,
                     np.zeros((c, 0)), 0.05)
    return enc, dec, zeta, win


class TestPerturbationBound:
    def test_zero_perturbation_recovers_symplectic(self):
        enc, dec, zeta, win = build_pipeline()
        dec.theta.mlp_w2.data[:] = 0.0
        dec.theta.mlp_b2.data[:] = 0.0
        est = perturbation_bound_estimate(enc, dec, zeta, [win])
        assert est["rho_hat"] <= 1e-9
        assert est["defect_max"] <= 1e-4   # finite-difference noise floor

    def test_composed_map_consistency(self):
        enc, dec, zeta, win = build_pipeline()
        step = composed_step_map(enc, dec, zeta, win)
        x = np.concatenate([win.qs[-1], win.ps[-1]])
        out = step(x)
        feats = np.concatenate([win.qs, win.ps, np.full((4, 1), win.dt), win.us], axis=1)[None]
        zq, zp = enc.forward(win.qs, win.ps, win.dt)
        lat = np.concatenate([zq, zp], axis=1)[None]
        direct = dec.predict(feats, lat, zeta)[0]
        assert np.abs(out - direct).max() <= 1e-12

    def test_output_scaling_scales_rho_linearly(self):
        enc, dec, zeta, win = build_pipeline(seed=3)
        # give the perturbation some substance before scaling
        rng = np.random.default_rng(9)
        dec.theta.mlp_w2.data = rng.normal(0, 0.05, dec.theta.mlp_w2.data.shape)
        base = perturbation_bound_estimate(enc, dec, zeta, [win])["rho_hat"]
        scale_decoder_output(dec, 2.0)
        doubled = perturbation_bound_estimate(enc, dec, zeta, [win])["rho_hat"]
        assert doubled == pytest.approx(2.0 * base, rel=1e-5)
        scale_decoder_output(dec, 0.25)  # back to half the original
        halved = perturbation_bound_estimate(enc, dec, zeta, [win])["rho_hat"]
        assert halved == pytest.approx(0.5 * base, rel=1e-5)

    def test_defect_bounded_by_fitted_constant(self):
        enc, dec, zeta, win = build_pipeline(seed=4)
        rng = np.random.default_rng(10)
        dec.theta.mlp_w2.data = rng.normal(0, 0.05, dec.theta.mlp_w2.data.shape)
        est = perturbation_bound_estimate(enc, dec, zeta, [win])
        assert est["defect_max"] <= est["c_hat"] * est["rho_hat"] + 1e-9
