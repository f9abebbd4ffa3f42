"""Quantitative geometric checks: symplectic defect, perturbation bound,
energy drift, phase-space area.

The defect of a differentiable map f at a point x is ||J^T W J - W||_2 with
J the Jacobian and W the canonical form [[0, I], [-I, 0]]; zero defect and
unit determinant characterize a symplectic map. The composed encoder+
decoder step is near-symplectic: writing the prediction as z_c + F, its
Jacobian is (I + A) S with S symplectic and A = dF/dz_c, so the defect is
bounded by C * ||A|| to first order. `perturbation_bound_estimate` measures
||dF/dz_c|| by finite differences and fits the empirical constant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .decoder import AdaptiveDecoder, DecoderLocalParams
from .encoder import SymplecticEncoder
from .errors import NonFiniteError, ShapeError
from .sympnet import SympStack, symplectic_form
from .trajectory import Trajectory

__all__ = [
    "SymplecticReport",
    "finite_diff_jacobian",
    "symplectic_defect",
    "composed_step_map",
    "perturbation_bound_estimate",
    "scale_decoder_output",
    "energy_drift",
    "shoelace_area",
    "closed_orbit_slice",
]


@dataclass
class SymplecticReport:
    defect: float          # max over sample points of ||J^T W J - W||_2
    det_dev: float         # max over sample points of |det J - 1|
    n_points: int
    per_point: list[float]


def finite_diff_jacobian(fn, x: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of fn: R^n -> R^m at x; (m, n) matrix."""
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    cols = []
    for i in range(n):
        e = np.zeros(n)
        e[i] = step
        hi = np.asarray(fn(x + e), dtype=np.float64)
        lo = np.asarray(fn(x - e), dtype=np.float64)
        cols.append((hi - lo) / (2.0 * step))
    J = np.stack(cols, axis=1)
    if not np.all(np.isfinite(J)):
        raise NonFiniteError("non-finite Jacobian in finite differences")
    return J


def _defect_of(J: np.ndarray, omega: np.ndarray) -> tuple[float, float]:
    return (float(np.linalg.norm(J.T @ omega @ J - omega, 2)),
            float(abs(np.linalg.det(J) - 1.0)))


def symplectic_defect(map_or_stack, points: np.ndarray, dt: float | None = None,
                      mode: str = "fd", fd_step: float = 1e-6) -> SymplecticReport:
    """Defect report over sample points (rows of `points`, each length 2d).

    `map_or_stack` is either a callable x -> f(x) on flat phase vectors
    (mode "fd") or a SympStack (mode "analytic" uses its chained layer
    Jacobians; "fd" differentiates its forward map).
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    two_d = points.shape[1]
    if two_d % 2 != 0:
        raise ShapeError("phase points must have even length")
    d = two_d // 2
    omega = symplectic_form(d)

    if isinstance(map_or_stack, SympStack):
        stack = map_or_stack
        if dt is None:
            raise ShapeError("dt required for a stack")
        if mode == "analytic":
            jac = lambda x: stack.jacobian(x[:d], x[d:], dt)
        else:
            def fwd(x):
                q, p = stack.forward(x[:d], x[d:], dt)
                return np.concatenate([q, p])
            jac = lambda x: finite_diff_jacobian(fwd, x, fd_step)
    else:
        if mode == "analytic":
            raise ShapeError("analytic mode needs a SympStack")
        jac = lambda x: finite_diff_jacobian(map_or_stack, x, fd_step)

    per_point, det_devs = [], []
    for x in points:
        dft, dd = _defect_of(jac(x), omega)
        per_point.append(dft)
        det_devs.append(dd)
    return SymplecticReport(defect=max(per_point), det_dev=max(det_devs),
                            n_points=len(points), per_point=per_point)


# ---------------------------------------------------------------------------
# composed encoder+decoder single-step map
# ---------------------------------------------------------------------------

def composed_step_map(encoder: SymplecticEncoder, decoder: AdaptiveDecoder,
                      zeta: DecoderLocalParams, base_window: Trajectory):
    """The one-step map x -> prediction with the window context held fixed.

    The returned callable takes the last window state as a flat 2d vector,
    rebuilds the window, re-encodes it, and decodes one step. Differentiating
    it probes the full pipeline including the decoder's latent sensitivity.
    """
    c = decoder.settings.context_window
    if base_window.T != c:
        raise ShapeError(f"base window must have c={c} steps")
    d, m = decoder.d, decoder.m
    dt = base_window.dt
    qs0 = base_window.qs.copy()
    ps0 = base_window.ps.copy()
    us0 = base_window.us.copy()

    def step(x: np.ndarray) -> np.ndarray:
        qs = qs0.copy()
        ps = ps0.copy()
        qs[-1] = x[:d]
        ps[-1] = x[d:]
        feats = np.concatenate([qs, ps, np.full((c, 1), dt), us0], axis=1)[None]
        zq, zp = encoder.forward(qs, ps, dt)
        latents = np.concatenate([zq, zp], axis=1)[None]
        return decoder.predict(feats, latents, zeta)[0]

    return step


def _delta_fn(decoder: AdaptiveDecoder, zeta: DecoderLocalParams,
              feats: np.ndarray, latents: np.ndarray):
    def f(zc_flat: np.ndarray) -> np.ndarray:
        z = zc_flat.reshape(latents.shape)
        return decoder.delta(feats, z, zeta).data[0]
    return f


def perturbation_bound_estimate(encoder: SymplecticEncoder, decoder: AdaptiveDecoder,
                                zeta: DecoderLocalParams, windows: list[Trajectory],
                                fd_step: float = 1e-6) -> dict:
    """Empirical deviation-from-identity bound for the decoder perturbation.

    For each sample window: rho_i = ||dF/d vec(z_c)||_2 by central
    differences and the composed-map defect at the window's last state.
    Returns rho_hat = max rho_i, the per-sample lists, and the fitted
    constant C_hat = max defect_i / rho_i.
    """
    d = decoder.d
    omega = symplectic_form(d)
    rhos, defects = [], []
    for win in windows:
        c = decoder.settings.context_window
        feats = np.concatenate([win.qs, win.ps, np.full((c, 1), win.dt), win.us], axis=1)[None]
        zq, zp = encoder.forward(win.qs, win.ps, win.dt)
        latents = np.concatenate([zq, zp], axis=1)[None]
        jf = finite_diff_jacobian(_delta_fn(decoder, zeta, feats, latents),
                                  latents.ravel().copy(), fd_step)
        rhos.append(float(np.linalg.norm(jf, 2)))
        x_last = np.concatenate([win.qs[-1], win.ps[-1]])
        J = finite_diff_jacobian(composed_step_map(encoder, decoder, zeta, win),
                                 x_last, fd_step)
        defects.append(_defect_of(J, omega)[0])
    rho_hat = max(rhos)
    ratios = [dft / r for dft, r in zip(defects, rhos) if r > 1e-12]
    return {
        "rho_hat": rho_hat,
        "rho_per_sample": rhos,
        "defect_per_sample": defects,
        "defect_max": max(defects),
        "c_hat": max(ratios) if ratios else 0.0,
    }


def scale_decoder_output(decoder: AdaptiveDecoder, factor: float) -> None:
    """Scale the output head in place; F (and its Jacobian) scale linearly."""
    decoder.theta.mlp_w2.data = decoder.theta.mlp_w2.data * factor
    decoder.theta.mlp_b2.data = decoder.theta.mlp_b2.data * factor


# ---------------------------------------------------------------------------
# energy drift and phase-space area
# ---------------------------------------------------------------------------

def energy_drift(energy: np.ndarray) -> dict:
    """Relative drift statistics of an energy series.

    Returns max |E(t)-E(0)|/|E(0)| and the least-squares slope of the
    relative drift per step.
    """
    energy = np.asarray(energy, dtype=np.float64)
    if energy.ndim != 1 or len(energy) < 2:
        raise ShapeError("energy series must be 1-D with >= 2 samples")
    e0 = energy[0]
    if e0 == 0:
        raise ShapeError("initial energy is zero; relative drift undefined")
    rel = (energy - e0) / abs(e0)
    t = np.arange(len(energy), dtype=np.float64)
    slope = float(np.polyfit(t, rel, 1)[0])
    return {"max_rel": float(np.max(np.abs(rel))), "slope_per_step": slope}


def shoelace_area(q: np.ndarray, p: np.ndarray) -> float:
    """Polygon area of a closed discrete phase-space orbit.

    A = |sum_i (q_i p_{i+1} - q_{i+1} p_i)| / 2 with cyclic indexing; exact
    for polygons, second-order convergent for smooth closed curves.
    """
    q = np.asarray(q, dtype=np.float64).ravel()
    p = np.asarray(p, dtype=np.float64).ravel()
    if len(q) < 3:
        raise ShapeError("need at least 3 points for an enclosed area")
    qn = np.roll(q, -1)
    pn = np.roll(p, -1)
    return float(0.5 * abs(np.sum(q * pn - qn * p)))


def closed_orbit_slice(q: np.ndarray, p: np.ndarray) -> slice:
    """Indices covering the first full revolution of a (q, p) orbit.

    Tracks the unwrapped polar angle around the orbit centroid and cuts at
    the first sample where the accumulated sweep reaches 2*pi.
    """
    q = np.asarray(q).ravel()
    p = np.asarray(p).ravel()
    qc = q - q.mean()
    pc = p - p.mean()
    theta = np.unwrap(np.arctan2(pc, qc))
    sweep = np.abs(theta - theta[0])
    idx = int(np.argmax(sweep >= 2.0 * np.pi))
    if sweep[idx] < 2.0 * np.pi:
        raise ShapeError("orbit does not complete a full revolution")
    return slice(0, idx + 1)
