"""Quadratic-manifold ROM: POD basis, quadratic decoder correction and
quadratic latent dynamics fit by ridge least squares."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dynamics import Trajectory
from .errors import ConfigError, DivergenceError, NonConvergenceError, RankDeficiencyError
from .ode import BLOWUP, SolverConfig, integrate_ensemble, integrate_path

RIDGE_SCALE = 1e-8


def _pair_index(r):
    return np.triu_indices(r)


def quad_features(U) -> np.ndarray:
    """Non-redundant products u_i u_j, i <= j, for a vector or a batch."""
    U = np.asarray(U, dtype=float)
    i, j = _pair_index(U.shape[-1])
    return U[..., i] * U[..., j]


def _coef_to_tensor(W, r):
    """Map coefficients on {u_i u_j, i<=j} to a tensor symmetric in its last two indices."""
    i, j = _pair_index(r)
    T = np.zeros((W.shape[0], r, r))
    half = np.where(i == j, 1.0, 0.5)
    T[:, i, j] = W * half
    T[:, j, i] = W * half
    return T


def quad_form(T, U) -> np.ndarray:
    """out[..., a] = sum_jk U[..., j] T[a, j, k] U[..., k]."""
    return np.einsum("...j,ajk,...k->...a", U, T, U)


def ridge_solve(F, Y, ridge_scale: float = RIDGE_SCALE) -> np.ndarray:
    """argmin_W ||F W - Y||^2 + alpha ||W||^2 with alpha = ridge_scale * ||F||_2^2."""
    Uf, s, Vh = np.linalg.svd(F, full_matrices=False)
    alpha = ridge_scale * (s[0] ** 2 if s.size else 0.0)
    denom = s * s + alpha
    with np.errstate(divide="ignore", invalid="ignore"):
        filt = np.where(denom > 0, s / denom, 0.0)
    return Vh.T @ (filt[:, None] * (Uf.T @ Y))


@dataclass
class QuadraticModel:
    x_bar: np.ndarray
    Phi: np.ndarray
    Phi_bar: np.ndarray
    a: np.ndarray
    B: np.ndarray
    C: np.ndarray
    solver: SolverConfig | None = None

    kind = "quad"

    @property
    def rank(self):
        return self.Phi.shape[1]

    def encode(self, x):
        return (np.asarray(x, dtype=float) - self.x_bar) @ self.Phi

    def decode(self, u):
        u = np.asarray(u, dtype=float)
        return self.x_bar + u @ self.Phi.T + quad_form(self.Phi_bar, u)

    def latent_rhs(self, u):
        u = np.asarray(u, dtype=float)
        return self.a + u @ self.B.T + quad_form(self.C, u)

    def forecast(self, x0, times) -> Trajectory:
        """Encode, integrate the quadratic ODE adaptively, decode every observation.

        Finite-time blow-up surfaces as ``DivergenceError`` whose ``partial``
        is the decoded trajectory up to the last completed observation.
        """
        times = np.asarray(times, dtype=float)
        try:
            U = integrate_path(self.latent_rhs, self.encode(x0), times, self.solver,
                               blowup=BLOWUP)
        except (DivergenceError, NonConvergenceError) as exc:
            part = exc.partial
            partial = Trajectory(times[:len(part)], self.decode(part)) if part is not None else None
            raise DivergenceError(f"quadratic ROM diverged near t={exc.time}",
                                  time=exc.time, partial=partial) from exc
        return Trajectory(times, self.decode(U))

    def forecast_ensemble(self, X0, times):
        U, alive = integrate_ensemble(self.latent_rhs, self.encode(X0), times, self.solver)
        with np.errstate(all="ignore"):
            X = self.decode(U)
        alive = alive & np.all(np.isfinite(X), axis=2)
        return X, alive


def fit_pod(states, r: int):
    """Mean field and the top-r left singular vectors of the centred snapshots."""
    S = np.asarray(states, dtype=float)
    if len(S) < r:
        raise RankDeficiencyError(f"need at least r={r} snapshots")
    x_bar = S.mean(axis=0)
    U, s, _ = np.linalg.svd((S - x_bar).T, full_matrices=False)
    if r > len(s) or s[r - 1] <= 1e-12 * max(s[0], 1e-300):
        raise RankDeficiencyError(f"centred snapshots have rank below r={r}")
    return x_bar, U[:, :r]


def fit_quadratic_decoder(states, x_bar, Phi, ridge_scale: float = RIDGE_SCALE) -> np.ndarray:
    S = np.asarray(states, dtype=float)
    D = S - x_bar
    U = D @ Phi
    resid = D - U @ Phi.T
    W = ridge_solve(quad_features(U), resid, ridge_scale)
    return _coef_to_tensor(W.T, Phi.shape[1])


def fd_derivative(times, U, rtol: float = 1e-9):
    """Centred differences inside, one-sided first order at both ends.

    Returns ``(U, dU/dt)``.
    """
    times = np.asarray(times, dtype=float)
    U = np.asarray(U, dtype=float)
    if len(times) < 2:
        raise ConfigError("finite differences need at least two points")
    dts = np.diff(times)
    h = dts[0]
    if np.any(np.abs(dts - h) > rtol * abs(h)):
        raise ConfigError("finite differences need uniform spacing")
    dU = np.empty_like(U)
    dU[0] = (U[1] - U[0]) / h
    dU[-1] = (U[-1] - U[-2]) / h
    if len(U) > 2:
        dU[1:-1] = (U[2:] - U[:-2]) / (2 * h)
    return U, dU


def fit_quadratic_dynamics(U, dU, ridge_scale: float = RIDGE_SCALE):
    """Ridge fit of du/dt against [1, u, u_i u_j (i <= j)]. Returns (a, B, C)."""
    U = np.atleast_2d(np.asarray(U, dtype=float))
    dU = np.atleast_2d(np.asarray(dU, dtype=float))
    r = U.shape[1]
    F = np.hstack([np.ones((len(U), 1)), U, quad_features(U)])
    W = ridge_solve(F, dU, ridge_scale).T
    return W[:, 0], W[:, 1:1 + r], _coef_to_tensor(W[:, 1 + r:], r)


def fit_quadratic_model(trajs: Sequence[Trajectory], r: int,
                        solver: SolverConfig | None = None) -> QuadraticModel:
    states = np.vstack([tr.states for tr in trajs])
    x_bar, Phi = fit_pod(states, r)
    Phi_bar = fit_quadratic_decoder(states, x_bar, Phi)
    Us, dUs = [], []
    for tr in trajs:
        u, du = fd_derivative(tr.times, (tr.states - x_bar) @ Phi)
        Us.append(u)
        dUs.append(du)
    a, B, C = fit_quadratic_dynamics(np.vstack(Us), np.vstack(dUs))
    return QuadraticModel(x_bar, Phi, Phi_bar, a, B, C, solver)


def quad_forecast(model: QuadraticModel, x0, t: float) -> np.ndarray:
    """State at time ``t`` from ``x0``; raises ``DivergenceError`` on blow-up."""
    if t < 0:
        raise ConfigError("t must be non-negative")
    if t == 0:
        return model.decode(model.encode(x0))
    return model.forecast(x0, [0.0, t]).states[-1]
