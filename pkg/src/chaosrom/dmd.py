"""Exact dynamic mode decomposition with analytic continuous-time forecasts."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dynamics import Trajectory
from .errors import ConfigError, DegenerateEigenvalueError, RankDeficiencyError

RANK_RTOL = 1e-10
EIG_FLOOR = 1e-14


@dataclass
class DmdModel:
    Phi: np.ndarray
    Phi_pinv: np.ndarray
    Omega: np.ndarray
    dt: float

    kind = "dmd"

    @property
    def rank(self):
        return self.Phi.shape[1]

    @property
    def eigenvalues(self):
        return np.exp(self.Omega * self.dt)

    def encode(self, x):
        return np.asarray(x) @ self.Phi_pinv.T

    def decode(self, u):
        return np.real(np.asarray(u) @ self.Phi.T)

    def propagate(self, X0, t: float):
        """Real part of Phi exp(Omega t) Phi^+ x0 for one state or a batch."""
        u = self.encode(np.asarray(X0, dtype=float))
        return np.real((u * np.exp(self.Omega * t)) @ self.Phi.T)

    def forecast(self, x0, times) -> Trajectory:
        times = np.asarray(times, dtype=float)
        states = np.array([self.propagate(x0, t - times[0]) for t in times])
        return Trajectory(times, states)

    def forecast_ensemble(self, X0, times):
        times = np.asarray(times, dtype=float)
        out = np.array([self.propagate(X0, t - times[0]) for t in times])
        return out, np.all(np.isfinite(out), axis=2)


def pairs_from_trajectories(trajs: Sequence[Trajectory]):
    """Consecutive-point snapshot pairs, never crossing trajectory boundaries."""
    X = [s for tr in trajs for s in tr.states[:-1]]
    Y = [s for tr in trajs for s in tr.states[1:]]
    return list(zip(X, Y))


def fit_dmd(pairs, r: int, dt: float) -> DmdModel:
    if dt <= 0:
        raise ConfigError("dt must be positive")
    if len(pairs) < r:
        raise RankDeficiencyError(f"need at least r={r} snapshot pairs, got {len(pairs)}")
    X = np.array([p[0] for p in pairs], dtype=float).T
    Y = np.array([p[1] for p in pairs], dtype=float).T
    U, s, Vh = np.linalg.svd(X, full_matrices=False)
    if r > len(s) or s[r - 1] <= RANK_RTOL * s[0]:
        raise RankDeficiencyError(f"snapshot matrix has rank below r={r}")
    U, s, V = U[:, :r], s[:r], Vh[:r].conj().T
    YVSinv = Y @ V / s
    A_tilde = U.T @ YVSinv
    lam, W = np.linalg.eig(A_tilde)
    if np.any(np.abs(lam) < EIG_FLOOR):
        raise DegenerateEigenvalueError("DMD eigenvalue with |lambda| < 1e-14 has no logarithm")
    Phi = YVSinv @ W
    Omega = np.log(lam.astype(complex)) / dt
    return DmdModel(Phi, np.linalg.pinv(Phi), Omega, float(dt))


def fit_dmd_trajectories(trajs: Sequence[Trajectory], r: int) -> DmdModel:
    dt = float(trajs[0].times[1] - trajs[0].times[0])
    return fit_dmd(pairs_from_trajectories(trajs), r, dt)


def dmd_forecast(model: DmdModel, x0, t: float) -> np.ndarray:
    if t < 0:
        raise ConfigError("t must be non-negative")
    return model.propagate(x0, t)
