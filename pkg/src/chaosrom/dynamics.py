"""Lorenz '96 full-order model and trajectory datasets."""
from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, DimensionError, InvalidModelError

UNITS_PER_DAY = 0.2
REFERENCE_DT = 0.01


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        states = np.atleast_2d(np.asarray(self.states, dtype=float))
        if times.ndim != 1 or len(times) < 1 or len(times) != len(states):
            raise DimensionError("need one state per time and at least one point")
        if np.any(np.diff(times) <= 0):
            raise ConfigError("trajectory times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)

    def __len__(self):
        return len(self.times)

    @property
    def dim(self):
        return self.states.shape[1]


@dataclass(frozen=True)
class DatasetConfig:
    """Sampling protocol: ``n_points`` split into trajectories of ``rollout + 1`` points.

    Times are in model units (0.2 units per day), so the defaults are a
    six-hour spacing, a 30-day gap between trajectory starts and a 360-day
    spin-up.
    """

    n_points: int = 1000
    rollout: int = 1
    spacing: float = 0.05
    trajectory_gap: float = 6.0
    burn_in: float = 72.0
    seed: int = 0
    forcing: float = 8.0
    dim: int = 40

    def __post_init__(self):
        if self.n_points < 1 or self.rollout < 1:
            raise ConfigError("n_points and rollout must be positive")
        if self.n_points % (self.rollout + 1):
            raise ConfigError(
                f"n_points={self.n_points} is not divisible by rollout+1={self.rollout + 1}")
        if self.spacing <= 0 or self.trajectory_gap < 0 or self.burn_in < 0:
            raise ConfigError("need spacing > 0, trajectory_gap >= 0, burn_in >= 0")
        if self.dim < 4:
            raise InvalidModelError("Lorenz '96 needs at least 4 variables")

    @property
    def n_trajectories(self):
        return self.n_points // (self.rollout + 1)

    @property
    def window_end(self):
        """Time (after burn-in) of the last training sample."""
        return (self.n_trajectories - 1) * self.trajectory_gap + self.rollout * self.spacing


def _stencil(n):
    j = np.arange(n)
    return (j + 1) % n, (j - 1) % n, (j - 2) % n


def l96_rhs(x, forcing: float = 8.0) -> np.ndarray:
    """dx_j/dt = -x_{j-1}(x_{j-2} - x_{j+1}) - x_j + F with cyclic j.

    Works on a single state or on a batch along the last axis.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    if n < 4:
        raise InvalidModelError("Lorenz '96 needs at least 4 variables")
    jp1, jm1, jm2 = _stencil(n)
    return -x[..., jm1] * (x[..., jm2] - x[..., jp1]) - x + forcing


def rk4_propagate(x, duration: float, forcing: float = 8.0, dt: float = REFERENCE_DT):
    """Classical RK4 over ``duration``, the step shrunk to land exactly on it."""
    x = np.array(x, dtype=float)
    if duration == 0:
        return x
    n_steps = max(1, math.ceil(duration / dt - 1e-9))
    h = duration / n_steps
    jp1, jm1, jm2 = _stencil(x.shape[-1])

    def f(y):
        return (y[..., jp1] - y[..., jm2]) * y[..., jm1] - y + forcing

    for _ in range(n_steps):
        k1 = f(x)
        k2 = f(x + 0.5 * h * k1)
        k3 = f(x + 0.5 * h * k2)
        k4 = f(x + h * k3)
        x += (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


Propagator = Callable[[np.ndarray, float], np.ndarray]


def reference_solver(forcing: float = 8.0, dt: float = REFERENCE_DT) -> Propagator:
    return lambda x, duration: rk4_propagate(x, duration, forcing, dt)


def spun_up_state(cfg: DatasetConfig, solver: Propagator | None = None) -> np.ndarray:
    solver = solver or reference_solver(cfg.forcing)
    x0 = np.full(cfg.dim, cfg.forcing)
    x0[0] += 0.01
    return solver(x0, cfg.burn_in)


def _sample_along(x, offsets, solver):
    """States of one continuous solution at increasing ``offsets`` from ``x``."""
    out = np.empty((len(offsets), len(x)))
    t = 0.0
    for i, s in enumerate(offsets):
        if s > t:
            x = solver(x, s - t)
            t = s
        out[i] = x
    return out


def generate_dataset(cfg: DatasetConfig, solver: Propagator | None = None) -> list[Trajectory]:
    """Trajectories of ``rollout + 1`` points cut from one long reference run."""
    solver = solver or reference_solver(cfg.forcing)
    x = spun_up_state(cfg, solver)
    K = cfg.rollout
    times = np.array([[i * cfg.trajectory_gap + k * cfg.spacing for k in range(K + 1)]
                      for i in range(cfg.n_trajectories)])
    flat = np.unique(times.ravel())
    states = _sample_along(x, flat, solver)
    lookup = np.searchsorted(flat, times)
    return [Trajectory(times[i], states[lookup[i]]) for i in range(cfg.n_trajectories)]


def generate_forecast_ensemble(m: int, cfg: DatasetConfig, stride: float | None = None,
                               solver: Propagator | None = None) -> np.ndarray:
    """``m`` on-attractor states drawn after the training window.

    Samples sit ``stride`` apart (default one day, never below the data
    spacing) on the same reference run that produced the training data; the
    seed only shifts where sampling starts.
    """
    if m < 1:
        raise ConfigError("ensemble size must be >= 1")
    solver = solver or reference_solver(cfg.forcing)
    stride = max(cfg.spacing, stride if stride is not None else 4 * cfg.spacing)
    rng = np.random.default_rng(cfg.seed)
    start = cfg.burn_in + cfg.window_end + max(cfg.trajectory_gap, cfg.spacing)
    start += int(rng.integers(0, 20)) * cfg.spacing
    x = spun_up_state(cfg, solver)
    x = solver(x, start - cfg.burn_in)
    return _sample_along(x, np.arange(m) * stride, solver)


class TruthModel:
    """The full-order model wearing the forecasting interface of the ROMs."""

    kind = "truth"

    def __init__(self, forcing: float = 8.0, dt: float = REFERENCE_DT):
        self.forcing = forcing
        self.dt = dt

    def forecast(self, x0, times) -> Trajectory:
        times = np.asarray(times, dtype=float)
        states = _sample_along(np.asarray(x0, dtype=float), times - times[0],
                               reference_solver(self.forcing, self.dt))
        return Trajectory(times, states)

    def forecast_ensemble(self, X0, times):
        times = np.asarray(times, dtype=float)
        X = np.array(X0, dtype=float)
        out = np.empty((len(times),) + X.shape)
        out[0] = X
        for i in range(1, len(times)):
            X = rk4_propagate(X, times[i] - times[i - 1], self.forcing, self.dt)
            out[i] = X
        alive = np.all(np.isfinite(out), axis=2)
        return out, alive


# --- trajectory CSV -------------------------------------------------------

def format_float(v: float) -> str:
    return "%.17g" % v


def write_trajectories(trajs: Sequence[Trajectory], stream) -> None:
    """Header ``time,x1,...,xn``; trajectories separated by one blank line."""
    n = trajs[0].dim
    stream.write("time," + ",".join(f"x{j + 1}" for j in range(n)) + "\n")
    for i, tr in enumerate(trajs):
        if i:
            stream.write("\n")
        for t, x in zip(tr.times, tr.states):
            stream.write(format_float(t) + "," + ",".join(format_float(v) for v in x) + "\n")


def trajectories_to_csv(trajs: Sequence[Trajectory]) -> str:
    buf = io.StringIO()
    write_trajectories(trajs, buf)
    return buf.getvalue()


def read_trajectories(stream) -> list[Trajectory]:
    lines = stream.read().splitlines()
    if not lines or not lines[0].startswith("time,"):
        raise ConfigError("trajectory CSV must start with a 'time,x1,...' header")
    n = len(lines[0].split(",")) - 1
    blocks, cur = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if line.startswith("#"):
            continue
        if not line.strip():
            if cur:
                blocks.append(cur)
                cur = []
            continue
        vals = line.split(",")
        if len(vals) != n + 1:
            raise ConfigError(f"line {lineno}: expected {n + 1} columns, got {len(vals)}")
        cur.append([float(v) for v in vals])
    if cur:
        blocks.append(cur)
    out = []
    for b in blocks:
        arr = np.array(b)
        out.append(Trajectory(arr[:, 0], arr[:, 1:]))
    return out


def load_trajectories(path) -> list[Trajectory]:
    with open(path) as fh:
        return read_trajectories(fh)
