"""Forecast evaluation: product-kernel KDE, the squared-log-ratio KL estimate,
the day-by-day ensemble experiment and the Hovmöller flow export."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.special import logsumexp

from .dynamics import UNITS_PER_DAY, TruthModel, format_float
from .errors import ChaosRomError, DegenerateDimensionError, DivergenceError

log = logging.getLogger(__name__)

HOURS_PER_OBS = 6
KL_COLUMNS = ("day", "method", "kl", "excluded", "M")


@dataclass(frozen=True)
class KdeModel:
    samples: np.ndarray
    bandwidth: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        bw = np.atleast_1d(np.asarray(self.bandwidth, dtype=float))
        if s.shape[0] < 2:
            raise DegenerateDimensionError("KDE needs at least two samples")
        if bw.shape != (s.shape[1],) or np.any(bw <= 0):
            raise DegenerateDimensionError("need one positive bandwidth per dimension")
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "bandwidth", bw)

    @property
    def dim(self):
        return self.samples.shape[1]

    def log_density(self, x):
        return kde_log_density(self, x)


def silverman_bandwidth(samples) -> np.ndarray:
    """Per-dimension Silverman rule: sigma_i (4 / ((d + 2) m))^(1 / (d + 4))."""
    S = np.asarray(samples, dtype=float)
    m, d = S.shape
    sigma = S.std(axis=0, ddof=1)
    return sigma * (4.0 / ((d + 2) * m)) ** (1.0 / (d + 4))


def kde_fit(samples) -> KdeModel:
    S = np.asarray(samples, dtype=float)
    if S.ndim == 1:
        S = S[:, None]
    if S.shape[0] < 2:
        raise DegenerateDimensionError(f"KDE needs at least two samples, got {S.shape[0]}")
    if not np.all(np.isfinite(S)):
        raise ValueError("KDE samples must be finite")
    bw = silverman_bandwidth(S)
    if np.any(bw == 0):
        raise DegenerateDimensionError(
            f"zero sample spread in dimension(s) {np.flatnonzero(bw == 0).tolist()}")
    return KdeModel(S, bw)


def kde_log_density(model: KdeModel, x, chunk: int = 1024):
    """Log of the Gaussian mixture density at ``x`` (one point or a batch)."""
    x = np.asarray(x, dtype=float)
    if model.dim == 1:
        single, X = x.ndim == 0, x.reshape(-1, 1)
    else:
        single, X = x.ndim == 1, np.atleast_2d(x)
    h = model.bandwidth
    S = model.samples / h
    s2 = np.sum(S * S, axis=1)
    norm = -math.log(len(S)) - np.sum(np.log(h)) - 0.5 * model.dim * math.log(2 * math.pi)
    out = np.empty(len(X))
    for i in range(0, len(X), chunk):
        Z = X[i:i + chunk] / h
        d2 = np.sum(Z * Z, axis=1)[:, None] - 2.0 * Z @ S.T + s2[None, :]
        np.maximum(d2, 0.0, out=d2)
        out[i:i + chunk] = logsumexp(-0.5 * d2, axis=1) + norm
    return float(out[0]) if single else out


def _log_density(model, X):
    if hasattr(model, "log_density"):
        return np.asarray(model.log_density(X), dtype=float)
    return np.asarray(model(X), dtype=float)


def kl_approx(p_model, q_model, eval_samples) -> float:
    """Mean of (log q - log p)^2 / 2 over samples drawn from p.

    Either model may be a ``KdeModel`` or any callable returning log-densities.
    """
    X = np.asarray(eval_samples, dtype=float)
    if p_model is q_model:
        return 0.0
    diff = _log_density(q_model, X) - _log_density(p_model, X)
    return float(np.mean(0.5 * diff * diff))


@dataclass(frozen=True)
class KlReport:
    day: int
    method: str
    kl: float
    excluded: int
    M: int
    error: str | None = None

    def csv_row(self) -> str:
        return f"{self.day},{self.method},{format_float(self.kl)},{self.excluded},{self.M}"


def kl_experiment(models: Mapping[str, object], X0, days: Sequence[int] = range(1, 11),
                  truth=None) -> list[KlReport]:
    """Propagate the ensemble ``X0`` through the truth and each model and score each day.

    The model cloud is p and supplies the evaluation points; the truth cloud
    is q.  Diverged model members are excluded and counted; past 50% the KL
    is reported as +inf.  Failures are recorded per report, never raised.
    """
    truth = truth or TruthModel()
    X0 = np.asarray(X0, dtype=float)
    M = len(X0)
    days = sorted(int(d) for d in days)
    times = np.array([0.0] + [d * UNITS_PER_DAY for d in days])
    truth_states, _ = truth.forecast_ensemble(X0, times)
    reports = []
    for name, model in models.items():
        try:
            if model is truth or getattr(model, "kind", None) == "truth":
                states, alive = truth_states, np.ones((len(times), M), dtype=bool)
            else:
                states, alive = model.forecast_ensemble(X0, times)
        except ChaosRomError as exc:
            log.warning("model %s failed to propagate: %s", name, exc)
            reports += [KlReport(d, name, math.nan, M, M, str(exc)) for d in days]
            continue
        for i, d in enumerate(days, start=1):
            live = alive[i]
            excluded = int(M - live.sum())
            if excluded > M / 2:
                reports.append(KlReport(d, name, math.inf, excluded, M))
                continue
            try:
                p_cloud = states[i][live]
                p = kde_fit(p_cloud)
                q = p if states is truth_states else kde_fit(truth_states[i])
                kl = kl_approx(p, q, p_cloud)
                reports.append(KlReport(d, name, kl, excluded, M))
            except (ChaosRomError, ValueError) as exc:
                reports.append(KlReport(d, name, math.nan, excluded, M, str(exc)))
    return reports


def write_kl_reports(reports: Sequence[KlReport], stream) -> None:
    stream.write(",".join(KL_COLUMNS) + "\n")
    for rep in reports:
        stream.write(rep.csv_row() + "\n")


def flow_export(model, x0, days: float, stream, obs_hours: int = HOURS_PER_OBS):
    """Forecast ``x0`` for ``days`` on a six-hour grid and write a Hovmöller CSV.

    Time is in days.  A divergence truncates the table and appends
    ``# diverged at t=<days>``.  Returns ``(rows_written, diverged_day)``.
    """
    if days <= 0:
        raise ValueError("days must be positive")
    step_days = obs_hours / 24.0
    n_obs = int(round(days / step_days))
    grid_days = step_days * np.arange(n_obs + 1)
    times = grid_days * UNITS_PER_DAY
    x0 = np.asarray(x0, dtype=float)
    diverged = None
    try:
        states = model.forecast(x0, times).states
    except DivergenceError as exc:
        states = exc.partial.states if exc.partial is not None else np.empty((0, len(x0)))
        diverged = (exc.time / UNITS_PER_DAY) if exc.time is not None else grid_days[len(states)]
    n = len(x0)
    stream.write("time," + ",".join(f"x{j + 1}" for j in range(n)) + "\n")
    for t, x in zip(grid_days, states):
        stream.write(format_float(t) + "," + ",".join(format_float(v) for v in x) + "\n")
    if diverged is not None:
        stream.write(f"# diverged at t={format_float(diverged)}\n")
    return len(states), diverged
