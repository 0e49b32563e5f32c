"""Explicit trapezoidal integration with an embedded Euler error estimate.

Every routine takes an optional projection ``proj`` that is applied to both
the trapezoidal and the embedded solution after each internal step, which
keeps constrained states on their manifold (weak preservation).  States may
be a single vector ``(d,)`` or a batch ``(m, d)``; ``f`` and ``proj`` must
act row-wise on batches.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ChaosRomError, ConfigError, DivergenceError, NonConvergenceError

VectorField = Callable[[np.ndarray], np.ndarray]
Projection = Optional[Callable[[np.ndarray], np.ndarray]]

SAFETY = 0.9
FAC_MIN = 0.2
FAC_MAX = 5.0
# latent norm beyond which a forecast is declared divergent
BLOWUP = 1e8


@dataclass(frozen=True)
class StepResult:
    u_next: np.ndarray
    u_embedded: np.ndarray
    error_estimate: float


@dataclass(frozen=True)
class SolverConfig:
    abs_tol: float = 1e-6
    rel_tol: float = 1e-6
    h_init: float = 1e-3
    h_min: float = 1e-12
    h_max: float = 0.05
    max_steps: int = 1_000_000

    def __post_init__(self):
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ConfigError("tolerances must be positive")
        if not (0 < self.h_min <= self.h_init <= self.h_max):
            raise ConfigError("require 0 < h_min <= h_init <= h_max")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be >= 1")


def _identity(u):
    return u


def _eval(f, u):
    k = np.asarray(f(u), dtype=float)
    if not np.all(np.isfinite(k)):
        raise DivergenceError("vector field returned a non-finite value", state=np.array(u))
    return k


def trap_step(f: VectorField, u, h: float, proj: Projection = None) -> StepResult:
    """One explicit trapezoidal step with its embedded Euler companion."""
    u = np.asarray(u, dtype=float)
    P = proj or _identity
    k1 = h * _eval(f, u)
    k2 = h * _eval(f, u + k1)
    u_next = P(u + 0.5 * (k1 + k2))
    u_emb = P(u + k1)
    return StepResult(u_next, u_emb, float(np.linalg.norm(u_next - u_emb)))


def _scaled_error(u, res: StepResult, cfg: SolverConfig):
    """Per-row RMS of the embedded difference in units of the local tolerance."""
    scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(u), np.abs(res.u_next))
    ratio = (res.u_next - res.u_embedded) / scale
    return np.sqrt(np.mean(ratio * ratio, axis=-1))


def _next_h(h, err):
    if err == 0.0:
        return h * FAC_MAX
    return h * min(FAC_MAX, max(FAC_MIN, SAFETY * err ** -0.5))


def _march(f, u, t0, t1, h, cfg, proj, blowup=None):
    """Adaptive march from t0 to t1. Returns (u(t1), proposed next h)."""
    t = t0
    steps = 0
    h = min(h, cfg.h_max)
    while t < t1:
        if steps >= cfg.max_steps:
            raise NonConvergenceError(f"exceeded max_steps={cfg.max_steps}", time=t)
        h_try = min(h, t1 - t)
        last = h_try == t1 - t
        try:
            res = trap_step(f, u, h_try, proj)
        except DivergenceError as exc:
            exc.time = t
            raise
        err = float(np.max(_scaled_error(u, res, cfg)))
        steps += 1
        if not np.isfinite(err):
            raise DivergenceError("non-finite step", state=res.u_next, time=t)
        if err <= 1.0:
            u = res.u_next
            if blowup is not None and np.max(np.linalg.norm(u, axis=-1)) > blowup:
                raise DivergenceError(f"state norm exceeded {blowup:g}", state=u, time=t)
            t = t1 if last else t + h_try
            # a truncated final step should not shrink the next proposal
            h = max(h, _next_h(h_try, err)) if last else _next_h(h_try, err)
            h = min(h, cfg.h_max)
        else:
            h = _next_h(h_try, err)
            if h < cfg.h_min:
                raise NonConvergenceError(f"step size fell below h_min at t={t:.6g}", time=t)
    return u, h


def integrate_adaptive(f: VectorField, u0, t0: float, t1: float,
                       cfg: SolverConfig | None = None, proj: Projection = None) -> np.ndarray:
    """Solve du/dt = f(u) from t0 to t1 with error-controlled steps."""
    if not t1 > t0:
        raise ConfigError("t1 must exceed t0")
    cfg = cfg or SolverConfig()
    u, _ = _march(f, np.asarray(u0, dtype=float), t0, t1, cfg.h_init, cfg, proj)
    return u


def integrate_path(f: VectorField, u0, times, cfg: SolverConfig | None = None,
                   proj: Projection = None, blowup: float | None = None) -> np.ndarray:
    """Adaptive solution observed at every entry of ``times``; row 0 is ``u0``.

    The proposed step size carries over between observation intervals.  With
    ``blowup`` set, a state whose norm exceeds it counts as divergence.  On
    failure the raised error's ``partial`` holds the rows computed so far.
    """
    cfg = cfg or SolverConfig()
    times = np.asarray(times, dtype=float)
    u = np.asarray(u0, dtype=float)
    out = [u]
    h = cfg.h_init
    for a, b in zip(times[:-1], times[1:]):
        try:
            u, h = _march(f, u, a, b, h, cfg, proj, blowup)
        except (DivergenceError, NonConvergenceError) as exc:
            exc.partial = np.array(out)
            raise
        out.append(u)
    return np.array(out)


def integrate_fixed(f: VectorField, u0, n_substeps: int, h: float,
                    proj: Projection = None, return_path: bool = False):
    """``n_substeps`` constant-size trapezoidal steps (the training path)."""
    if n_substeps < 1 or h <= 0:
        raise ConfigError("need n_substeps >= 1 and h > 0")
    u = np.asarray(u0, dtype=float)
    path = [u]
    for _ in range(n_substeps):
        u = trap_step(f, u, h, proj).u_next
        path.append(u)
    return np.array(path) if return_path else u


def integrate_ensemble(f: VectorField, U0, times, cfg: SolverConfig | None = None,
                       proj: Projection = None, blowup: float = BLOWUP):
    """Adaptive march of a batch of states, each row with its own step size.

    Rows are stepped together for vectorised evaluation of ``f`` but accept,
    reject and resize independently, so each row follows the same sequence of
    steps as a lone ``integrate_path`` call.  A row dies when its state turns
    non-finite, its norm exceeds ``blowup``, its step size falls below
    ``h_min`` or it exhausts ``max_steps``.  Returns ``(states, alive)`` of
    shapes ``(T, m, d)`` and ``(T, m)``; dead rows hold NaN from then on.
    """
    cfg = cfg or SolverConfig()
    times = np.asarray(times, dtype=float)
    U = np.array(U0, dtype=float)
    m = U.shape[0]
    alive = np.all(np.isfinite(U), axis=1)
    states = np.full((len(times),) + U.shape, np.nan)
    live = np.zeros((len(times), m), dtype=bool)
    states[0, alive] = U[alive]
    live[0] = alive
    h = np.full(m, min(cfg.h_init, cfg.h_max))
    steps = np.zeros(m, dtype=int)
    for i in range(1, len(times)):
        t1 = times[i]
        t = np.full(m, times[i - 1])
        while True:
            idx = np.flatnonzero(alive & (t < t1))
            if idx.size == 0:
                break
            u = U[idx]
            remaining = t1 - t[idx]
            h_try = np.minimum(h[idx], remaining)
            last = h_try == remaining
            hh = h_try[:, None]
            with np.errstate(all="ignore"):
                k1 = hh * f(u)
                k2 = hh * f(u + k1)
                w = u + 0.5 * (k1 + k2)
                e = u + k1
                if proj is not None:
                    w, e = _safe_proj(proj, w), _safe_proj(proj, e)
                scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(u), np.abs(w))
                err = np.sqrt(np.mean(((w - e) / scale) ** 2, axis=1))
                fac = np.where(err == 0.0, FAC_MAX,
                               np.clip(SAFETY * err ** -0.5, FAC_MIN, FAC_MAX))
            steps[idx] += 1
            bad = ~np.isfinite(err)
            ok = ~bad & (err <= 1.0)
            h_new = h_try * fac
            # accepted rows
            acc = idx[ok]
            U[acc] = w[ok]
            t[acc] = np.where(last[ok], t1, t[acc] + h_try[ok])
            grown = np.where(last[ok], np.maximum(h[acc], h_new[ok]), h_new[ok])
            h[acc] = np.minimum(grown, cfg.h_max)
            # rejected rows
            rej = ~bad & ~ok
            h[idx[rej]] = h_new[rej]
            with np.errstate(invalid="ignore"):
                too_big = ok & (np.linalg.norm(w, axis=1) > blowup)
            dead = bad | too_big | (rej & (h_new < cfg.h_min)) | (steps[idx] >= cfg.max_steps)
            alive[idx[dead]] = False
        states[i, alive] = U[alive]
        live[i] = alive
    return states, live


def _safe_proj(proj, w):
    """Row-wise projection that leaves NaN in rows it cannot project."""
    try:
        return proj(w)
    except ChaosRomError:
        out = np.full_like(w, np.nan)
        for j, row in enumerate(w):
            try:
                out[j] = proj(row)
            except ChaosRomError:
                pass
        return out
