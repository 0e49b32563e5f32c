"""Autoencoder ROMs: the plain AE and its sphere-constrained variant (SyCo-AE).

Encoder, decoder and latent vector field are each a one-hidden-layer GELU
network.  In the constrained variant the encoder output and every internal
integrator step are projected onto the unit sphere, so latent states can
never leave it.

Training integrates the latent dynamics with a fixed number of projected
trapezoidal substeps per data interval and back-propagates through that
fixed composition by hand; forecasting uses the adaptive integrator.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .dynamics import Trajectory
from .errors import (ConfigError, DegenerateProjectionError, DivergenceError,
                     NonConvergenceError)
from .nn import (AdamState, CyclicLrSchedule, MlpParams, adam_step, cyclic_lr, gelu,
                 init_mlp, mlp_backward, mlp_forward)
from .ode import BLOWUP, SolverConfig, integrate_ensemble, integrate_fixed, integrate_path

log = logging.getLogger(__name__)

L96_LLE = 1.6852
PROJECTION_FLOOR = 1e-12
LOSS_COLUMNS = ("epoch", "lr", "loss_total", "loss_ae", "loss_rinv", "loss_full", "loss_latent")


# --- the spherical constraint ---------------------------------------------

def sphere_constraint(u) -> np.ndarray:
    """g(u) = ||u||_2 - 1."""
    return np.linalg.norm(np.asarray(u, dtype=float), axis=-1) - 1.0


def sphere_project(u) -> np.ndarray:
    """Closest point on the unit sphere, row-wise for batches."""
    u = np.asarray(u, dtype=float)
    norm = np.linalg.norm(u, axis=-1, keepdims=True)
    if np.any(norm < PROJECTION_FLOOR):
        raise DegenerateProjectionError("cannot project a vector of norm < 1e-12 onto the sphere")
    return u / norm


def sphere_project_vjp(w, g) -> np.ndarray:
    """Pull ``g`` back through u -> u/||u|| at ``w``: (g - u (u.g)) / ||w||."""
    norm = np.linalg.norm(w, axis=-1, keepdims=True)
    unit = w / norm
    return (g - unit * np.sum(unit * g, axis=-1, keepdims=True)) / norm


# --- model ----------------------------------------------------------------

@dataclass
class TrainConfig:
    epochs: int = 1000
    rollout: int = 1
    substeps_per_interval: int = 5
    beta1: float = 0.9
    beta2: float = 0.95
    schedule: CyclicLrSchedule = field(default_factory=CyclicLrSchedule)
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.rollout < 1 or self.substeps_per_interval < 1:
            raise ConfigError("epochs, rollout and substeps_per_interval must be >= 1")


@dataclass
class NeuralRom:
    encoder: MlpParams
    decoder: MlpParams
    dynamics: MlpParams
    constrained: bool
    lam: float = 0.0
    omega: float = 100.0
    upsilon: float = 1.0
    substeps: int = 5
    solver: SolverConfig | None = None

    def __post_init__(self):
        n, r = self.encoder.d_in, self.encoder.d_out
        if (self.decoder.d_in, self.decoder.d_out) != (r, n) or \
                (self.dynamics.d_in, self.dynamics.d_out) != (r, r):
            raise ConfigError("encoder n->r, decoder r->n and dynamics r->r shapes disagree")
        if min(self.lam, self.omega, self.upsilon) < 0:
            raise ConfigError("loss weights must be nonnegative")

    @property
    def kind(self):
        return "syco" if self.constrained else "ae"

    @property
    def r(self):
        return self.encoder.d_out

    @property
    def n(self):
        return self.encoder.d_in

    @property
    def proj(self):
        return sphere_project if self.constrained else None

    def networks(self):
        return [self.encoder, self.decoder, self.dynamics]

    def flat(self):
        return np.concatenate([p.flat() for p in self.networks()])

    def with_flat(self, vec) -> "NeuralRom":
        nets, i = [], 0
        for p in self.networks():
            nets.append(p.with_flat(vec[i:i + p.size]))
            i += p.size
        return NeuralRom(*nets, self.constrained, self.lam, self.omega, self.upsilon,
                         self.substeps, self.solver)

    def latent_rhs(self, u):
        return mlp_forward(self.dynamics, u)

    def encode(self, x):
        return encode(self, x)

    def decode(self, u):
        return decode(self, u)

    def forecast(self, x0, times) -> Trajectory:
        return _forecast_at(self, x0, np.asarray(times, dtype=float))

    def forecast_ensemble(self, X0, times):
        U, alive = integrate_ensemble(self.latent_rhs, self.encode(X0), times,
                                      self.solver, self.proj)
        with np.errstate(all="ignore"):
            X = mlp_forward(self.decoder, np.nan_to_num(U))
        X[~alive] = np.nan
        return X, alive & np.all(np.isfinite(X), axis=2)


def init_neural_rom(n: int, r: int, hidden: int, constrained: bool, seed: int = 0,
                    lam: float = 0.0, omega: float = 100.0, upsilon: float = 1.0,
                    substeps: int = 5, solver: SolverConfig | None = None) -> NeuralRom:
    rng = np.random.default_rng(seed)
    return NeuralRom(init_mlp(n, hidden, r, rng), init_mlp(r, hidden, n, rng),
                     init_mlp(r, hidden, r, rng), constrained, lam, omega, upsilon,
                     substeps, solver)


def encode(model: NeuralRom, x) -> np.ndarray:
    u = mlp_forward(model.encoder, x)
    return sphere_project(u) if model.constrained else u


def decode(model: NeuralRom, u) -> np.ndarray:
    return mlp_forward(model.decoder, u)


def advance(model: NeuralRom, u0, dt: float, mode: str = "adaptive") -> np.ndarray:
    u0 = np.asarray(u0, dtype=float)
    if model.constrained and np.any(np.abs(sphere_constraint(u0)) > 1e-9):
        raise ConfigError("constrained models must start on the unit sphere")
    if mode == "fixed":
        return integrate_fixed(model.latent_rhs, u0, model.substeps, dt / model.substeps, model.proj)
    if mode == "adaptive":
        return integrate_path(model.latent_rhs, u0, [0.0, dt], model.solver, model.proj)[-1]
    raise ConfigError(f"unknown integration mode {mode!r}")


# --- loss and its gradient -------------------------------------------------

def _stack(trajs: Sequence[Trajectory], rollout: int | None = None):
    """Batch trajectories into ``X`` (B, K+1, n) and interval lengths (K,)."""
    lengths = {len(tr) for tr in trajs}
    if len(lengths) != 1:
        raise ConfigError("all trajectories must have the same length")
    K1 = lengths.pop()
    if K1 < 2 or (rollout is not None and K1 != rollout + 1):
        raise ConfigError(f"expected trajectories of rollout+1 points, got {K1}")
    dts = np.diff(trajs[0].times)
    for tr in trajs:
        if not np.allclose(np.diff(tr.times), dts, rtol=1e-9, atol=1e-12):
            raise ConfigError("trajectories must share the same sampling intervals")
    return np.stack([tr.states for tr in trajs]), dts


def time_weights(lam: float, dts) -> np.ndarray:
    """exp(-2 lambda (t_k - t_0)) for k = 1..K."""
    return np.exp(-2.0 * lam * np.cumsum(dts))


def loss_and_grad(model: NeuralRom, X, dts, need_grad: bool = True):
    """Mean rollout loss over the batch, its four parts and the parameter gradient.

    The gradient is returned as a flat vector ordered like ``model.flat()``.
    """
    X = np.asarray(X, dtype=float)
    B, K1, n = X.shape
    K, r, s = K1 - 1, model.r, model.substeps
    c = model.constrained
    enc, dec, dyn = model.encoder, model.decoder, model.dynamics

    with np.errstate(over="ignore", invalid="ignore"):
        Xf = X.reshape(-1, n)
        Uh = mlp_forward(enc, Xf)
        U = sphere_project(Uh) if c else Uh
        Xt = mlp_forward(dec, U)
        Uh2 = mlp_forward(enc, Xt)
        U2 = sphere_project(Uh2) if c else Uh2
        r_ae = Xf - Xt
        r_ri = U - U2

        U3 = U.reshape(B, K1, r)
        u = U3[:, 0]
        tape, ends = [], []
        for k in range(K):
            h = dts[k] / s
            for _ in range(s):
                k1 = h * mlp_forward(dyn, u)
                v = u + k1
                w = u + 0.5 * (k1 + h * mlp_forward(dyn, v))
                tape.append((u, v, w, h))
                u = sphere_project(w) if c else w
            ends.append(u)
        Up = np.stack(ends, axis=1)
        Xp = mlp_forward(dec, Up.reshape(-1, r)).reshape(B, K, n)
        wt = time_weights(model.lam, dts)[None, :, None]
        r_full = X[:, 1:] - Xp
        r_lat = U3[:, 1:] - Up

        parts = {
            "ae": np.sum(r_ae ** 2) / B,
            "rinv": model.omega * np.sum(r_ri ** 2) / B,
            "full": np.sum(wt * r_full ** 2) / B,
            "latent": model.upsilon * np.sum(wt * r_lat ** 2) / B,
        }
    total = sum(parts.values())
    if not np.isfinite(total):
        raise DivergenceError("rollout loss is not finite")
    if not need_grad:
        return total, parts, None

    g_Xt = -2.0 * r_ae / B
    g_U = 2.0 * model.omega * r_ri / B
    g_Uh2 = sphere_project_vjp(Uh2, -g_U) if c else -g_U
    g_enc, g_x = mlp_backward(enc, Xt, g_Uh2)
    g_Xt += g_x
    g_dec, g_u = mlp_backward(dec, U, g_Xt)
    g_U += g_u

    g_Xp = (-2.0 * wt * r_full / B).reshape(-1, n)
    g_d2, g_up = mlp_backward(dec, Up.reshape(-1, r), g_Xp)
    g_dec += g_d2
    lat = 2.0 * model.upsilon * wt * r_lat / B
    g_Up = g_up.reshape(B, K, r) - lat
    g_U3 = g_U.reshape(B, K1, r).copy()
    g_U3[:, 1:] += lat

    g_dyn = dyn.zeros_like()
    ubar = np.zeros((B, r))
    i = len(tape)
    for k in reversed(range(K)):
        ubar = ubar + g_Up[:, k]
        for _ in range(s):
            i -= 1
            u, v, w, h = tape[i]
            wbar = sphere_project_vjp(w, ubar) if c else ubar
            gp, vbar = mlp_backward(dyn, v, 0.5 * h * wbar)
            g_dyn += gp
            gp, ub = mlp_backward(dyn, u, h * (0.5 * wbar + vbar))
            g_dyn += gp
            ubar = wbar + vbar + ub
    g_U3[:, 0] += ubar

    g_U = g_U3.reshape(-1, r)
    g_Uh = sphere_project_vjp(Uh, g_U) if c else g_U
    g_e2, _ = mlp_backward(enc, Xf, g_Uh)
    g_enc += g_e2
    grad = np.concatenate([g_enc.flat(), g_dec.flat(), g_dyn.flat()])
    return total, parts, grad


def rollout_loss(model: NeuralRom, traj: Trajectory, cfg: TrainConfig | None = None) -> float:
    """Autoencoder, right-inverse, full-space and latent rollout errors for one trajectory."""
    X, dts = _stack([traj], cfg.rollout if cfg else None)
    if cfg is not None and cfg.substeps_per_interval != model.substeps:
        model = replace(model, substeps=cfg.substeps_per_interval)
    return loss_and_grad(model, X, dts, need_grad=False)[0]


# --- training ---------------------------------------------------------------

def train(dataset: Sequence[Trajectory], cfg: TrainConfig, r: int, hidden: int,
          constrained: bool, lam: float = 0.0, omega: float = 100.0, upsilon: float = 1.0,
          solver: SolverConfig | None = None, init: NeuralRom | None = None):
    """Full-batch ADAM on the mean rollout loss with a cyclic learning rate.

    Returns ``(model, history)``; ``history`` holds one dict per epoch with
    the loss evaluated before that epoch's update.
    """
    X, dts = _stack(dataset, cfg.rollout)
    n = X.shape[2]
    model = init or init_neural_rom(n, r, hidden, constrained, cfg.seed, lam, omega, upsilon,
                                    cfg.substeps_per_interval, solver)
    theta = model.flat()
    state = AdamState.zeros(theta.size, cfg.beta1, cfg.beta2)
    history = []
    for epoch in range(cfg.epochs):
        lr = cyclic_lr(cfg.schedule, epoch)
        try:
            total, parts, grad = loss_and_grad(model, X, dts)
        except (DivergenceError, DegenerateProjectionError) as exc:
            raise DivergenceError(f"training diverged at epoch {epoch}: {exc}") from exc
        history.append({"epoch": epoch, "lr": lr, "loss_total": total,
                        "loss_ae": parts["ae"], "loss_rinv": parts["rinv"],
                        "loss_full": parts["full"], "loss_latent": parts["latent"]})
        if epoch % 50 == 0:
            log.info("epoch %d lr %.3g loss %.6g", epoch, lr, total)
        with np.errstate(over="ignore", invalid="ignore"):
            theta, state = adam_step(state, theta, grad, lr)
        if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(state.v))):
            raise DivergenceError(f"training diverged at epoch {epoch}: "
                                  "parameters or optimiser state overflowed")
        model = model.with_flat(theta)
    return model, history


# --- forecasting -----------------------------------------------------------

def latent_path(model: NeuralRom, u0, times) -> np.ndarray:
    """Latent states at ``times`` from ``u0``, adaptive steps, projected iff constrained."""
    return integrate_path(model.latent_rhs, u0, np.asarray(times, dtype=float),
                          model.solver, model.proj, BLOWUP)


def _forecast_at(model: NeuralRom, x0, times) -> Trajectory:
    u0 = encode(model, x0)
    try:
        U = latent_path(model, u0, times)
    except (DivergenceError, NonConvergenceError) as exc:
        part = exc.partial
        partial = Trajectory(times[:len(part)], decode(model, part)) if part is not None else None
        raise DivergenceError(f"{model.kind} forecast diverged near t={exc.time}",
                              time=exc.time, partial=partial) from exc
    X = decode(model, U)
    if not np.all(np.isfinite(X)):
        raise DivergenceError("decoded forecast is not finite")
    return Trajectory(times, X)


def rom_forecast(model: NeuralRom, x0, horizon: float, spacing: float, t0: float = 0.0) -> Trajectory:
    """Encode once, advance adaptively between observations, decode each one."""
    if horizon <= 0 or spacing <= 0:
        raise ConfigError("horizon and spacing must be positive")
    steps = int(round(horizon / spacing))
    return _forecast_at(model, x0, t0 + spacing * np.arange(steps + 1))


def sphere_image_bound(model: NeuralRom, n_samples: int = 100_000, seed: int = 0,
                       chunk: int = 10_000) -> float:
    """Largest |decoder output| over uniformly sampled points of the unit sphere."""
    rng = np.random.default_rng(seed)
    best = 0.0
    for start in range(0, n_samples, chunk):
        m = min(chunk, n_samples - start)
        u = sphere_project(rng.standard_normal((m, model.r)))
        best = max(best, float(np.abs(decode(model, u)).max()))
    return best


def sphere_image_certificate(model: NeuralRom) -> float:
    """Guaranteed bound on |decoder output| over the whole unit sphere.

    Each hidden pre-activation ranges over b1_h +- ||A1_h||, and GELU on an
    interval is bounded by its endpoint magnitudes or its minimum value.
    """
    p = model.decoder
    radius = np.linalg.norm(p.A1, axis=1)
    lo, hi = p.b1 - radius, p.b1 + radius
    peak = np.maximum(np.abs(gelu(lo)), np.abs(gelu(hi)))
    # GELU attains its minimum, about -0.17, near z = -0.7518
    z_min = -0.751791524693564
    inside = (lo <= z_min) & (z_min <= hi)
    peak = np.where(inside, np.maximum(peak, abs(float(gelu(z_min)))), peak)
    return float(np.max(np.abs(p.b2) + np.abs(p.A2) @ peak))
