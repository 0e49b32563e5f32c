"""One-hidden-layer GELU network with hand-written reverse mode, ADAM and a cyclic LR."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .errors import ConfigError, DimensionError

_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu(x):
    """Exact GELU, x * Phi(x)."""
    x = np.asarray(x, dtype=float)
    return 0.5 * x * (1.0 + erf(x / _SQRT2))


def gelu_prime(x):
    x = np.asarray(x, dtype=float)
    return 0.5 * (1.0 + erf(x / _SQRT2)) + x * _INV_SQRT_2PI * np.exp(-0.5 * x * x)


@dataclass
class MlpParams:
    """nu(x) = A2 gelu(A1 x + b1) + b2."""

    A1: np.ndarray
    b1: np.ndarray
    A2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        self.A1 = np.atleast_2d(np.asarray(self.A1, dtype=float))
        self.A2 = np.atleast_2d(np.asarray(self.A2, dtype=float))
        self.b1 = np.atleast_1d(np.asarray(self.b1, dtype=float))
        self.b2 = np.atleast_1d(np.asarray(self.b2, dtype=float))
        H = self.A1.shape[0]
        if self.b1.shape != (H,) or self.A2.shape[1] != H or self.b2.shape != (self.A2.shape[0],):
            raise DimensionError(
                f"inconsistent shapes A1{self.A1.shape} b1{self.b1.shape} "
                f"A2{self.A2.shape} b2{self.b2.shape}")

    @property
    def d_in(self):
        return self.A1.shape[1]

    @property
    def hidden(self):
        return self.A1.shape[0]

    @property
    def d_out(self):
        return self.A2.shape[0]

    def arrays(self):
        return [self.A1, self.b1, self.A2, self.b2]

    @property
    def size(self):
        return sum(a.size for a in self.arrays())

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def with_flat(self, vec) -> "MlpParams":
        parts, i = [], 0
        for a in self.arrays():
            parts.append(np.asarray(vec[i:i + a.size], dtype=float).reshape(a.shape))
            i += a.size
        return MlpParams(*parts)

    def copy(self) -> "MlpParams":
        return MlpParams(*(a.copy() for a in self.arrays()))

    def __add__(self, other: "MlpParams") -> "MlpParams":
        return MlpParams(*(a + b for a, b in zip(self.arrays(), other.arrays())))

    def __iadd__(self, other: "MlpParams"):
        for a, b in zip(self.arrays(), other.arrays()):
            a += b
        return self

    def zeros_like(self) -> "MlpParams":
        return MlpParams(*(np.zeros_like(a) for a in self.arrays()))


def init_mlp(d_in: int, hidden: int, d_out: int, rng: np.random.Generator) -> MlpParams:
    """Glorot-uniform weights, zero biases."""
    def glorot(fan_out, fan_in):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-lim, lim, size=(fan_out, fan_in))

    return MlpParams(glorot(hidden, d_in), np.zeros(hidden), glorot(d_out, hidden), np.zeros(d_out))


def _check_input(p: MlpParams, x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != p.d_in:
        raise DimensionError(f"expected input of length {p.d_in}, got {x.shape[-1]}")
    return x


def mlp_forward(p: MlpParams, x) -> np.ndarray:
    """Evaluate on a vector ``(d_in,)`` or a batch ``(m, d_in)``."""
    x = _check_input(p, x)
    return gelu(x @ p.A1.T + p.b1) @ p.A2.T + p.b2


def mlp_backward(p: MlpParams, x, upstream):
    """Gradients of ``sum(upstream * mlp_forward(p, x))``.

    Returns ``(grad_params, grad_x)``; parameter gradients are summed over
    the batch when ``x`` is two-dimensional.
    """
    x = _check_input(p, x)
    g = np.asarray(upstream, dtype=float)
    if g.shape[-1] != p.d_out or g.shape[:-1] != x.shape[:-1]:
        raise DimensionError(f"upstream shape {g.shape} does not match output")
    z = x @ p.A1.T + p.b1
    a = gelu(z)
    dz = (g @ p.A2) * gelu_prime(z)
    x2, g2, a2, dz2 = (np.atleast_2d(v) for v in (x, g, a, dz))
    grads = MlpParams(dz2.T @ x2, dz2.sum(axis=0), g2.T @ a2, g2.sum(axis=0))
    return grads, dz @ p.A1


# --- optimisation ---------------------------------------------------------

@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.95
    epsilon: float = 1e-8

    @classmethod
    def zeros(cls, size: int, beta1=0.9, beta2=0.95, epsilon=1e-8) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size), 0, beta1, beta2, epsilon)


def adam_step(state: AdamState, params, grad, lr: float):
    """One bias-corrected ADAM update. Returns ``(new_params, new_state)``."""
    params = np.asarray(params, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if params.shape != grad.shape or params.shape != state.m.shape:
        raise DimensionError("params, grad and optimiser state must have equal length")
    t = state.step_count + 1
    m = state.beta1 * state.m + (1 - state.beta1) * grad
    v = state.beta2 * state.v + (1 - state.beta2) * grad * grad
    m_hat = m / (1 - state.beta1 ** t)
    v_hat = v / (1 - state.beta2 ** t)
    new = params - lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return new, AdamState(m, v, t, state.beta1, state.beta2, state.epsilon)


@dataclass(frozen=True)
class CyclicLrSchedule:
    base_lr: float = 1e-4
    max_lr: float = 1e-2
    cycle_len: int = 100

    def __post_init__(self):
        if not (0 < self.base_lr <= self.max_lr) or self.cycle_len < 1:
            raise ConfigError("need 0 < base_lr <= max_lr and cycle_len >= 1")


def cyclic_lr(schedule: CyclicLrSchedule, iteration: int) -> float:
    """Triangular wave: base at multiples of 2*cycle_len, max halfway."""
    if iteration < 0:
        raise ConfigError("iteration must be >= 0")
    pos = (iteration % (2 * schedule.cycle_len)) / schedule.cycle_len
    return schedule.base_lr + (schedule.max_lr - schedule.base_lr) * (1.0 - abs(pos - 1.0))
