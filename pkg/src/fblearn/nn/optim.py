"""Adam and the stepwise inverse-time learning rate schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidArgument

__all__ = ["AdamState", "adam_init", "adam_step", "TrainSchedule", "scheduled_lr"]


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(params: dict, beta1=0.9, beta2=0.999, eps=1e-8) -> AdamState:
    return AdamState(
        m={k: np.zeros_like(p) for k, p in params.items()},
        v={k: np.zeros_like(p) for k, p in params.items()},
        beta1=beta1, beta2=beta2, eps=eps,
    )


def adam_step(params: dict, grads: dict, state: AdamState, lr: float):
    """One bias-corrected Adam update.

    Parameters without an entry in ``grads`` are left untouched and keep
    their moments.  Returns new ``(params, state)``; inputs are not mutated.
    """
    step = state.step + 1
    b1, b2 = state.beta1, state.beta2
    new_params, new_m, new_v = dict(params), dict(state.m), dict(state.v)
    for name, g in grads.items():
        p = params[name]
        if g.shape != p.shape:
            raise InvalidArgument(f"gradient for {name!r} has shape {g.shape}, parameter {p.shape}")
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p)
            v = np.zeros_like(p)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** step)
        v_hat = v / (1.0 - b2 ** step)
        new_params[name] = p - lr * m_hat / (np.sqrt(v_hat) + state.eps)
        new_m[name], new_v[name] = m, v
    return new_params, AdamState(new_m, new_v, step, b1, b2, state.eps)


@dataclass(frozen=True)
class TrainSchedule:
    base_lr: float = 0.001
    decay_rate: float = 0.006
    decay_every_epochs: int = 3
    epochs: int = 30
    batch_size: int = 16
    rng_seed: int = 0

    def __post_init__(self):
        if not self.base_lr > 0:
            raise InvalidArgument(f"base_lr must be > 0, got {self.base_lr}")
        if self.decay_rate < 0:
            raise InvalidArgument(f"decay_rate must be >= 0, got {self.decay_rate}")
        if self.decay_every_epochs < 1 or self.epochs < 1 or self.batch_size < 1:
            raise InvalidArgument("decay_every_epochs, epochs and batch_size must be >= 1")


def scheduled_lr(sched: TrainSchedule, epoch: int) -> float:
    """``base_lr / (1 + decay_rate * e)`` where ``e`` is ``epoch`` rounded
    down to a multiple of ``decay_every_epochs``.  Not compounding."""
    if epoch < 0:
        raise InvalidArgument(f"epoch must be >= 0, got {epoch}")
    e = (epoch // sched.decay_every_epochs) * sched.decay_every_epochs
    return sched.base_lr / (1.0 + sched.decay_rate * e)
