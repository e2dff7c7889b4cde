"""Adam optimizer over a flat list of parameter arrays."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    """First/second moment accumulators plus the step-decayed learning rate.

    decay_every = 0 disables the schedule; otherwise lr is multiplied by
    decay_factor every decay_every steps (exactly at the step boundary).
    """

    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    decay_every: int = 0
    decay_factor: float = 0.5

    @classmethod
    def for_params(cls, params: list, lr: float, decay_every: int = 0,
                   decay_factor: float = 0.5) -> "AdamState":
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            lr=lr, decay_every=decay_every, decay_factor=decay_factor,
        )


def adam_step(state: AdamState, params: list, grads: list):
    """Standard Adam update, in place on params; returns (params, state)."""
    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    for i, (p, g) in enumerate(zip(params, grads)):
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * (g * g)
        p -= state.lr * (state.m[i] / bc1) / (np.sqrt(state.v[i] / bc2) + state.eps)
    if state.decay_every and state.step % state.decay_every == 0:
        state.lr *= state.decay_factor
    return params, state
