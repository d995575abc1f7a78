"""Adam with bias correction over dicts of named parameter arrays."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0

    @classmethod
    def for_params(cls, params: dict) -> "AdamState":
        return cls(
            m={k: np.zeros_like(np.asarray(p, dtype=float)) for k, p in params.items()},
            v={k: np.zeros_like(np.asarray(p, dtype=float)) for k, p in params.items()},
        )


def adam_step(
    params: dict,
    grads: dict,
    state: AdamState,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
):
    """One bias-corrected Adam update; returns (new params, new state)."""
    if params.keys() != grads.keys():
        raise ValueError(f"parameter/gradient keys differ: {sorted(params)} vs {sorted(grads)}")
    t = state.step + 1
    new_params, m, v = {}, {}, {}
    for k, p in params.items():
        g = np.asarray(grads[k], dtype=float)
        m[k] = beta1 * state.m[k] + (1.0 - beta1) * g
        v[k] = beta2 * state.v[k] + (1.0 - beta2) * g * g
        m_hat = m[k] / (1.0 - beta1**t)
        v_hat = v[k] / (1.0 - beta2**t)
        new_params[k] = np.asarray(p, dtype=float) - lr * m_hat / (np.sqrt(v_hat) + eps)
    return new_params, AdamState(m, v, t)
