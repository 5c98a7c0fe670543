"""Bias-corrected Adam over a parameter dict."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    # moments for all parameters, flattened in sorted-key order
    m: np.ndarray | None = field(default=None, repr=False)
    v: np.ndarray | None = field(default=None, repr=False)


def adam_step(params: dict, grads: dict, state: AdamState) -> tuple[dict, AdamState]:
    """Update ``params`` in place and return ``(params, state)``."""
    keys = sorted(params)
    if sorted(grads) != keys:
        raise ValueError(f"gradient keys {sorted(grads)} != parameter keys {keys}")
    for k in keys:
        if grads[k].shape != params[k].shape:
            raise ValueError(f"shape mismatch for {k}: grad {grads[k].shape}, param {params[k].shape}")
    g = np.concatenate([grads[k].ravel() for k in keys])
    if state.m is None:
        state.m = np.zeros_like(g)
        state.v = np.zeros_like(g)
    elif state.m.shape != g.shape:
        raise ValueError("shape mismatch: optimizer state does not match parameters")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    state.m *= b1
    state.m += (1.0 - b1) * g
    state.v *= b2
    state.v += (1.0 - b2) * (g * g)
    m_hat = state.m / (1.0 - b1**state.t)
    v_hat = state.v / (1.0 - b2**state.t)
    step = state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    off = 0
    for k in keys:
        p = params[k]
        p -= step[off : off + p.size].reshape(p.shape)
        off += p.size
    return params, state
