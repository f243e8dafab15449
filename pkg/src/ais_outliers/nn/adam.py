"""Adam optimizer with bias correction.

m_t = b1*m + (1-b1)*g         v_t = b2*v + (1-b2)*g^2
m^ = m_t/(1-b1^t)             v^ = v_t/(1-b2^t)
p -= alpha * m^ / (sqrt(v^) + eps)

With epsilon outside the square root, the first step reduces to
-alpha * g / (|g| + eps).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError

DEFAULT_ALPHA = 1e-3
DEFAULT_BETA1 = 0.9
DEFAULT_BETA2 = 0.999
DEFAULT_EPS = 1e-8


@dataclass
class AdamState:
    """First/second moment accumulators mirroring the parameter dict."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    alpha: float = DEFAULT_ALPHA
    beta1: float = DEFAULT_BETA1
    beta2: float = DEFAULT_BETA2
    eps: float = DEFAULT_EPS

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray], alpha: float = DEFAULT_ALPHA,
                   beta1: float = DEFAULT_BETA1, beta2: float = DEFAULT_BETA2,
                   eps: float = DEFAULT_EPS) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
            alpha=alpha, beta1=beta1, beta2=beta2, eps=eps,
        )


def adam_update(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
                state: AdamState) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam step. Parameter arrays are updated in place;
    the (params, state) pair is returned for chaining."""
    if set(params) != set(grads):
        raise ShapeError("parameter and gradient dictionaries disagree")
    state.step += 1
    t = state.step
    correction1 = 1.0 - state.beta1 ** t
    correction2 = 1.0 - state.beta2 ** t
    for key, p in params.items():
        g = grads[key]
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {key} has shape {g.shape}, expected {p.shape}")
        m = state.m[key]
        v = state.v[key]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        m_hat = m / correction1
        v_hat = v / correction2
        p -= state.alpha * m_hat / (np.sqrt(v_hat) + state.eps)
    return params, state
