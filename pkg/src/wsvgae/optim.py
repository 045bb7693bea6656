"""Adam optimizer with per-matrix state, aware of shared weight buffers.

Parameters are a name -> array mapping (see ``EncoderParams.named_weights``);
a weight matrix shared between towers appears once, so it carries exactly
one pair of moment buffers and receives its pre-summed gradient.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np

__all__ = ["Adam", "NonFiniteGradientError"]


class NonFiniteGradientError(RuntimeError):
    """Raised when a gradient goes non-finite; reports the step index."""

    def __init__(self, name: str, step: int):
        super().__init__(f"non-finite gradient for {name!r} at step {step}")
        self.name = name
        self.step = step


class Adam:
    """Standard Adam with bias correction; updates parameters in place."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray]) -> None:
        """One update: m, v moment tracking plus bias-corrected step.

        Mutates the arrays in ``params``; raises NonFiniteGradientError
        (with the 1-based step index) if any gradient entry is not finite.
        """
        self.t += 1
        for name, w in params.items():
            g = grads[name]
            if g.shape != w.shape:
                raise ValueError(f"gradient shape mismatch for {name!r}")
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradientError(name, self.t)
            m = self.m.get(name)
            if m is None:
                m = self.m[name] = np.zeros_like(w)
                self.v[name] = np.zeros_like(w)
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / (1.0 - self.beta1**self.t)
            v_hat = v / (1.0 - self.beta2**self.t)
            w -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
