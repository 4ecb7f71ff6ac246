"""Parameter-vector optimizers for the encoder weights."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .encoder import EncoderGrads, EncoderParams

ADAM_EPS = 1e-8


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def apply(self, params: EncoderParams, grads: EncoderGrads,
              lr_scale: float = 1.0) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, g in grads.arrays().items():
            m = self.m.get(name)
            if m is None:
                m = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            v = self.v[name]
            m = self.beta1 * m + (1.0 - self.beta1) * g
            v = self.beta2 * v + (1.0 - self.beta2) * g * g
            self.m[name] = m
            self.v[name] = v
            step = (self.lr * lr_scale) * (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)
            setattr(params, name, getattr(params, name) - step)


@dataclass
class MomentumState:
    lr: float = 1e-3
    momentum: float = 0.9
    velocity: dict[str, np.ndarray] = field(default_factory=dict)

    def apply(self, params: EncoderParams, grads: EncoderGrads,
              lr_scale: float = 1.0) -> None:
        for name, g in grads.arrays().items():
            v = self.velocity.get(name)
            v = g if v is None else self.momentum * v + g
            self.velocity[name] = v
            setattr(params, name, getattr(params, name) - (self.lr * lr_scale) * v)


def cosine_lr_scale(step: int, total_steps: int) -> float:
    """Cosine decay from 1 to 0 over ``total_steps`` (no restarts)."""
    if total_steps <= 0:
        return 1.0
    frac = min(max(step / total_steps, 0.0), 1.0)
    return 0.5 * (1.0 + np.cos(np.pi * frac))
