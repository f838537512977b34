from __future__ import annotations

import numpy as np

from .autodiff import Tensor


class Adam:
    """Adaptive-moment SGD over a fixed, named parameter list."""

    def __init__(self, named_params: list[tuple[str, Tensor]], lr: float = 1e-3,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8, clip: float | None = 5.0):
        self.named = list(named_params)
        self.lr, self.betas, self.eps, self.clip = lr, betas, eps, clip
        self.step_count = 0
        self.m = {name: np.zeros_like(p.data) for name, p in self.named}
        self.v = {name: np.zeros_like(p.data) for name, p in self.named}

    def zero_grad(self) -> None:
        for _, p in self.named:
            p.zero_grad()

    def step(self) -> None:
        b1, b2 = self.betas
        self.step_count += 1
        scale = 1.0
        if self.clip is not None:
            norm = np.sqrt(sum(float((p.grad * p.grad).sum()) for _, p in self.named))
            if norm > self.clip:
                scale = self.clip / norm
        c1 = 1.0 - b1 ** self.step_count
        c2 = 1.0 - b2 ** self.step_count
        for name, p in self.named:
            g = p.grad * scale
            self.m[name] = b1 * self.m[name] + (1 - b1) * g
            self.v[name] = b2 * self.v[name] + (1 - b2) * g * g
            p.data = p.data - self.lr * (self.m[name] / c1) / (np.sqrt(self.v[name] / c2) + self.eps)

    def state_dict(self, prefix: str = "opt.") -> dict[str, np.ndarray]:
        state = {f"{prefix}step": np.array([float(self.step_count)])}
        for name, _ in self.named:
            state[f"{prefix}m.{name}"] = self.m[name].copy()
            state[f"{prefix}v.{name}"] = self.v[name].copy()
        return state

    def load_state_dict(self, state: dict[str, np.ndarray], prefix: str = "opt.") -> None:
        self.step_count = int(state[f"{prefix}step"][0])
        for name, _ in self.named:
            self.m[name] = np.array(state[f"{prefix}m.{name}"], dtype=np.float64)
            self.v[name] = np.array(state[f"{prefix}v.{name}"], dtype=np.float64)
