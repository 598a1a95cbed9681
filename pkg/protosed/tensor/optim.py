from typing import Dict

import numpy as np

from protosed.tensor.params import ParamStore


class Adam:
    """Adam with bias correction; the learning rate may be changed between steps"""

    def __init__(
        self,
        params: ParamStore,
        lr: float = 0.001,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m: Dict[str, np.ndarray] = {name: np.zeros_like(p.data, dtype=np.float64) for name, p in params.items()}
        self._v: Dict[str, np.ndarray] = {name: np.zeros_like(p.data, dtype=np.float64) for name, p in params.items()}

    def step(self):
        self.step_count += 1
        correction1 = 1 - self.beta1 ** self.step_count
        correction2 = 1 - self.beta2 ** self.step_count
        for name, param in self.params.items():
            grad = np.zeros_like(param.data, dtype=np.float64) if param.grad is None else param.grad.astype(np.float64)
            self._m[name] = self.beta1 * self._m[name] + (1 - self.beta1) * grad
            self._v[name] = self.beta2 * self._v[name] + (1 - self.beta2) * grad * grad
            update = self.lr * (self._m[name] / correction1) / (np.sqrt(self._v[name] / correction2) + self.eps)
            param.data = (param.data - update).astype(param.dtype)

    def zero_grad(self):
        self.params.zero_grad()
