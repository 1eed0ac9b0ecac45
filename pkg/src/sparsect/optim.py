"""Adam optimizer over named parameter dicts, and the step learning-rate rule."""

import numpy as np


class Adam:
    """Updates parameter arrays in place; moments are keyed by name."""

    def __init__(self, params, beta1=0.5, beta2=0.999, eps=1e-8):
        if not 0.0 <= beta1 < 1.0 or not 0.0 <= beta2 < 1.0:
            raise ValueError("betas must lie in [0, 1)")
        if eps <= 0:
            raise ValueError("eps must be positive")
        self.params = dict(params)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m1 = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.m2 = {k: np.zeros_like(v) for k, v in self.params.items()}

    def step(self, grads, lr):
        if set(grads) != set(self.params):
            raise ValueError("gradient names do not match parameter names")
        self.step_count += 1
        correction1 = 1.0 - self.beta1 ** self.step_count
        correction2 = 1.0 - self.beta2 ** self.step_count
        for name, param in self.params.items():
            g = grads[name]
            m1 = self.m1[name]
            m2 = self.m2[name]
            m1 *= self.beta1
            m1 += (1.0 - self.beta1) * g
            m2 *= self.beta2
            m2 += (1.0 - self.beta2) * (g * g)
            update = (m1 / correction1) / (np.sqrt(m2 / correction2) + self.eps)
            param -= (lr * update).astype(param.dtype, copy=False)


def lr_at(epoch, lr0, half_period):
    """Step schedule: lr0 halved every ``half_period`` epochs."""
    if half_period < 1:
        raise ValueError("half_period must be positive")
    return lr0 * 0.5 ** (epoch // half_period)
