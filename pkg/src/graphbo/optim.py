"""First-order optimiser shared by the surrogate trainer and the GP fit."""

import numpy as np


class Adam:
    """Adam with bias correction; one moment pair per parameter array."""

    def __init__(self, shapes, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0

    def copy(self):
        other = Adam([], self.beta1, self.beta2, self.eps)
        other.m = [a.copy() for a in self.m]
        other.v = [a.copy() for a in self.v]
        other.t = self.t
        return other

    def step(self, params, grads, lrs):
        """Return updated copies of ``params``; ``lrs`` gives one rate per array."""
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        out = []
        for k, (p, g, lr) in enumerate(zip(params, grads, lrs)):
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            out.append(p - lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps))
        return out
