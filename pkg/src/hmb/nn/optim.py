"""Adam with bias correction, operating in place on parameter arrays."""

import numpy as np

__all__ = ["adam_update", "Adam"]


def adam_update(value, grad, m, v, t, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One Adam step, mutating value, m and v in place.

    t is the 1-based step count already advanced for this update.
    """
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    value -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(value.dtype)


class Adam:
    """Keeps per-parameter moment state keyed by parameter name."""

    def __init__(self, lr=5e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = {}
        self._v = {}

    def step(self, params):
        """Apply one update to every (name, value, grad) triple.

        Raises FloatingPointError naming the offending tensor if its
        gradient contains NaN or inf.
        """
        params = list(params)
        for name, _, grad in params:
            if not np.all(np.isfinite(grad)):
                raise FloatingPointError(f"non-finite gradient in {name}")
        self.t += 1
        for name, value, grad in params:
            if name not in self._m:
                self._m[name] = np.zeros_like(value, dtype=np.float64)
                self._v[name] = np.zeros_like(value, dtype=np.float64)
            adam_update(value, grad.astype(np.float64), self._m[name],
                        self._v[name], self.t, self.lr, self.beta1,
                        self.beta2, self.eps)
