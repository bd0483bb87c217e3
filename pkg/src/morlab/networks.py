"""Small dense networks in float64 with hand-written reverse-mode gradients.

Everything trains through an explicit flat parameter vector so analytic
gradients can be checked against central finite differences and optimizer
state stays trivially checkpointable.  tanh hidden layers, linear output.
"""

from __future__ import annotations

import numpy as np

__all__ = ["MLP", "Adam", "GaussianPolicy", "LOG_2PI"]

LOG_2PI = float(np.log(2.0 * np.pi))


class MLP:
    """Fully-connected tanh network; forward returns a backprop cache."""

    def __init__(self, layer_sizes, rng, final_scale=1.0):
        if len(layer_sizes) < 2:
            raise ValueError("need at least input and output sizes")
        self.sizes = tuple(int(s) for s in layer_sizes)
        self.weights = []
        self.biases = []
        last = len(self.sizes) - 2
        for i, (n_in, n_out) in enumerate(zip(self.sizes, self.sizes[1:])):
            scale = np.sqrt(1.0 / n_in) * (final_scale if i == last else 1.0)
            self.weights.append(rng.normal(0.0, scale, size=(n_in, n_out)))
            self.biases.append(np.zeros(n_out))

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def get_params(self) -> np.ndarray:
        return np.concatenate([np.concatenate((w.ravel(), b))
                               for w, b in zip(self.weights, self.biases)])

    def set_params(self, flat) -> None:
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} params, "
                             f"got {flat.shape}")
        k = 0
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            self.weights[i] = flat[k:k + w.size].reshape(w.shape).copy()
            k += w.size
            self.biases[i] = flat[k:k + b.size].copy()
            k += b.size

    def forward(self, x):
        """Returns (output, cache); cache holds each layer's input."""
        h = np.asarray(x, dtype=float)
        cache = [h]
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = np.tanh(h @ w + b)
            cache.append(h)
        out = h @ self.weights[-1] + self.biases[-1]
        return out, cache

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, cache, grad_out) -> np.ndarray:
        """Flat parameter gradient for d(loss)/d(output) = grad_out.

        Batched over leading axes of the cached activations.
        """
        g = np.asarray(grad_out, dtype=float)
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.biases)
        for i in range(len(self.weights) - 1, -1, -1):
            a = cache[i]
            g2 = g.reshape(-1, g.shape[-1])
            grads_w[i] = a.reshape(-1, a.shape[-1]).T @ g2
            grads_b[i] = g2.sum(axis=0)
            if i > 0:
                g = (g @ self.weights[i].T) * (1.0 - a * a)
        return np.concatenate([np.concatenate((gw.ravel(), gb))
                               for gw, gb in zip(grads_w, grads_b)])


class Adam:
    """Adam on a flat parameter vector with bias-corrected moments."""

    def __init__(self, n_params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)
        self.t = 0

    def step(self, params, grad) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class GaussianPolicy:
    """Diagonal-Gaussian policy: MLP mean, state-independent learned std.

    The flat parameter vector is the mean network's parameters followed by
    the per-action log standard deviations.
    """

    def __init__(self, obs_dim, hidden, action_dim, rng, init_log_std=-1.0,
                 final_scale=0.01):
        self.net = MLP([obs_dim, *hidden, action_dim], rng,
                       final_scale=final_scale)
        self.log_std = np.full(action_dim, float(init_log_std))
        self.action_dim = int(action_dim)

    @property
    def n_params(self) -> int:
        return self.net.n_params + self.action_dim

    def get_params(self) -> np.ndarray:
        return np.concatenate((self.net.get_params(), self.log_std))

    def set_params(self, flat) -> None:
        flat = np.asarray(flat, dtype=float)
        self.net.set_params(flat[:self.net.n_params])
        self.log_std = flat[self.net.n_params:].copy()

    def mean(self, obs) -> np.ndarray:
        return self.net(obs)

    def sample(self, obs, rng):
        """Draw actions; returns (actions, log probabilities)."""
        mu = self.net(obs)
        std = np.exp(self.log_std)
        noise = rng.standard_normal(mu.shape)
        actions = mu + std * noise
        return actions, self._log_prob_from(mu, actions)

    def log_prob(self, obs, actions) -> np.ndarray:
        return self._log_prob_from(self.net(obs), actions)

    def _log_prob_from(self, mu, actions) -> np.ndarray:
        z = (np.asarray(actions) - mu) / np.exp(self.log_std)
        return (-0.5 * np.sum(z * z, axis=-1) - np.sum(self.log_std)
                - 0.5 * self.action_dim * LOG_2PI)
