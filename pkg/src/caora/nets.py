"""Minimal dense-network engine with explicit reverse-mode gradients.

Only what the actor/critic heads need: affine layers with a ReLU or tanh
hidden nonlinearity, a cached forward pass, an exact backward pass, and an
Adam optimizer with global-norm gradient clipping. Everything is float64
numpy; batches are row-major (batch, features).
"""

from __future__ import annotations

from typing import List, Sequence, Tuple

import numpy as np

Grads = List[Tuple[np.ndarray, np.ndarray]]

_ACTIVATIONS = ("relu", "tanh")


class MlpNet:
    """Fully-connected network; hidden layers share one activation, output is linear."""

    def __init__(
        self,
        layer_dims: Sequence[int],
        activation: str = "relu",
        rng: np.random.Generator | None = None,
        out_scale: float = 1e-3,
    ) -> None:
        if len(layer_dims) < 2:
            raise ValueError("layer_dims needs at least an input and an output size")
        if any(d < 1 for d in layer_dims):
            raise ValueError(f"layer dims must be >= 1, got {layer_dims}")
        if activation not in _ACTIVATIONS:
            raise ValueError(f"activation must be one of {_ACTIVATIONS}, got {activation!r}")
        rng = rng if rng is not None else np.random.default_rng()
        self.layer_dims = tuple(int(d) for d in layer_dims)
        self.activation = activation
        self.weights: List[np.ndarray] = []
        self.biases: List[np.ndarray] = []
        n_layers = len(self.layer_dims) - 1
        for i in range(n_layers):
            fan_in, fan_out = self.layer_dims[i], self.layer_dims[i + 1]
            if i == n_layers - 1:
                # Small uniform head keeps initial outputs near zero.
                w = rng.uniform(-out_scale, out_scale, size=(fan_in, fan_out))
            elif activation == "relu":
                w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
            else:
                w = rng.normal(0.0, np.sqrt(1.0 / fan_in), size=(fan_in, fan_out))
            self.weights.append(w.astype(np.float64))
            self.biases.append(np.zeros(fan_out, dtype=np.float64))

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def _act(self, z: np.ndarray) -> np.ndarray:
        if self.activation == "relu":
            return np.maximum(z, 0.0)
        return np.tanh(z)

    def _act_grad(self, z: np.ndarray, a: np.ndarray) -> np.ndarray:
        if self.activation == "relu":
            return (z > 0.0).astype(np.float64)
        return 1.0 - a * a

    def forward(self, x: np.ndarray) -> np.ndarray:
        y, _ = self.forward_cached(x)
        return y

    def forward_cached(self, x: np.ndarray) -> Tuple[np.ndarray, dict]:
        """Forward pass returning the output and the cache backward() needs."""
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.shape[1] != self.layer_dims[0]:
            raise ValueError(
                f"input has {x.shape[1]} features, network expects {self.layer_dims[0]}"
            )
        acts = [x]
        pre = []
        h = x
        for i in range(self.n_layers):
            z = h @ self.weights[i] + self.biases[i]
            pre.append(z)
            h = self._act(z) if i < self.n_layers - 1 else z
            acts.append(h)
        cache = {"acts": acts, "pre": pre, "squeeze": squeeze}
        out = acts[-1][0] if squeeze else acts[-1]
        return out, cache

    def backward(self, cache: dict, grad_out: np.ndarray) -> Tuple[Grads, np.ndarray]:
        """Exact gradients of sum(output * grad_out) w.r.t. parameters and input.

        ``cache`` must come from the matching :meth:`forward_cached` call.
        Returns per-layer (dW, db) plus the gradient w.r.t. the input batch.
        """
        if not isinstance(cache, dict) or "acts" not in cache:
            raise ValueError("backward requires the cache from forward_cached")
        acts, pre = cache["acts"], cache["pre"]
        delta = np.asarray(grad_out, dtype=np.float64)
        if cache["squeeze"] and delta.ndim == 1:
            delta = delta[None, :]
        if delta.shape != acts[-1].shape:
            raise ValueError(
                f"grad_out shape {delta.shape} does not match output {acts[-1].shape}"
            )
        grads: Grads = [None] * self.n_layers  # type: ignore[list-item]
        for i in reversed(range(self.n_layers)):
            if i < self.n_layers - 1:
                delta = delta * self._act_grad(pre[i], acts[i + 1])
            dw = acts[i].T @ delta
            db = delta.sum(axis=0)
            grads[i] = (dw, db)
            delta = delta @ self.weights[i].T
        grad_in = delta[0] if cache["squeeze"] else delta
        return grads, grad_in

    def param_arrays(self) -> List[np.ndarray]:
        """Parameters in a fixed order: (W, b) per layer."""
        out: List[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def num_params(self) -> int:
        return sum(p.size for p in self.param_arrays())

    def all_finite(self) -> bool:
        return all(np.isfinite(p).all() for p in self.param_arrays())

    def copy(self) -> "MlpNet":
        clone = MlpNet.__new__(MlpNet)
        clone.layer_dims = self.layer_dims
        clone.activation = self.activation
        clone.weights = [w.copy() for w in self.weights]
        clone.biases = [b.copy() for b in self.biases]
        return clone

    def soft_update_from(self, online: "MlpNet", tau: float) -> None:
        """Move parameters toward ``online`` by the fraction ``tau``."""
        if online.layer_dims != self.layer_dims:
            raise ValueError("networks differ in shape")
        for p_t, p_o in zip(self.param_arrays(), online.param_arrays()):
            p_t += tau * (p_o - p_t)


class Adam:
    """Adaptive-moment optimizer over one network's parameters."""

    def __init__(
        self,
        net: MlpNet,
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        grad_clip: float | None = None,
    ) -> None:
        self.net = net
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.grad_clip = grad_clip
        self.t = 0
        self._m = [np.zeros_like(p) for p in net.param_arrays()]
        self._v = [np.zeros_like(p) for p in net.param_arrays()]

    def step(self, grads: Grads) -> None:
        flat: List[np.ndarray] = []
        for dw, db in grads:
            flat.append(dw)
            flat.append(db)
        params = self.net.param_arrays()
        if len(flat) != len(params):
            raise ValueError("gradient structure does not match the network")
        if self.grad_clip is not None:
            norm = np.sqrt(sum(float((g * g).sum()) for g in flat))
            if norm > self.grad_clip:
                scale = self.grad_clip / norm
                flat = [g * scale for g in flat]
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, flat, self._m, self._v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)
