"""Fully connected ReLU network with scalar output, plus Adam.

Forward, exact reverse-mode gradients, and the optimizer are implemented
directly on numpy arrays: the network is small and fixed-shape, so a
framework would add nothing but a dependency. ReLU's subgradient at 0 is
taken to be 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatch

__all__ = ["MlpParams", "AdamState", "init_mlp", "forward", "forward_batch",
           "backward", "backward_batch", "init_adam", "adam_step"]


@dataclass
class MlpParams:
    """Weights and biases of the network.

    ``weights[l]`` has shape (dims[l+1], dims[l]); the final output
    dimension is 1 and the output layer has no activation.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def layer_dims(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    def arrays(self) -> list[np.ndarray]:
        """Flat list of parameter arrays, weights and biases interleaved."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def copy(self) -> "MlpParams":
        return MlpParams(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )


def init_mlp(layer_dims, seed: int) -> MlpParams:
    """Seeded initialization: weights uniform in +/-sqrt(6/fan_in), biases 0."""
    dims = [int(d) for d in layer_dims]
    if len(dims) < 2 or dims[-1] != 1:
        raise ValueError(f"layer_dims must end in a scalar output, got {dims}")
    rng = np.random.Generator(np.random.PCG64(seed))
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights=weights, biases=biases)


def _check_input(p: MlpParams, X: np.ndarray):
    d = p.weights[0].shape[1]
    if X.ndim != 2 or X.shape[1] != d:
        raise ShapeMismatch(f"expected (n, {d}) inputs, got {X.shape}")


def forward_batch(p: MlpParams, X) -> np.ndarray:
    """Network outputs for each row of X, shape (n,)."""
    X = np.asarray(X, dtype=float)
    _check_input(p, X)
    h = X
    last = len(p.weights) - 1
    for l, (w, b) in enumerate(zip(p.weights, p.biases)):
        z = h @ w.T + b
        h = z if l == last else np.maximum(z, 0.0)
    return h[:, 0]


def forward(p: MlpParams, x) -> float:
    """Scalar network output for a single feature vector."""
    return float(forward_batch(p, np.atleast_2d(np.asarray(x, dtype=float)))[0])


def _forward_trace(p: MlpParams, X: np.ndarray):
    """Forward pass keeping per-layer activations for backprop."""
    activations = [X]
    pre = []
    h = X
    last = len(p.weights) - 1
    for l, (w, b) in enumerate(zip(p.weights, p.biases)):
        z = h @ w.T + b
        pre.append(z)
        h = z if l == last else np.maximum(z, 0.0)
        activations.append(h)
    return activations, pre


def backward_batch(p: MlpParams, X, upstream) -> list[np.ndarray]:
    """Gradients of sum_n upstream[n] * output(X[n]) w.r.t. all parameters.

    Returns arrays in the order of :meth:`MlpParams.arrays`.
    """
    X = np.asarray(X, dtype=float)
    _check_input(p, X)
    u = np.asarray(upstream, dtype=float).ravel()
    if u.size != X.shape[0]:
        raise ShapeMismatch(f"upstream size {u.size} != batch size {X.shape[0]}")
    activations, pre = _forward_trace(p, X)
    grads_w = [None] * len(p.weights)
    grads_b = [None] * len(p.biases)
    delta = u[:, None]
    for l in range(len(p.weights) - 1, -1, -1):
        grads_w[l] = delta.T @ activations[l]
        grads_b[l] = delta.sum(axis=0)
        if l > 0:
            delta = (delta @ p.weights[l]) * (pre[l - 1] > 0.0)
    out = []
    for gw, gb in zip(grads_w, grads_b):
        out.append(gw)
        out.append(gb)
    return out


def backward(p: MlpParams, x, upstream: float) -> list[np.ndarray]:
    """Single-sample gradients of upstream * output(x)."""
    return backward_batch(p, np.atleast_2d(np.asarray(x, dtype=float)), [upstream])


@dataclass
class AdamState:
    """Optimizer state; moment shapes mirror the parameter arrays."""

    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon_adam: float = 1e-8
    step_count: int = 0
    first_moment: list[np.ndarray] = field(default_factory=list)
    second_moment: list[np.ndarray] = field(default_factory=list)


def init_adam(param_arrays, learning_rate: float, beta1: float = 0.9,
              beta2: float = 0.999, epsilon_adam: float = 1e-8) -> AdamState:
    return AdamState(
        learning_rate=learning_rate,
        beta1=beta1,
        beta2=beta2,
        epsilon_adam=epsilon_adam,
        step_count=0,
        first_moment=[np.zeros_like(a) for a in param_arrays],
        second_moment=[np.zeros_like(a) for a in param_arrays],
    )


def adam_step(param_arrays, grad_arrays, state: AdamState):
    """One bias-corrected Adam update, applied to the arrays in place.

    Returns the (mutated) parameter list and state for call-site chaining.
    """
    if len(param_arrays) != len(grad_arrays):
        raise ShapeMismatch("parameter/gradient list lengths differ")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1**t
    corr2 = 1.0 - b2**t
    for p, g, m, v in zip(param_arrays, grad_arrays,
                          state.first_moment, state.second_moment):
        if p.shape != g.shape:
            raise ShapeMismatch(f"gradient shape {g.shape} != parameter {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        p -= state.learning_rate * (m / corr1) / (np.sqrt(v / corr2) + state.epsilon_adam)
    return param_arrays, state
