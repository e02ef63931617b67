"""Small feed-forward blocks and the Adam optimizer used by every learnable part."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, add, matmul, relu, softplus, tanh

SIGMA_FLOOR = 1e-6

_ACTIVATIONS = ("relu", "tanh", "identity", "softplus-on-output")


def uniform_init(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    """uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out))."""
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape)


class MlpBlock:
    """Fully connected stack; `widths` chains input through hidden to output.

    `activation` picks the nonlinearity: "relu"/"tanh" between layers,
    "identity" for a purely linear stack, "softplus-on-output" for relu
    hidden layers with a softplus head (strictly positive outputs).
    `activate_final` additionally applies the hidden nonlinearity after
    the last layer, for use as a trunk feeding several heads.
    """

    def __init__(self, widths, activation: str = "relu", *, rng: np.random.Generator,
                 activate_final: bool = False):
        if activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        if len(widths) < 2 or any(w <= 0 for w in widths):
            raise ValueError(f"bad layer widths {widths}")
        self.widths = list(widths)
        self.activation = activation
        self.activate_final = activate_final
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            self.weights.append(Tensor(uniform_init(rng, fan_in, fan_out, (fan_in, fan_out)),
                                       requires_grad=True))
            self.biases.append(Tensor(uniform_init(rng, fan_in, fan_out, (fan_out,)),
                                      requires_grad=True))

    @property
    def params(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def _hidden_act(self, x: Tensor) -> Tensor:
        return tanh(x) if self.activation == "tanh" else relu(x)

    def forward(self, x: Tensor) -> Tensor:
        n = len(self.weights)
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            x = add(matmul(x, w), b)
            last = i == n - 1
            if not last:
                if self.activation != "identity":
                    x = self._hidden_act(x)
            else:
                if self.activation == "softplus-on-output":
                    x = softplus(x)
                elif self.activate_final and self.activation != "identity":
                    x = self._hidden_act(x)
        return x

    __call__ = forward


@dataclass
class AdamState:
    """Per-parameter first/second moment accumulators plus step count."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, lr: float = 1e-3, **kw) -> "AdamState":
        state = cls(lr=lr, **kw)
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
        return state


def adam_step(params, grads, state: AdamState):
    """Standard Adam update with bias correction; mutates params and state."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params/grads/state length mismatch")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g.shape != p.data.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.data.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p.data -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state
