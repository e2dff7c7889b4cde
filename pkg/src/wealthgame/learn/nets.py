"""Network parameter containers and forward passes.

The forward functions are written against plain arithmetic so they run both on
numpy arrays (fast inference) and on autodiff Vars (for gradient()); the
training loops use the dedicated kernels instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeMismatch
from .autodiff import Var, relu, tanh


@dataclass
class MlpParams:
    """Feedforward rectifier network: L affine maps, hidden width m,
    max(0, .) on hidden layers, identity output."""

    weights: list       # [ (d_in, m), (m, m) x (L-2), (m, d_out) ]
    biases: list

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[1]

    def flat(self) -> list:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out


@dataclass
class RnnParams:
    """Single tanh recurrence, shared across steps, with a linear per-step
    output map; the hidden state starts at zero."""

    W_in: np.ndarray    # (d_in, m)
    b_in: np.ndarray    # (m,)
    W_h: np.ndarray     # (m, m)
    b_h: np.ndarray     # (m,)
    W_out: np.ndarray   # (m, d_out)
    b_out: np.ndarray   # (d_out,)

    @property
    def hidden(self) -> int:
        return self.W_h.shape[0]

    def flat(self) -> list:
        return [self.W_in, self.b_in, self.W_h, self.b_h, self.W_out, self.b_out]


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    """Uniform Glorot-scaled initial weights."""
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, (fan_in, fan_out))


def init_mlp(rng: np.random.Generator, input_dim: int, output_dim: int,
             hidden: int = 64, n_layers: int = 3) -> MlpParams:
    dims = [input_dim] + [hidden] * (n_layers - 1) + [output_dim]
    weights = [glorot(rng, dims[i], dims[i + 1]) for i in range(n_layers)]
    biases = [np.zeros(dims[i + 1]) for i in range(n_layers)]
    return MlpParams(weights=weights, biases=biases)


def init_rnn(rng: np.random.Generator, input_dim: int = 2, hidden: int = 64,
             output_dim: int = 1) -> RnnParams:
    return RnnParams(
        W_in=glorot(rng, input_dim, hidden),
        b_in=np.zeros(hidden),
        W_h=glorot(rng, hidden, hidden),
        b_h=np.zeros(hidden),
        W_out=glorot(rng, hidden, output_dim),
        b_out=np.zeros(output_dim),
    )


def _dim_of(a) -> tuple:
    return a.value.shape if isinstance(a, Var) else np.shape(a)


def mlp_forward(params: MlpParams, x):
    """Deterministic forward pass; x is (d_in,) or (B, d_in)."""
    shape = _dim_of(x)
    if shape[-1] != params.input_dim:
        raise ShapeMismatch(f"input dim {shape[-1]}, network expects {params.input_dim}")
    h = x
    last = params.n_layers - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if i < last:
            h = relu(h)
    return h


def mlp_param_dict(params: MlpParams) -> dict:
    return {f"W{i}": w for i, w in enumerate(params.weights)} | {
        f"b{i}": b for i, b in enumerate(params.biases)
    }


def mlp_from_dict(d: dict) -> MlpParams:
    nl = len(d) // 2
    return MlpParams(weights=[d[f"W{i}"] for i in range(nl)],
                     biases=[d[f"b{i}"] for i in range(nl)])


def rnn_inputs(prices, prior, log_input: bool = True) -> np.ndarray:
    """Per-step input (encoded price, prior), shape (K+1, B, 2).

    prices is (B, K+1); the default encoding is log(S_k / S_0), which keeps
    magnitudes stable; raw prices are selectable.
    """
    prices = np.atleast_2d(np.asarray(prices, dtype=float))
    B, Kp1 = prices.shape
    x = np.empty((Kp1, B, 2))
    if log_input:
        x[:, :, 0] = np.log(prices / prices[:, :1]).T
    else:
        x[:, :, 0] = prices.T
    x[:, :, 1] = np.broadcast_to(np.asarray(prior, dtype=float), (B,))
    return x


def rnn_forward(params: RnnParams, prices, prior, log_input: bool = True):
    """Sequence of return estimates, one per grid node.

    Output k depends only on prices S_0..S_k and the prior (causality holds by
    construction: the recurrence never sees later steps).  Returns (B, K+1)
    for d_out = 1, else (B, K+1, d_out).
    """
    lifted = isinstance(params.W_in, Var)
    x = rnn_inputs(prices, prior, log_input)
    if _dim_of(params.W_in)[0] != x.shape[2]:
        raise ShapeMismatch(f"W_in expects input dim {_dim_of(params.W_in)[0]}, got {x.shape[2]}")
    Kp1, B, _ = x.shape
    h = None
    outs = []
    for k in range(Kp1):
        pre = x[k] @ params.W_in + params.b_in + params.b_h
        if h is not None:
            pre = pre + h @ params.W_h
        h = tanh(pre)
        outs.append(h @ params.W_out + params.b_out)
    if lifted:
        return outs  # list of (B, d_out) Vars; caller reduces
    out = np.stack([np.asarray(o) for o in outs], axis=1)  # (B, K+1, d_out)
    return out[:, :, 0] if out.shape[2] == 1 else out
