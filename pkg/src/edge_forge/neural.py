"""Small fully-connected Q network trained with Adam on a masked MSE loss."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, DomainError, UsageError

STATE_DIM = 2
N_OUTPUTS = 40
DEFAULT_DIMS = (2, 24, 24, 40)

# Scales that bring relative speed and distance roughly into [-1, 1].
REL_SPEED_SCALE = 10.0
DIST_SCALE = 50.0


@dataclass(frozen=True)
class NeuralConfig:
    layer_dims: tuple[int, ...] = DEFAULT_DIMS
    # 0.01 makes the greedy policy cycle between strategies in this world; 1e-3 keeps it learning.
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8

    def __post_init__(self) -> None:
        object.__setattr__(self, "layer_dims", tuple(self.layer_dims))
        check_dims(self.layer_dims)
        if not self.lr > 0:
            raise ConfigError(f"neural.lr must be > 0, got {self.lr!r}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("neural.beta1 and neural.beta2 must lie in [0, 1)")
        if not self.eps_hat > 0:
            raise ConfigError(f"neural.eps_hat must be > 0, got {self.eps_hat!r}")


def check_dims(dims: Sequence[int]) -> None:
    dims = list(dims)
    if len(dims) != 4 or dims[0] != STATE_DIM or dims[-1] != N_OUTPUTS:
        raise ConfigError(f"layer_dims must look like [2, h1, h2, 40], got {dims}")
    if any(not isinstance(d, int) or isinstance(d, bool) or d < 1 for d in dims):
        raise ConfigError(f"layer_dims must be positive integers, got {dims}")


def normalize(rel_speed, euclid_dist) -> np.ndarray:
    """Network input for one or many observations, shape (..., 2)."""
    return np.stack([np.asarray(rel_speed, dtype=np.float64) / REL_SPEED_SCALE,
                     np.asarray(euclid_dist, dtype=np.float64) / DIST_SCALE], axis=-1)


class Mlp:
    """ReLU hidden layers, linear output.

    ``weights[i]`` has shape (fan_in, fan_out) so a layer is ``x @ W + b``.
    Any layer sizes are accepted here; :func:`mlp_init` enforces the Q
    network shape.
    """

    def __init__(self, weights: Sequence[np.ndarray], biases: Sequence[np.ndarray]):
        if len(weights) != len(biases) or not weights:
            raise UsageError("need one bias vector per weight matrix")
        self.weights = [np.array(w, dtype=np.float64) for w in weights]
        self.biases = [np.array(b, dtype=np.float64).reshape(-1) for b in biases]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or w.shape[1] != b.shape[0]:
                raise UsageError(f"layer {i}: weight {w.shape} does not match bias {b.shape}")
            if i and w.shape[0] != self.weights[i - 1].shape[1]:
                raise UsageError(f"layer {i}: fan_in {w.shape[0]} != previous fan_out")

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    def parameters(self) -> list[np.ndarray]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def _activations(self, x: np.ndarray) -> list[np.ndarray]:
        acts = [x]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = acts[-1] @ w + b
            acts.append(z if i == last else np.maximum(z, 0.0))
        return acts

    def forward(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if not np.all(np.isfinite(x)):
            raise DomainError("network input contains non-finite values")
        single = x.ndim == 1
        out = self._activations(np.atleast_2d(x))[-1]
        return out[0] if single else out

    __call__ = forward


def mlp_init(layer_dims: Sequence[int] = DEFAULT_DIMS, seed: int = 0) -> Mlp:
    """He-normal weights, zero biases."""
    check_dims(layer_dims)
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        weights.append(rng.standard_normal((fan_in, fan_out)) * math.sqrt(2.0 / fan_in))
        biases.append(np.zeros(fan_out))
    return Mlp(weights, biases)


def forward(net: Mlp, x) -> np.ndarray:
    return net.forward(x)


def _check_batch(net: Mlp, inputs, targets, action_mask):
    inputs = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    targets = np.asarray(targets, dtype=np.float64).reshape(-1)
    mask = np.atleast_2d(np.asarray(action_mask, dtype=bool))
    n = inputs.shape[0]
    n_out = net.layer_dims[-1]
    if inputs.shape[1] != net.layer_dims[0] or targets.shape[0] != n or mask.shape != (n, n_out):
        raise UsageError(
            f"batch shapes inconsistent: inputs {inputs.shape}, targets {targets.shape}, mask {mask.shape}")
    if not np.all(mask.sum(axis=1) == 1):
        raise UsageError("action_mask must select exactly one output per sample")
    return inputs, targets, mask


def loss_and_grads(net: Mlp, inputs, targets, action_mask) -> tuple[float, list[np.ndarray]]:
    """Masked MSE and its gradient, ordered like ``net.parameters()``."""
    inputs, targets, mask = _check_batch(net, inputs, targets, action_mask)
    n = inputs.shape[0]
    acts = net._activations(inputs)
    pred = acts[-1][mask]
    err = pred - targets
    loss = float(np.mean(err * err))

    delta = np.zeros_like(acts[-1])
    delta[mask] = 2.0 * err / n
    grads: list[np.ndarray] = []
    for i in range(len(net.weights) - 1, -1, -1):
        grads.append(delta.sum(axis=0))
        grads.append(acts[i].T @ delta)
        if i:
            delta = (delta @ net.weights[i].T) * (acts[i] > 0)
    grads.reverse()
    return loss, grads


@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_net(cls, net: Mlp, cfg: NeuralConfig | None = None) -> AdamState:
        cfg = cfg or NeuralConfig()
        params = net.parameters()
        return cls(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps_hat=cfg.eps_hat,
                   m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params])

    def apply(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.step += 1
        b1, b2 = self.beta1, self.beta2
        lr_t = self.lr * math.sqrt(1.0 - b2 ** self.step) / (1.0 - b1 ** self.step)
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= lr_t * m / (np.sqrt(v) + self.eps_hat)


def train_on_batch(net: Mlp, opt: AdamState, inputs, targets, action_mask) -> float:
    """One Adam step on the masked MSE; returns the loss before the step."""
    loss, grads = loss_and_grads(net, inputs, targets, action_mask)
    opt.apply(net.parameters(), grads)
    if not all(np.all(np.isfinite(p)) for p in net.parameters()):
        raise DomainError("parameters became non-finite after an update")
    return loss


GradFn = Callable[[Mlp, np.ndarray, np.ndarray, np.ndarray], tuple[float, list[np.ndarray]]]


def gradient_check(net: Mlp, inputs, targets, action_mask, h: float = 1e-5,
                   grad_fn: GradFn = loss_and_grads) -> float:
    """Largest relative gap between ``grad_fn`` and central differences."""
    _, analytic = grad_fn(net, inputs, targets, action_mask)
    worst = 0.0
    for p, g in zip(net.parameters(), analytic):
        flat, gflat = p.reshape(-1), np.asarray(g).reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + h
            up, _ = loss_and_grads(net, inputs, targets, action_mask)
            flat[k] = orig - h
            down, _ = loss_and_grads(net, inputs, targets, action_mask)
            flat[k] = orig
            g_n = (up - down) / (2.0 * h)
            g_a = float(gflat[k])
            rel = abs(g_a - g_n) / max(abs(g_a), abs(g_n), 1e-8)
            worst = max(worst, rel)
    return worst


def copy_parameters(src: Mlp, dst: Mlp) -> None:
    if src.layer_dims != dst.layer_dims:
        raise UsageError(f"cannot copy {src.layer_dims} parameters into {dst.layer_dims}")
    for s, d in zip(src.parameters(), dst.parameters()):
        np.copyto(d, s)


def clone(net: Mlp) -> Mlp:
    return Mlp([w.copy() for w in net.weights], [b.copy() for b in net.biases])


def to_dict(net: Mlp) -> dict:
    return {
        "layer_dims": list(net.layer_dims),
        "weights": [w.reshape(-1).tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }


def from_dict(doc: dict) -> Mlp:
    try:
        dims = [int(d) for d in doc["layer_dims"]]
        weights = [np.asarray(w, dtype=np.float64).reshape(a, b)
                   for w, a, b in zip(doc["weights"], dims[:-1], dims[1:])]
        biases = [np.asarray(b, dtype=np.float64) for b in doc["biases"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed network document: {exc}") from exc
    if len(weights) != len(dims) - 1:
        raise ConfigError("network document has the wrong number of weight arrays")
    return Mlp(weights, biases)


def save(net: Mlp, path: str | Path) -> None:
    Path(path).write_text(json.dumps(to_dict(net)))


def load(path: str | Path) -> Mlp:
    return from_dict(json.loads(Path(path).read_text()))
