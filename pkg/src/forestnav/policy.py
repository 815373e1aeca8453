"""Actor-critic MLPs (17 -> 64 -> 64 -> out, tanh) with analytic gradients.

Weights live in a flat, ordered mapping so they can be serialized layer by
layer and updated by a single optimizer. Linear layers follow the
``y = x @ W.T + b`` convention with ``W`` of shape ``(out, in)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .env import ACT_DIM, OBS_DIM

HIDDEN = 64
FORMAT_VERSION = 1

LAYOUT = (
    ("actor.0.weight", (HIDDEN, OBS_DIM)),
    ("actor.0.bias", (HIDDEN,)),
    ("actor.1.weight", (HIDDEN, HIDDEN)),
    ("actor.1.bias", (HIDDEN,)),
    ("actor.2.weight", (ACT_DIM, HIDDEN)),
    ("actor.2.bias", (ACT_DIM,)),
    ("critic.0.weight", (HIDDEN, OBS_DIM)),
    ("critic.0.bias", (HIDDEN,)),
    ("critic.1.weight", (HIDDEN, HIDDEN)),
    ("critic.1.bias", (HIDDEN,)),
    ("critic.2.weight", (1, HIDDEN)),
    ("critic.2.bias", (1,)),
    ("log_std", (ACT_DIM,)),
)


class WeightsError(ValueError):
    pass


@dataclass
class PolicyWeights:
    arrays: dict[str, np.ndarray]

    def __post_init__(self):
        names = [name for name, _ in LAYOUT]
        if list(self.arrays) != names:
            self.arrays = {name: self.arrays[name] for name in names}
        for name, shape in LAYOUT:
            arr = np.asarray(self.arrays[name], dtype=float)
            if arr.shape != shape:
                raise WeightsError(f"{name}: expected shape {shape}, got {arr.shape}")
            self.arrays[name] = arr

    def __getitem__(self, name):
        return self.arrays[name]

    def check_finite(self):
        for name, arr in self.arrays.items():
            if not np.all(np.isfinite(arr)):
                raise WeightsError(f"non-finite values in {name}")

    def copy(self):
        return PolicyWeights({k: v.copy() for k, v in self.arrays.items()})

    def flat(self):
        return np.concatenate([v.ravel() for v in self.arrays.values()])

    @classmethod
    def from_flat(cls, vector):
        vector = np.asarray(vector, dtype=float)
        arrays, offset = {}, 0
        for name, shape in LAYOUT:
            size = int(np.prod(shape))
            arrays[name] = vector[offset:offset + size].reshape(shape).copy()
            offset += size
        if offset != vector.size:
            raise WeightsError(f"flat vector has {vector.size} entries, expected {offset}")
        return cls(arrays)

    @classmethod
    def zeros(cls):
        return cls({name: np.zeros(shape) for name, shape in LAYOUT})

    @classmethod
    def initialize(cls, rng, log_std=np.log(0.3)):
        """Orthogonal init; small gain on the action head, unit gain on the value head."""
        gains = {"0": np.sqrt(2.0), "1": np.sqrt(2.0)}
        arrays = {}
        for name, shape in LAYOUT:
            if name == "log_std":
                arrays[name] = np.full(shape, float(log_std))
            elif name.endswith("bias"):
                arrays[name] = np.zeros(shape)
            else:
                net, idx = name.split(".")[:2]
                gain = gains.get(idx, 0.01 if net == "actor" else 1.0)
                arrays[name] = _orthogonal(rng, shape, gain)
        return cls(arrays)

    def save(self, path):
        """Write JSON: one entry per layer with its shape and row-major data."""
        payload = {
            "format": "forestnav-policy",
            "version": FORMAT_VERSION,
            "layers": [{"name": name, "shape": list(arr.shape), "data": arr.ravel().tolist()}
                       for name, arr in self.arrays.items()],
        }
        Path(path).write_text(json.dumps(payload))

    @classmethod
    def load(cls, path):
        payload = json.loads(Path(path).read_text())
        if payload.get("format") != "forestnav-policy":
            raise WeightsError(f"{path} is not a policy weights file")
        arrays = {}
        for layer in payload["layers"]:
            arrays[layer["name"]] = np.array(layer["data"], dtype=float).reshape(layer["shape"])
        weights = cls(arrays)
        weights.check_finite()
        return weights


def _orthogonal(rng, shape, gain):
    rows, cols = shape
    a = rng.normal(size=(max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


def _forward(x, weights, net, squash):
    w0, b0 = weights[f"{net}.0.weight"], weights[f"{net}.0.bias"]
    w1, b1 = weights[f"{net}.1.weight"], weights[f"{net}.1.bias"]
    w2, b2 = weights[f"{net}.2.weight"], weights[f"{net}.2.bias"]
    h1 = np.tanh(x @ w0.T + b0)
    h2 = np.tanh(h1 @ w1.T + b1)
    out = h2 @ w2.T + b2
    if squash:
        out = np.tanh(out)
    return out, (x, h1, h2, out)


def _backward(cache, grad_out, weights, net, squash):
    x, h1, h2, out = cache
    if squash:
        grad_out = grad_out * (1.0 - out * out)
    w1, w2 = weights[f"{net}.1.weight"], weights[f"{net}.2.weight"]
    grads = {f"{net}.2.weight": grad_out.T @ h2, f"{net}.2.bias": grad_out.sum(axis=0)}
    d2 = (grad_out @ w2) * (1.0 - h2 * h2)
    grads[f"{net}.1.weight"] = d2.T @ h1
    grads[f"{net}.1.bias"] = d2.sum(axis=0)
    d1 = (d2 @ w1) * (1.0 - h1 * h1)
    grads[f"{net}.0.weight"] = d1.T @ x
    grads[f"{net}.0.bias"] = d1.sum(axis=0)
    return grads


def _check_inputs(obs, weights):
    obs = np.asarray(obs, dtype=float)
    if not np.all(np.isfinite(obs)):
        raise ValueError("observation contains non-finite values")
    weights.check_finite()
    return obs


def actor_forward(obs, weights: PolicyWeights):
    """Deterministic action mean in ``[-1, 1]^4``; accepts one obs or a batch."""
    obs = _check_inputs(obs, weights)
    out, _ = _forward(np.atleast_2d(obs), weights, "actor", squash=True)
    return out[0] if obs.ndim == 1 else out


def critic_forward(obs, weights: PolicyWeights):
    obs = _check_inputs(obs, weights)
    out, _ = _forward(np.atleast_2d(obs), weights, "critic", squash=False)
    return float(out[0, 0]) if obs.ndim == 1 else out[:, 0]


def actor_forward_cached(obs, weights):
    return _forward(obs, weights, "actor", squash=True)


def critic_forward_cached(obs, weights):
    return _forward(obs, weights, "critic", squash=False)


def actor_backward(cache, grad_mean, weights):
    """Gradients of a loss w.r.t. actor parameters given ``dL/d(mean)``."""
    return _backward(cache, grad_mean, weights, "actor", squash=True)


def critic_backward(cache, grad_value, weights):
    """Gradients given ``dL/dV`` with shape ``(batch,)``."""
    return _backward(cache, np.asarray(grad_value).reshape(-1, 1), weights, "critic",
                     squash=False)


def gaussian_log_prob(actions, mean, log_std):
    z = (actions - mean) * np.exp(-log_std)
    return -0.5 * np.sum(z * z, axis=-1) - np.sum(log_std) - 0.5 * ACT_DIM * np.log(2 * np.pi)
