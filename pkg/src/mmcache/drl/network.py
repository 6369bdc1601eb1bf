"""Dueling multilayer perceptron with hand-written backpropagation."""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from . import kernels

CHECKPOINT_MAGIC = b"MMQN"
CHECKPOINT_VERSION = 1


class QNetwork:
    """ReLU trunk followed by a value head and an advantage head.

    Q(s, a) = V(s) + A(s, a) - mean_a' A(s, a').  With ``dueling=False`` the
    trunk feeds a single linear Q head (plain double DQN baseline).
    """

    def __init__(self, state_dim: int, n_actions: int, hidden=(64, 64), dueling: bool = True,
                 seed=None):
        self.state_dim = int(state_dim)
        self.n_actions = int(n_actions)
        self.hidden = tuple(int(h) for h in hidden)
        self.dueling = bool(dueling)
        rng = np.random.default_rng(seed)

        self.params: dict[str, np.ndarray] = {}
        fan_in = self.state_dim
        for i, width in enumerate(self.hidden, start=1):
            self.params[f"W{i}"] = rng.normal(0.0, np.sqrt(2.0 / fan_in), (fan_in, width))
            self.params[f"b{i}"] = np.zeros(width)
            fan_in = width
        scale = np.sqrt(1.0 / fan_in)
        if self.dueling:
            self.params["Wv"] = rng.normal(0.0, scale, (fan_in, 1))
            self.params["bv"] = np.zeros(1)
            self.params["Wa"] = rng.normal(0.0, scale, (fan_in, self.n_actions))
            self.params["ba"] = np.zeros(self.n_actions)
        else:
            self.params["Wq"] = rng.normal(0.0, scale, (fan_in, self.n_actions))
            self.params["bq"] = np.zeros(self.n_actions)

    # -- parameter plumbing -------------------------------------------------

    def trunk(self):
        return [(self.params[f"W{i}"], self.params[f"b{i}"]) for i in range(1, len(self.hidden) + 1)]

    def copy(self) -> "QNetwork":
        other = object.__new__(QNetwork)
        other.state_dim, other.n_actions = self.state_dim, self.n_actions
        other.hidden, other.dueling = self.hidden, self.dueling
        other.params = {k: v.copy() for k, v in self.params.items()}
        return other

    def same_shape(self, other: "QNetwork") -> bool:
        return (self.params.keys() == other.params.keys()
                and all(v.shape == other.params[k].shape for k, v in self.params.items()))

    def num_parameters(self) -> int:
        return sum(v.size for v in self.params.values())

    def all_finite(self) -> bool:
        return all(np.isfinite(v).all() for v in self.params.values())

    # -- computation ----------------------------------------------------------

    def _check(self, states):
        x = np.asarray(states, dtype=float)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        if x.shape[1] != self.state_dim:
            raise ValueError(f"state dim {x.shape[1]} != network input {self.state_dim}")
        return x, single

    def heads(self, states):
        """Return (V, A) for a batch; for a plain net V is zero and A is Q."""
        x, single = self._check(states)
        h = kernels.trunk_forward(self.trunk(), x)[-1]
        if self.dueling:
            v = (h @ self.params["Wv"] + self.params["bv"])[:, 0]
            a = h @ self.params["Wa"] + self.params["ba"]
        else:
            v = np.zeros(len(x))
            a = h @ self.params["Wq"] + self.params["bq"]
        return (v[0], a[0]) if single else (v, a)

    def forward(self, states) -> np.ndarray:
        x, single = self._check(states)
        q = kernels.q_forward(self, x)
        return q[0] if single else q

    __call__ = forward

    def loss_and_grads(self, states, actions, targets):
        """Mean squared TD error over the batch and its parameter gradients."""
        x, _ = self._check(states)
        return kernels.q_loss_and_grads(self, x, np.asarray(actions, dtype=np.int64),
                                        np.asarray(targets, dtype=float))

    # -- checkpoints ----------------------------------------------------------

    def save(self, path):
        header = json.dumps({
            "state_dim": self.state_dim, "n_actions": self.n_actions,
            "hidden": list(self.hidden), "dueling": self.dueling,
            "params": [[k, list(v.shape)] for k, v in self.params.items()],
        }, sort_keys=True).encode()
        with open(path, "wb") as f:
            f.write(CHECKPOINT_MAGIC)
            f.write(struct.pack("<II", CHECKPOINT_VERSION, len(header)))
            f.write(header)
            for v in self.params.values():
                f.write(np.ascontiguousarray(v, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "QNetwork":
        data = Path(path).read_bytes()
        if data[:4] != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a Q-network checkpoint")
        version, hlen = struct.unpack_from("<II", data, 4)
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        header = json.loads(data[12:12 + hlen])
        net = object.__new__(cls)
        net.state_dim, net.n_actions = header["state_dim"], header["n_actions"]
        net.hidden, net.dueling = tuple(header["hidden"]), header["dueling"]
        net.params = {}
        offset = 12 + hlen
        for name, shape in header["params"]:
            n = int(np.prod(shape))
            arr = np.frombuffer(data, dtype="<f8", count=n, offset=offset).reshape(shape)
            net.params[name] = arr.astype(float)
            offset += 8 * n
        return net
