"""Double-Q targets, SGD updates, exploration schedule and the agent wrapper."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import QNetwork
from .replay import Batch, ReplayBuffer


class DivergenceError(FloatingPointError):
    """Training produced a non-finite loss or parameters."""


@dataclass
class EpsilonSchedule:
    eps_start: float = 0.99
    eps_end: float = 0.01
    decay_rate: float = 0.997
    warmup_episodes: int = 100

    def __post_init__(self):
        if not 0 <= self.eps_end <= self.eps_start <= 1:
            raise ValueError("need 0 <= eps_end <= eps_start <= 1")
        self.current = self.eps_start
        self._episode = 0

    def advance(self, episode: int) -> float:
        """Move the schedule forward to ``episode`` (one decay per episode past warmup)."""
        while self._episode < episode:
            self._episode += 1
            if self._episode > self.warmup_episodes:
                self.current = max(self.current * self.decay_rate, self.eps_end)
        return self.current


def epsilon(schedule: EpsilonSchedule, episode: int) -> float:
    if episode < 1:
        raise ValueError("episodes are counted from 1")
    eps = schedule.eps_start
    for _ in range(max(0, episode - schedule.warmup_episodes)):
        eps = max(eps * schedule.decay_rate, schedule.eps_end)
        if eps == schedule.eps_end:
            break
    return eps


def select_action(net: QNetwork, state, eps: float, rng: np.random.Generator) -> int:
    # one uniform per call keeps the stream aligned whichever branch is taken
    explore = rng.random() < eps
    if explore:
        return int(rng.integers(net.n_actions))
    return int(np.argmax(net.forward(state)))


def td_targets(batch: Batch, online: QNetwork, target: QNetwork, gamma: float) -> np.ndarray:
    """R + gamma * Q_target(s', argmax_a Q_online(s', a)); terminals keep R."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    if not 0 <= gamma <= 1:
        raise ValueError("gamma must lie in [0, 1]")
    best = np.argmax(online.forward(batch.next_states), axis=1)
    q_next = target.forward(batch.next_states)[np.arange(len(batch)), best]
    return batch.rewards + gamma * np.where(batch.terminals, 0.0, q_next)


def clip_by_global_norm(grads: dict, max_norm: float | None) -> float:
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if max_norm is not None and norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


def sgd_update(net: QNetwork, grads: dict, learning_rate: float):
    for k, g in grads.items():
        net.params[k] -= learning_rate * g


def train_step(net: QNetwork, target_net: QNetwork, batch: Batch, learning_rate: float,
               gamma: float = 0.99, clip_norm: float | None = 10.0) -> float:
    """One SGD step on the mean squared TD error; returns the pre-update loss."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    targets = td_targets(batch, net, target_net, gamma)
    loss, grads = net.loss_and_grads(batch.states, batch.actions, targets)
    if not np.isfinite(loss):
        raise DivergenceError(f"non-finite TD loss {loss}")
    clip_by_global_norm(grads, clip_norm)
    sgd_update(net, grads, learning_rate)
    return loss


def sync_target(online: QNetwork, target: QNetwork):
    if not online.same_shape(target):
        raise ValueError("online and target networks differ in shape")
    for k, v in online.params.items():
        target.params[k][...] = v


def _downstream_q(net: QNetwork, x, action: int):
    """Map (layer name, batch of perturbed pre-activations) -> batch of Q(s, action).

    Every other layer is evaluated at the unperturbed parameters, so feeding
    ``z + h * input[i] * e_j`` equals evaluating the loss with weight (i, j)
    nudged by ``h``.  Only forward arithmetic is used.
    """
    p = net.params
    trunk = net.trunk()
    acts = [x]
    for w, b in trunk:
        acts.append(np.maximum(acts[-1] @ w + b, 0.0))
    h = acts[-1]
    if net.dueling:
        v0 = h @ p["Wv"] + p["bv"]
        a0 = h @ p["Wa"] + p["ba"]

    def heads(feat):
        if net.dueling:
            v = feat @ p["Wv"] + p["bv"]
            a = feat @ p["Wa"] + p["ba"]
            return v + a - a.mean(axis=1, keepdims=True)
        return feat @ p["Wq"] + p["bq"]

    base_masks = [a[0] > 0 for a in acts[1:]]

    def from_layer(layer, z):
        """Return (Q(s, action), whether any ReLU downstream changed state)."""
        crossed = np.zeros(len(z), dtype=bool)
        if layer == "v":
            q = z + a0 - a0.mean(axis=1, keepdims=True)
        elif layer == "a":
            q = v0 + z - z.mean(axis=1, keepdims=True)
        elif layer == "q":
            q = z
        else:
            crossed |= ((z > 0) != base_masks[layer - 1]).any(axis=1)
            feat = np.maximum(z, 0.0)
            for k, (w, b) in enumerate(trunk[layer:], start=layer + 1):
                pre = feat @ w + b
                crossed |= ((pre > 0) != base_masks[k - 1]).any(axis=1)
                feat = np.maximum(pre, 0.0)
            q = heads(feat)
        return q[:, action], crossed

    layer_io = {}
    for k, (w, b) in enumerate(trunk, start=1):
        layer_io[f"W{k}"] = layer_io[f"b{k}"] = (k, acts[k - 1][0], acts[k - 1] @ w + b)
    for head, wname, bname in (("v", "Wv", "bv"), ("a", "Wa", "ba"), ("q", "Wq", "bq")):
        if wname in p:
            z = h @ p[wname] + p[bname]
            layer_io[wname] = layer_io[bname] = (head, h[0], z)
    return layer_io, from_layer


def gradient_check(net: QNetwork, state, action: int, target: float, h: float = 1e-5,
                   return_skipped: bool = False):
    """Max relative error between analytic and central-difference gradients.

    Relative error is |a - n| / max(|a|, |n|, 1e-6); below 1e-6 a central
    difference at h = 1e-5 is dominated by round-off.  Entries whose +/-h
    perturbation flips a ReLU somewhere downstream straddle a kink, where
    the loss is not differentiable; they are excluded and counted.  The
    network is not modified.
    """
    if h <= 0:
        raise ValueError("step must be positive")
    x = np.atleast_2d(np.asarray(state, dtype=float))
    _, grads = net.loss_and_grads(x, np.array([action]), np.array([float(target)]))
    layer_io, from_layer = _downstream_q(net, x, action)

    worst = 0.0
    skipped = 0
    for name, param in net.params.items():
        layer, inp, z = layer_io[name]
        width = z.shape[1]
        if param.ndim == 2:
            # row (i, j): output j shifted by h * inp[i]
            shift = (inp[:, None, None] * np.eye(width)[None, :, :]).reshape(-1, width)
        else:
            shift = np.eye(width)
        q_up, kink_up = from_layer(layer, z + h * shift)
        q_down, kink_down = from_layer(layer, z - h * shift)
        # (q+ - t)^2 - (q- - t)^2 factored to limit cancellation
        numeric = (q_up - q_down) * (q_up + q_down - 2 * target) / (2 * h)
        analytic = grads[name].reshape(-1)
        smooth = ~(kink_up | kink_down)
        skipped += int((~smooth).sum())
        err = np.abs(analytic - numeric) / np.maximum(
            np.maximum(np.abs(analytic), np.abs(numeric)), 1e-6)
        if smooth.any():
            worst = max(worst, float(err[smooth].max()))
    return (worst, skipped) if return_skipped else worst


@dataclass
class DQNConfig:
    hidden: tuple = (64, 64)
    learning_rate: float = 5e-4
    gamma: float = 0.99
    clip_norm: float = 10.0
    buffer_capacity: int = 50_000
    batch_size: int = 64
    sync_every: int = 500
    train_start: int = 1_000
    eps_start: float = 0.99
    eps_end: float = 0.01
    decay_rate: float = 0.997
    warmup_episodes: int = 100


class Agent:
    """Online/target pair, replay memory and exploration state for one learner."""

    def __init__(self, state_dim: int, n_actions: int, cfg: DQNConfig | None = None,
                 seed=None, dueling: bool = True):
        self.cfg = cfg or DQNConfig()
        ss = np.random.SeedSequence(seed)
        init_seed, sample_seed, act_seed = ss.spawn(3)
        self.online = QNetwork(state_dim, n_actions, self.cfg.hidden, dueling, seed=init_seed)
        self.target = self.online.copy()
        self.buffer = ReplayBuffer(self.cfg.buffer_capacity, state_dim)
        self.schedule = EpsilonSchedule(self.cfg.eps_start, self.cfg.eps_end,
                                        self.cfg.decay_rate, self.cfg.warmup_episodes)
        self.sample_rng = np.random.default_rng(sample_seed)
        self.act_rng = np.random.default_rng(act_seed)
        self.train_steps = 0
        self.losses: list[float] = []

    @property
    def state_dim(self):
        return self.online.state_dim

    @property
    def n_actions(self):
        return self.online.n_actions

    def act(self, state, eps: float) -> int:
        return select_action(self.online, state, eps, self.act_rng)

    def act_batch(self, states, eps: float) -> np.ndarray:
        """Vectorised epsilon-greedy over rows of ``states``."""
        states = np.atleast_2d(states)
        greedy = np.argmax(self.online.forward(states), axis=1)
        explore = self.act_rng.random(len(states)) < eps
        random_actions = self.act_rng.integers(self.n_actions, size=len(states))
        return np.where(explore, random_actions, greedy)

    def remember(self, state, action, reward, next_state, terminal):
        self.buffer.push(state, action, reward, next_state, terminal)

    def learn(self) -> float | None:
        if len(self.buffer) < max(self.cfg.train_start, self.cfg.batch_size):
            return None
        batch = self.buffer.sample(self.cfg.batch_size, self.sample_rng)
        loss = train_step(self.online, self.target, batch, self.cfg.learning_rate,
                          self.cfg.gamma, self.cfg.clip_norm)
        self.train_steps += 1
        if self.train_steps % self.cfg.sync_every == 0:
            sync_target(self.online, self.target)
        self.losses.append(loss)
        return loss
