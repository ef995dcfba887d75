"""Value-based learners: exact tabular Q-learning and a small neural
approximator with experience replay and a target network.

The neural path is self-contained: forward pass, backpropagation, and
the Adam update are written out against plain numpy arrays so the
numerics can be checked against finite differences and scalar oracles.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass

import numpy as np

from .game import ExtendedState, Transition


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""


def rng_stream(seed: int, name: str) -> np.random.Generator:
    """Named random stream derived from one run seed.

    Streams are independent per name, so changing how one component
    draws does not perturb the others.  crc32 keeps the derivation
    stable across processes and platforms.
    """
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(key,)))


def tabular_key(ext: ExtendedState):
    """Discrete state key: agent positions (or the raw base) + DFA state.

    The world step counter is deliberately excluded so keys stay
    stationary across an episode.
    """
    base = ext.base
    pos = getattr(base, "agent_positions", base)
    return (ext.dfa_state, pos)


class QTable:
    """State-action values defaulting to zero for unseen pairs."""

    def __init__(self, n_actions: int):
        self.n_actions = n_actions
        self.values = {}

    def get(self, key, action) -> float:
        return self.values.get((key, action), 0.0)

    def row(self, key) -> np.ndarray:
        return np.array([self.get(key, a) for a in range(self.n_actions)])

    def best(self, key) -> float:
        return max(self.get(key, a) for a in range(self.n_actions))

    def __len__(self):
        return len(self.values)


def q_update(table: QTable, key, action, reward, next_key, terminal,
             alpha: float, gamma: float) -> float:
    """One-step Q-learning backup; returns the updated value.

    Q(s,a) += alpha * (r + gamma * max_a' Q(s',a') * [not terminal] - Q(s,a))
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must be in (0, 1], got {gamma}")
    if not math.isfinite(reward):
        raise ValueError(f"non-finite reward {reward}")
    bootstrap = 0.0 if terminal else table.best(next_key)
    q = table.get(key, action)
    updated = q + alpha * (reward + gamma * bootstrap - q)
    table.values[(key, action)] = updated
    return updated


# ---------------------------------------------------------------------------
# Neural approximator

class Mlp:
    """Fully connected rectifier network with an identity output layer."""

    def __init__(self, sizes, rng: np.random.Generator):
        self.sizes = tuple(sizes)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(sizes, sizes[1:]):
            bound = math.sqrt(6.0 / (fan_in + fan_out))
            self.weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
            self.biases.append(np.zeros(fan_out))

    def parameters(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def copy(self) -> "Mlp":
        clone = Mlp.__new__(Mlp)
        clone.sizes = self.sizes
        clone.weights = [w.copy() for w in self.weights]
        clone.biases = [b.copy() for b in self.biases]
        return clone

    def load_from(self, other: "Mlp"):
        for dst, src in zip(self.parameters(), other.parameters()):
            dst[...] = src

    def forward_batch(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.sizes[0]:
            raise ValueError(
                f"expected input of size {self.sizes[0]}, got {x.shape[-1]}")
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w.T + b
            if i != last:
                h = np.maximum(h, 0.0)
        return h

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.forward_batch(np.asarray(x)[None, :])[0]

    def _forward_cached(self, x):
        """Forward pass keeping the post-activation of every layer."""
        activations = [np.asarray(x, dtype=np.float64)]
        h = activations[0]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w.T + b
            if i != last:
                h = np.maximum(h, 0.0)
            activations.append(h)
        return activations

    def backward(self, activations, dout):
        """Gradients of a scalar loss given d(loss)/d(output)."""
        grads = [None] * (2 * len(self.weights))
        delta = dout
        for i in range(len(self.weights) - 1, -1, -1):
            grads[2 * i] = delta.T @ activations[i]
            grads[2 * i + 1] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i]) * (activations[i] > 0.0)
        return grads


class TargetNetwork:
    """Frozen parameter snapshot, refreshed by copy every sync_period steps."""

    def __init__(self, net: Mlp, sync_period: int = 100):
        self.net = net.copy()
        self.sync_period = sync_period
        self._since_sync = 0

    def forward_batch(self, x):
        return self.net.forward_batch(x)

    def sync(self, net: Mlp):
        self.net.load_from(net)
        self._since_sync = 0

    def tick(self, net: Mlp):
        """Count one training step; copy the parameters when due."""
        self._since_sync += 1
        if self._since_sync >= self.sync_period:
            self.sync(net)


@dataclass
class AdamState:
    """Per-parameter moment accumulators for the Adam rule."""

    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = None
    v: list = None

    def update(self, params, grads):
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.step += 1
        t = self.step
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * np.square(g)
            m_hat = m / (1 - self.beta1 ** t)
            v_hat = v / (1 - self.beta2 ** t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def train_step(net: Mlp, target: TargetNetwork, batch, gamma: float,
               adam: AdamState) -> float:
    """One gradient step on the squared TD error of a replay batch.

    Targets come from the frozen network, with the bootstrap zeroed on
    terminal transitions; the loss is the batch sum of squared errors.
    """
    if not batch:
        raise ValueError("empty batch")
    xs = np.stack([b[0] for b in batch])
    acts = np.array([b[1] for b in batch], dtype=np.intp)
    rewards = np.array([b[2] for b in batch], dtype=np.float64)
    xs_next = np.stack([b[3] for b in batch])
    terminal = np.array([b[4] for b in batch], dtype=np.float64)

    q_next = target.forward_batch(xs_next).max(axis=1)
    y = rewards + gamma * q_next * (1.0 - terminal)

    activations = net._forward_cached(xs)
    out = activations[-1]
    idx = np.arange(len(batch))
    q_sel = out[idx, acts]
    err = q_sel - y
    loss = float(np.sum(err ** 2))
    if not math.isfinite(loss):
        raise DivergenceError(f"non-finite loss {loss}")

    dout = np.zeros_like(out)
    dout[idx, acts] = 2.0 * err
    grads = net.backward(activations, dout)
    adam.update(net.parameters(), grads)
    target.tick(net)
    return loss


def act(values, epsilon: float, rng: np.random.Generator | None = None) -> int:
    """Epsilon-greedy selection with lowest-index tie-breaking.

    epsilon 0 is fully deterministic and consumes no randomness.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must be in [0, 1], got {epsilon}")
    values = np.asarray(values)
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(len(values)))
    return int(np.argmax(values))


@dataclass(frozen=True)
class EpsilonSchedule:
    """Linear decay over the first fraction of a budget, then constant."""

    start: float = 1.0
    end: float = 0.1
    decay_frac: float = 0.1

    def value(self, step: int, budget: int) -> float:
        decay_steps = max(1, int(budget * self.decay_frac))
        if step >= decay_steps:
            return self.end
        return self.start + (self.end - self.start) * (step / decay_steps)


class ReplayBuffer:
    """Fixed-capacity ring buffer with uniform without-replacement batches."""

    def __init__(self, capacity: int = 25_000):
        self.capacity = capacity
        self._data = []
        self._pos = 0

    def push(self, item):
        if len(self._data) < self.capacity:
            self._data.append(item)
        else:
            self._data[self._pos] = item
        self._pos = (self._pos + 1) % self.capacity

    def sample(self, batch_size: int, rng: np.random.Generator):
        idx = rng.choice(len(self._data), size=batch_size, replace=False)
        return [self._data[i] for i in idx]

    def __len__(self):
        return len(self._data)

    def __contains__(self, item):
        return item in self._data


# ---------------------------------------------------------------------------
# Per-agent learners

class TabularLearner:
    """Independent Q-learner over discrete extended-state keys."""

    def __init__(self, n_actions: int, alpha: float = 0.5, gamma: float = 0.9):
        self.table = QTable(n_actions)
        self.alpha = alpha
        self.gamma = gamma

    def action_values(self, ext: ExtendedState) -> np.ndarray:
        return self.table.row(tabular_key(ext))

    def select(self, ext: ExtendedState, epsilon: float, rng) -> int:
        return act(self.action_values(ext), epsilon, rng)

    def greedy(self, ext: ExtendedState) -> int:
        return act(self.action_values(ext), 0.0)

    def observe(self, t: Transition, agent: int):
        q_update(self.table, tabular_key(t.state), t.joint_action[agent],
                 t.reward, tabular_key(t.next_state), t.terminal,
                 self.alpha, self.gamma)


class DqnLearner:
    """Independent deep Q-learner: replay buffer, target net, Adam."""

    def __init__(self, feature_fn, feature_len: int, n_actions: int, *,
                 rng_init, rng_replay, gamma: float = 0.98, lr: float = 5e-4,
                 batch_size: int = 32, buffer_capacity: int = 25_000,
                 target_sync: int = 100, learn_start: int = 1_000,
                 hidden=(64, 64)):
        self.feature_fn = feature_fn
        self.net = Mlp([feature_len, *hidden, n_actions], rng_init)
        self.target = TargetNetwork(self.net, target_sync)
        self.replay = ReplayBuffer(buffer_capacity)
        self.adam = AdamState(lr=lr)
        self.rng_replay = rng_replay
        self.gamma = gamma
        self.batch_size = batch_size
        self.learn_start = learn_start
        self.last_loss = None

    def action_values(self, ext: ExtendedState) -> np.ndarray:
        return self.net.forward(self.feature_fn(ext))

    def select(self, ext: ExtendedState, epsilon: float, rng) -> int:
        return act(self.action_values(ext), epsilon, rng)

    def greedy(self, ext: ExtendedState) -> int:
        return act(self.action_values(ext), 0.0)

    def observe(self, t: Transition, agent: int):
        self.replay.push((
            self.feature_fn(t.state), t.joint_action[agent], t.reward,
            self.feature_fn(t.next_state), t.terminal))
        if len(self.replay) >= self.learn_start:
            batch = self.replay.sample(self.batch_size, self.rng_replay)
            self.last_loss = train_step(
                self.net, self.target, batch, self.gamma, self.adam)


def independent_train(env, learners, budget: int, *, eps_schedule: EpsilonSchedule,
                      rng_policies, on_transition=None):
    """Decentralized epsilon-greedy training for a fixed number of steps.

    Every step each agent picks its own action on the shared extended
    state; the joint action is executed once and every agent stores and
    updates independently with the shared reward.  Episodes reset on
    terminal transitions.  Returns per-episode (steps, return) records.
    """
    if not learners:
        raise ValueError("need at least one learner")
    state = env.reset()
    records = []
    ep_steps = 0
    ep_return = 0.0
    for step_idx in range(budget):
        eps = eps_schedule.value(step_idx, budget)
        joint = tuple(
            learner.select(state, eps, rng_policies[i])
            for i, learner in enumerate(learners))
        t = env.step(joint)
        for i, learner in enumerate(learners):
            learner.observe(t, i)
        ep_steps += 1
        ep_return += t.reward
        if on_transition is not None:
            on_transition(step_idx, t)
        if t.terminal:
            records.append((ep_steps, ep_return))
            ep_steps = 0
            ep_return = 0.0
            state = env.reset()
        else:
            state = t.next_state
    return records
