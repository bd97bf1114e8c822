"""Deep Q-learning over circuit parameters with continuous actions.

An episode builds an n-step circuit.  At step t the agent picks an action
vector in [-1, 1]^(2N+1) by maximising the Q network over its action inputs
(projected Nesterov ascent from several random starts), adds Gaussian
exploration noise, and clips.  Only the final step is rewarded.  Transitions
go into a replay memory of whole episodes that is swept after every episode,
with bootstrap targets taken from a periodically synchronised target network.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field, fields
from typing import Callable, NamedTuple

import numpy as np

from .models import EvolutionConfig, HamiltonianSpec, LRI, exact_evolve, trotter_params
from .neural_net import Adam, Mlp, q_network
from .rewards import RewardKind, reward
from .statevec import CircuitParams, StepAngles, n_qubits, run_circuit

log = logging.getLogger(__name__)

# evaluator(states (B, ds), actions (B, da)) -> (values (B,), d value / d action (B, da))
Evaluator = Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]


@dataclass
class TrainConfig:
    episodes: int = 50_000
    n: int = 3
    eps_start: float = 1.0
    eps_end: float = 0.005
    ascent_restarts: int = 15
    ascent_momentum: float = 0.9
    ascent_lr: float = 0.6
    ascent_iters: int = 50
    target_sync_period: int = 50
    memory_episodes: int = 50
    rescale_xx: float = 0.2
    rescale_single: float = 0.4
    adam_lr: float = 1e-3
    seed: int = 0
    reward_kind: RewardKind = RewardKind.LOCAL
    gate_alpha: float | None = None
    trotter_seed: bool = True

    def __post_init__(self):
        self.reward_kind = RewardKind(self.reward_kind)
        positive = ("n", "ascent_restarts", "ascent_lr", "target_sync_period",
                    "memory_episodes", "rescale_xx", "rescale_single", "adam_lr")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.episodes < 0 or self.ascent_iters < 0:
            raise ValueError("episodes and ascent_iters must be >= 0")
        if not 0 < self.eps_end < self.eps_start:
            raise ValueError("need 0 < eps_end < eps_start")
        if not 0 <= self.ascent_momentum < 1:
            raise ValueError("ascent_momentum must lie in [0, 1)")

    @classmethod
    def field_names(cls) -> set[str]:
        return {f.name for f in fields(cls)}


def epsilon(episode: int, cfg: TrainConfig) -> float:
    """Exponential decay from eps_start at episode 0 to eps_end at the last."""
    if cfg.episodes == 0:
        return cfg.eps_start
    frac = episode / cfg.episodes
    return cfg.eps_start * (cfg.eps_end / cfg.eps_start) ** frac


def action_dim(N: int) -> int:
    return 2 * N + 1


def rescale_action(a: np.ndarray, cfg: TrainConfig, alpha: float) -> StepAngles:
    """a[0] drives the entangler; a[1:] holds (z, x) pairs for sites 1..N."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 1 or a.size < 3 or a.size % 2 != 1:
        raise ValueError(f"action length {a.size} is not 2N+1 for N >= 1")
    single = a[1:] * cfg.rescale_single
    return StepAngles(a[0] * cfg.rescale_xx, single[0::2], single[1::2], alpha)


def unscale_step(step: StepAngles, cfg: TrainConfig) -> np.ndarray:
    """Inverse of :func:`rescale_action`, clipped into the action box."""
    a = np.empty(action_dim(step.N))
    a[0] = step.theta_xx / cfg.rescale_xx
    a[1::2] = step.theta_z / cfg.rescale_single
    a[2::2] = step.theta_x / cfg.rescale_single
    return np.clip(a, -1.0, 1.0)


def actions_to_circuit(actions, cfg: TrainConfig, alpha: float) -> CircuitParams:
    return CircuitParams([rescale_action(a, cfg, alpha) for a in actions])


def encode_state(t: int, prev_action: np.ndarray | None, n: int, d_a: int) -> np.ndarray:
    """One-hot of step t (all zeros for the terminal t = n) + previous action."""
    s = np.zeros(n + d_a)
    if t < n:
        s[t] = 1.0
    if prev_action is not None:
        s[n:] = prev_action
    return s


class NetworkEvaluator:
    """Q(s, a) and its action gradient from a network fed ``[s, a]``."""

    def __init__(self, net: Mlp):
        self.net = net

    def __call__(self, states: np.ndarray, actions: np.ndarray):
        x = np.concatenate([states, actions], axis=1)
        values, grads = self.net.input_gradient(x)
        return values, grads[:, states.shape[1]:]

    def bind(self, states: np.ndarray):
        """Fast path: ``f(actions)`` with the state rows fixed."""
        return self.net.action_ascent_terms(states, states.shape[1])


def network_evaluator(net: Mlp) -> NetworkEvaluator:
    return NetworkEvaluator(net)


def argmax_actions(evaluator: Evaluator, states: np.ndarray, d_a: int,
                   cfg: TrainConfig, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Approximate argmax_a Q(s, a) over the box for each row of ``states``.

    All restarts for all states run as one batch.  Returns the best action
    and its value per state.
    """
    states = np.atleast_2d(states)
    M, R = states.shape[0], cfg.ascent_restarts
    S = np.repeat(states, R, axis=0)
    a = rng.uniform(-1.0, 1.0, (M * R, d_a))
    mu, lr = cfg.ascent_momentum, cfg.ascent_lr
    if hasattr(evaluator, "bind"):
        f = evaluator.bind(S)
    else:
        def f(actions):
            return evaluator(S, actions)
    v = np.zeros_like(a)
    for _ in range(cfg.ascent_iters):
        look = np.clip(a + mu * v, -1.0, 1.0)
        _, g = f(look)
        v = mu * v + lr * g
        new = np.clip(a + v, -1.0, 1.0)
        v = new - a
        a = new
    values, _ = f(a)
    values = values.reshape(M, R)
    best = np.argmax(values, axis=1)
    return a.reshape(M, R, d_a)[np.arange(M), best], values[np.arange(M), best]


def argmax_action(evaluator: Evaluator, s: np.ndarray, d_a: int, cfg: TrainConfig,
                  rng: np.random.Generator) -> np.ndarray:
    return argmax_actions(evaluator, s[None, :], d_a, cfg, rng)[0][0]


@dataclass(frozen=True)
class Transition:
    s: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray
    terminal: bool
    key: tuple[int, int] = (0, 0)  # (episode, step), identifies cached targets


class ReplayMemory:
    """Ring buffer of whole episodes; oldest episodes are evicted first."""

    def __init__(self, capacity: int = 50):
        self.episodes: deque[list[Transition]] = deque(maxlen=capacity)

    def push(self, episode: list[Transition]) -> None:
        self.episodes.append(list(episode))

    def transitions(self) -> list[Transition]:
        return [tr for ep in self.episodes for tr in ep]

    def __len__(self) -> int:
        return sum(len(ep) for ep in self.episodes)


class CircuitEnv:
    """Holds psi0 and the precomputed target; scores action sequences."""

    def __init__(self, psi0: np.ndarray, psi_target: np.ndarray, cfg: TrainConfig,
                 alpha: float):
        self.psi0 = psi0
        self.psi_target = psi_target
        self.N = n_qubits(psi0)
        self.cfg = cfg
        self.alpha = alpha

    @property
    def d_a(self) -> int:
        return action_dim(self.N)

    def circuit(self, actions) -> CircuitParams:
        return actions_to_circuit(actions, self.cfg, self.alpha)

    def reward(self, actions) -> float:
        psi = run_circuit(self.psi0, self.circuit(actions))
        return reward(self.cfg.reward_kind, psi, self.psi_target)


def episode_transitions(actions, final_reward: float, n: int, d_a: int,
                        episode: int = 0) -> list[Transition]:
    out, prev = [], None
    for t, a in enumerate(actions):
        s = encode_state(t, prev, n, d_a)
        s_next = encode_state(t + 1, a, n, d_a)
        terminal = t == n - 1
        out.append(Transition(s, np.array(a, dtype=float), final_reward if terminal else 0.0,
                              s_next, terminal, (episode, t)))
        prev = a
    return out


@dataclass
class Agent:
    behavior: Mlp
    target: Mlp
    adam: Adam
    target_cache: dict = field(default_factory=dict)

    @classmethod
    def create(cls, n: int, d_a: int, cfg: TrainConfig, rng: np.random.Generator) -> "Agent":
        behavior = q_network(n + 2 * d_a, rng)
        return cls(behavior, behavior.copy(), Adam(behavior.params.size, lr=cfg.adam_lr))

    def sync_target(self) -> None:
        self.target.load_params(self.behavior)
        self.target_cache.clear()


class EpisodeResult(NamedTuple):
    transitions: list[Transition]
    reward: float
    actions: list[np.ndarray]


def run_episode(env: CircuitEnv, agent: Agent, cfg: TrainConfig, episode: int,
                rng: np.random.Generator, eps: float | None = None) -> EpisodeResult:
    """Greedy action per step plus N(0, (eps/2)^2) noise, clipped to the box."""
    if eps is None:
        eps = epsilon(episode, cfg)
    n, d_a = cfg.n, env.d_a
    q = network_evaluator(agent.behavior)
    actions, prev = [], None
    for t in range(n):
        s = encode_state(t, prev, n, d_a)
        a = argmax_action(q, s, d_a, cfg, rng)
        if eps > 0:
            a = a + rng.normal(0.0, eps / 2, d_a)
        a = np.clip(a, -1.0, 1.0)
        actions.append(a)
        prev = a
    r = env.reward(actions)
    return EpisodeResult(episode_transitions(actions, r, n, d_a, episode), r, actions)


def compute_targets(agent: Agent, transitions: list[Transition], d_a: int,
                    cfg: TrainConfig, rng: np.random.Generator) -> np.ndarray:
    """y = r for terminal transitions, else r + max_a Q_target(s', a), clamped to [0, 1].

    Bootstrap values depend only on s' and the target network, so they are
    cached until the next target synchronisation.
    """
    missing = [tr for tr in transitions
               if not tr.terminal and tr.key not in agent.target_cache]
    if missing:
        states = np.stack([tr.s_next for tr in missing])
        _, values = argmax_actions(network_evaluator(agent.target), states, d_a, cfg, rng)
        for tr, val in zip(missing, values):
            agent.target_cache[tr.key] = float(val)
    y = np.array([tr.r + (0.0 if tr.terminal else agent.target_cache[tr.key])
                  for tr in transitions])
    return np.clip(y, 0.0, 1.0)


def replay_sweep(agent: Agent, memory: ReplayMemory, d_a: int, cfg: TrainConfig,
                 rng: np.random.Generator) -> float:
    """One backprop + Adam step per stored transition, in shuffled order.

    Returns the mean loss (0 for an empty memory).
    """
    transitions = memory.transitions()
    if not transitions:
        return 0.0
    live = {tr.key for tr in transitions}
    for key in [k for k in agent.target_cache if k not in live]:
        del agent.target_cache[key]
    order = rng.permutation(len(transitions))
    transitions = [transitions[i] for i in order]
    ys = compute_targets(agent, transitions, d_a, cfg, rng)
    inputs = np.stack([np.concatenate([tr.s, tr.a]) for tr in transitions])
    return agent.adam.fit_sequence(agent.behavior, inputs, ys) / len(transitions)


@dataclass
class TrainResult:
    best_params: CircuitParams
    best_actions: list[np.ndarray]
    best_reward: float
    seed_reward: float
    trace: list[tuple[int, float, float]]  # (episode, reward, best reward so far)
    agent: Agent | None = None
    rng: np.random.Generator | None = None


def seed_actions(spec: HamiltonianSpec, tau: float, N: int, cfg: TrainConfig) -> list[np.ndarray]:
    """Trotter circuit (LRI) mapped into the action box, else all zeros."""
    if cfg.trotter_seed and isinstance(spec, LRI):
        return [unscale_step(step, cfg) for step in trotter_params(spec, tau, cfg.n).steps]
    return [np.zeros(action_dim(N)) for _ in range(cfg.n)]


def train(spec: HamiltonianSpec, tau: float, cfg: TrainConfig,
          evolution: EvolutionConfig | None = None,
          progress: Callable[[int, float, float], None] | None = None) -> TrainResult:
    rng = np.random.default_rng(cfg.seed)
    psi0 = spec.initial_state()
    evolution = evolution or EvolutionConfig(tau)
    psi_target = exact_evolve(spec, psi0, evolution)
    alpha = cfg.gate_alpha if cfg.gate_alpha is not None else spec.gate_alpha
    env = CircuitEnv(psi0, psi_target, cfg, alpha)
    n, d_a = cfg.n, env.d_a

    agent = Agent.create(n, d_a, cfg, rng)
    memory = ReplayMemory(cfg.memory_episodes)

    actions = seed_actions(spec, tau, spec.N, cfg)
    seed_r = env.reward(actions)
    memory.push(episode_transitions(actions, seed_r, n, d_a, 0))
    best_r, best_actions = seed_r, actions
    trace = [(0, seed_r, best_r)]

    for episode in range(1, cfg.episodes + 1):
        result = run_episode(env, agent, cfg, episode, rng)
        memory.push(result.transitions)
        if result.reward > best_r:
            best_r, best_actions = result.reward, result.actions
        replay_sweep(agent, memory, d_a, cfg, rng)
        if episode % cfg.target_sync_period == 0:
            agent.sync_target()
        trace.append((episode, result.reward, best_r))
        if progress is not None:
            progress(episode, result.reward, best_r)

    return TrainResult(env.circuit(best_actions), [np.asarray(a) for a in best_actions],
                       best_r, seed_r, trace, agent, rng)
