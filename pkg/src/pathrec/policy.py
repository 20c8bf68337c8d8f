"""Stochastic path-walking policy trained with REINFORCE.

The policy scores each candidate action with a 2-layer feed-forward network
over concatenated state and action embedding features and samples from the
softmax over the pruned action set. Updates follow the plain Monte-Carlo
policy gradient: mean over trajectories of sum_t R_T * grad log pi(a_t|s_t),
no baseline. Every trajectory draws from its own generator derived from
(seed, trajectory index), so results do not depend on scheduling.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .embeddings import EmbeddingTable
from .errors import ContractViolation, InputError
from .graph import STAY_RELATION, USER_KIND, KnowledgeGraph
from .rl_env import ActionChoice, AgentState, EnvConfig, Environment

POLICY_MAGIC = b"PGPN"
POLICY_VERSION = 1


@dataclass
class PolicyParams:
    w1: np.ndarray  # (hidden, in_dim)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (hidden,)
    b2: float

    @property
    def in_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden(self) -> int:
        return self.w1.shape[0]

    def copy(self) -> "PolicyParams":
        return PolicyParams(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2)


@dataclass
class PolicyTrainConfig:
    epochs: int = 100
    learning_rate: float = 0.001
    trajectories_per_update: int = 64
    hidden: int = 64
    seed: int = 0

    def validate(self) -> None:
        if self.epochs < 1 or self.hidden < 1 or self.trajectories_per_update < 1:
            raise InputError("epochs, hidden, trajectories_per_update must be positive")
        if self.learning_rate < 0:
            raise InputError("learning_rate must be >= 0")


@dataclass
class Trajectory:
    states: tuple[AgentState, ...]  # s_0 .. s_T
    actions: tuple[ActionChoice, ...]  # a_1 .. a_T
    action_log_probs: tuple[float, ...]
    reward: float
    # per-step context needed to re-evaluate pi under updated parameters
    action_sets: tuple[tuple[ActionChoice, ...], ...]
    chosen: tuple[int, ...]
    entropies: tuple[float, ...] = ()


def init_policy_params(dim: int, hidden: int, rng: np.random.Generator) -> PolicyParams:
    in_dim = 4 * dim  # user + current + history summary + action feature
    bound1 = 1.0 / np.sqrt(in_dim)
    bound2 = 1.0 / np.sqrt(hidden)
    return PolicyParams(
        w1=rng.uniform(-bound1, bound1, size=(hidden, in_dim)),
        b1=rng.uniform(-bound1, bound1, size=hidden),
        w2=rng.uniform(-bound2, bound2, size=hidden),
        b2=float(rng.uniform(-bound2, bound2)),
    )


def _relation_vec(table: EmbeddingTable, rel: int) -> np.ndarray:
    if rel == STAY_RELATION:
        return np.zeros(table.dim)
    return table.relation_vecs[rel]


def encode_state(table: EmbeddingTable, state: AgentState) -> np.ndarray:
    """[v_user ; v_current ; mean over history of (v_rel + v_entity)]."""
    table._check_entity(state.user)
    table._check_entity(state.current)
    if state.history:
        hist = np.mean(
            [_relation_vec(table, rel) + table.entity_vecs[ent]
             for rel, ent in state.history],
            axis=0,
        )
    else:
        hist = np.zeros(table.dim)
    return np.concatenate(
        [table.entity_vecs[state.user], table.entity_vecs[state.current], hist]
    )


def _action_feature(table: EmbeddingTable, action: ActionChoice) -> np.ndarray:
    return _relation_vec(table, action.rel) + table.entity_vecs[action.target]


def _features(
    table: EmbeddingTable, state: AgentState, actions: tuple[ActionChoice, ...]
) -> np.ndarray:
    state_vec = encode_state(table, state)
    return np.stack(
        [np.concatenate([state_vec, _action_feature(table, a)]) for a in actions]
    )


def _forward(params: PolicyParams, x: np.ndarray):
    pre = x @ params.w1.T + params.b1
    hidden = np.maximum(pre, 0.0)
    logits = hidden @ params.w2 + params.b2
    return pre, hidden, logits


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits)
    exp = np.exp(shifted)
    return exp / exp.sum()


def action_distribution(
    params: PolicyParams,
    table: EmbeddingTable,
    state: AgentState,
    actions: list[ActionChoice] | tuple[ActionChoice, ...],
) -> np.ndarray:
    """Softmax over per-action logits; positive and summing to one."""
    if not actions:
        raise ContractViolation("action_distribution requires a nonempty action set")
    _, _, logits = _forward(params, _features(table, state, tuple(actions)))
    return _softmax(logits)


def sample_trajectory(
    params: PolicyParams, env: Environment, user: int, rng: np.random.Generator
) -> Trajectory:
    """Roll one episode to the horizon, sampling each hop from the policy."""
    state = env.initial_state(user)
    states = [state]
    actions: list[ActionChoice] = []
    log_probs: list[float] = []
    action_sets: list[tuple[ActionChoice, ...]] = []
    chosen: list[int] = []
    entropies: list[float] = []
    for _ in range(env.config.horizon):
        available = tuple(env.pruned_actions(state))
        probs = action_distribution(params, env.table, state, available)
        idx = int(rng.choice(len(available), p=probs))
        action_sets.append(available)
        chosen.append(idx)
        actions.append(available[idx])
        log_probs.append(float(np.log(probs[idx])))
        entropies.append(float(-np.sum(probs * np.log(probs))))
        state = env.step(state, available[idx], list(available))
        states.append(state)
    return Trajectory(
        states=tuple(states),
        actions=tuple(actions),
        action_log_probs=tuple(log_probs),
        reward=env.terminal_reward(state),
        action_sets=tuple(action_sets),
        chosen=tuple(chosen),
        entropies=tuple(entropies),
    )


def trajectories_objective(
    params: PolicyParams, table: EmbeddingTable, trajectories: list[Trajectory]
) -> float:
    """mean over trajectories of sum_t R_T * log pi(a_t | s_t), the scalar
    whose gradient reinforce_gradient returns."""
    total = 0.0
    for traj in trajectories:
        for state, available, idx in zip(traj.states, traj.action_sets, traj.chosen):
            probs = action_distribution(params, table, state, available)
            total += traj.reward * float(np.log(probs[idx]))
    return total / len(trajectories)


def reinforce_gradient(
    params: PolicyParams, table: EmbeddingTable, trajectories: list[Trajectory]
) -> PolicyParams:
    """Exact gradient of trajectories_objective at the given parameters."""
    if not trajectories:
        raise InputError("need at least one trajectory")
    dw1 = np.zeros_like(params.w1)
    db1 = np.zeros_like(params.b1)
    dw2 = np.zeros_like(params.w2)
    db2 = 0.0
    for traj in trajectories:
        if traj.reward == 0.0:
            continue
        for state, available, idx in zip(traj.states, traj.action_sets, traj.chosen):
            x = _features(table, state, available)
            pre, hidden, logits = _forward(params, x)
            probs = _softmax(logits)
            coeff = -probs
            coeff[idx] += 1.0
            coeff *= traj.reward
            # d logit_j / d theta, combined with softmax coefficients
            dw2 += hidden.T @ coeff
            db2 += float(coeff.sum())
            dpre = np.outer(coeff, params.w2) * (pre > 0)
            dw1 += dpre.T @ x
            db1 += dpre.sum(axis=0)
    n = len(trajectories)
    return PolicyParams(dw1 / n, db1 / n, dw2 / n, db2 / n)


def train_policy(
    graph: KnowledgeGraph,
    table: EmbeddingTable,
    env_config: EnvConfig,
    train_config: PolicyTrainConfig,
) -> tuple[PolicyParams, list[tuple[float, float]]]:
    """Gradient-ascent REINFORCE over uniformly sampled users.

    Returns final parameters and a per-epoch (mean reward, mean entropy)
    trace. Trajectory i of the whole run always uses the generator seeded by
    (seed, 1, i), so the trace is independent of batching or scheduling.
    """
    train_config.validate()
    env = Environment(graph, table, env_config)
    users = graph.entities_of_kind(USER_KIND)
    if not any(graph.out_degree(u) > 0 for u in users):
        raise InputError("no subscriber has outgoing edges; nothing to learn from")

    params = init_policy_params(
        table.dim, train_config.hidden, np.random.default_rng([train_config.seed, 0])
    )
    shuffle_rng = np.random.default_rng([train_config.seed, 2])
    trace: list[tuple[float, float]] = []
    traj_counter = 0
    for _epoch in range(train_config.epochs):
        order = shuffle_rng.permutation(len(users))
        rewards: list[float] = []
        entropies: list[float] = []
        for start in range(0, len(order), train_config.trajectories_per_update):
            batch: list[Trajectory] = []
            for j in order[start:start + train_config.trajectories_per_update]:
                rng = np.random.default_rng([train_config.seed, 1, traj_counter])
                traj_counter += 1
                traj = sample_trajectory(params, env, users[int(j)], rng)
                batch.append(traj)
                rewards.append(traj.reward)
                entropies.extend(traj.entropies)
            grad = reinforce_gradient(params, env.table, batch)
            params.w1 += train_config.learning_rate * grad.w1
            params.b1 += train_config.learning_rate * grad.b1
            params.w2 += train_config.learning_rate * grad.w2
            params.b2 += train_config.learning_rate * grad.b2
        trace.append(
            (float(np.mean(rewards)), float(np.mean(entropies)) if entropies else 0.0)
        )
    return params, trace


# -- persistence -------------------------------------------------------------

def save_policy(params: PolicyParams, path: str | Path) -> None:
    """Magic, version, layer dims, then little-endian float64 layer data."""
    with open(path, "wb") as fh:
        fh.write(POLICY_MAGIC)
        fh.write(struct.pack("<BII", POLICY_VERSION, params.hidden, params.in_dim))
        fh.write(np.ascontiguousarray(params.w1, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(params.b1, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(params.w2, dtype="<f8").tobytes())
        fh.write(struct.pack("<d", params.b2))


def load_policy(path: str | Path) -> PolicyParams:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != POLICY_MAGIC:
        raise InputError(f"{path}: not a policy file")
    version, hidden, in_dim = struct.unpack_from("<BII", data, 4)
    if version != POLICY_VERSION:
        raise InputError(f"{path}: unsupported version {version}")
    offset = 4 + struct.calcsize("<BII")

    def take(count: int) -> np.ndarray:
        nonlocal offset
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=offset)
        offset += count * 8
        return arr.astype(np.float64)

    w1 = take(hidden * in_dim).reshape(hidden, in_dim)
    b1 = take(hidden)
    w2 = take(hidden)
    (b2,) = struct.unpack_from("<d", data, offset)
    offset += 8
    if offset != len(data):
        raise InputError(f"{path}: trailing bytes")
    return PolicyParams(w1, b1, w2, float(b2))


def write_training_log(trace: list[tuple[float, float]], out) -> None:
    """`epoch <TAB> mean_reward <TAB> mean_entropy` per line."""
    for epoch, (reward, entropy) in enumerate(trace):
        out.write(f"{epoch}\t{reward}\t{entropy}\n")
