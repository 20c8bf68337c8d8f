"""Deterministic MDP over a frozen knowledge graph.

States carry (start user, current entity, bounded hop history); actions are
the out-edges of the current entity pruned to the top-alpha targets by the
user-conditioned affinity f. Episodes run a fixed horizon; a dead-end state
exposes a single STAY self-loop so every episode reaches the horizon. Only
the final state earns reward: the affinity of the reached item normalized by
the user's best item affinity, 0 for non-items.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TextIO

from .embeddings import EmbeddingTable, user_affinity
from .errors import ContractViolation, InputError
from .graph import ITEM_KIND, STAY_RELATION, USER_KIND, KnowledgeGraph, ReasoningPath


@dataclass(frozen=True)
class AgentState:
    user: int
    current: int
    history: tuple[tuple[int, int], ...]  # (relation taken, entity it left)
    step: int


@dataclass(frozen=True)
class ActionChoice:
    rel: int
    target: int
    prune_score: float


@dataclass
class EnvConfig:
    alpha: int = 3
    horizon: int = 3
    history_k: int = 1
    max_hops: int = 3

    def validate(self) -> None:
        if self.alpha < 1:
            raise InputError("alpha must be >= 1")
        if self.max_hops < 2:
            raise InputError("max_hops must be >= 2")
        if self.horizon != self.max_hops:
            raise InputError("horizon must equal max_hops")
        if self.history_k < 0:
            raise InputError("history_k must be >= 0")


class Environment:
    """Read-only bundle of graph, embeddings, and episode configuration."""

    def __init__(self, graph: KnowledgeGraph, table: EmbeddingTable, config: EnvConfig):
        config.validate()
        if not graph.frozen:
            raise InputError("environment requires a frozen graph")
        self.graph = graph
        self.table = table
        self.config = config
        self.items = graph.entities_of_kind(ITEM_KIND)
        self._denominators: dict[int, float] = {}

    def initial_state(self, user: int) -> AgentState:
        if self.graph.entity_kind(user) != USER_KIND:
            raise InputError(
                f"initial state requires a {USER_KIND} entity, got "
                f"{self.graph.entity_label(user)}"
            )
        return AgentState(user=user, current=user, history=(), step=0)

    def pruned_actions(self, state: AgentState) -> list[ActionChoice]:
        """Top-alpha out-edges ranked by f(user, target) descending, ties by
        (relation id, entity id); a dead end yields the lone STAY action."""
        edges = self.graph.out_edges(state.current)
        if not edges:
            return [ActionChoice(STAY_RELATION, state.current, 0.0)]
        scored = [
            (rel, target, user_affinity(self.table, state.user, target))
            for rel, target in edges
        ]
        scored.sort(key=lambda rts: (-rts[2], rts[0], rts[1]))
        return [ActionChoice(rel, target, score)
                for rel, target, score in scored[: self.config.alpha]]

    def step(self, state: AgentState, action: ActionChoice,
             actions: list[ActionChoice] | None = None) -> AgentState:
        """Deterministic transition. `actions` may pass the pruned set the
        caller already computed; otherwise it is recomputed for validation."""
        if actions is None:
            actions = self.pruned_actions(state)
        if all((action.rel, action.target) != (a.rel, a.target) for a in actions):
            raise ContractViolation(
                f"action ({action.rel}, {action.target}) not in the pruned set"
            )
        history = state.history + ((action.rel, state.current),)
        k = self.config.history_k
        history = history[-k:] if k > 0 else ()
        return AgentState(
            user=state.user,
            current=action.target,
            history=history,
            step=state.step + 1,
        )

    def reward_denominator(self, user: int) -> float:
        """max_i f(user, i) over all items, cached per user."""
        cached = self._denominators.get(user)
        if cached is None:
            cached = max(
                (user_affinity(self.table, user, item) for item in self.items),
                default=0.0,
            )
            self._denominators[user] = cached
        return cached

    def terminal_reward(self, state: AgentState) -> float:
        """Eq-style terminal reward: normalized item affinity in [0, 1],
        0 for non-item terminals or users whose best item scores <= 0."""
        if state.step != self.config.horizon:
            raise InputError(
                f"terminal reward requires step {self.config.horizon}, got {state.step}"
            )
        if self.graph.entity_kind(state.current) != ITEM_KIND:
            return 0.0
        denom = self.reward_denominator(state.user)
        if denom <= 0.0:
            return 0.0
        return max(0.0, user_affinity(self.table, state.user, state.current) / denom)


def trace_line(graph: KnowledgeGraph, path: ReasoningPath) -> str:
    """One debug-trace line: `user <TAB> e_0 -r_1-> e_1 ... <TAB> reward`."""
    walk = graph.entity_key(path.entities[0])
    for rel, ent in zip(path.relations, path.entities[1:]):
        walk += f" -{graph.relation_name(rel)}-> {graph.entity_key(ent)}"
    return f"{graph.entity_key(path.entities[0])}\t{walk}\t{path.reward}"


def write_trace(graph: KnowledgeGraph, paths: list[ReasoningPath], out: TextIO) -> None:
    for path in paths:
        out.write(trace_line(graph, path) + "\n")
