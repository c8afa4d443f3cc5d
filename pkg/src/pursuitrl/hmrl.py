"""Two-layer hunter agents for the pursuit world.

The upper layer is a modular Profit Sharing learner: for each prey it
scores candidate target cells from rules keyed by (hunter, prey, own
position, one peer's position, prey position), summing the score over
the three peers and discounting by the distance the hunter would have
to travel. The lower layer is plain Q-learning over the (dx, dy) offset
to the commanded target.

In the two-prey setting the upper layer's backward credit is gated by
the inter-prey distance: share nothing upstream of a step where the two
prey were within the close range, slightly dampen it when they were far
apart.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from functools import lru_cache
from random import Random
from typing import Literal, NamedTuple, Sequence

from .env import (
    N_HUNTERS,
    Action,
    Position,
    PreyKind,
    StepOutcome,
    WorldState,
    legal_actions_at,
    manhattan_distance,
)
from .profit_sharing import WeightTable
from .q_learning import QTable, epsilon_greedy, q_update

logger = logging.getLogger(__name__)

# Credit shares below this are dropped during backward reinforcement;
# with decay <= 0.9 the cutoff is reached within ~200 steps and the
# skipped weight increments are far below tie-breaking relevance.
CREDIT_FLOOR = 1e-9


@dataclass(frozen=True)
class ATFieldParams:
    near_distance: int = 2    # at or under this, prey are dangerously close
    far_distance: int = 5     # beyond this, prey are comfortably apart
    decay: float = 0.8        # per-step upper-layer credit decay

    def __post_init__(self) -> None:
        if not 0 < self.near_distance < self.far_distance:
            raise ValueError(
                f"need 0 < near < far, got {self.near_distance}, {self.far_distance}"
            )


def atf(prey_distance: int, params: ATFieldParams) -> float:
    """Credit gate keyed on the distance between the two prey.

    Zero within the close range, full strength in the middle band, and
    0.9 once the prey are far apart.
    """
    if prey_distance < 0:
        raise ValueError("distance must be >= 0")
    if prey_distance <= params.near_distance:
        return 0.0
    if prey_distance <= params.far_distance:
        return 1.0
    return 0.9


class ModuleKey(NamedTuple):
    """Upper-layer rule state: one module per (hunter, peer) pair per prey."""

    hunter: int
    prey: int
    own: Position
    peer: Position
    goal: Position


@dataclass(frozen=True)
class TargetChoice:
    target: Position
    prey: int
    score: float


CandidateMode = Literal["ring2", "all"]


@lru_cache(maxsize=None)
def candidate_cells(goal: Position, side: int, mode: CandidateMode = "ring2") -> tuple[Position, ...]:
    """Target cells a hunter may be sent to for a prey at ``goal``.

    ``ring2`` keeps the cells within Manhattan distance 2 of the prey
    (surrounding needs the adjacent slots); ``all`` opens up the whole
    grid. The prey's own cell is never a candidate.
    """
    if mode == "ring2":
        cells = [
            Position(x, y)
            for x in range(max(0, goal.x - 2), min(side, goal.x + 3))
            for y in range(max(0, goal.y - 2), min(side, goal.y + 3))
            if 0 < abs(x - goal.x) + abs(y - goal.y) <= 2
        ]
    elif mode == "all":
        cells = [Position(x, y) for x in range(side) for y in range(side)
                 if (x, y) != goal]
    else:
        raise ValueError(f"unknown candidate mode: {mode!r}")
    return tuple(cells)


@lru_cache(maxsize=None)
def _discount_powers(base: float, count: int) -> tuple[float, ...]:
    return tuple(base**d for d in range(count))


def select_target(weights: WeightTable, hunter_index: int, state: WorldState,
                  rng: Random, reach_discount: float = 2.0,
                  mode: Literal["single", "two_prey"] = "two_prey",
                  exploration: float = 0.0,
                  candidates: CandidateMode = "ring2") -> TargetChoice:
    """Pick the commanded target cell for one hunter.

    With two live prey the nearer one (by Manhattan distance) is chased;
    equidistant prey are chosen at random. The cell is the candidate
    maximizing the peer-summed rule weight discounted by the hunter's
    distance to it, ties uniform.
    """
    if reach_discount < 1.0:
        raise ValueError(f"reach discount must be >= 1, got {reach_discount}")
    alive = state.alive_prey_indices()
    if not alive:
        raise ValueError("no alive prey to target")

    own = state.hunters[hunter_index]
    if mode == "single":
        if len(alive) != 1:
            raise ValueError("single mode expects exactly one alive prey")
        prey_index = alive[0]
    elif len(alive) == 1:
        prey_index = alive[0]
    else:
        d0 = manhattan_distance(own, state.prey[alive[0]].position)
        d1 = manhattan_distance(own, state.prey[alive[1]].position)
        if d0 < d1:
            prey_index = alive[0]
        elif d1 < d0:
            prey_index = alive[1]
        else:
            prey_index = rng.choice(alive)
            logger.debug("hunter %d equidistant from both prey, chose %d",
                         hunter_index, prey_index)

    goal = state.prey[prey_index].position
    cells = candidate_cells(goal, state.side, candidates)
    peers = [state.hunters[k] for k in range(N_HUNTERS) if k != hunter_index]
    keys = [(ModuleKey(hunter_index, prey_index, own, peer, goal)) for peer in peers]

    powers = _discount_powers(reach_discount, 2 * state.side)
    table = weights.weights
    default = weights.default_weight

    if exploration > 0.0 and rng.random() < exploration:
        target = rng.choice(cells)
        total = sum(table.get((mk, target), default) for mk in keys)
        dist = abs(own.x - target.x) + abs(own.y - target.y)
        return TargetChoice(target=target, prey=prey_index, score=total / powers[dist])

    best: list[Position] = []
    best_score = -float("inf")
    for cell in cells:
        total = 0.0
        for mk in keys:
            total += table.get((mk, cell), default)
        score = total / powers[abs(own.x - cell.x) + abs(own.y - cell.y)]
        if score > best_score:
            best_score = score
            best = [cell]
        elif score == best_score:
            best.append(cell)
    target = best[0] if len(best) == 1 else rng.choice(best)
    return TargetChoice(target=target, prey=prey_index, score=best_score)


class UpperTrace:
    """Per-step fired upper rules of the current trial, oldest first."""

    def __init__(self, max_length: int | None = None):
        self._steps: deque[tuple[tuple[ModuleKey, Position], ...]] = deque(maxlen=max_length)

    def record(self, rules: tuple[tuple[ModuleKey, Position], ...]) -> None:
        self._steps.append(rules)

    def entries(self) -> list[tuple[tuple[ModuleKey, Position], ...]]:
        return list(self._steps)

    def clear(self) -> None:
        self._steps.clear()

    def __len__(self) -> int:
        return len(self._steps)


def reinforce_upper(weights: WeightTable, trace: UpperTrace, reward: float,
                    prey_distances: Sequence[int | None], params: ATFieldParams,
                    gated: bool = True) -> WeightTable:
    """Share ``reward`` backward over the fired upper rules, then clear.

    The share entering each earlier step is the later step's share times
    the decay, times (when ``gated``) the prey-distance gate at that
    later step. A ``None`` distance (lone prey) leaves the gate open.
    """
    steps = trace.entries()
    if len(steps) != len(prey_distances):
        raise ValueError(
            f"trace length {len(steps)} != distance history {len(prey_distances)}"
        )
    if reward != 0.0:
        credit = reward
        for idx in range(len(steps) - 1, -1, -1):
            for module_key, target in steps[idx]:
                weights.add(module_key, target, credit)
            if idx == 0:
                break
            gap = prey_distances[idx]
            gate = atf(gap, params) if (gated and gap is not None) else 1.0
            credit *= params.decay * gate
            if abs(credit) < CREDIT_FLOOR:
                break
    trace.clear()
    return weights


class HunterAgent:
    """One hunter's learning state: upper weight bank, lower Q table, traces."""

    def __init__(self, index: int, *, alpha: float = 0.1, gamma: float = 0.9,
                 atf_params: ATFieldParams = ATFieldParams(),
                 reach_discount: float = 2.0, candidates: CandidateMode = "ring2",
                 goal_reward: float = 100.0, trace_cap: int | None = None):
        self.index = index
        self.upper = WeightTable()
        self.q = QTable(alpha=alpha, gamma=gamma)
        self.atf_params = atf_params
        self.reach_discount = reach_discount
        self.candidates: CandidateMode = candidates
        self.goal_reward = goal_reward
        self.trace = UpperTrace(trace_cap)
        self.prey_distances: deque[int | None] = deque(maxlen=trace_cap)
        self.pending: tuple[tuple[int, int], Action, Position, int] | None = None

    def begin_trial(self) -> None:
        self.trace.clear()
        self.prey_distances.clear()
        self.pending = None

    def policy_step(self, state: WorldState, rng: Random, exploration: float) -> Action:
        """Select this step's target, then the move toward it."""
        choice = select_target(self.upper, self.index, state, rng,
                               reach_discount=self.reach_discount,
                               exploration=exploration, candidates=self.candidates)
        own = state.hunters[self.index]
        goal = state.prey[choice.prey].position
        fired = tuple(
            (ModuleKey(self.index, choice.prey, own, state.hunters[k], goal), choice.target)
            for k in range(N_HUNTERS) if k != self.index
        )
        self.trace.record(fired)
        alive = state.alive_prey_indices()
        gap = (manhattan_distance(state.prey[0].position, state.prey[1].position)
               if len(alive) == 2 else None)
        self.prey_distances.append(gap)

        rel = (choice.target.x - own.x, choice.target.y - own.y)
        action = epsilon_greedy(self.q, rel, legal_actions_at(own, state.side),
                                exploration, rng, target=choice.prey)
        self.pending = (rel, action, choice.target, choice.prey)
        return action

    def observe(self, next_state: WorldState) -> bool:
        """Lower-layer update after the world moved; True if the target was reached."""
        if self.pending is None:
            raise RuntimeError("observe() without a preceding policy_step()")
        rel, action, target, prey_tag = self.pending
        self.pending = None
        new_pos = next_state.hunters[self.index]
        reached = new_pos == target
        reward = self.goal_reward if reached else 0.0
        next_rel = (target.x - new_pos.x, target.y - new_pos.y)
        q_update(self.q, rel, action, reward, next_rel, terminal=reached,
                 target=prey_tag)
        return reached

    def finish_trial(self, reward: float, gated: bool) -> None:
        """Upper-layer reinforcement (or plain trace reset when reward is 0)."""
        reinforce_upper(self.upper, self.trace, reward, list(self.prey_distances),
                        self.atf_params, gated=gated)
        self.prey_distances.clear()


def deliver_rewards(agents: Sequence[HunterAgent], outcome: StepOutcome,
                    gated: bool = True, positive_reward: float = 100.0,
                    dangerous_reward: float = 0.0) -> list[bool]:
    """Per-step reward plumbing for all hunters.

    Every hunter gets its lower-layer update; on a capture the upper
    traces are settled with the positive or the dangerous reward.
    Returns the per-hunter target-reached flags.
    """
    reached = [agent.observe(outcome.next_state) for agent in agents]
    if outcome.captures:
        positive = any(kind is PreyKind.POSITIVE for _, kind in outcome.captures)
        reward = positive_reward if positive else dangerous_reward
        for agent in agents:
            agent.finish_trial(reward, gated)
    return reached
