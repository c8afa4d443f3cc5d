"""Grid world for the multi-agent pursuit problem.

Four hunters chase two randomly moving prey on a bounded square grid.
All agents move simultaneously; a prey is captured when every in-bounds
neighbouring cell is occupied by a hunter (grid walls count as blocking).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum
from random import Random
from typing import Callable, Iterable, NamedTuple, Sequence


class Position(NamedTuple):
    x: int
    y: int


class Action(Enum):
    """One move per step. x grows east, y grows south."""

    STAY = (0, 0)
    NORTH = (0, -1)
    SOUTH = (0, 1)
    EAST = (1, 0)
    WEST = (-1, 0)

    @property
    def delta(self) -> tuple[int, int]:
        return self.value


ACTIONS: tuple[Action, ...] = tuple(Action)

# Serialization vocabulary for CSV/rule files: screen directions, with
# "down" meaning +y (south).
ACTION_LABELS = {
    Action.STAY: "stay",
    Action.NORTH: "up",
    Action.SOUTH: "down",
    Action.EAST: "right",
    Action.WEST: "left",
}
ACTION_BY_LABEL = {label: action for action, label in ACTION_LABELS.items()}


class PreyKind(Enum):
    POSITIVE = "positive"
    DANGEROUS = "dangerous"


N_HUNTERS = 4
N_PREY = 2

HUNTER_IDS = tuple(f"h{i}" for i in range(N_HUNTERS))
PREY_IDS = tuple(f"p{j}" for j in range(N_PREY))


@dataclass(frozen=True)
class GridConfig:
    side: int = 7
    prey_kinds: tuple[PreyKind, PreyKind] = (PreyKind.POSITIVE, PreyKind.DANGEROUS)
    prey_alive: tuple[bool, bool] = (True, True)


@dataclass
class PreyState:
    position: Position
    alive: bool
    kind: PreyKind


@dataclass
class WorldState:
    side: int
    hunters: list[Position]
    prey: list[PreyState]
    step_count: int = 0

    def occupied_cells(self) -> set[Position]:
        cells = set(self.hunters)
        cells.update(p.position for p in self.prey if p.alive)
        return cells

    def alive_prey_indices(self) -> list[int]:
        return [j for j, p in enumerate(self.prey) if p.alive]


@dataclass
class StepOutcome:
    next_state: WorldState
    captures: list[tuple[int, PreyKind]] = field(default_factory=list)
    blocked_moves: list[str] = field(default_factory=list)


def manhattan_distance(a: Position | tuple[int, int], b: Position | tuple[int, int]) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


def in_bounds(pos: tuple[int, int], side: int) -> bool:
    return 0 <= pos[0] < side and 0 <= pos[1] < side


def neighbor_cells(pos: Position, side: int) -> list[Position]:
    """In-bounds 4-neighbourhood of a cell."""
    x, y = pos
    cells = []
    for dx, dy in ((0, -1), (0, 1), (1, 0), (-1, 0)):
        nx, ny = x + dx, y + dy
        if 0 <= nx < side and 0 <= ny < side:
            cells.append(Position(nx, ny))
    return cells


# Legal-action cache keyed by grid side; positions on a side-7 grid are
# looked up tens of thousands of times per trial.
_LEGAL_CACHE: dict[int, dict[Position, tuple[Action, ...]]] = {}


def legal_actions_at(pos: Position, side: int) -> tuple[Action, ...]:
    try:
        return _LEGAL_CACHE[side][pos]
    except KeyError:
        pass
    table = _LEGAL_CACHE.setdefault(side, {})
    if not table:
        for x in range(side):
            for y in range(side):
                cell = Position(x, y)
                table[cell] = tuple(
                    a for a in ACTIONS
                    if 0 <= x + a.value[0] < side and 0 <= y + a.value[1] < side
                )
    return table[pos]


def _agent_position(state: WorldState, agent_id: str) -> Position:
    if agent_id in HUNTER_IDS:
        return state.hunters[int(agent_id[1:])]
    if agent_id in PREY_IDS:
        prey = state.prey[int(agent_id[1:])]
        if not prey.alive:
            raise ValueError(f"agent {agent_id} is dead")
        return prey.position
    raise KeyError(f"unknown agent id: {agent_id!r}")


def legal_moves(state: WorldState, agent_id: str) -> set[Action]:
    """Actions whose destination stays on the grid. Stay is always legal."""
    return set(legal_actions_at(_agent_position(state, agent_id), state.side))


def new_world(seed: int, config: GridConfig = GridConfig()) -> WorldState:
    """Place 4 hunters and 2 prey on distinct random cells."""
    n_agents = N_HUNTERS + N_PREY
    if config.side * config.side < n_agents:
        raise ValueError(
            f"grid of side {config.side} cannot hold {n_agents} distinct agents"
        )
    rng = Random(seed)
    cells = [Position(x, y) for x in range(config.side) for y in range(config.side)]
    picks = rng.sample(cells, n_agents)
    hunters = picks[:N_HUNTERS]
    prey = [
        PreyState(position=picks[N_HUNTERS + j], alive=config.prey_alive[j],
                  kind=config.prey_kinds[j])
        for j in range(N_PREY)
    ]
    return WorldState(side=config.side, hunters=hunters, prey=prey)


def _surrounded(prey_pos: Position, hunter_cells: set[Position], side: int) -> bool:
    return all(cell in hunter_cells for cell in neighbor_cells(prey_pos, side))


def is_captured(state: WorldState, prey_index: int) -> bool:
    """True when every in-bounds neighbour cell of the prey holds a hunter."""
    prey = state.prey[prey_index]
    if not prey.alive:
        raise ValueError(f"prey {prey_index} is dead")
    return _surrounded(prey.position, set(state.hunters), state.side)


PreyPolicy = Callable[[WorldState, int, Sequence[Action], Random], Action]


def random_prey_policy(state: WorldState, prey_index: int,
                       legal: Sequence[Action], rng: Random) -> Action:
    return rng.choice(legal)


def step(state: WorldState, hunter_actions: Sequence[Action], rng: Random,
         prey_policy: PreyPolicy = random_prey_policy) -> StepOutcome:
    """Advance the world one tick with simultaneous moves.

    Movement conflicts (two agents claiming one cell, or moving onto an
    agent that stays put) are settled by a random priority order drawn
    from ``rng``; losers stay where they are. Captured prey are marked
    dead and stop occupying their cell.
    """
    if len(hunter_actions) != N_HUNTERS:
        raise ValueError(f"expected {N_HUNTERS} hunter actions")

    side = state.side
    current: dict[str, Position] = {}
    dest: dict[str, Position] = {}

    for i, action in enumerate(hunter_actions):
        pos = state.hunters[i]
        nx, ny = pos.x + action.value[0], pos.y + action.value[1]
        if not (0 <= nx < side and 0 <= ny < side):
            raise ValueError(f"illegal action {action.name} for hunter {i} at {pos}")
        aid = HUNTER_IDS[i]
        current[aid] = pos
        dest[aid] = Position(nx, ny)

    # Prey draws happen before the priority draw, in prey order, so the
    # rng stream for a step is well defined.
    for j, prey in enumerate(state.prey):
        if not prey.alive:
            continue
        legal = legal_actions_at(prey.position, side)
        action = prey_policy(state, j, legal, rng)
        nx, ny = prey.position.x + action.value[0], prey.position.y + action.value[1]
        if not (0 <= nx < side and 0 <= ny < side):
            raise ValueError(f"illegal prey action {action.name} for prey {j}")
        aid = PREY_IDS[j]
        current[aid] = prey.position
        dest[aid] = Position(nx, ny)

    order = list(current)
    rng.shuffle(order)
    rank = {aid: k for k, aid in enumerate(order)}

    movers = {aid for aid in current if dest[aid] != current[aid]}
    blocked: list[str] = []

    # Same destination: the best-ranked claimant moves, the rest stay.
    claims: dict[Position, list[str]] = {}
    for aid in movers:
        claims.setdefault(dest[aid], []).append(aid)
    for cell, group in claims.items():
        if len(group) > 1:
            group.sort(key=rank.__getitem__)
            for loser in group[1:]:
                movers.discard(loser)
                blocked.append(loser)

    # A move onto a cell whose occupant ends up staying is blocked; each
    # new stayer can block further movers, so iterate to a fixed point.
    stay_cells = {current[aid] for aid in current if aid not in movers}
    changed = True
    while changed:
        changed = False
        for aid in list(movers):
            if dest[aid] in stay_cells:
                movers.discard(aid)
                blocked.append(aid)
                stay_cells.add(current[aid])
                changed = True

    final = {aid: (dest[aid] if aid in movers else current[aid]) for aid in current}

    hunters = [final[HUNTER_IDS[i]] for i in range(N_HUNTERS)]
    prey = [
        PreyState(position=final.get(PREY_IDS[j], p.position), alive=p.alive, kind=p.kind)
        for j, p in enumerate(state.prey)
    ]
    next_state = WorldState(side=side, hunters=hunters, prey=prey,
                            step_count=state.step_count + 1)

    captures: list[tuple[int, PreyKind]] = []
    hunter_cells = set(hunters)
    for j, p in enumerate(prey):
        if p.alive and _surrounded(p.position, hunter_cells, side):
            captures.append((j, p.kind))
            p.alive = False

    blocked.sort(key=rank.__getitem__)
    return StepOutcome(next_state=next_state, captures=captures, blocked_moves=blocked)


def trajectory_rows(state: WorldState) -> list[tuple[int, str, int, int]]:
    """Positions of all live agents at one step, for trajectory dumps."""
    rows = [(state.step_count, HUNTER_IDS[i], p.x, p.y)
            for i, p in enumerate(state.hunters)]
    rows.extend((state.step_count, PREY_IDS[j], p.position.x, p.position.y)
                for j, p in enumerate(state.prey) if p.alive)
    return rows


def save_trajectory(path, rows: Iterable[tuple[int, str, int, int, str]]) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["step", "agent", "x", "y", "action"])
        writer.writerows(rows)


def load_trajectory(path) -> list[tuple[int, str, int, int, str]]:
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        if header != ["step", "agent", "x", "y", "action"]:
            raise ValueError(f"unexpected trajectory header: {header}")
        return [(int(s), a, int(x), int(y), act) for s, a, x, y, act in reader]
