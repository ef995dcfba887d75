"""Deterministic Minecraft-style grid world for one or two agents.

Agents move simultaneously on a rectangular grid of object cells; an
event atom is true in a state exactly when some agent occupies a cell of
the matching object type.  Objects persist, so the base game is
stationary and the labelling is a pure function of the state.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .game import MarkovGame

LEGEND = {
    ".": "empty",
    "#": "wall",
    "A": "agent",
    "w": "wood",
    "t": "toolshed",
    "b": "workbench",
    "g": "grass",
    "f": "factory",
    "i": "iron",
    "d": "bridge",
    "x": "axe",
    "s": "shelter",
}
_CELL_CHAR = {v: k for k, v in LEGEND.items() if v not in ("agent",)}

OBJECT_EVENTS = {
    "wood": "got_wood",
    "toolshed": "used_toolshed",
    "workbench": "used_workbench",
    "grass": "got_grass",
    "factory": "used_factory",
    "iron": "got_iron",
    "bridge": "used_bridge",
    "axe": "used_axe",
    "shelter": "at_shelter",
}
OBJECT_TYPES = tuple(OBJECT_EVENTS)  # fixed order for feature vectors
EVENT_ATOMS = frozenset(OBJECT_EVENTS.values())

DEFAULT_MAX_DFA_STATES = 32


class Action(IntEnum):
    UP = 0
    DOWN = 1
    LEFT = 2
    RIGHT = 3
    WAIT = 4


_DELTAS = {
    Action.UP: (-1, 0),
    Action.DOWN: (1, 0),
    Action.LEFT: (0, -1),
    Action.RIGHT: (0, 1),
    Action.WAIT: (0, 0),
}


class MapError(ValueError):
    pass


@dataclass(frozen=True)
class GridMap:
    width: int
    height: int
    cells: tuple  # rows of cell-content names
    agent_starts: tuple  # (row, col) in reading order of the 'A' cells


@dataclass(frozen=True)
class WorldState:
    agent_positions: tuple
    step_count: int = 0


def load_map(text: str) -> GridMap:
    """Parse an ASCII map; 'A' cells become empty cells with agent starts."""
    lines = text.strip("\n").splitlines()
    if not lines:
        raise MapError("empty map")
    width = len(lines[0])
    rows = []
    starts = []
    for r, line in enumerate(lines):
        if len(line) != width:
            raise MapError(
                f"non-rectangular map: row {r} has length {len(line)}, expected {width}")
        row = []
        for c, ch in enumerate(line):
            if ch not in LEGEND:
                raise MapError(f"unknown map character {ch!r} at row {r}, col {c}")
            if ch == "A":
                starts.append((r, c))
                row.append("empty")
            else:
                row.append(LEGEND[ch])
        rows.append(tuple(row))
    return GridMap(width, len(lines), tuple(rows), tuple(starts))


def render_map(grid: GridMap) -> str:
    """Inverse of load_map up to trailing whitespace."""
    starts = set(grid.agent_starts)
    lines = []
    for r, row in enumerate(grid.cells):
        lines.append("".join(
            "A" if (r, c) in starts else _CELL_CHAR[cell]
            for c, cell in enumerate(row)))
    return "\n".join(lines) + "\n"


def _blocked(grid: GridMap, r: int, c: int) -> bool:
    if not (0 <= r < grid.height and 0 <= c < grid.width):
        return True
    return grid.cells[r][c] == "wall"


def move(grid: GridMap, positions, actions):
    """Resolve one simultaneous move; never stacks two agents on a cell.

    Moves into walls or off the grid stay put.  Pairwise position swaps
    are forbidden (both stay).  When several movers claim one cell the
    lowest agent index moves; an agent that stays keeps its cell against
    any mover.
    """
    n = len(positions)
    resolved = []
    for pos, act in zip(positions, actions):
        dr, dc = _DELTAS[Action(act)]
        r, c = pos[0] + dr, pos[1] + dc
        resolved.append(pos if _blocked(grid, r, c) else (r, c))
    # Iteratively demote movers to stayers until stable.
    changed = True
    while changed:
        changed = False
        for i in range(n):
            for j in range(i + 1, n):
                if (resolved[i] == positions[j] and resolved[j] == positions[i]
                        and resolved[i] != positions[i]):
                    resolved[i], resolved[j] = positions[i], positions[j]
                    changed = True
        stayer_cells = {positions[i] for i in range(n) if resolved[i] == positions[i]}
        for i in range(n):
            if resolved[i] != positions[i] and resolved[i] in stayer_cells:
                resolved[i] = positions[i]
                changed = True
        claimed = {}
        for i in range(n):
            if resolved[i] == positions[i]:
                continue
            if resolved[i] in claimed:
                resolved[i] = positions[i]  # later index loses the claim
                changed = True
            else:
                claimed[resolved[i]] = i
    return tuple(resolved)


def events(grid: GridMap, positions) -> frozenset:
    """Event atoms of the object cells currently occupied by any agent."""
    out = set()
    for r, c in positions:
        cell = grid.cells[r][c]
        event = OBJECT_EVENTS.get(cell)
        if event is not None:
            out.add(event)
    return frozenset(out)


def step_state(grid: GridMap, state: WorldState, actions):
    """Pure joint-step: (next state, label of the next state)."""
    if len(actions) != len(state.agent_positions):
        raise ValueError(
            f"expected {len(state.agent_positions)} actions, got {len(actions)}")
    positions = move(grid, state.agent_positions, actions)
    nxt = WorldState(positions, state.step_count + 1)
    return nxt, events(grid, positions)


def _nearest(grid: GridMap, pos, obj_type):
    """Closest cell of the given type by (manhattan distance, row, col)."""
    best = None
    for r, row in enumerate(grid.cells):
        for c, cell in enumerate(row):
            if cell != obj_type:
                continue
            key = (abs(r - pos[0]) + abs(c - pos[1]), r, c)
            if best is None or key < best:
                best = key
    if best is None:
        return None
    return best[1], best[2]


def features(grid: GridMap, state: WorldState, agent: int, dfa_state: int,
             max_dfa_states: int = DEFAULT_MAX_DFA_STATES) -> np.ndarray:
    """Fixed-length observation for one agent.

    Layout: per object type the normalized offset to the nearest
    instance (zeros if absent), the agent's own normalized position, the
    other agent's normalized relative position (zeros for a lone agent),
    and a one-hot of the automaton state padded to max_dfa_states.
    """
    if not 0 <= agent < len(state.agent_positions):
        raise IndexError(f"agent {agent} out of range")
    if not 0 <= dfa_state < max_dfa_states:
        raise ValueError(
            f"dfa_state {dfa_state} does not fit in {max_dfa_states} slots")
    hnorm = max(1, grid.height - 1)
    wnorm = max(1, grid.width - 1)
    r, c = state.agent_positions[agent]
    vec = []
    for obj in OBJECT_TYPES:
        found = _nearest(grid, (r, c), obj)
        if found is None:
            vec += [0.0, 0.0]
        else:
            vec += [(found[0] - r) / hnorm, (found[1] - c) / wnorm]
    vec += [r / hnorm, c / wnorm]
    n = len(state.agent_positions)
    if n > 1:
        orow, ocol = state.agent_positions[(agent + 1) % n]
        vec += [(orow - r) / hnorm, (ocol - c) / wnorm]
    else:
        vec += [0.0, 0.0]
    onehot = [0.0] * max_dfa_states
    onehot[dfa_state] = 1.0
    return np.array(vec + onehot, dtype=np.float64)


def feature_length(max_dfa_states: int = DEFAULT_MAX_DFA_STATES) -> int:
    return 2 * len(OBJECT_TYPES) + 2 + 2 + max_dfa_states


class CraftWorld(MarkovGame):
    """Grid game over a loaded map; dynamics are pure given (state, actions)."""

    def __init__(self, grid: GridMap, n_agents: int | None = None):
        if n_agents is None:
            n_agents = len(grid.agent_starts)
        if n_agents < 1:
            raise ValueError("need at least one agent")
        if n_agents > len(grid.agent_starts):
            raise MapError(
                f"map provides {len(grid.agent_starts)} agent starts, "
                f"need {n_agents}")
        self.grid = grid
        self._n_agents = n_agents

    @property
    def n_agents(self):
        return self._n_agents

    @property
    def n_actions(self):
        return len(Action)

    def initial_state(self):
        return WorldState(self.grid.agent_starts[:self._n_agents], 0)

    def transition(self, state, joint_action):
        return step_state(self.grid, state, joint_action)

    def labels(self, state):
        return events(self.grid, state.agent_positions)


# Bundled maps.  The micro map keeps the tabular product small enough for
# exact solving; the 7x7 maps carry every object type behind a wall
# border, one with a single start and one with two.

MICRO_MAP = """\
A....
.w...
..#..
...b.
....A
"""

TWO_AGENT_MAP = """\
#######
#A.w.t#
#..b..#
#g.f.i#
#..d..#
#x.s.A#
#######
"""

SINGLE_AGENT_MAP = """\
#######
#A.w.t#
#..b..#
#g.f.i#
#..d..#
#x.s..#
#######
"""

BUILTIN_MAPS = {
    "micro": MICRO_MAP,
    "two7": TWO_AGENT_MAP,
    "single7": SINGLE_AGENT_MAP,
}


def get_map(name: str) -> GridMap:
    """Load a builtin map by name."""
    try:
        return load_map(BUILTIN_MAPS[name])
    except KeyError:
        raise MapError(f"unknown builtin map {name!r}") from None
