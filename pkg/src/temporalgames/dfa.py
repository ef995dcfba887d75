"""Compile co-safe formulas to deterministic finite automata.

States are the canonical residual formulas reachable by progression from
the (simplified) input formula; the accepting state is the residual
`true`, the violated state is `false`.  Both are absorbing because
progression fixes them.  Transitions are total over the assignments of
the atoms the formula mentions; stepping restricts wider assignments to
that subset first.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum

from . import ltl
from .ltl import FALSE, TRUE, Formula


class DfaError(Exception):
    pass


class DfaStatus(Enum):
    ACCEPTING = "accepting"
    VIOLATED = "violated"
    IN_PROGRESS = "in_progress"


def all_assignments(atom_names) -> list[frozenset[str]]:
    """All subsets of the given atoms, in a fixed bitmask order."""
    names = tuple(atom_names)
    out = []
    for mask in range(1 << len(names)):
        out.append(frozenset(n for j, n in enumerate(names) if mask >> j & 1))
    return out


@dataclass(frozen=True)
class Dfa:
    states: tuple[Formula, ...]          # index 0 is the initial state
    atoms: tuple[str, ...]
    delta: dict = field(repr=False)      # (state index, assignment) -> state index
    accepting: frozenset[int]
    violated: int | None
    initial: int = 0

    def __len__(self):
        return len(self.states)


def compile(f: Formula, max_states: int = 10_000) -> Dfa:
    """Build the automaton accepting exactly the traces satisfying f.

    Breadth-first closure under progression; discovery order fixes the
    state numbering, so identical inputs yield structurally identical
    automata.
    """
    ltl.require_cosafe(f)
    init = ltl.simplify(f)
    atom_names = tuple(sorted(ltl.atoms(init)))
    alphabet = all_assignments(atom_names)
    states = [init]
    index = {init: 0}
    delta = {}
    queue = deque([0])
    while queue:
        qi = queue.popleft()
        phi = states[qi]
        for a in alphabet:
            succ = ltl.progress(a, phi)
            j = index.get(succ)
            if j is None:
                if len(states) >= max_states:
                    raise DfaError(
                        f"progression closure exceeded {max_states} states "
                        f"for {ltl.render(f)}")
                j = len(states)
                index[succ] = j
                states.append(succ)
                queue.append(j)
            delta[(qi, a)] = j
    accepting = frozenset(i for i, s in enumerate(states) if s == TRUE)
    violated = next((i for i, s in enumerate(states) if s == FALSE), None)
    return Dfa(tuple(states), atom_names, delta, accepting, violated)


def step(d: Dfa, q: int, assignment) -> int:
    """Deterministic successor; the assignment is restricted to d.atoms."""
    if not 0 <= q < len(d.states):
        raise IndexError(f"state {q} outside automaton of size {len(d.states)}")
    return d.delta[(q, frozenset(assignment).intersection(d.atoms))]


def run(d: Dfa, trace) -> int:
    """State reached after consuming the whole trace."""
    q = d.initial
    for a in trace:
        q = step(d, q, a)
    return q


def accepts(d: Dfa, trace) -> bool:
    """True iff the run visits an accepting state at any point.

    Accepting states are absorbing, so this coincides with ending in one.
    """
    q = d.initial
    if q in d.accepting:
        return True
    for a in trace:
        q = step(d, q, a)
        if q in d.accepting:
            return True
    return False


def classify(d: Dfa, q: int) -> DfaStatus:
    if not 0 <= q < len(d.states):
        raise IndexError(f"state {q} outside automaton of size {len(d.states)}")
    if q in d.accepting:
        return DfaStatus.ACCEPTING
    if q == d.violated:
        return DfaStatus.VIOLATED
    return DfaStatus.IN_PROGRESS


def export_dot(d: Dfa) -> str:
    """Graphviz text with states labelled by their residual formulas."""
    lines = ["digraph {", "  rankdir=LR;", "  init [shape=point];"]
    for i, s in enumerate(d.states):
        shape = "doublecircle" if i in d.accepting else "circle"
        label = ltl.render(s).replace('"', '\\"')
        lines.append(f'  q{i} [shape={shape}, label="{label}"];')
    lines.append(f"  init -> q{d.initial};")
    for qi in range(len(d.states)):
        for a in all_assignments(d.atoms):
            j = d.delta[(qi, a)]
            label = "{" + ",".join(sorted(a)) + "}"
            lines.append(f'  q{qi} -> q{j} [label="{label}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
