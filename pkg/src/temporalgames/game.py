"""Markov games, specification rewards, and the DFA-product game.

A base game only knows states, joint actions, and a labelling of states
with event atoms.  Pairing it with a compiled specification automaton
yields an extended game whose states carry the automaton state, making
the specification reward a function of the last transition alone.  The
trace oracle recomputes the same rewards from the raw label history and
serves as the independent cross-check for that equivalence.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any

from . import dfa as dfamod
from . import ltl
from .dfa import DfaStatus
from .ltl import FALSE, TRUE, Formula


class MarkovGame(ABC):
    """Simultaneous-move game with deterministic-reset episodes.

    Implementations provide the pure state dynamics; the stateful
    reset/step pair below tracks one episode for convenience.  Labelling
    must be a pure function of the state.
    """

    @property
    @abstractmethod
    def n_agents(self) -> int: ...

    @property
    @abstractmethod
    def n_actions(self) -> int: ...

    @abstractmethod
    def initial_state(self): ...

    @abstractmethod
    def transition(self, state, joint_action) -> tuple[Any, frozenset]:
        """Pure successor function: (next state, label of next state)."""

    @abstractmethod
    def labels(self, state) -> frozenset: ...

    state = None  # position of the current episode, if any

    def reset(self):
        self.state = self.initial_state()
        return self.state

    def step(self, joint_action):
        nxt, label = self.transition(self.state, joint_action)
        self.state = nxt
        return nxt, label


@dataclass(frozen=True)
class RewardScheme:
    """Shared cooperative reward keyed to automaton movement.

    Satisfying the specification beats making progress, which beats
    stalling or ruling the specification out.
    """

    r_satisfy: float = 1.0
    r_progress: float = 0.0
    r_stall: float = -1.0
    r_violate: float = -1.0
    terminate_on_violation: bool = True

    def __post_init__(self):
        if not (self.r_satisfy > self.r_progress > self.r_violate):
            raise ValueError(
                "reward ordering violated: need r_satisfy > r_progress > r_violate")
        if not (self.r_progress >= self.r_stall >= self.r_violate):
            raise ValueError(
                "reward ordering violated: need r_progress >= r_stall >= r_violate")


def transition_reward(scheme: RewardScheme, moved: bool,
                      was: DfaStatus, now: DfaStatus) -> float:
    """Reward for one automaton transition.

    Entering the accepting (violated) state pays r_satisfy (r_violate)
    exactly once; afterwards the absorbing self-loop counts as a stall.
    """
    if now is DfaStatus.ACCEPTING and was is not DfaStatus.ACCEPTING:
        return scheme.r_satisfy
    if now is DfaStatus.VIOLATED and was is not DfaStatus.VIOLATED:
        return scheme.r_violate
    if not moved:
        return scheme.r_stall
    return scheme.r_progress


@dataclass(frozen=True)
class ExtendedState:
    dfa_state: int
    base: Any


@dataclass(frozen=True)
class Transition:
    state: ExtendedState
    joint_action: tuple
    reward: float
    next_state: ExtendedState
    terminal: bool
    label: frozenset | None = None


def strip(ext: ExtendedState):
    """Project an extended state back onto the base game."""
    return ext.base


def lift(base_state, dfa_initial: int = 0) -> ExtendedState:
    """Embed a base state at the start of an episode (automaton at q0)."""
    return ExtendedState(dfa_initial, base_state)


class ExtendedGame:
    """Product of a base game with one specification automaton.

    Owns the position of a single episode; the automaton inside is
    immutable and may be shared.  Episodes end when the specification is
    satisfied, when it is violated (if the scheme says so), or at the
    step limit.
    """

    def __init__(self, base: MarkovGame, spec: Formula,
                 scheme: RewardScheme | None = None, step_limit: int = 300,
                 compiled: dfamod.Dfa | None = None, max_dfa_states: int = 10_000):
        self.base = base
        self.spec = ltl.simplify(spec)
        self.scheme = scheme if scheme is not None else RewardScheme()
        self.dfa = compiled if compiled is not None else dfamod.compile(
            spec, max_states=max_dfa_states)
        self.step_limit = step_limit
        self._ext = None
        self._elapsed = 0

    @property
    def n_agents(self):
        return self.base.n_agents

    @property
    def n_actions(self):
        return self.base.n_actions

    def reset(self) -> ExtendedState:
        self._ext = lift(self.base.reset(), self.dfa.initial)
        self._elapsed = 0
        return self._ext

    def peek(self, ext: ExtendedState, joint_action):
        """Pure product successor, ignoring the step limit.

        Returns (next extended state, reward, specification done, label).
        """
        base_next, label = self.base.transition(ext.base, joint_action)
        q = ext.dfa_state
        q_next = dfamod.step(self.dfa, q, label)
        was = dfamod.classify(self.dfa, q)
        now = dfamod.classify(self.dfa, q_next)
        reward = transition_reward(self.scheme, q_next != q, was, now)
        done = now is DfaStatus.ACCEPTING or (
            now is DfaStatus.VIOLATED and self.scheme.terminate_on_violation)
        return ExtendedState(q_next, base_next), reward, done, label

    def step(self, joint_action) -> Transition:
        if self._ext is None:
            raise RuntimeError("call reset() before step()")
        self._elapsed += 1
        nxt, reward, done, label = self.peek(self._ext, joint_action)
        terminal = done or self._elapsed >= self.step_limit
        t = Transition(self._ext, tuple(joint_action), reward, nxt, terminal, label)
        self._ext = nxt
        self.base.state = nxt.base  # keep the base's episode view in sync
        return t


def extend(base: MarkovGame, spec: Formula, scheme: RewardScheme | None = None,
           step_limit: int = 300) -> ExtendedGame:
    """Build the equivalent Markov game for one co-safe specification."""
    return ExtendedGame(base, spec, scheme, step_limit)


def _formula_status(f: Formula) -> DfaStatus:
    if f == TRUE:
        return DfaStatus.ACCEPTING
    if f == FALSE:
        return DfaStatus.VIOLATED
    return DfaStatus.IN_PROGRESS


class NmrgTraceOracle:
    """Specification rewards recomputed from the raw episode history.

    Keeps the (state, joint action, label) history of an episode and
    derives each step's reward by progressing the specification formula
    through the labels, independently of any compiled automaton.  Used to
    check that the extended game pays exactly the history-defined reward.
    """

    def __init__(self, spec: Formula, scheme: RewardScheme | None = None):
        ltl.require_cosafe(spec)
        self.spec = ltl.simplify(spec)
        self.scheme = scheme if scheme is not None else RewardScheme()
        self.history = []

    def append(self, base_state, joint_action, label):
        self.history.append((base_state, tuple(joint_action), frozenset(label)))

    def reward_sequence(self) -> list[float]:
        """Per-step rewards for the entire recorded history."""
        rewards = []
        phi = self.spec
        for _, _, label in self.history:
            nxt = ltl.progress(label, phi)
            rewards.append(transition_reward(
                self.scheme, nxt != phi,
                _formula_status(phi), _formula_status(nxt)))
            phi = nxt
        return rewards

    def last_step_reward(self) -> float:
        """Reward of the most recent step, recomputed from scratch."""
        if not self.history:
            raise ValueError("empty history")
        return self.reward_sequence()[-1]
