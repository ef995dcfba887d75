"""Multi-agent LPOPL: one value function per (agent, sub-specification).

A centralized extractor closes the specification set under progression,
yielding the tasks.  Each agent keeps an independent learner per task;
every environment step is replayed into every task's learner with that
task's own automaton state and reward, while the behavior policy always
follows the learner of the residual task of the episode's specification.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import dfa as dfamod
from . import ltl
from .dfa import DfaStatus
from .game import (ExtendedGame, ExtendedState, RewardScheme, Transition,
                   transition_reward)
from .ltl import FALSE, TRUE, Formula


class TaskDesyncError(RuntimeError):
    """A residual formula was not found in the extracted task set."""


@dataclass(frozen=True)
class TaskSet:
    """Progression closure of a specification set, originals first."""

    tasks: tuple
    index: dict

    def __len__(self):
        return len(self.tasks)

    def task_of(self, formula: Formula) -> int:
        try:
            return self.index[formula]
        except KeyError:
            raise TaskDesyncError(
                f"residual {ltl.render(formula)} missing from task set") from None


def extract_tasks(specs, max_tasks: int = 10_000) -> TaskSet:
    """Close the specification set under progression.

    Breadth-first over the assignments of each formula's own atoms;
    true/false are permitted successors but never become tasks.
    """
    tasks = []
    index = {}
    for spec in specs:
        ltl.require_cosafe(spec)
        canon = ltl.simplify(spec)
        if canon in index or canon in (TRUE, FALSE):
            continue
        index[canon] = len(tasks)
        tasks.append(canon)
    cursor = 0
    while cursor < len(tasks):
        f = tasks[cursor]
        cursor += 1
        for a in dfamod.all_assignments(sorted(ltl.atoms(f))):
            succ = ltl.progress(a, f)
            if succ in (TRUE, FALSE) or succ in index:
                continue
            if len(tasks) >= max_tasks:
                raise dfamod.DfaError(
                    f"task closure exceeded {max_tasks} formulas")
            index[succ] = len(tasks)
            tasks.append(succ)
    return TaskSet(tuple(tasks), index)


class Curriculum:
    """Fixed-order scheduler handing out one training step at a time."""

    def __init__(self, specs, steps_per_spec: int):
        specs = list(specs)
        if not specs:
            raise ValueError("empty specification list")
        if steps_per_spec < 1:
            raise ValueError("steps_per_spec must be positive")
        self.specs = specs
        self.steps_per_spec = steps_per_spec
        self._cursor = 0
        self._used = 0

    def next_spec(self) -> Formula | None:
        """Allocate one step; returns its specification, or None when done."""
        if self._used >= self.steps_per_spec:
            self._cursor += 1
            self._used = 0
        if self._cursor >= len(self.specs):
            return None
        self._used += 1
        return self.specs[self._cursor]

    @property
    def phase_step(self) -> int:
        """Zero-based index of the step just allocated within its phase."""
        return self._used - 1


class PolicyBank:
    """One learner per (agent, task), plus each task's compiled automaton."""

    def __init__(self, n_agents: int, taskset: TaskSet, make_learner,
                 max_dfa_states: int = 10_000):
        self.n_agents = n_agents
        self.taskset = taskset
        self.dfas = [dfamod.compile(t, max_states=max_dfa_states)
                     for t in taskset.tasks]
        self.learners = [
            [make_learner(agent, task) for task in range(len(taskset))]
            for agent in range(n_agents)]

    def learner(self, agent: int, task: int):
        return self.learners[agent][task]


def behavior_policy(bank: PolicyBank, agent: int, current_task: int,
                    epsilon: float, rng=None):
    """Action selector reading only the current task's learner.

    The learner is evaluated at its own automaton's initial state, i.e.
    at the obligation the task formula itself denotes.
    """
    if not 0 <= current_task < len(bank.taskset):
        raise TaskDesyncError(f"unknown task id {current_task}")
    learner = bank.learner(agent, current_task)

    def select(base_state):
        return learner.select(ExtendedState(0, base_state), epsilon, rng)

    return select


def off_task_update(bank: PolicyBank, task_states, t: Transition,
                    scheme: RewardScheme):
    """Replay one environment transition into every task's learners.

    For each task the label advances that task's own automaton; the
    reward follows from the (old, new) pair under the scheme, and the
    stored transition is terminal once the task is decided (absorbing
    state, zero bootstrap) or the episode itself ended.  Returns the
    advanced per-task automaton states.
    """
    if t.label is None:
        raise ValueError("transition carries no label")
    advanced = []
    for task_id, d in enumerate(bank.dfas):
        q = task_states[task_id]
        q_next = dfamod.step(d, q, t.label)
        was = dfamod.classify(d, q)
        now = dfamod.classify(d, q_next)
        reward = transition_reward(scheme, q_next != q, was, now)
        decided = now in (DfaStatus.ACCEPTING, DfaStatus.VIOLATED)
        task_t = Transition(
            ExtendedState(q, t.state.base), t.joint_action, reward,
            ExtendedState(q_next, t.next_state.base),
            decided or t.terminal, t.label)
        for agent in range(bank.n_agents):
            bank.learner(agent, task_id).observe(task_t, agent)
        advanced.append(q_next)
    return advanced


def train_lpopl(base, specs, bank: PolicyBank, curriculum: Curriculum, *,
                scheme: RewardScheme | None = None, eps_schedule,
                rng_policies, step_limit: int = 300, on_transition=None):
    """Curriculum training with per-task decentralized updates.

    Per step: the curriculum names the active specification, each agent
    acts epsilon-greedily on the learner of its current residual task,
    and the resulting transition is replayed into every (agent, task)
    learner.  Episodes reset on terminal transitions and at phase
    boundaries.  Returns per-episode (steps, return) records.
    """
    scheme = scheme if scheme is not None else RewardScheme()
    spec_dfas = {}
    records = []
    env = None
    current_spec = None
    ext = None
    task_states = None
    ep_steps = 0
    ep_return = 0.0
    global_step = 0
    while True:
        spec = curriculum.next_spec()
        if spec is None:
            break
        if env is None or spec != current_spec:
            current_spec = spec
            if spec not in spec_dfas:
                spec_dfas[spec] = dfamod.compile(spec)
            env = ExtendedGame(base, spec, scheme, step_limit,
                               compiled=spec_dfas[spec])
            ext = env.reset()
            task_states = [0] * len(bank.taskset)
            ep_steps = 0
            ep_return = 0.0
        eps = eps_schedule.value(curriculum.phase_step, curriculum.steps_per_spec)
        active = bank.taskset.task_of(env.dfa.states[ext.dfa_state])
        joint = tuple(
            behavior_policy(bank, agent, active, eps, rng_policies[agent])(ext.base)
            for agent in range(bank.n_agents))
        t = env.step(joint)
        task_states = off_task_update(bank, task_states, t, scheme)
        ep_steps += 1
        ep_return += t.reward
        global_step += 1
        if on_transition is not None:
            on_transition(global_step - 1, t)
        if t.terminal:
            records.append((ep_steps, ep_return))
            ext = env.reset()
            task_states = [0] * len(bank.taskset)
            ep_steps = 0
            ep_return = 0.0
        else:
            ext = t.next_state
    return records
