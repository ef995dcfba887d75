"""Shared test oracles: brute-force semantics, generators, value iteration.

The truth-table evaluator recomputes finite-trace satisfaction directly
from the semantic clauses, vectorized over every trace of a given length
at once.  It is deliberately independent of progression and of the
automaton path so it can arbitrate between them.
"""

from __future__ import annotations

import numpy as np

from temporalgames import craftworld, dfa as dfamod, game, ltl
from temporalgames.ltl import (FALSE, TRUE, Always, And, Atom, Eventually,
                               FalseFormula, Next, Not, Or, TrueFormula,
                               Until, WeakNext)


def truth_table(f, atom_names, n):
    """Satisfaction of f at every position of every length-n trace.

    Returns a boolean array of shape (m**n, n) with m = 2**len(atom_names);
    trace index t holds assignment bitmask (t // m**i) % m at position i,
    bit j of a mask meaning atom_names[j] is true.
    """
    atom_names = tuple(atom_names)
    k = len(atom_names)
    m = 1 << k
    t_count = m ** n
    ids = np.arange(t_count)
    masks = np.empty((t_count, n), dtype=np.int64)
    for i in range(n):
        masks[:, i] = (ids // (m ** i)) % m
    bit = {name: j for j, name in enumerate(atom_names)}
    memo = {}

    def ev(g):
        if g in memo:
            return memo[g]
        if isinstance(g, TrueFormula):
            out = np.ones((t_count, n), dtype=bool)
        elif isinstance(g, FalseFormula):
            out = np.zeros((t_count, n), dtype=bool)
        elif isinstance(g, Atom):
            if g.name in bit:
                out = ((masks >> bit[g.name]) & 1).astype(bool)
            else:
                out = np.zeros((t_count, n), dtype=bool)
        elif isinstance(g, Not):
            out = ~ev(g.sub)
        elif isinstance(g, And):
            out = ev(g.left) & ev(g.right)
        elif isinstance(g, Or):
            out = ev(g.left) | ev(g.right)
        elif isinstance(g, Next):
            sub = ev(g.sub)
            out = np.zeros((t_count, n), dtype=bool)
            out[:, :-1] = sub[:, 1:]
        elif isinstance(g, WeakNext):
            sub = ev(g.sub)
            out = np.ones((t_count, n), dtype=bool)
            out[:, :-1] = sub[:, 1:]
        elif isinstance(g, Eventually):
            sub = ev(g.sub)
            out = np.logical_or.accumulate(sub[:, ::-1], axis=1)[:, ::-1]
        elif isinstance(g, Always):
            sub = ev(g.sub)
            out = np.logical_and.accumulate(sub[:, ::-1], axis=1)[:, ::-1]
        elif isinstance(g, Until):
            left, right = ev(g.left), ev(g.right)
            out = np.empty((t_count, n), dtype=bool)
            out[:, n - 1] = right[:, n - 1]
            for i in range(n - 2, -1, -1):
                out[:, i] = right[:, i] | (left[:, i] & out[:, i + 1])
        else:
            raise TypeError(g)
        memo[g] = out
        return out

    return ev(f)


def decode_trace(trace_id, atom_names, n):
    """Trace tuple for one index of truth_table's enumeration."""
    atom_names = tuple(atom_names)
    m = 1 << len(atom_names)
    steps = []
    for i in range(n):
        mask = (trace_id // (m ** i)) % m
        steps.append(frozenset(
            a for j, a in enumerate(atom_names) if (mask >> j) & 1))
    return tuple(steps)


def dfa_accept_all(d, atom_names, n):
    """accepts() of every length-n trace, in truth_table's trace order."""
    atom_names = tuple(atom_names)
    k = len(atom_names)
    m = 1 << k
    # successor table indexed by (state, assignment bitmask over atom_names)
    n_states = len(d.states)
    succ = np.empty((n_states, m), dtype=np.int64)
    for mask in range(m):
        assignment = frozenset(
            a for j, a in enumerate(atom_names) if (mask >> j) & 1)
        for q in range(n_states):
            succ[q, mask] = dfamod.step(d, q, assignment)
    accepting = np.zeros(n_states, dtype=bool)
    for q in d.accepting:
        accepting[q] = True
    t_count = m ** n
    ids = np.arange(t_count)
    states = np.full(t_count, d.initial, dtype=np.int64)
    accepted = accepting[states].copy()
    for i in range(n):
        masks = (ids // (m ** i)) % m
        states = succ[states, masks]
        accepted |= accepting[states]
    return accepted


# ---------------------------------------------------------------------------
# Random generators

def random_formula(rng, depth, atom_names, mode="cosafe", leaves="mixed"):
    """Random formula of the requested nesting depth.

    mode 'cosafe' draws from the restricted grammar; 'ltlf' adds Always
    and WeakNext.  Negation only ever lands on atoms.  leaves 'literal'
    restricts leaves to p / !p as in the co-safe grammar; 'mixed' also
    draws the constants.
    """
    if depth <= 0 or rng.random() < 0.2:
        r = rng.random()
        if leaves == "literal" or r < 0.75:
            atom = Atom(str(rng.choice(atom_names)))
            return Not(atom) if rng.random() < 0.2 else atom
        return TRUE if r < 0.875 else FALSE
    ops = ["and", "or", "until", "next", "eventually"]
    if mode == "ltlf":
        ops += ["always", "weaknext"]
    op = ops[rng.integers(len(ops))]
    sub = lambda: random_formula(rng, depth - 1, atom_names, mode, leaves)
    if op == "and":
        return And(sub(), sub())
    if op == "or":
        return Or(sub(), sub())
    if op == "until":
        return Until(sub(), sub())
    if op == "next":
        return Next(sub())
    if op == "eventually":
        return Eventually(sub())
    if op == "always":
        return Always(sub())
    return WeakNext(sub())


def random_trace(rng, atom_names, min_len=1, max_len=5):
    length = int(rng.integers(min_len, max_len + 1))
    return tuple(
        frozenset(a for a in atom_names if rng.random() < 0.5)
        for _ in range(length))


# ---------------------------------------------------------------------------
# Product-game enumeration and value iteration

def enumerate_product(grid, n_agents, spec, scheme=None, step_limit=10**9):
    """Reachable product states with dense successor/reward tables.

    Returns (states, joint_actions, succ, rewards, terminal) where succ
    maps state x action indices to successor state indices; terminal
    transitions keep a self-loop successor.
    """
    base = craftworld.CraftWorld(grid, n_agents)
    env = game.ExtendedGame(base, spec, scheme, step_limit=step_limit)
    joint_actions = [
        tuple(j) for j in np.ndindex(*(len(craftworld.Action),) * n_agents)]

    def key(ext):
        return (ext.dfa_state, ext.base.agent_positions)

    start = env.reset()
    start = game.ExtendedState(start.dfa_state,
                               craftworld.WorldState(start.base.agent_positions, 0))
    states = [start]
    index = {key(start): 0}
    edges = {}
    frontier = [start]
    while frontier:
        nxt_frontier = []
        for ext in frontier:
            i = index[key(ext)]
            if dfamod.classify(env.dfa, ext.dfa_state) is not dfamod.DfaStatus.IN_PROGRESS:
                continue
            for a_id, joint in enumerate(joint_actions):
                nxt, reward, done, _label = env.peek(ext, joint)
                nxt = game.ExtendedState(
                    nxt.dfa_state, craftworld.WorldState(nxt.base.agent_positions, 0))
                if key(nxt) not in index:
                    index[key(nxt)] = len(states)
                    states.append(nxt)
                    nxt_frontier.append(nxt)
                edges[(i, a_id)] = (index[key(nxt)], reward, done)
        frontier = nxt_frontier
    n_s, n_a = len(states), len(joint_actions)
    succ = np.zeros((n_s, n_a), dtype=np.int64)
    rewards = np.zeros((n_s, n_a))
    terminal = np.zeros((n_s, n_a), dtype=bool)
    for i, ext in enumerate(states):
        for a_id in range(n_a):
            if (i, a_id) in edges:
                j, r, done = edges[(i, a_id)]
                succ[i, a_id] = j
                rewards[i, a_id] = r
                terminal[i, a_id] = done
            else:  # absorbing (accepting/violated) state: self-loop
                succ[i, a_id] = i
                terminal[i, a_id] = True
    return states, joint_actions, succ, rewards, terminal


def value_iteration(succ, rewards, terminal, gamma, tol=1e-13, max_iter=5000):
    """Optimal V and Q for the enumerated product, by Bellman iteration."""
    n_s = succ.shape[0]
    v = np.zeros(n_s)
    for _ in range(max_iter):
        q = rewards + gamma * np.where(terminal, 0.0, v[succ])
        v_new = q.max(axis=1)
        if np.max(np.abs(v_new - v)) < tol:
            v = v_new
            break
        v = v_new
    return v, rewards + gamma * np.where(terminal, 0.0, v[succ])
