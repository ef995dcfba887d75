"""Multi-agent reinforcement learning for co-safe LTL task specifications.

Specifications compile to automata whose states are residual formulas;
pairing an automaton with a grid game yields an extended Markov game on
which independent Q-learners (tabular or neural) and LPOPL-style policy
banks are trained over a fixed curriculum.
"""

from .dfa import Dfa, DfaStatus
from .game import (ExtendedGame, ExtendedState, MarkovGame, NmrgTraceOracle,
                   RewardScheme, Transition, extend, lift, strip)
from .ltl import (FALSE, TRUE, And, Atom, Eventually, Formula, Next, Not, Or,
                  Until, WeakNext, Always, is_cosafe, parse, progress, render,
                  satisfies, simplify, to_cosafe)

__version__ = "0.1.0"
