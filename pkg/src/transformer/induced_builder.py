"""
CF-Safe - Induced Chain Builder
Breadth-first construction of the Markov chain a memoryless policy induces on an MDP
"""

import logging
from collections import deque
from fractions import Fraction
from typing import Dict, FrozenSet, List, Mapping, Optional, Tuple

from src.model.core import DEADLOCK, FeatureState, InducedDtmc, Mdp
from src.model.errors import StateSpaceLimit
from src.policy.engine import EMPTY_OVERRIDES, PolicyModel, choose

logger = logging.getLogger(__name__)

DEFAULT_STATE_LIMIT = 5_000_000


def build_induced(mdp: Mdp, policy: PolicyModel, overrides: Optional[Mapping] = None, *,
                  state_limit: int = DEFAULT_STATE_LIMIT, strict: bool = False, rank: int = 1,
                  disabled_actions: FrozenSet[str] = frozenset()) -> InducedDtmc:
    """
    Explore the states reachable from the initial state under the (patched) policy.

    States are indexed in BFS discovery order. A state with no enabled action
    becomes absorbing and is reported as a deadlock.
    """
    overrides = overrides if overrides is not None else EMPTY_OVERRIDES
    disabled_actions = frozenset(disabled_actions)

    states: List[FeatureState] = [mdp.initial_state]
    index: Dict[FeatureState, int] = {mdp.initial_state: 0}
    chosen: List[str] = []
    rows: List[Tuple[Tuple[int, object], ...]] = []
    deadlocks: List[int] = []

    queue = deque([0])
    while queue:
        i = queue.popleft()
        state = states[i]

        enabled = mdp.enabled_actions(state)
        if disabled_actions:
            enabled = [a for a in enabled if a not in disabled_actions]
        # globally disabled actions count as not enabled
        if not enabled:
            chosen.append(DEADLOCK)
            rows.append(((i, Fraction(1)),))
            deadlocks.append(i)
            continue

        action = choose(policy, overrides, mdp, state, strict=strict, rank=rank, enabled=enabled)
        row = []
        for successor, prob in mdp.successor_distribution(state, action):
            j = index.get(successor)
            if j is None:
                if len(states) >= state_limit:
                    raise StateSpaceLimit(f"more than {state_limit} reachable states")
                j = len(states)
                index[successor] = j
                states.append(successor)
                queue.append(j)
            row.append((j, prob))
        chosen.append(action)
        rows.append(tuple(row))

    warnings: Tuple[str, ...] = ()
    if deadlocks:
        sample = ", ".join(str(states[i].to_list()) for i in deadlocks[:3])
        more = f" and {len(deadlocks) - 3} more" if len(deadlocks) > 3 else ""
        message = f"{len(deadlocks)} deadlock state(s) made absorbing: {sample}{more}"
        logger.warning(message)
        warnings = (message,)

    label_sets = {}
    for name, expr in mdp.labels:
        holds = expr.compile()
        label_sets[name] = frozenset(i for i, s in enumerate(states) if holds(s.features))

    logger.info("Built induced chain with %d states", len(states))
    return InducedDtmc(
        states=tuple(states),
        chosen_action=tuple(chosen),
        transitions=tuple(rows),
        label_sets=label_sets,
        variable_names=mdp.variable_names,
        exact=mdp.exact,
        deadlocks=tuple(deadlocks),
        warnings=warnings,
    )


def reachable_count(dtmc: InducedDtmc) -> int:
    return len(dtmc)
