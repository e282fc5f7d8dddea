"""
CF-Safe - Reachability Checker
P=? [ F "label" ] on an induced chain, and the states one step before a violation
"""

import logging
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, FrozenSet, List, Optional, Set

from src.checker.solvers import (
    DEFAULT_BUDGET_BYTES,
    DEFAULT_MAX_SWEEPS,
    DEFAULT_TOLERANCE,
    envelope_bytes,
    solve_elimination,
    solve_float_lu,
    solve_gauss_seidel,
)
from src.model.core import PROBABILITY_TOLERANCE, FeatureState, InducedDtmc, Probability, SafetyProperty
from src.model.errors import CheckError

logger = logging.getLogger(__name__)

NUMERIC_MODES = ("auto", "exact", "float")

# Largest chain that `auto` solves with rationals
AUTO_EXACT_LIMIT = 50_000


@dataclass(frozen=True)
class SafetyMeasurement:
    property: SafetyProperty
    value: float
    mode: str
    solver: str
    exact: Optional[Fraction] = None
    iterations: Optional[int] = None
    residual: Optional[float] = None

    def describe(self) -> str:
        parts = [f"{self.property.display} = {self.value!r}", f"mode={self.mode}", f"solver={self.solver}"]
        if self.exact is not None:
            parts.append(f"exact={self.exact}")
        if self.iterations is not None:
            parts.append(f"iterations={self.iterations}")
            parts.append(f"residual={self.residual:.3g}")
        return " ".join(parts)


@dataclass(frozen=True)
class ViolationRecord:
    state: FeatureState
    action: str
    one_step_prob: Probability
    successor: FeatureState
    index: int

    def to_dict(self) -> Dict:
        return {
            "index": self.index,
            "state": self.state.to_list(),
            "action": self.action,
            "one_step_prob": float(self.one_step_prob),
            "successor": self.successor.to_list(),
        }


def states_reaching(dtmc: InducedDtmc, targets: FrozenSet[int]) -> Set[int]:
    """Backward search: every state with a positive-probability path into `targets`"""
    predecessors: List[List[int]] = [[] for _ in range(len(dtmc))]
    for i, row in enumerate(dtmc.transitions):
        for j, p in row:
            if p > 0 and j != i:
                predecessors[j].append(i)
    seen = set(targets)
    queue = deque(targets)
    while queue:
        j = queue.popleft()
        for i in predecessors[j]:
            if i not in seen:
                seen.add(i)
                queue.append(i)
    return seen


def check(dtmc: InducedDtmc, prop: SafetyProperty, tol: float = DEFAULT_TOLERANCE, *,
          numeric: str = "auto", max_sweeps: int = DEFAULT_MAX_SWEEPS,
          budget_bytes: int = DEFAULT_BUDGET_BYTES, exact_limit: int = AUTO_EXACT_LIMIT) -> SafetyMeasurement:
    """
    Probability of eventually reaching the target label from the initial state.

    Target states have value 1, states with no path to the target value 0; the
    remaining states are solved by elimination, or by Gauss-Seidel when the
    elimination would not fit in `budget_bytes`. In `auto` mode an exact chain
    is solved with rationals only up to `exact_limit` states.
    """
    if numeric not in NUMERIC_MODES:
        raise ValueError(f"numeric must be one of {', '.join(NUMERIC_MODES)}")
    targets = dtmc.label_set(prop.target_label)
    if numeric == "auto":
        exact = dtmc.exact and len(dtmc) <= exact_limit
        if dtmc.exact and not exact:
            logger.info("Chain has %d states (> %d); solving in float mode", len(dtmc), exact_limit)
    else:
        exact = numeric == "exact"
    if exact and not dtmc.exact:
        logger.warning("Chain has floating-point probabilities; solving in float mode")
        exact = False
    mode = "exact-rational" if exact else "float"

    if dtmc.initial in targets:
        return SafetyMeasurement(prop, 1.0, mode, "elimination", Fraction(1) if exact else None)

    can_reach = states_reaching(dtmc, targets)
    if dtmc.initial not in can_reach:
        return SafetyMeasurement(prop, 0.0, mode, "elimination", Fraction(0) if exact else None)

    # unknowns in ascending BFS order
    unknowns = sorted(i for i in can_reach if i not in targets)
    local = {i: k for k, i in enumerate(unknowns)}
    rows: List[Dict[int, Probability]] = []
    rhs: List[Probability] = []
    for i in unknowns:
        row: Dict[int, Probability] = {}
        into_target = Fraction(0) if exact else 0.0
        for j, p in dtmc.transitions[i]:
            if not exact:
                p = float(p)
            if j in targets:
                into_target += p
            elif j in local:
                k = local[j]
                row[k] = row[k] + p if k in row else p
        rows.append(row)
        rhs.append(into_target)

    start = local[dtmc.initial]
    iterations = residual = None
    if envelope_bytes(rows, exact) <= budget_bytes:
        solver = "elimination"
        if exact:
            values = solve_elimination(rows, rhs, Fraction(0), Fraction(1))
        else:
            values = solve_float_lu(rows, rhs)
    else:
        logger.warning("Elimination of %d unknowns exceeds the memory budget; using Gauss-Seidel", len(rows))
        result = solve_gauss_seidel(rows, rhs, tol=tol, max_sweeps=max_sweeps)
        solver, values = result.solver, result.values
        iterations, residual = result.iterations, result.residual
        exact = False
        mode = "float"

    raw = values[start]
    value = float(raw)
    if not -PROBABILITY_TOLERANCE <= value <= 1 + PROBABILITY_TOLERANCE:
        raise CheckError(f"solver produced {value!r} outside [0, 1] for {prop.display}")
    logger.info("Checked %s over %d states: %r", prop.display, len(dtmc), value)
    return SafetyMeasurement(prop, value, mode, solver, raw if exact else None, iterations, residual)


def extract_frontier(dtmc: InducedDtmc, prop: SafetyProperty) -> List[ViolationRecord]:
    """Reachable non-target states whose chosen action moves into the target in one step"""
    targets = dtmc.label_set(prop.target_label)
    frontier = []
    for i, row in enumerate(dtmc.transitions):
        if i in targets:
            continue
        mass = None
        best_j, best_p = None, None
        for j, p in row:
            if j not in targets or not p > 0:
                continue
            mass = p if mass is None else mass + p
            # highest-probability target successor, lowest index on ties
            if best_p is None or p > best_p or (p == best_p and j < best_j):
                best_j, best_p = j, p
        if mass is not None:
            frontier.append(ViolationRecord(dtmc.states[i], dtmc.chosen_action[i], mass,
                                            dtmc.states[best_j], i))
    logger.info("Extracted %d frontier state(s) for %s", len(frontier), prop.display)
    return frontier
