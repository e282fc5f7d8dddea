"""
CF-Safe - Core Model
Factored-state MDP, distributions and the policy-induced Markov chain
"""

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, FrozenSet, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

from src.model.errors import (
    BoundsViolation,
    DisabledAction,
    OverlappingCommands,
    PropertySyntaxError,
    UnknownLabel,
)
from src.model.expressions import Expr

Probability = Union[Fraction, float]

PROBABILITY_TOLERANCE = 1e-9
DEADLOCK = "<deadlock>"


# ============ States and distributions ============

@dataclass(frozen=True, slots=True)
class FeatureState:
    """Vector of integer features; value-equal states are the same dictionary key"""
    features: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(int(f) for f in self.features))
        if not self.features:
            raise ValueError("a state needs at least one feature")

    @classmethod
    def of(cls, *features: int) -> "FeatureState":
        return cls(tuple(features))

    def __len__(self) -> int:
        return len(self.features)

    def __iter__(self) -> Iterator[int]:
        return iter(self.features)

    def __getitem__(self, index: int) -> int:
        return self.features[index]

    def to_list(self) -> List[int]:
        return list(self.features)

    def __repr__(self) -> str:
        return f"FeatureState({list(self.features)})"


@dataclass(frozen=True)
class Distribution:
    """Finite distribution over successor states, duplicates merged"""
    support: Tuple[Tuple[FeatureState, Probability], ...]

    @classmethod
    def merge(cls, pairs: Iterable[Tuple[FeatureState, Probability]]) -> "Distribution":
        """Merge repeated successors, keeping first-seen order"""
        merged: Dict[FeatureState, Probability] = {}
        for state, prob in pairs:
            merged[state] = merged[state] + prob if state in merged else prob
        return cls(tuple(merged.items()))

    def total(self) -> Probability:
        return sum((p for _, p in self.support), Fraction(0))

    def is_valid(self) -> bool:
        states = [s for s, _ in self.support]
        if len(states) != len(set(states)):
            return False
        if any(not (0 < p <= 1 + PROBABILITY_TOLERANCE) for _, p in self.support):
            return False
        return abs(self.total() - 1) <= PROBABILITY_TOLERANCE

    def as_dict(self) -> Dict[FeatureState, Probability]:
        return dict(self.support)

    def __len__(self) -> int:
        return len(self.support)

    def __iter__(self):
        return iter(self.support)


# ============ Model declarations ============

@dataclass(frozen=True)
class Variable:
    name: str
    lower: int
    upper: int

    def contains(self, value: int) -> bool:
        return self.lower <= value <= self.upper


@dataclass(frozen=True)
class Update:
    """One probabilistic branch: parallel assignments applied together"""
    probability: Probability
    assignments: Tuple[Tuple[int, Expr], ...]


@dataclass(frozen=True)
class Command:
    action: str
    guard: Expr
    updates: Tuple[Update, ...]


@dataclass(frozen=True)
class RewardBlock:
    """Reward structure kept verbatim; the checker never reads it"""
    name: Optional[str]
    body: Tuple[str, ...]


@dataclass(frozen=True)
class Mdp:
    """Explicit factored-state MDP built from action-labelled probabilistic commands"""
    module_name: str
    variables: Tuple[Variable, ...]
    initial_state: FeatureState
    actions: Tuple[str, ...]
    commands: Tuple[Command, ...]
    labels: Tuple[Tuple[str, Expr], ...]
    constants: Tuple[Tuple[str, int], ...] = ()
    reward_items: Tuple[RewardBlock, ...] = ()

    # compiled views, rebuilt in __post_init__ and ignored by ==
    _action_index: Dict[str, int] = field(init=False, repr=False, compare=False)
    _guards: Tuple = field(init=False, repr=False, compare=False)
    _updates: Tuple = field(init=False, repr=False, compare=False)
    _labels: Dict[str, Expr] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(set(self.actions)) != len(self.actions):
            raise ValueError("action names must be unique")
        object.__setattr__(self, "labels", tuple(sorted(self.labels, key=lambda item: item[0])))
        object.__setattr__(self, "_action_index", {a: i for i, a in enumerate(self.actions)})
        object.__setattr__(self, "_labels", dict(self.labels))
        object.__setattr__(self, "_guards", tuple(
            (self._action_index[c.action], c.guard.compile()) for c in self.commands
        ))
        object.__setattr__(self, "_updates", tuple(
            tuple((u.probability, tuple((i, e.compile()) for i, e in u.assignments)) for u in c.updates)
            for c in self.commands
        ))
        self.check_state(self.initial_state)

    # ---------- queries ----------

    @property
    def dimension(self) -> int:
        return len(self.variables)

    @property
    def variable_names(self) -> Tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    @property
    def exact(self) -> bool:
        return all(isinstance(u.probability, Fraction) for c in self.commands for u in c.updates)

    def action_index(self, action: str) -> int:
        return self._action_index[action]

    def has_label(self, name: str) -> bool:
        return name in self._labels

    def label_expression(self, name: str) -> Expr:
        if name not in self._labels:
            raise UnknownLabel(f"unknown label \"{name}\" (known: {', '.join(self._labels) or 'none'})")
        return self._labels[name]

    def check_state(self, state: FeatureState) -> None:
        if len(state) != self.dimension:
            raise BoundsViolation(f"state {state.to_list()} has {len(state)} features, model has {self.dimension}")
        for var, value in zip(self.variables, state.features):
            if not var.contains(value):
                raise BoundsViolation(
                    f"{var.name}={value} outside [{var.lower}..{var.upper}] in state {state.to_list()}"
                )

    # ---------- semantics ----------

    def enabled_actions(self, state: FeatureState) -> List[str]:
        """Actions with at least one true guard in `state`, in declaration order"""
        values = state.features
        indices = {action for action, guard in self._guards if guard(values)}
        return [self.actions[i] for i in sorted(indices)]

    def successor_distribution(self, state: FeatureState, action: str) -> Distribution:
        """Evaluate the unique enabled command for `action` in `state`"""
        values = state.features
        target = self._action_index.get(action)
        matching = [i for i, (a, guard) in enumerate(self._guards) if a == target and guard(values)]
        if not matching:
            raise DisabledAction(f"action {action} is not enabled in state {state.to_list()}")
        if len(matching) > 1:
            raise OverlappingCommands(
                f"{len(matching)} commands for action {action} are enabled in state {state.to_list()}"
            )
        pairs = []
        for prob, assignments in self._updates[matching[0]]:
            successor = list(values)
            # parallel assignment: every right-hand side reads the old values
            for index, fn in assignments:
                successor[index] = fn(values)
            for var, value in zip(self.variables, successor):
                if not var.contains(value):
                    raise BoundsViolation(
                        f"action {action} in state {state.to_list()} sets {var.name}={value} "
                        f"outside [{var.lower}..{var.upper}]"
                    )
            pairs.append((FeatureState(tuple(successor)), prob))
        return Distribution.merge(pairs)

    def satisfies(self, state: FeatureState, label: str) -> bool:
        return bool(self.label_expression(label).compile()(state.features))


# ============ Properties ============

_PROPERTY_PATTERN = re.compile(r'^\s*P\s*=\s*\?\s*\[\s*F\s*"([^"]+)"\s*\]\s*$')


@dataclass(frozen=True)
class SafetyProperty:
    """Unbounded reachability query P=? [ F "label" ]"""
    target_label: str
    kind: str = "reachability"

    @classmethod
    def parse(cls, text: str) -> "SafetyProperty":
        match = _PROPERTY_PATTERN.match(text)
        if not match:
            raise PropertySyntaxError(f"unsupported property {text!r}; expected P=? [ F \"label\" ]")
        return cls(match.group(1))

    def validate(self, mdp: Mdp) -> None:
        mdp.label_expression(self.target_label)

    @property
    def display(self) -> str:
        return f'P(F "{self.target_label}")'

    def __str__(self) -> str:
        return f'P=? [ F "{self.target_label}" ]'


# ============ Induced chain ============

@dataclass(frozen=True)
class InducedDtmc:
    """Policy-resolved Markov chain over the reachable states, indexed in BFS order"""
    states: Tuple[FeatureState, ...]
    chosen_action: Tuple[str, ...]
    transitions: Tuple[Tuple[Tuple[int, Probability], ...], ...]
    label_sets: Mapping[str, FrozenSet[int]]
    variable_names: Tuple[str, ...] = ()
    exact: bool = True
    deadlocks: Tuple[int, ...] = ()
    warnings: Tuple[str, ...] = ()

    _index: Dict[FeatureState, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(self.states)})

    @property
    def initial(self) -> int:
        return 0

    def __len__(self) -> int:
        return len(self.states)

    def index_of(self, state: FeatureState) -> Optional[int]:
        return self._index.get(state)

    def distribution(self, index: int) -> Distribution:
        return Distribution(tuple((self.states[j], p) for j, p in self.transitions[index]))

    def label_set(self, name: str) -> FrozenSet[int]:
        if name not in self.label_sets:
            raise UnknownLabel(f"unknown label \"{name}\"")
        return self.label_sets[name]

    def successors(self, index: int) -> Sequence[int]:
        return [j for j, _ in self.transitions[index]]
