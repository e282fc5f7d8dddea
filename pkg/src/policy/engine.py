"""
CF-Safe - Policy Engine
Tabular and feedforward scorers, masked action ranking, and repair overrides
"""

import json
import logging
from collections.abc import Mapping
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, Iterator, List, NamedTuple, Optional, Tuple, Union

import jsonschema
import numpy as np

from src.model.core import FeatureState, Mdp
from src.model.errors import (
    DisabledArgmax,
    NoEnabledAction,
    OverrideDisabled,
    PolicyMismatch,
    PolicySchemaError,
    UnknownState,
)

logger = logging.getLogger(__name__)

ACTIVATIONS = ("relu", "id")

# ============ Policy file schema ============

TABULAR_SCHEMA = {
    "type": "object",
    "properties": {
        "type": {"const": "tabular"},
        "actions": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "entries": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "state": {"type": "array", "items": {"type": "integer"}, "minItems": 1},
                    "q": {"type": "array", "items": {"type": "number"}},
                },
                "required": ["state", "q"],
                "additionalProperties": False,
            },
        },
    },
    "required": ["type", "actions", "entries"],
    "additionalProperties": False,
}

MLP_SCHEMA = {
    "type": "object",
    "properties": {
        "type": {"const": "mlp"},
        "actions": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "layers": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "properties": {
                    "w": {"type": "array", "minItems": 1, "items": {"type": "array", "items": {"type": "number"}}},
                    "b": {"type": "array", "items": {"type": "number"}},
                    "act": {"type": "string"},
                },
                "required": ["w", "b", "act"],
                "additionalProperties": False,
            },
        },
    },
    "required": ["type", "actions", "layers"],
    "additionalProperties": False,
}


# ============ Policy model ============

@dataclass(frozen=True, eq=False)
class Layer:
    """Dense layer; weights are stored outputs x inputs"""
    weights: np.ndarray
    bias: np.ndarray
    activation: str

    @property
    def input_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def output_dim(self) -> int:
        return self.weights.shape[0]

    def forward(self, x: np.ndarray) -> np.ndarray:
        # accumulate over inputs in index order so results do not depend on BLAS
        acc = self.bias.copy()
        for j in range(self.input_dim):
            acc += self.weights[:, j] * x[j]
        if self.activation == "relu":
            acc = np.maximum(acc, 0.0)
        return acc


@dataclass(frozen=True, eq=False)
class PolicyModel:
    kind: str
    action_order: Tuple[str, ...]
    table: Optional[Dict[Tuple[int, ...], Tuple[float, ...]]] = None
    layers: Tuple[Layer, ...] = ()

    @property
    def input_dim(self) -> Optional[int]:
        if self.kind == "mlp":
            return self.layers[0].input_dim
        return None

    def scores(self, state: FeatureState) -> Dict[str, float]:
        """Raw score for every policy action"""
        if self.kind == "tabular":
            row = self.table.get(state.features)
            if row is None:
                raise UnknownState(f"tabular policy has no entry for state {state.to_list()}")
            return dict(zip(self.action_order, row))
        x = np.asarray(state.features, dtype=np.float64)
        for layer in self.layers:
            x = layer.forward(x)
        return dict(zip(self.action_order, (float(v) for v in x)))


def policy_from_document(doc: dict) -> PolicyModel:
    """Validate a decoded policy document and build the PolicyModel"""
    kind = doc.get("type") if isinstance(doc, dict) else None
    schema = {"tabular": TABULAR_SCHEMA, "mlp": MLP_SCHEMA}.get(kind)
    if schema is None:
        raise PolicySchemaError("policy 'type' must be \"tabular\" or \"mlp\"")
    try:
        jsonschema.validate(doc, schema)
    except jsonschema.ValidationError as exc:
        location = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise PolicySchemaError(f"policy schema violation at {location}: {exc.message}") from None

    actions = tuple(doc["actions"])
    if len(set(actions)) != len(actions):
        raise PolicySchemaError("duplicate action names in policy")

    if kind == "tabular":
        table: Dict[Tuple[int, ...], Tuple[float, ...]] = {}
        for i, entry in enumerate(doc["entries"], 1):
            state = tuple(entry["state"])
            if len(entry["q"]) != len(actions):
                raise PolicySchemaError(
                    f"dimension mismatch at entry {i}: {len(entry['q'])} scores for {len(actions)} actions"
                )
            if state in table:
                raise PolicySchemaError(f"duplicate entry for state {list(state)}")
            table[state] = tuple(float(v) for v in entry["q"])
        dims = {len(s) for s in table}
        if len(dims) > 1:
            raise PolicySchemaError("tabular entries have different state lengths")
        return PolicyModel("tabular", actions, table=table)

    layers: List[Layer] = []
    previous = None
    for i, layer_doc in enumerate(doc["layers"], 1):
        if layer_doc["act"] not in ACTIVATIONS:
            raise PolicySchemaError(f"unknown activation {layer_doc['act']!r} at layer {i}")
        rows = layer_doc["w"]
        width = len(rows[0])
        if width == 0 or any(len(r) != width for r in rows):
            raise PolicySchemaError(f"dimension mismatch at layer {i}: ragged weight matrix")
        weights = np.asarray(rows, dtype=np.float64)
        bias = np.asarray(layer_doc["b"], dtype=np.float64)
        if bias.shape[0] != weights.shape[0]:
            raise PolicySchemaError(f"dimension mismatch at layer {i}: bias length {bias.shape[0]}")
        if previous is not None and weights.shape[1] != previous:
            raise PolicySchemaError(f"dimension mismatch at layer {i}")
        previous = weights.shape[0]
        layers.append(Layer(weights, bias, layer_doc["act"]))
    if previous != len(actions):
        raise PolicySchemaError(f"dimension mismatch: network outputs {previous} scores for {len(actions)} actions")
    return PolicyModel("mlp", actions, layers=tuple(layers))


def load_policy(path: Union[str, Path]) -> PolicyModel:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except FileNotFoundError:
        raise PolicySchemaError(f"policy file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise PolicySchemaError(f"policy file {path} is not valid JSON: {exc}") from None
    except UnicodeDecodeError as exc:
        raise PolicySchemaError(f"policy file {path} is not valid UTF-8 (byte {exc.start})") from None
    policy = policy_from_document(doc)
    logger.info("Loaded %s policy from %s (%d actions)", policy.kind, path, len(policy.action_order))
    return policy


def check_policy(policy: PolicyModel, mdp: Mdp) -> None:
    """Policy actions and input shape must match the model"""
    unknown = [a for a in policy.action_order if a not in mdp.actions]
    if unknown:
        raise PolicyMismatch(f"action name not in model: {', '.join(unknown)}")
    missing = [a for a in mdp.actions if a not in policy.action_order]
    if missing:
        raise PolicyMismatch(f"policy has no scores for model actions: {', '.join(missing)}")
    if policy.kind == "mlp" and policy.input_dim != mdp.dimension:
        raise PolicyMismatch(f"network input dimension {policy.input_dim} != state dimension {mdp.dimension}")
    if policy.kind == "tabular":
        for state in policy.table:
            if len(state) != mdp.dimension:
                raise PolicyMismatch(f"tabular state {list(state)} does not have {mdp.dimension} features")
            break


# ============ Overrides ============

class OverrideMap(Mapping):
    """Read-only state -> action patches applied on top of the policy"""

    def __init__(self, items: Optional[Iterable[Tuple[FeatureState, str]]] = None):
        self._items: Dict[FeatureState, str] = dict(items or ())

    def __getitem__(self, state: FeatureState) -> str:
        return self._items[state]

    def __iter__(self) -> Iterator[FeatureState]:
        return iter(self._items)

    def __len__(self) -> int:
        return len(self._items)

    def validate(self, mdp: Mdp) -> None:
        for state, action in self._items.items():
            if action not in mdp.actions:
                raise PolicyMismatch(f"override action {action} for {state.to_list()} is not a model action")

    def extended(self, items: Iterable[Tuple[FeatureState, str]]) -> "OverrideMap":
        """New map with extra patches; existing states keep their earlier action"""
        merged = dict(self._items)
        for state, action in items:
            merged.setdefault(state, action)
        return OverrideMap(merged.items())

    def __repr__(self) -> str:
        return f"OverrideMap({ {s.features: a for s, a in self._items.items()} })"


EMPTY_OVERRIDES = OverrideMap()


# ============ Ranking and choice ============

@dataclass(frozen=True)
class PolicyRanking:
    state: FeatureState
    scored: Tuple[Tuple[str, float], ...]

    @property
    def actions(self) -> Tuple[str, ...]:
        return tuple(a for a, _ in self.scored)

    @property
    def best(self) -> str:
        return self.scored[0][0]


class SecondBest(NamedTuple):
    action: str
    no_alternative: bool


def _enabled(mdp: Mdp, state: FeatureState, disabled: FrozenSet[str]) -> List[str]:
    actions = mdp.enabled_actions(state)
    if disabled:
        actions = [a for a in actions if a not in disabled]
    return actions


def rank_enabled(policy: PolicyModel, mdp: Mdp, state: FeatureState, enabled: List[str]) -> PolicyRanking:
    """Rank an already computed enabled-action list"""
    if not enabled:
        raise NoEnabledAction(f"no enabled action in state {state.to_list()}")
    scores = policy.scores(state)
    ordered = sorted(enabled, key=lambda a: (-scores[a], mdp.action_index(a)))
    return PolicyRanking(state, tuple((a, scores[a]) for a in ordered))


def rank_actions(policy: PolicyModel, mdp: Mdp, state: FeatureState,
                 disabled: FrozenSet[str] = frozenset()) -> PolicyRanking:
    """Enabled actions in descending score order, ties by declaration order"""
    mdp.check_state(state)
    return rank_enabled(policy, mdp, state, _enabled(mdp, state, disabled))


def choose(policy: PolicyModel, overrides: Mapping, mdp: Mdp, state: FeatureState, *,
           strict: bool = False, rank: int = 1, disabled: FrozenSet[str] = frozenset(),
           enabled: Optional[List[str]] = None) -> str:
    """Action the (patched) policy takes in `state`"""
    if enabled is None:
        mdp.check_state(state)
        enabled = _enabled(mdp, state, disabled)

    action = overrides.get(state) if overrides else None
    if action is not None:
        if action not in enabled:
            raise OverrideDisabled(f"override {action} is not enabled in state {state.to_list()}")
        return action

    if strict:
        scores = policy.scores(state)
        best = min(policy.action_order, key=lambda a: (-scores[a], mdp.action_index(a)))
        if best not in enabled:
            raise DisabledArgmax(f"policy argmax {best} is disabled in state {state.to_list()}")
        if rank == 1:
            return best

    ranking = rank_enabled(policy, mdp, state, enabled)
    return ranking.scored[min(rank, len(ranking.scored)) - 1][0]


def second_best(policy: PolicyModel, mdp: Mdp, state: FeatureState) -> SecondBest:
    """Rank-2 action, or rank 1 flagged no_alternative when it is the only choice"""
    ranking = rank_actions(policy, mdp, state)
    if len(ranking.scored) < 2:
        return SecondBest(ranking.best, True)
    return SecondBest(ranking.scored[1][0], False)
