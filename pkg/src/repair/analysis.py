"""
CF-Safe - Policy Analysis
How the property changes when the policy is forced to lower-ranked choices or loses an action
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import pandas as pd

from src.checker.reachability import SafetyMeasurement
from src.config import ToolSettings
from src.model.core import Mdp, SafetyProperty
from src.model.errors import PolicyError
from src.policy.engine import EMPTY_OVERRIDES, PolicyModel, check_policy
from src.repair.pipeline import build_chain, measure

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AnalysisRow:
    label: str
    measurement: Optional[SafetyMeasurement]
    states: int = 0
    deadlocks: int = 0
    error: Optional[str] = None


def alternative_rank_sweep(mdp: Mdp, policy: PolicyModel, prop: SafetyProperty, max_rank: int, *,
                           settings: Optional[ToolSettings] = None) -> List[AnalysisRow]:
    """Property value when every state takes its k-th ranked enabled action, k = 1..max_rank"""
    settings = settings or ToolSettings()
    prop.validate(mdp)
    check_policy(policy, mdp)
    rows = []
    for rank in range(1, max_rank + 1):
        rows.append(_analyse(f"rank {rank}", mdp, policy, prop, settings, rank=rank))
    return rows


def action_redundancy(mdp: Mdp, policy: PolicyModel, prop: SafetyProperty,
                      actions: Optional[Sequence[str]] = None, *,
                      settings: Optional[ToolSettings] = None) -> List[AnalysisRow]:
    """Property value with each action globally disabled, one at a time"""
    settings = settings or ToolSettings()
    prop.validate(mdp)
    check_policy(policy, mdp)
    rows = []
    for action in actions if actions is not None else mdp.actions:
        if action not in mdp.actions:
            raise PolicyError(f"unknown action {action}")
        rows.append(_analyse(f"without {action}", mdp, policy, prop, settings,
                             disabled_actions=frozenset({action})))
    return rows


def _analyse(label: str, mdp: Mdp, policy: PolicyModel, prop: SafetyProperty, settings: ToolSettings,
             **options) -> AnalysisRow:
    try:
        chain = build_chain(mdp, policy, EMPTY_OVERRIDES, settings, **options)
    except PolicyError as exc:
        logger.warning("%s: %s", label, exc)
        return AnalysisRow(label, None, error=str(exc))
    measurement = measure(chain, prop, settings)
    logger.info("%s: %r over %d states", label, measurement.value, len(chain))
    return AnalysisRow(label, measurement, len(chain), len(chain.deadlocks))


def analysis_dataframe(rows: Sequence[AnalysisRow]) -> pd.DataFrame:
    data = []
    for row in rows:
        data.append({
            "Variant": row.label,
            "Value": f"{row.measurement.value:.3f}" if row.measurement else "-",
            "States": row.states if row.measurement else "-",
            "Deadlocks": row.deadlocks if row.measurement else "-",
            "Note": row.error or "",
        })
    return pd.DataFrame(data, columns=["Variant", "Value", "States", "Deadlocks", "Note"])


def render_analysis(title: str, rows: Sequence[AnalysisRow]) -> str:
    frame = analysis_dataframe(rows)
    body = frame.to_string(index=False) if not frame.empty else "(no variants)"
    return f"{title}\n{body}\n"
