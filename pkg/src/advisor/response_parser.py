"""
CF-Safe - Advice Parsing
Turns a free-text answer into a counterfactual advice with a status
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional

import regex

from src.checker.reachability import ViolationRecord
from src.model.core import Mdp

logger = logging.getLogger(__name__)

STATUSES = ("ok", "format_error", "disabled_action", "no_alternative")

ALTERNATIVE_LINE = regex.compile(r'^\s*ALTERNATIVE\s*:\s*([A-Za-z_][A-Za-z0-9_]*)\W*$', regex.IGNORECASE)


@dataclass(frozen=True)
class CounterfactualAdvice:
    record: ViolationRecord
    explanation: str
    alternative: Optional[str]
    status: str
    raw: str = ""
    prompt_hash: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_dict(self) -> Dict:
        return {
            "index": self.record.index,
            "state": self.record.state.to_list(),
            "action": self.record.action,
            "one_step_prob": float(self.record.one_step_prob),
            "alternative": self.alternative,
            "status": self.status,
            "explanation": self.explanation,
            "raw": self.raw,
            "prompt_hash": self.prompt_hash,
        }


def classify(record: ViolationRecord, mdp: Mdp, action: Optional[str], *, explanation: str = "",
             raw: str = "", digest: Optional[str] = None) -> CounterfactualAdvice:
    """Status of a proposed action at the record's state"""
    if action is None:
        status = "format_error"
    elif action not in mdp.enabled_actions(record.state):
        status = "disabled_action"
    elif action == record.action:
        status = "no_alternative"
    else:
        status = "ok"
    return CounterfactualAdvice(record, explanation, action, status, raw, digest)


def _mentioned(text: str, names: List[str]) -> List[str]:
    found = []
    for name in names:
        pattern = rf'(?<![A-Za-z0-9_]){regex.escape(name)}(?![A-Za-z0-9_])'
        if regex.search(pattern, text, regex.IGNORECASE):
            found.append(name)
    return found


def parse_advice(raw: str, record: ViolationRecord, mdp: Mdp, digest: Optional[str] = None) -> CounterfactualAdvice:
    """
    The last `ALTERNATIVE: <action>` line wins. Without one, the answer must
    mention exactly one enabled action by name.
    """
    lines = raw.splitlines()
    by_lower = {a.lower(): a for a in mdp.actions}

    for position in range(len(lines) - 1, -1, -1):
        match = ALTERNATIVE_LINE.match(lines[position])
        if match is None:
            continue
        explanation = "\n".join(lines[:position] + lines[position + 1:]).strip()
        action = by_lower.get(match.group(1).lower())
        if action is None:
            logger.debug("Answer names unknown action %r", match.group(1))
        return classify(record, mdp, action, explanation=explanation, raw=raw, digest=digest)

    candidates = _mentioned(raw, mdp.enabled_actions(record.state))
    action = candidates[0] if len(candidates) == 1 else None
    if action is None:
        logger.debug("No unique action in answer for state %s (%d candidates)",
                     record.state.to_list(), len(candidates))
    return classify(record, mdp, action, explanation=raw.strip(), raw=raw, digest=digest)
