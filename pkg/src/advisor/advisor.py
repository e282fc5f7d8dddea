"""
CF-Safe - Advisor
Counterfactual advice for every frontier record: baseline, scripted or LLM
"""

import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import jsonschema

from src.advisor.client import ChatClient
from src.advisor.config import AdvisorConfig
from src.advisor.prompts import build_prompt, environment_text, load_description
from src.advisor.response_parser import CounterfactualAdvice, classify, parse_advice
from src.checker.reachability import ViolationRecord
from src.model.core import FeatureState, Mdp
from src.model.errors import UsageError
from src.policy.engine import PolicyModel, second_best
from src.utils.helpers import prompt_hash

logger = logging.getLogger(__name__)

BASELINE_EXPLANATION = "second-ranked action by policy score"
SCRIPTED_EXPLANATION = "scripted advice"

SCRIPT_SCHEMA = {
    "type": "array",
    "items": {
        "type": "object",
        "properties": {
            "state": {"type": "array", "items": {"type": "integer"}, "minItems": 1},
            "action": {"type": "string", "minLength": 1},
        },
        "required": ["state", "action"],
        "additionalProperties": False,
    },
}


def load_script(path: Union[str, Path]) -> Dict[FeatureState, str]:
    """Scripted advice file: [{"state": [...], "action": "name"}, ...]"""
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
        jsonschema.validate(doc, SCRIPT_SCHEMA)
    except FileNotFoundError:
        raise UsageError(f"script file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"script file {path} is not valid JSON: {exc}") from None
    except UnicodeDecodeError as exc:
        raise UsageError(f"script file {path} is not valid UTF-8 (byte {exc.start})") from None
    except jsonschema.ValidationError as exc:
        raise UsageError(f"script file {path}: {exc.message}") from None

    script: Dict[FeatureState, str] = {}
    for entry in doc:
        state = FeatureState(tuple(entry["state"]))
        if state in script:
            raise UsageError(f"script file {path} lists state {state.to_list()} twice")
        script[state] = entry["action"]
    logger.info("Loaded %d scripted advice entries from %s", len(script), path)
    return script


def baseline_advice(record: ViolationRecord, mdp: Mdp, policy: PolicyModel) -> CounterfactualAdvice:
    choice = second_best(policy, mdp, record.state)
    if choice.no_alternative:
        return CounterfactualAdvice(record, BASELINE_EXPLANATION, None, "no_alternative")
    return classify(record, mdp, choice.action, explanation=BASELINE_EXPLANATION)


def advise(config: AdvisorConfig, mdp: Mdp, policy: PolicyModel, records: Sequence[ViolationRecord], *,
           client: Optional[ChatClient] = None) -> List[CounterfactualAdvice]:
    """One advice per record, in record order"""
    if config.kind == "baseline":
        return [baseline_advice(r, mdp, policy) for r in records]

    if config.kind == "scripted":
        script = load_script(config.script_path)
        advice = []
        for record in records:
            action = script.get(record.state)
            if action is None:
                advice.append(CounterfactualAdvice(record, "", None, "format_error"))
            else:
                advice.append(classify(record, mdp, action, explanation=SCRIPTED_EXPLANATION))
        return advice

    if not records:
        return []
    description = load_description(config.description_path) if config.kind == "llm-description" else ""
    env_text = environment_text(config.kind, mdp, description=description, excerpt_budget=config.excerpt_budget)
    client = client or ChatClient(config)
    advice = []
    with client.session():
        for record in records:
            prompt = build_prompt(env_text, record, mdp)
            raw = client.complete(prompt)
            advice.append(parse_advice(raw, record, mdp, prompt_hash(config.model, prompt)))
    failed = sum(1 for a in advice if not a.ok)
    logger.info("Received %d advice(s) from %s, %d not usable", len(advice), config.method_name, failed)
    return advice
