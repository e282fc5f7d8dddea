"""
CF-Safe - Prompt Templates
"""

from pathlib import Path
from typing import Sequence, Union

from src.checker.reachability import ViolationRecord
from src.model.core import Mdp
from src.model.errors import UsageError
from src.parser.emitter import model_excerpt_for_prompt
from src.utils.helpers import format_likelihood, format_state

PRISM_INTRO = "The RL environment is modeled in the PRISM language:"

QUESTION_TEMPLATE = (
    "What went wrong with likelihood {likelihood} in the state [{state}] "
    "with action {action} ending up in [{successor}]. Explain it to me."
)

ANSWER_FORMAT_TEMPLATE = "End your answer with a single line: ALTERNATIVE: <one of: {actions}>"


def load_description(path: Union[str, Path]) -> str:
    path = Path(path)
    try:
        return path.read_text(encoding="utf-8").strip()
    except FileNotFoundError:
        raise UsageError(f"description file not found: {path}") from None
    except UnicodeDecodeError as exc:
        raise UsageError(f"description file {path} is not valid UTF-8 (byte {exc.start})") from None


def environment_text(kind: str, mdp: Mdp, *, description: str = "", excerpt_budget: int = 8000) -> str:
    """Environment part of the prompt: the user's description or the normalized model"""
    if kind == "llm-prism":
        return f"{PRISM_INTRO}\n{model_excerpt_for_prompt(mdp, excerpt_budget).rstrip()}"
    return description.strip()


def build_prompt(env_text: str, record: ViolationRecord, mdp: Mdp) -> str:
    """Environment text, the violation question and the answer-format line"""
    names = mdp.variable_names
    question = QUESTION_TEMPLATE.format(
        likelihood=format_likelihood(record.one_step_prob),
        state=format_state(names, record.state),
        action=record.action,
        successor=format_state(names, record.successor),
    )
    enabled: Sequence[str] = mdp.enabled_actions(record.state)
    appendix = ANSWER_FORMAT_TEMPLATE.format(actions=", ".join(enabled))
    return f"{env_text}\n\n{question}\n\n{appendix}"
