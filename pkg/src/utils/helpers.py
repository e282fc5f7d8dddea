import hashlib
import json
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence, Union


def format_probability_literal(prob) -> str:
    # Rationals in lowest terms, doubles in exponent form so they re-parse as doubles
    if isinstance(prob, Fraction):
        if prob.denominator == 1:
            return str(prob.numerator)
        return f"{prob.numerator}/{prob.denominator}"
    return f"{float(prob):.16e}"


def format_dump_probability(prob) -> str:
    # Explicit-state dump: rationals exact, doubles with 17 significant digits
    if isinstance(prob, Fraction):
        return format_probability_literal(prob)
    return f"{float(prob):.17g}"


def format_likelihood(prob) -> str:
    # Three significant digits, as quoted in prompts
    return f"{float(prob):.3g}"


def format_table_value(value) -> str:
    if value is None:
        return "-"
    return f"{float(value):.3f}"


def format_state(names: Sequence[str], features: Iterable[int]) -> str:
    """Render a state as comma separated name=value pairs"""
    return ", ".join(f"{name}={value}" for name, value in zip(names, features))


def prompt_hash(model: str, prompt: str) -> str:
    payload = json.dumps([model, prompt], ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def write_text(path: Union[str, Path], text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)
    return path
