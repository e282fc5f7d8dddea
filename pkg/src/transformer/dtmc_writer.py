"""
CF-Safe - Chain Writer
Explicit-state text dump of an induced chain
"""

import logging
from pathlib import Path
from typing import Union

from src.model.core import InducedDtmc
from src.utils.helpers import format_dump_probability, write_text

logger = logging.getLogger(__name__)


def format_dtmc(dtmc: InducedDtmc) -> str:
    """
    STATES n
    i: action | j1:p1 j2:p2 ...
    LABEL name: i1 i2 ...
    """
    lines = [f"STATES {len(dtmc)}"]
    for i, (action, row) in enumerate(zip(dtmc.chosen_action, dtmc.transitions)):
        successors = " ".join(f"{j}:{format_dump_probability(p)}" for j, p in row)
        lines.append(f"{i}: {action} | {successors}")
    for name in sorted(dtmc.label_sets):
        members = " ".join(str(i) for i in sorted(dtmc.label_sets[name]))
        lines.append(f"LABEL {name}: {members}".rstrip())
    return "\n".join(lines) + "\n"


def write_dtmc(dtmc: InducedDtmc, path: Union[str, Path]) -> Path:
    path = write_text(path, format_dtmc(dtmc))
    logger.info("Wrote induced chain (%d states) to %s", len(dtmc), path)
    return path
