"""
CF-Safe - Normalized Emitter
Canonical re-print of an Mdp and the truncated excerpt used in LLM prompts
"""

from src.model.core import Mdp, Update
from src.utils.helpers import format_probability_literal

TRUNCATION_MARKER = "... (truncated)"


def _render_update(mdp: Mdp, update: Update) -> str:
    if not update.assignments:
        body = "true"
    else:
        names = mdp.variable_names
        body = " & ".join(f"({names[i]}' = {expr.render()})" for i, expr in update.assignments)
    return f"{format_probability_literal(update.probability)} : {body}"


def emit_normalized(mdp: Mdp) -> str:
    """Deterministic canonical text; parsing it back yields an equal Mdp"""
    lines = ["mdp", ""]

    if mdp.constants:
        for name, value in mdp.constants:
            lines.append(f"const int {name} = {value};")
        lines.append("")

    lines.append(f"module {mdp.module_name}")
    for var, init in zip(mdp.variables, mdp.initial_state):
        lines.append(f"  {var.name} : [{var.lower}..{var.upper}] init {init};")
    if mdp.commands:
        lines.append("")
    for command in mdp.commands:
        updates = " + ".join(_render_update(mdp, u) for u in command.updates)
        lines.append(f"  [{command.action}] {command.guard.render()} -> {updates};")
    lines.append("endmodule")

    # labels are stored sorted by name
    if mdp.labels:
        lines.append("")
        for name, expr in mdp.labels:
            lines.append(f"label \"{name}\" = {expr.render()};")

    for block in mdp.reward_items:
        lines.append("")
        lines.append(f"rewards \"{block.name}\"" if block.name is not None else "rewards")
        for item in block.body:
            lines.append(f"  {item}")
        lines.append("endrewards")

    return "\n".join(lines) + "\n"


def model_excerpt_for_prompt(mdp: Mdp, budget: int) -> str:
    """Normalized model text cut at a statement boundary so it fits `budget` characters"""
    text = emit_normalized(mdp)
    if len(text) <= budget:
        return text

    suffix = "\n" + TRUNCATION_MARKER
    limit = budget - len(suffix)
    cut = text.rfind(";", 0, max(limit, 0))
    if cut == -1:
        header = text.split("\n", 1)[0]
        return header + suffix
    return text[:cut + 1] + suffix
