"""
CF-Safe - Repair Pipeline
verify -> extract frontier -> advise -> patch -> re-verify
"""

import logging
from typing import Dict, List, Optional, Sequence

from src.advisor.advisor import BASELINE_EXPLANATION, advise, baseline_advice
from src.advisor.client import ChatClient
from src.advisor.config import AdvisorConfig
from src.advisor.response_parser import CounterfactualAdvice
from src.checker.reachability import SafetyMeasurement, check, extract_frontier
from src.config import ToolSettings
from src.model.core import InducedDtmc, Mdp, SafetyProperty
from src.policy.engine import EMPTY_OVERRIDES, OverrideMap, PolicyModel, check_policy
from src.repair.models import (
    AdviceCounts,
    AdviceEntry,
    MeasurementSummary,
    OverrideEntry,
    RepairReport,
)
from src.transformer.induced_builder import build_induced, reachable_count

logger = logging.getLogger(__name__)


def build_chain(mdp: Mdp, policy: PolicyModel, overrides: OverrideMap, settings: ToolSettings,
                **options) -> InducedDtmc:
    return build_induced(mdp, policy, overrides, state_limit=settings.state_limit,
                         strict=settings.strict, **options)


def measure(dtmc: InducedDtmc, prop: SafetyProperty, settings: ToolSettings) -> SafetyMeasurement:
    return check(dtmc, prop, settings.tolerance, numeric=settings.numeric, max_sweeps=settings.max_sweeps,
                 budget_bytes=settings.elimination_budget_bytes)


def _not_worse(before: SafetyMeasurement, after: SafetyMeasurement) -> bool:
    if before.exact is not None and after.exact is not None:
        return after.exact <= before.exact
    return after.value <= before.value


def _with_fallback(advice: CounterfactualAdvice, mdp: Mdp, policy: PolicyModel) -> CounterfactualAdvice:
    """Replace unusable advice with the baseline choice, keeping the original answer text"""
    if advice.ok:
        return advice
    fallback = baseline_advice(advice.record, mdp, policy)
    if not fallback.ok:
        return advice
    return CounterfactualAdvice(
        record=advice.record,
        explanation=f"{BASELINE_EXPLANATION} (fallback after {advice.status})",
        alternative=fallback.alternative,
        status="ok",
        raw=advice.raw,
        prompt_hash=advice.prompt_hash,
    )


def run_pipeline(mdp: Mdp, policy: PolicyModel, prop: SafetyProperty, advisor_cfg: AdvisorConfig,
                 passes: Optional[int] = None, *, settings: Optional[ToolSettings] = None,
                 client: Optional[ChatClient] = None) -> RepairReport:
    """
    Verify the policy, patch its frontier with ok advice and verify again.

    Extra passes re-extract the frontier of the patched chain; a state keeps
    the first override it received.
    """
    settings = settings or ToolSettings()
    passes = passes if passes is not None else settings.passes
    if passes < 1:
        raise ValueError("passes must be at least 1")
    prop.validate(mdp)
    check_policy(policy, mdp)

    original_chain = build_chain(mdp, policy, EMPTY_OVERRIDES, settings)
    original = measure(original_chain, prop, settings)
    frontier = extract_frontier(original_chain, prop)
    original_frontier = {r.state for r in frontier}

    overrides = EMPTY_OVERRIDES
    chain, repaired = original_chain, original
    entries: List[AdviceEntry] = []
    warnings: List[str] = list(original_chain.warnings)

    for repair_pass in range(1, passes + 1):
        records = [r for r in frontier if r.state not in overrides]
        if not records:
            break
        advice = advise(advisor_cfg, mdp, policy, records, client=client)
        if settings.fallback_baseline and advisor_cfg.kind != "baseline":
            advice = [_with_fallback(a, mdp, policy) for a in advice]
        entries.extend(AdviceEntry.of(a, repair_pass) for a in advice)

        overrides = overrides.extended((a.record.state, a.alternative) for a in advice if a.ok)
        chain = build_chain(mdp, policy, overrides, settings)
        repaired = measure(chain, prop, settings)
        frontier = extract_frontier(chain, prop)
        logger.info("Pass %d with %s: %r -> %r (%d override(s))", repair_pass, advisor_cfg.method_name,
                    original.value, repaired.value, len(overrides))

    for warning in chain.warnings:
        if warning not in warnings:
            warnings.append(warning)

    new_states = [r.state.to_list() for r in frontier if r.state not in original_frontier]
    if new_states and chain is not original_chain:
        message = f"{len(new_states)} frontier state(s) appeared after patching: " + \
                  ", ".join(str(s) for s in new_states)
        logger.warning(message)
        warnings.append(message)
    else:
        new_states = []

    improved = _not_worse(original, repaired)
    if not improved:
        message = f"worse after repair with {advisor_cfg.method_name}: {original.value!r} -> {repaired.value!r}"
        logger.warning(message)
        warnings.append(message)

    return RepairReport(
        query=str(prop),
        property=prop.display,
        method=advisor_cfg.method_name,
        kind=advisor_cfg.kind,
        original=MeasurementSummary.of(original, reachable_count(original_chain)),
        repaired=MeasurementSummary.of(repaired, reachable_count(chain)),
        advice=entries,
        counts=AdviceCounts.tally(entries),
        overrides=[OverrideEntry(state=s.to_list(), action=a) for s, a in overrides.items()],
        states_before=reachable_count(original_chain),
        states_after=reachable_count(chain),
        new_frontier_states=new_states,
        improved=improved,
        warnings=warnings,
        passes=passes,
    )


def run_comparison(mdp: Mdp, policy: PolicyModel, props: Sequence[SafetyProperty],
                   advisor_cfgs: Sequence[AdvisorConfig], *, settings: Optional[ToolSettings] = None,
                   clients: Optional[Dict[str, ChatClient]] = None) -> List[RepairReport]:
    """Every (property, method) pair, properties outermost"""
    clients = clients or {}
    reports = []
    for prop in props:
        for cfg in advisor_cfgs:
            client = clients.get(cfg.kind)
            if client is None and cfg.is_llm:
                client = clients.setdefault(cfg.kind, ChatClient(cfg))
            reports.append(run_pipeline(mdp, policy, prop, cfg, settings=settings, client=client))
    return reports

