"""
CF-Safe - Report Models
Pydantic records for repair runs
"""

from typing import List, Optional

from pydantic import BaseModel, Field

from src.advisor.response_parser import CounterfactualAdvice
from src.checker.reachability import SafetyMeasurement


# ============ Measurements ============

class MeasurementSummary(BaseModel):
    """One checked value of the property"""
    value: float
    exact: Optional[str] = None
    mode: str
    solver: str
    states: int
    iterations: Optional[int] = None

    @classmethod
    def of(cls, measurement: SafetyMeasurement, states: int) -> "MeasurementSummary":
        return cls(
            value=measurement.value,
            exact=str(measurement.exact) if measurement.exact is not None else None,
            mode=measurement.mode,
            solver=measurement.solver,
            states=states,
            iterations=measurement.iterations,
        )


# ============ Advice ============

class AdviceEntry(BaseModel):
    """Advice as persisted for human review"""
    repair_pass: int = Field(1, alias="pass")
    index: int
    state: List[int]
    action: str
    one_step_prob: float
    alternative: Optional[str] = None
    status: str
    explanation: str = ""
    raw: str = ""
    prompt_hash: Optional[str] = None

    model_config = {"populate_by_name": True}

    @classmethod
    def of(cls, advice: CounterfactualAdvice, repair_pass: int) -> "AdviceEntry":
        return cls(repair_pass=repair_pass, **advice.to_dict())


class AdviceCounts(BaseModel):
    frontier_size: int = 0
    ok: int = 0
    format_error: int = 0
    disabled_action: int = 0
    no_alternative: int = 0

    @classmethod
    def tally(cls, entries: List[AdviceEntry]) -> "AdviceCounts":
        counts = cls(frontier_size=len(entries))
        for entry in entries:
            setattr(counts, entry.status, getattr(counts, entry.status) + 1)
        return counts


class OverrideEntry(BaseModel):
    state: List[int]
    action: str


# ============ Report ============

class RepairReport(BaseModel):
    """Original and repaired measurement of one property with one advice method"""
    query: str
    property: str
    method: str
    kind: str
    original: MeasurementSummary
    repaired: MeasurementSummary
    advice: List[AdviceEntry] = []
    counts: AdviceCounts = AdviceCounts()
    overrides: List[OverrideEntry] = []
    states_before: int
    states_after: int
    new_frontier_states: List[List[int]] = []
    improved: bool
    warnings: List[str] = []
    passes: int = 1

    @property
    def worse(self) -> bool:
        return not self.improved

    @property
    def repair_needed(self) -> bool:
        return self.counts.frontier_size > 0
