"""
CF-Safe - Errors
Exception hierarchy shared by every layer; each class knows its CLI exit code
"""

from typing import Sequence


class CfSafeError(Exception):
    """Base class for all toolkit errors"""
    exit_code = 2


# ============ Usage / configuration (exit 1) ============

class UsageError(CfSafeError):
    exit_code = 1


class PropertySyntaxError(UsageError):
    pass


class PolicySchemaError(UsageError):
    pass


# ============ Model errors (exit 2) ============

class ModelError(CfSafeError):
    exit_code = 2


class ModelParseError(ModelError):
    """Raised by load_model when the source produced error diagnostics"""

    def __init__(self, diagnostics: Sequence):
        self.diagnostics = list(diagnostics)
        lines = [str(d) for d in self.diagnostics]
        super().__init__("\n".join(lines) if lines else "model could not be parsed")


class OverlappingCommands(ModelError):
    pass


class BoundsViolation(ModelError):
    pass


class DisabledAction(ModelError):
    pass


class ArithmeticOverflow(ModelError):
    pass


# ============ Policy errors (exit 2) ============

class PolicyError(CfSafeError):
    exit_code = 2


class PolicyMismatch(PolicyError):
    pass


class UnknownState(PolicyError):
    pass


class NoEnabledAction(PolicyError):
    pass


class OverrideDisabled(PolicyError):
    pass


class DisabledArgmax(PolicyError):
    pass


# ============ Builder / checker errors (exit 2) ============

class BuildError(CfSafeError):
    exit_code = 2


class StateSpaceLimit(BuildError):
    pass


class CheckError(CfSafeError):
    exit_code = 2


class UnknownLabel(CheckError):
    pass


class NoConvergence(CheckError):
    pass


# ============ Advisor errors (exit 3) ============

class AdvisorError(CfSafeError):
    exit_code = 3


class AuthMissing(AdvisorError):
    pass


class HttpError(AdvisorError):
    pass


class MalformedResponse(AdvisorError):
    pass


class CacheLocked(AdvisorError):
    pass
