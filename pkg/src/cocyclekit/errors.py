"""Exception hierarchy.

Every error carries a ``category`` used by the command line to pick an exit
code class: ``io``, ``contract``, ``budget`` or ``numerical``.
"""

EXIT_CODES = {"io": 10, "contract": 20, "budget": 30, "numerical": 40}


class ArtifactError(Exception):
    category = "contract"

    def __init__(self, message: str = "", **details):
        super().__init__(message)
        self.details = details

    def report(self) -> dict:
        out = {"error": type(self).__name__, "category": self.category, "message": str(self)}
        for key, val in self.details.items():
            out[key] = val if isinstance(val, (int, float, str, bool, list, dict, type(None))) else repr(val)
        return out


class FormatError(ArtifactError):
    category = "io"


class ContractViolation(ArtifactError):
    category = "contract"


class OverlapMismatch(ContractViolation):
    pass


class InadmissiblePoint(ContractViolation):
    pass


class WordTooShort(ContractViolation):
    pass


class ShapeMismatch(ContractViolation):
    pass


class DimensionTooSmall(ContractViolation):
    pass


class NegativeDeterminant(ContractViolation):
    pass


class TargetTooFar(ContractViolation):
    pass


class PeriodProductNotIdentity(ContractViolation):
    pass


class EmptyResult(ContractViolation):
    pass


class NumericalFailure(ArtifactError):
    category = "numerical"


class Singular(NumericalFailure):
    pass


class SeparationFailed(NumericalFailure):
    pass


class BudgetExceeded(ArtifactError):
    category = "budget"


class MeshTooLarge(BudgetExceeded):
    pass


class SlackExhausted(BudgetExceeded):
    pass


class SearchExhausted(BudgetExceeded):
    pass


class DegenerateBudget(BudgetExceeded):
    pass


class EnumerationBudget(BudgetExceeded):
    pass


class FragmentationBudget(BudgetExceeded):
    pass


class CertificateFailed(BudgetExceeded):
    pass


class NoTransitionApplies(BudgetExceeded):
    pass


class NoRecurrence(BudgetExceeded):
    pass
