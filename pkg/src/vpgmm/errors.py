"""Exception and warning types shared across the package.

Errors subclass the builtin they refine (ValueError, ArithmeticError, RuntimeError).
"""


class VpgmmError(Exception):
    """Base class for all package errors."""


class ContractViolationError(VpgmmError, ValueError):
    """A precondition on shapes, ranges or indices was violated."""


class DataFormatError(VpgmmError, ValueError):
    """An input file (CSV, params, transcript, manifest) is malformed."""


class NumericalDegeneracyError(VpgmmError, ArithmeticError):
    """A numerical computation has no meaningful result."""


class EmptyComponentError(NumericalDegeneracyError):
    """A mixture component received (almost) no responsibility mass."""

    def __init__(self, component: int, mass: float) -> None:
        self.component = component
        self.mass = mass
        super().__init__(f"Component j={component} is empty (total responsibility {mass:.3e})")


class SingularCovarianceError(NumericalDegeneracyError):
    """A covariance matrix could not be made positive definite."""

    def __init__(self, component: int, detail: str = "") -> None:
        self.component = component
        suffix = f": {detail}" if detail else ""
        super().__init__(f"Covariance of component j={component} is singular{suffix}")


class ConditioningError(NumericalDegeneracyError):
    """The conditioning block Σ_{j,v0} of a component is singular."""

    def __init__(self, component: int, detail: str = "") -> None:
        self.component = component
        suffix = f": {detail}" if detail else ""
        super().__init__(f"Cannot condition component j={component}{suffix}")


class ProtocolError(VpgmmError, RuntimeError):
    """A multi-party protocol session failed."""


class ProtocolDesyncError(ProtocolError):
    """Messages were left undelivered, arrived out of order, or diverged from a replay."""

    def __init__(self, tag: str, detail: str = "") -> None:
        self.tag = tag
        suffix = f": {detail}" if detail else ""
        super().__init__(f"Protocol desync at '{tag}'{suffix}")


class SessionAbortError(ProtocolError):
    """A party dropped out while a session was running."""

    def __init__(self, round_id: str, party: int) -> None:
        self.round_id = round_id
        self.party = party
        super().__init__(f"Session aborted in round '{round_id}': party {party} dropped out")


class SecureSumOverflowError(ProtocolError):
    """A secure-sum result falls outside the representable range [-N/2, N/2)."""


class PrivacyWarning(UserWarning):
    """A protocol step discloses more than its aggregate output."""


class ConvergenceWarning(UserWarning):
    """EM stopped at max_iter before meeting the tolerance."""


class EmptyComponentWarning(UserWarning):
    """An empty mixture component was reseeded."""
