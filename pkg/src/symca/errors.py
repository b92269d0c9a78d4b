"""Exception types shared across the package."""


class SymcaError(Exception):
    """Base class for all domain errors."""


class InvalidState(SymcaError):
    """A symbol outside 0..n-1 was fed to a rule or configuration."""


class ParseError(SymcaError):
    """Malformed rule / trace / witness text."""


class ShapeError(SymcaError):
    """A rule table whose length does not match n**k."""


class InvalidSpec(SymcaError):
    """An ill-formed family specification (e.g. outer size > k)."""


class TooLarge(SymcaError):
    """An exhaustive operation would exceed its configured cap."""


class Unsupported(SymcaError):
    """Operation not available for this family or parameter range."""


class WindowMismatch(SymcaError):
    """Two rules compared with unequal neighbourhood windows."""


class Inconclusive(SymcaError):
    """A bounded search ran out of budget: neither witness nor refusal."""


class NotLegal(SymcaError):
    """A configuration that fails the legality check of an encoding."""


class InfeasibleConstraint(SymcaError):
    """A constraint demands an output outside the family's allowed set."""


class OutOfHypothesis(SymcaError):
    """Construction parameters violate the proposition's hypotheses."""

    def __init__(self, condition: str):
        super().__init__(f"hypothesis violated: {condition}")
        self.condition = condition


class ConstructionError(SymcaError):
    """A constructed simulation broke down (bad template or key)."""
