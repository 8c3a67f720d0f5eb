"""Exception types shared across the lab."""


class LabError(Exception):
    """Base class for all regretlab errors."""


class DomainError(LabError):
    """An argument is outside the operation's documented domain."""


class BudgetError(LabError):
    """Requested computation exceeds the desk-scale enumeration budget."""


class DegenerateClassError(LabError):
    """Expert class assigns zero probability to every outcome sequence."""


class ConditioningError(LabError):
    """Conditioning on a history that has zero mass."""


class UnboundedDualError(LabError):
    """Dual-form value is unbounded: a zero-probability path carries positive sup mass."""


class NoCoverError(LabError):
    """The candidate pool cannot cover the class at the requested scale."""
