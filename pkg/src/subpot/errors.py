"""Exception types shared across the library.

The CLI maps these onto exit codes: model validation failures -> 2,
numerical accuracy failures -> 3, precondition failures (wrong regime,
budget, unusable parameters) -> 4.
"""

from __future__ import annotations


class SubpotError(Exception):
    """Base class for library errors."""


class ModelValidationError(SubpotError):
    """One or more model invariants are violated.

    ``violations`` is a list of (json_pointer, message) pairs so callers can
    report exactly which field is bad.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(f"{ptr}: {msg}" for ptr, msg in self.violations)
        super().__init__(f"invalid model: {lines}")


class PreconditionError(SubpotError):
    """An operation was called outside its domain of validity."""


class SeriesRadiusError(PreconditionError):
    """The geometric truncation bound does not apply at this x (m(x) > 1/2)."""

    def __init__(self, x, m):
        self.x = float(x)
        self.m = float(m)
        super().__init__(
            f"series bound unavailable at x={x!r}: m(x)={m:.6g} > 1/2; "
            "use the Volterra solver here"
        )


class BudgetExceededError(PreconditionError):
    """Atom-sum enumeration exceeded its node budget."""

    def __init__(self, k, budget):
        self.k = int(k)
        self.budget = int(budget)
        super().__init__(
            f"atom-sum enumeration for k={k} exceeded the budget of {budget} partial sums"
        )


class ContourOrderError(PreconditionError):
    """The split order N is too small for the requested derivative."""

    def __init__(self, n_given, n_required):
        self.n_given = int(n_given)
        self.n_required = int(n_required)
        super().__init__(
            f"split order N={n_given} too small; need N >= {n_required} "
            "for an integrable derivative integrand"
        )


class IndeterminateIndexError(PreconditionError):
    """Small-jump index estimation did not stabilize within the family cap."""


class FitWindowError(PreconditionError):
    """A one-sided fit window contains a breakpoint or too few nodes."""


class AccuracyFailureError(SubpotError):
    """A computation finished but missed its accuracy target.

    Carries the achieved error estimate so it can be reported.
    """

    def __init__(self, message, achieved, target):
        self.achieved = float(achieved)
        self.target = float(target)
        super().__init__(f"{message} (achieved {achieved:.3e}, target {target:.3e})")
