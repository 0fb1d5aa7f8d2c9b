"""Exception types shared across the package."""


class MarsupialError(Exception):
    """Base class for errors raised by this package."""


class ScenarioFormatError(MarsupialError):
    """A scenario or experiment file violates the schema.

    The message carries the offending field path (e.g. "observations[1][3]").
    """


class InfeasibleScenarioError(MarsupialError):
    """A robot has more passengers left than valid stages to deploy them at,
    or requested constraints (overlap placement, baseline draws) cannot be met.
    """


class SizeGuardError(MarsupialError):
    """A brute-force enumeration would exceed its guarded size limit."""


class InvalidActionError(MarsupialError):
    """A planner emitted a joint action that violates feasibility rules."""


class InvariantError(MarsupialError):
    """An internal invariant failed (a bug, not a user error)."""
