"""Shared error hierarchy.

Every domain error raised by this package derives from CoviewError so
callers (CLI, HTTP service) can map failures to exit codes / status codes
in one place. Modules define their own concrete subclasses next to the
code that raises them.
"""


class CoviewError(Exception):
    """Base class for all domain errors."""


class ValidationError(CoviewError):
    """Input failed a structural or invariant check (maps to exit 1 / HTTP 422)."""


class StateError(CoviewError):
    """Operation not legal in the current state (maps to HTTP 409)."""


class RoleError(CoviewError):
    """Actor's role is not allowed to perform the operation (maps to HTTP 403)."""


class NotFoundError(CoviewError):
    """Referenced entity does not exist (maps to HTTP 404)."""
