"""Exception types shared across the package."""


class InvalidArgument(ValueError):
    """An argument violates a documented precondition."""


class InvalidMesh(ValueError):
    """A mesh is degenerate or inconsistent."""


class SolverBreakdown(RuntimeError):
    """A linear or nonlinear solve could not proceed (singular or indefinite system)."""


class StepFailure(RuntimeError):
    """A time step could not be completed.

    The partially computed trajectory, when available, is attached as
    ``trajectory`` so callers can still write out what was computed.
    """

    def __init__(self, message, report=None, trajectory=None):
        super().__init__(message)
        self.report = report
        self.trajectory = trajectory
