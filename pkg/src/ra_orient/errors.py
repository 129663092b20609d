"""Exception types shared across the package."""


class DegenerateGeometryError(ValueError):
    """A user, antenna, or cluster pair is coincident (zero distance)."""


class RankDeficiencyError(RuntimeError):
    """A matrix that must be invertible is (numerically) rank deficient.

    ``user_indices`` identifies the users implicated in the deficiency,
    e.g. near-collinear estimated channels.
    """

    def __init__(self, message, user_indices=()):
        super().__init__(message)
        self.user_indices = tuple(int(i) for i in user_indices)


class StepTooLargeError(RuntimeError):
    """A retraction step produced a (near-)zero vector; the caller should backtrack."""
