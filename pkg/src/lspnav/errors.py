"""Exception types shared across the package."""


class LspNavError(Exception):
    """Base class for all package errors."""


class InvalidPoseError(LspNavError):
    """Pose is out of bounds or on a non-free cell."""


class CorruptedObservationError(LspNavError):
    """Observation conflicts with an already-known cell."""


class InvalidSourceError(LspNavError):
    """Distance-field source is not traversable."""


class StaleFrontierError(LspNavError):
    """Frontier cells are no longer unseen in the partial map."""


class EmptyMapError(LspNavError):
    """No known free space to build a graph from."""


class NoActionError(LspNavError):
    """No subgoal available to plan over."""


class IncompleteInputError(LspNavError):
    """A required distance entry is missing."""


class DeadRobotError(LspNavError):
    """No reachable frontier and the goal is not reachable."""


class StaleDecisionError(LspNavError):
    """The decision's target is no longer reachable; caller must replan."""


class UnsupportedEnvironmentError(LspNavError):
    """Policy applied to an environment lacking the required metadata."""


class MalformedEnvironmentError(LspNavError):
    """Environment violates a structural precondition (e.g. unreachable goal)."""


class NoDataError(LspNavError):
    """Training dataset is empty."""


class ModelGraphMismatchError(LspNavError):
    """Model feature width does not match the graph's."""


class GenerationError(LspNavError):
    """Environment generator cannot satisfy its constraints."""
