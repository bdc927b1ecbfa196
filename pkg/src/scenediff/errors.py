"""Exception types shared across the package."""


class SceneDiffError(Exception):
    """Base class for all library errors."""


class SchemaError(SceneDiffError):
    """A layout document violates the interchange schema."""


class GeometryError(SceneDiffError):
    """A box or keypoint violates geometric invariants."""


class InfeasibleError(SceneDiffError):
    """Requested counts cannot be placed without degenerate boxes."""


class WindowTooLarge(SceneDiffError):
    """Window dimensions exceed the canvas."""


class DimMismatch(SceneDiffError):
    """Tensor or mask dimensions disagree with the expected shape."""


class CoverageError(SceneDiffError):
    """A canvas pixel is covered by no window."""


class StepOutOfRange(SceneDiffError):
    """Diffusion step index outside the schedule."""


class BackendError(SceneDiffError):
    """A denoiser backend failed or broke its protocol contract."""


class OverlapError(SceneDiffError):
    """Two segments claim the same key token."""
