"""Exception types shared across the toolkit.

The CLI maps ConfigError to exit code 1 and every other FundusegError
to exit code 2.
"""


class FundusegError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(FundusegError):
    """Invalid configuration value or unsatisfiable config combination."""


class UnmappedValue(FundusegError):
    """A raw mask pixel value has no entry in the label mapping."""

    def __init__(self, value: int, source: str = ""):
        self.value = int(value)
        self.source = source
        where = f" in {source}" if source else ""
        super().__init__(f"raw pixel value {self.value} not present in label mapping{where}")


class ShapeMismatch(FundusegError):
    """Two arrays that must share a shape do not."""


class ShapeError(FundusegError):
    """A tensor does not satisfy a layer's shape requirements."""


class MissingAlpha(FundusegError):
    """A channel role used in training has no alpha weight configured."""

    def __init__(self, role):
        self.role = role
        super().__init__(f"no alpha weight configured for channel role {role!r}")


class MalformedPrediction(FundusegError):
    """Prediction channels do not sum to 1 within tolerance."""


class EmptySet(FundusegError):
    """A point set that must be non-empty is empty."""


class EmptyBoth(FundusegError):
    """Both masks of a Hausdorff pair are empty."""


class EmptyDisc(FundusegError):
    """CDR requested for an empty disc plane."""


class EmptyList(FundusegError):
    """Aggregation over an empty record list."""


class CacheMismatch(FundusegError):
    """Backward pass invoked with a cache from a different forward."""


class TooFewSamples(FundusegError):
    """Dataset too small for the requested split or fold count."""


class Diverged(FundusegError):
    """Training loss became non-finite."""
