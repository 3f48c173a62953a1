"""Exception hierarchy shared by all maxtail modules."""


class MaxTailError(ValueError):
    """Base class for every error raised by maxtail."""


class OutOfRange(MaxTailError):
    pass


class NotNormalized(MaxTailError):
    pass


class NonPositiveArgument(MaxTailError):
    pass


class EmptySet(MaxTailError):
    pass


class SetTooLarge(MaxTailError):
    pass


class SetsOverlap(MaxTailError):
    pass


class LrdModel(MaxTailError):
    """Raised when an operation needs summable tail dependence but the model is LRD."""


class InsufficientResiduals(MaxTailError):
    pass


class PathTooShort(MaxTailError):
    pass


class UndefinedRatio(MaxTailError):
    """The ratio estimate is undefined because no exceedance was observed."""


class UnboundedSpectral(MaxTailError):
    pass


class SampleTooSmall(MaxTailError):
    pass


class ConfigError(MaxTailError):
    pass
