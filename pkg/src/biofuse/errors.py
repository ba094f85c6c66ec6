"""Exception hierarchy shared by every biofuse module."""


class BiofuseError(Exception):
    """Base class; ``code`` is the machine-parsable tag used by the CLI."""

    code = "DATA"


class InputMissing(BiofuseError):
    code = "IO"


class FormatError(BiofuseError):
    pass


class SpectrumTooShort(BiofuseError):
    pass


class ZeroTIC(BiofuseError):
    pass


class BatchTooSmall(BiofuseError):
    pass


class GridMismatch(BiofuseError):
    pass


class EmptyTrainingSet(BiofuseError):
    pass


class NoPeaksFound(BiofuseError):
    pass


class SingleClass(BiofuseError):
    pass


class DimensionMismatch(BiofuseError):
    pass


class SampleMismatch(BiofuseError):
    pass


class KTooLarge(BiofuseError):
    pass


class TooFewSamples(BiofuseError):
    pass


class LengthMismatch(BiofuseError):
    pass


class PlanMismatch(BiofuseError):
    code = "PLAN"


class TooFewRepeats(BiofuseError):
    pass


class ConfigInvalid(BiofuseError):
    code = "CONFIG"


class DidNotConverge(BiofuseError):
    """Raised only in strict mode; trainers otherwise warn and flag the model."""

    code = "NUM"


class ConvergenceWarning(UserWarning):
    pass


class NoPeaksWarning(UserWarning):
    pass
