"""Exception vocabulary shared across the package."""


class BnnTunerError(Exception):
    """Base class for all package errors."""


class LengthMismatch(BnnTunerError, ValueError):
    """Bit lengths or element counts disagree."""


class NonBinaryValue(BnnTunerError, ValueError):
    """A value outside {-1, +1} was passed where binary data is required."""


class ShapeMismatch(BnnTunerError, ValueError):
    """Tensor or activation shape does not match the layer contract."""


class OddSpatialDim(BnnTunerError, ValueError):
    """Maxpool requires even spatial dimensions."""


class ConfigNotApplicable(BnnTunerError, ValueError):
    """The parallel configuration cannot be applied to this layer kind."""


class BadRange(BnnTunerError, ValueError):
    """Invalid batch-size exponent range."""


class ParseError(BnnTunerError, ValueError):
    """A file could not be parsed; message names the location."""


class LabelOutOfRange(ParseError):
    """Dataset row carries a label outside 0..num_classes-1."""


class UnsupportedVersion(BnnTunerError, ValueError):
    """File declares a format version this build does not read."""


class ValidationFailed(BnnTunerError, ValueError):
    """Model violates structural invariants; carries the violation list."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class ModelHashMismatch(BnnTunerError, ValueError):
    """A plan references a different model than the one supplied."""


class IncompleteTable(BnnTunerError, ValueError):
    """Profile table is missing cells required by the mapper."""

    def __init__(self, missing):
        self.missing = list(missing)
        shown = ", ".join(str(m) for m in self.missing[:8])
        more = "" if len(self.missing) <= 8 else f" (+{len(self.missing) - 8} more)"
        super().__init__(f"profile table missing {len(self.missing)} cells: {shown}{more}")
