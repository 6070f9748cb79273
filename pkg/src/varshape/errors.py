"""Exception types raised across the package.

Everything derives from VarshapeError so callers can catch broadly; most
types also subclass ValueError since they signal bad inputs.
"""


class VarshapeError(Exception):
    """Base class for all varshape errors."""


# --- mesh / graph ingestion ---

class ParseError(VarshapeError, ValueError):
    """Malformed mesh file: bad record, index out of range, inconsistent winding."""


class UnsupportedFormat(VarshapeError, ValueError):
    """Mesh file format not recognized."""


class DegenerateFace(VarshapeError, ValueError):
    """Triangle with area below the degeneracy cutoff."""


class DegenerateEdge(VarshapeError, ValueError):
    """Segment with length below the degeneracy cutoff."""


class EmptyImage(VarshapeError, ValueError):
    """No pixel above the extrusion threshold."""


class SingularInput(VarshapeError, ValueError):
    """Matrix too rank-deficient for a unique nearest rotation."""


# --- measures ---

class EmptyVarifold(VarshapeError, ValueError):
    """Measure with no atoms (all cells degenerate, or zero mass)."""


class NonFiniteValue(VarshapeError, ValueError):
    """A test-function evaluation produced NaN or Inf."""


class NotSubmeasure(VarshapeError, ValueError):
    """Atom list of one measure does not nest inside the other's."""


class MassMismatch(VarshapeError, ValueError):
    """Inputs are not probability measures where required."""


class TooLarge(VarshapeError, ValueError):
    """Instance exceeds the size limit of an exact small-scale solver."""


# --- model ---

class BadDims(VarshapeError, ValueError):
    """Invalid layer-width specification."""


class ShapeMismatch(VarshapeError, ValueError):
    """Array shapes inconsistent with the model's layer widths."""


class LengthMismatch(VarshapeError, ValueError):
    """Paired sequences of different lengths."""


class BadLabel(VarshapeError, ValueError):
    """Class index outside the model's output range."""


class SchemaError(VarshapeError, ValueError):
    """Checkpoint or manifest contents violate the expected schema."""


class KindMismatch(VarshapeError, ValueError):
    """Dataset label kind incompatible with the requested evaluation."""


class DimensionMismatch(VarshapeError, ValueError):
    """Model input width incompatible with the data's support dimension."""


# --- binary dataset files ---

class BadMagic(VarshapeError, ValueError):
    """IDX file with an unexpected magic number."""


class TruncatedFile(VarshapeError, ValueError):
    """IDX file shorter than its header promises."""
