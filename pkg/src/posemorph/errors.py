"""Exception hierarchy. Everything raised on bad data derives from PoseMorphError."""


class PoseMorphError(Exception):
    """Base class for all errors raised by this package."""


# --- pose / topology ---------------------------------------------------------

class MissingReferenceJoints(PoseMorphError):
    """Neck or both hip joints are invisible; the pose cannot be normalized."""


class DegenerateTorso(PoseMorphError):
    """Torso length is numerically zero."""


class TopologyMismatch(PoseMorphError):
    """Inputs disagree on joint or part counts."""


class UnknownJointName(PoseMorphError):
    """A joint name does not exist in the topology."""


class InvalidConfig(PoseMorphError):
    """A configuration file or object fails validation."""


# --- search ------------------------------------------------------------------

class EmptyDataset(PoseMorphError):
    """No normalizable pose was available to index."""


class NoComparablePose(PoseMorphError):
    """No indexed pose shares enough visible joints with the query."""


# --- morphing / priors -------------------------------------------------------

class NonFiniteInput(PoseMorphError):
    """A coordinate or matrix entry is NaN or infinite."""


class EmptyCluster(PoseMorphError):
    """A prior was requested from an empty cluster."""


class MissingBackground(PoseMorphError):
    """The operation needs a prior with a background channel."""


# --- refiner / metrics -------------------------------------------------------

class EmptySampleSet(PoseMorphError):
    """Refiner training was requested with no samples."""


class ShapeMismatch(PoseMorphError):
    """Array dimensions or channel counts do not line up."""


class ClassOutOfRange(PoseMorphError):
    """A label map contains a class id outside the confusion matrix."""


class EmptyMatrix(PoseMorphError):
    """Metrics were requested from a confusion matrix with no pixels."""


class NoOverlap(PoseMorphError):
    """Prediction and ground-truth sets share no example ids."""


# --- dataset IO --------------------------------------------------------------

class MissingManifest(PoseMorphError):
    """Dataset directory has no manifest file."""


class DatasetError(PoseMorphError):
    """A dataset entry is malformed; the message names the offending file."""


class BadMaskShape(DatasetError):
    """A label image does not match its example's image dimensions."""


class NonBinaryMask(DatasetError):
    """A label image contains values outside the documented palette range."""
