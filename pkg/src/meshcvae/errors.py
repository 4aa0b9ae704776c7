"""Exception hierarchy shared by all modules."""


class MeshCvaeError(Exception):
    """Base class for every error raised by this package."""


class DataError(MeshCvaeError):
    """Input data is malformed or unusable (CLI exit code 2)."""


class ParseError(DataError):
    pass


class NonTriangular(ParseError):
    pass


class IndexOutOfRange(DataError, IndexError):
    pass


class DegenerateFace(DataError):
    pass


class IsolatedVertex(DataError):
    pass


class NoEdges(DataError):
    pass


class InsufficientNeighbors(DataError):
    pass


class DegenerateMeanNormal(DataError):
    pass


class ZeroVector(DataError):
    pass


class TooFewSamples(DataError):
    pass


class EmptyInput(DataError):
    pass


class LengthMismatch(DataError, ValueError):
    pass


class ShapeMismatch(DataError, ValueError):
    pass


class NonFiniteActivation(DataError, FloatingPointError):
    pass


class NonFiniteGradient(DataError, FloatingPointError):
    pass


class DomainError(DataError, ValueError):
    pass


class EmptyTrainingSet(DataError):
    pass


class EmptyNeighborhood(DataError):
    pass


class ZeroAccumulator(DataError):
    pass


class EmptyMesh(DataError):
    pass


class ConnectivityMismatch(DataError):
    pass


class ConfigMismatch(DataError):
    pass


class CorruptModel(DataError):
    pass


class VersionMismatch(CorruptModel):
    pass
