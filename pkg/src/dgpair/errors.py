"""Exception types shared across the package."""


class DGPairError(Exception):
    """Base class for all dgpair errors."""


# geometry
class TooFewMatches(DGPairError):
    pass


class DegenerateConfiguration(DGPairError):
    pass


class FitFailed(DGPairError):
    pass


class SingularTransform(DGPairError):
    pass


# rasterize
class EmptyImage(DGPairError):
    pass


class SubsetViolation(DGPairError):
    pass


class ShapeMismatch(DGPairError):
    pass


# match / manifest file IO
class ParseError(DGPairError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = f"{path or '<stream>'}:{line}" if line is not None else str(path or "<stream>")
        super().__init__(f"{where}: {message}")


class VersionMismatch(DGPairError):
    pass


class InvalidParams(DGPairError):
    pass


# data curation
class InvalidAugmentation(DGPairError):
    pass


class UnknownScene(DGPairError):
    pass


class SceneOverlap(DGPairError):
    pass


class BadDimensions(DGPairError):
    pass


# metrics
class DegenerateLabels(DGPairError):
    pass


# scene graph
class DuplicateEdge(DGPairError):
    pass


class MissingProbability(DGPairError):
    pass


class MissingMatches(DGPairError):
    pass


# model / training
class EmptyDataset(DGPairError):
    pass


class DivergedLoss(DGPairError):
    def __init__(self, message, batch_index=None):
        self.batch_index = batch_index
        super().__init__(message)


class ChannelConfigMismatch(DGPairError):
    pass
