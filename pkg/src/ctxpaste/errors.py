"""Exception hierarchy for the augmentation engine."""


class CtxPasteError(Exception):
    """Base class for all engine errors."""


class ConfigError(CtxPasteError):
    """Invalid configuration value or unparsable config file."""


class ParseError(CtxPasteError):
    """Malformed annotation file (JSON/XML)."""

    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message if offset is None else f"{message} (at offset {offset})")
        self.offset = offset


class IntegrityError(CtxPasteError):
    """Internally inconsistent dataset (dangling references, bad counts, overlapping masks)."""


class UnsupportedMask(CtxPasteError):
    """Segmentation payload in a format the codec does not understand."""


class IoError(CtxPasteError):
    """Filesystem failure while reading or writing dataset artifacts."""


class EmptyDistribution(CtxPasteError):
    """Shape histogram fitted on a dataset with no ground-truth boxes."""


class NoFitError(CtxPasteError):
    """A box of the requested shape cannot be placed inside the image."""


class MissingMasks(CtxPasteError):
    """Instance database requested from a dataset without instance masks."""


class ScorerUnavailable(CtxPasteError):
    """The context scorer did not answer within the timeout or the connection died."""


class ProtocolError(CtxPasteError):
    """The scorer sent a message violating the wire protocol."""

    def __init__(self, message: str, request_id: int | None = None):
        super().__init__(message if request_id is None else f"{message} (request id {request_id})")
        self.request_id = request_id


class NotFound(CtxPasteError):
    """Lookup of an unknown image id."""
