"""Exception hierarchy.

Every error carries a ``category`` string; the command line prints it as
``error:<category>: <message>`` so failures are machine-parsable.
"""


class DepthStyleError(Exception):
    category = "Error"


class FileNotFound(DepthStyleError, FileNotFoundError):
    category = "FileNotFound"


class UnsupportedFormat(DepthStyleError, ValueError):
    category = "UnsupportedFormat"


class CorruptFile(DepthStyleError, ValueError):
    category = "CorruptFile"


class IoError(DepthStyleError, OSError):
    category = "IoError"


class BackendUnavailable(DepthStyleError, RuntimeError):
    category = "BackendUnavailable"


class BackendFailure(DepthStyleError, RuntimeError):
    category = "BackendFailure"


class DimensionMismatch(DepthStyleError, ValueError):
    category = "DimensionMismatch"


class ShapeMismatch(DepthStyleError, ValueError):
    category = "ShapeMismatch"


class UnknownLayer(DepthStyleError, KeyError):
    category = "UnknownLayer"

    def __str__(self):
        # KeyError repr-quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class LayerMismatch(DepthStyleError, ValueError):
    category = "LayerMismatch"


class ChannelMismatch(DepthStyleError, ValueError):
    category = "ChannelMismatch"


class MalformedConfig(DepthStyleError, ValueError):
    category = "MalformedConfig"


class UnknownKey(DepthStyleError, ValueError):
    category = "UnknownKey"


class OutOfRange(DepthStyleError, ValueError):
    category = "OutOfRange"
