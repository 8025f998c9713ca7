"""Exception hierarchy shared by every adpir subsystem."""


class AdpirError(Exception):
    """Base class for all adpir errors."""


class ConfigError(AdpirError, ValueError):
    pass


# PIR layer

class EmptyDatabase(AdpirError, ValueError):
    """Database is empty or its records do not share one length."""


class UnsatisfiableNoiseBudget(AdpirError):
    """No lattice configuration within the defaults meets the failure bound."""


class IndexOutOfRange(AdpirError, IndexError):
    pass


class MalformedQuery(AdpirError, ValueError):
    pass


class DecryptionFailure(AdpirError):
    """Extracted record failed its checksum (noise overflow or wrong params)."""


class StaleParams(AdpirError):
    """Query was built against a database snapshot that is no longer served."""


# LSH

class DimensionMismatch(AdpirError, ValueError):
    pass


# catalog

class RemoveUnknownAd(AdpirError, KeyError):
    def __init__(self, ad_id: bytes):
        super().__init__(ad_id)
        self.ad_id = ad_id

    def __str__(self) -> str:
        return f"unknown ad id {self.ad_id.hex()}"


class BucketOverflow(AdpirError):
    pass


class PathMissing(AdpirError, KeyError):
    def __init__(self, path: str):
        super().__init__(path)
        self.path = path

    def __str__(self) -> str:
        return f"no node at path {self.path!r}"


class EmptyTree(AdpirError):
    pass


class UnknownVersion(AdpirError):
    pass


# proxy / client

class Unauthorized(AdpirError):
    pass


class ProtocolError(AdpirError):
    """Peer sent a frame we cannot interpret."""


class EmptyStash(AdpirError):
    pass
