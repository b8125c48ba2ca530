"""Fault hierarchy. Report-type failures are never raised; these are."""

from typing import Optional, Sequence


class RdFrontError(Exception):
    pass


class MediumError(RdFrontError):
    pass


class ConfigurationError(RdFrontError):
    pass


class DivergenceError(RdFrontError):
    def __init__(self, message: str, node: Optional[Sequence[int]] = None, value=None):
        super().__init__(message)
        self.node = tuple(node) if node is not None else None
        self.value = value


class GridMismatchError(RdFrontError):
    pass


class TruncationError(RdFrontError):
    pass


class ProfileError(RdFrontError):
    pass


class PreconditionError(RdFrontError):
    pass


class ExtrapolationError(RdFrontError):
    pass


class SamplingError(RdFrontError):
    pass


class PartialMapError(RdFrontError):
    pass


class PolytopeError(RdFrontError):
    pass


class SurfaceError(RdFrontError):
    pass


class SandwichError(RdFrontError):
    pass


class StorageError(RdFrontError):
    pass


def fault_chain(exc: BaseException) -> list:
    """Flatten an exception and its causes into manifest entries."""
    chain = []
    seen = set()
    current: Optional[BaseException] = exc
    while current is not None and id(current) not in seen:
        seen.add(id(current))
        chain.append({"type": type(current).__name__, "message": str(current)})
        current = current.__cause__ or current.__context__
    return chain
