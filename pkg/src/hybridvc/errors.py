"""Exception hierarchy shared across the package."""


class HybridVCError(Exception):
    """Base class for all errors raised by hybridvc."""


class ValidationError(HybridVCError):
    """Invalid argument, shape, or configuration."""


class FormatError(HybridVCError):
    """Malformed or truncated serialized data (container, checkpoint, bitstream)."""


class CodecProcessError(HybridVCError):
    """External codec invocation failed; carries captured stderr when available."""

    def __init__(self, message, stderr=None, returncode=None):
        super().__init__(message)
        self.stderr = stderr
        self.returncode = returncode


class StateError(HybridVCError):
    """Operation invoked in an invalid state (e.g. missing reference cache)."""


class TrainingError(HybridVCError):
    """Training diverged; carries the last checkpoint with a finite loss."""

    def __init__(self, message, last_checkpoint=None):
        super().__init__(message)
        self.last_checkpoint = last_checkpoint


class DomainError(HybridVCError):
    """Inputs outside the mathematical domain of an operation (e.g. disjoint RD ranges)."""


class ScaleError(HybridVCError):
    """Image too small for the requested multi-scale analysis."""
