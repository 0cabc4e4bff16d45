"""Exception hierarchy shared across the toolkit.

Errors are split into three families so callers (and the CLI exit codes)
can distinguish misuse, bad configuration/data, and numerical failure.
"""

from __future__ import annotations


class CdmkitError(Exception):
    """Base class for all toolkit errors."""


class ShapeError(CdmkitError, ValueError):
    """An array does not match the shape a layer or operation declares."""


class DomainError(CdmkitError, ValueError):
    """A scalar argument lies outside the documented domain."""


class VariantMismatchError(CdmkitError, ValueError):
    """A noise level was supplied to (or omitted from) the wrong model variant."""


class ConfigError(CdmkitError, ValueError):
    """Invalid configuration: bad key, bad value, or inconsistent settings."""


class DivergedTrainingError(CdmkitError, RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, message: str, epoch: int, batch_index: int):
        super().__init__(message)
        self.epoch = epoch
        self.batch_index = batch_index


class SamplerDivergenceError(CdmkitError, RuntimeError):
    """A sampler state became non-finite."""

    def __init__(self, message: str, step_index: int):
        super().__init__(message)
        self.step_index = step_index


class SampleRejectionError(CdmkitError, RuntimeError):
    """The steady-state solver failed to converge for one input point."""
