"""Exception types shared across the simulator."""


class SimError(Exception):
    """Base class for all simulator errors."""


class ConfigError(SimError):
    """Malformed or inconsistent configuration input."""


class ShapeMismatch(SimError):
    """Operand shapes are incompatible with the requested operation."""


class NonFiniteWeight(SimError):
    """NaN or Inf encountered in a weight tensor at load/quantize time."""


class NonPositiveScale(SimError):
    """Quantization scale must be strictly positive."""


class InvalidCode(SimError):
    """Shift code outside [0, 14] (code 15 is never produced)."""


class DimensionOverflow(SimError):
    """Operand does not fit the on-chip SRAM it must be resident in."""


class AccumulatorOverflow(SimError):
    """A 32-bit PE accumulator or drain stage would overflow."""


class SramOverflow(SimError):
    """Tile scheduler produced (or cannot avoid) a tile exceeding SRAM."""


class InvariantViolation(SimError):
    """A model invariant failed during a simulation run."""


class WeightFileError(SimError):
    """Base class for weight/activation file format errors."""


class BadMagic(WeightFileError):
    """File does not start with the expected magic bytes."""


class VersionMismatch(WeightFileError):
    """File format version is not supported."""


class TruncatedFile(WeightFileError):
    """File ends before the declared payload is complete."""
