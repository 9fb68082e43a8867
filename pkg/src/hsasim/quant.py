"""MXINT4 weight quantization, INT8 activation quantization, and file I/O.

Weights are quantized to 4-bit mantissas sharing a 4-bit power-of-two shift
code per group of 16 output channels (one code per input column), plus a
single tensor-wise scale that absorbs all constant exponent offsets. The
dequantization semantics defined here (`dequantize_oracle`) are the referent
every hardware path in the simulator must match bit-exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadMagic,
    InvalidCode,
    NonFiniteWeight,
    NonPositiveScale,
    ShapeMismatch,
    TruncatedFile,
    VersionMismatch,
)

# Shift exponent range before the +9 code offset: codes span [0, 14].
SHIFT_MIN = -9
SHIFT_MAX = 5
CODE_OFFSET = 9

# Mantissas fill [-8, 7] by mapping the group max near the INT4 boundary:
# w / 2^(S-2) lies in (-8, 8). The 2^-2 mantissa-range factor and the 2^-9
# code offset are folded into the tensor scale so the integer datapath only
# ever sees nonnegative shifts.
MANTISSA_EXP_OFFSET = -2
FUSED_SCALE_EXP = -(CODE_OFFSET - MANTISSA_EXP_OFFSET)  # -11

WEIGHT_MAGIC = b"MXW4"
ACTIVATION_MAGIC = b"INT8"
FORMAT_VERSION = 1

_WEIGHT_HEADER = struct.Struct("<4sHIIHf")  # magic, version, rows, cols, group, scale
WEIGHT_HEADER_BYTES = _WEIGHT_HEADER.size


@dataclass(frozen=True)
class MxInt4Tensor:
    """Packed MXINT4 weight tensor.

    `rows` is the logical output-channel count; the stored arrays are padded
    so the row count is a multiple of `group_size` (padding rows hold zero
    mantissas). Element (i, j) dequantizes to
    ``mantissas[i, j] * 2**shift_codes[i // group_size, j] * tensor_scale``.
    """

    rows: int
    cols: int
    group_size: int
    mantissas: np.ndarray  # int8 [padded_rows, cols], values in [-8, 7]
    shift_codes: np.ndarray  # uint8 [padded_rows // group_size, cols], in [0, 14]
    tensor_scale: float

    def __post_init__(self) -> None:
        if self.mantissas.ndim != 2 or self.shift_codes.ndim != 2:
            raise ShapeMismatch("mantissas and shift_codes must be 2-D")
        pr, cols = self.mantissas.shape
        if cols != self.cols or pr != self.padded_rows:
            raise ShapeMismatch(
                f"mantissa array {self.mantissas.shape} does not match "
                f"[{self.padded_rows} x {self.cols}]"
            )
        if self.shift_codes.shape != (pr // self.group_size, cols):
            raise ShapeMismatch(
                f"code array {self.shift_codes.shape} does not match "
                f"[{pr // self.group_size} x {cols}]"
            )
        if self.mantissas.min(initial=0) < -8 or self.mantissas.max(initial=0) > 7:
            raise ShapeMismatch("mantissas outside [-8, 7]")
        if self.shift_codes.max(initial=0) > SHIFT_MAX + CODE_OFFSET:
            raise InvalidCode("shift code above 14")

    @property
    def padded_rows(self) -> int:
        return -(-self.rows // self.group_size) * self.group_size

    @property
    def num_groups(self) -> int:
        return self.padded_rows // self.group_size

    @property
    def packed_nbytes(self) -> int:
        """On-disk size: header + nibble-packed mantissas + nibble-packed codes."""
        return mxint4_file_bytes(self.rows, self.cols, self.group_size)


@dataclass(frozen=True)
class Int8Tensor:
    """Symmetric signed 8-bit tensor with one per-tensor scale."""

    values: np.ndarray  # int8
    scale: float

    def __post_init__(self) -> None:
        if self.values.dtype != np.int8:
            raise ShapeMismatch(f"expected int8 values, got {self.values.dtype}")
        if not self.scale > 0:
            raise NonPositiveScale(f"scale must be > 0, got {self.scale}")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape


def compute_group_shift(group_max: float) -> int:
    """Shift exponent for one weight group: clamp(floor(log2(max)), -9, +5).

    An all-zero group maps to the minimum shift -9; any code dequantizes a
    zero mantissa correctly, and -9 keeps the stored code at 0.
    """
    if group_max < 0:
        raise ValueError("group_max is a maximum of absolute values; must be >= 0")
    return int(_shift_from_group_max(np.asarray([group_max], dtype=np.float64))[0])


def _shift_from_group_max(group_max: np.ndarray) -> np.ndarray:
    # frexp gives x = m * 2^e with 0.5 <= |m| < 1, so floor(log2(x)) = e - 1
    # exactly, including at exact powers of two where log2+floor can misround.
    _, exp = np.frexp(group_max)
    shift = exp.astype(np.int64) - 1
    shift[group_max == 0] = SHIFT_MIN
    return np.clip(shift, SHIFT_MIN, SHIFT_MAX)


def quantize_mxint4(
    weights: np.ndarray,
    group_size: int = 16,
    global_scale: float = 1.0,
) -> MxInt4Tensor:
    """Quantize a real [C_out x K] matrix to MXINT4.

    Groups are `group_size` consecutive output channels; each group shares one
    shift code per input column. Mantissas are round-half-to-even of
    w / 2^(S-2), clamped to [-8, 7]; the stored code is S + 9. The returned
    tensor_scale is 2^-11 * global_scale (rounded to float32, the precision
    it is stored at on disk).
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 2:
        raise ShapeMismatch(f"expected a 2-D weight matrix, got shape {w.shape}")
    if not np.isfinite(w).all():
        raise NonFiniteWeight("weight matrix contains NaN or Inf")
    if group_size < 1:
        raise ShapeMismatch(f"group_size must be >= 1, got {group_size}")
    if not global_scale > 0:
        raise NonPositiveScale(f"global_scale must be > 0, got {global_scale}")

    rows, cols = w.shape
    padded = -(-rows // group_size) * group_size
    wp = np.zeros((padded, cols), dtype=np.float64)
    wp[:rows] = w

    grouped = wp.reshape(padded // group_size, group_size, cols)
    gmax = np.abs(grouped).max(axis=1)
    shifts = _shift_from_group_max(gmax)

    # Scaling by a power of two is exact in binary floating point, so np.rint
    # sees the true quotient and ties break half-to-even deterministically.
    step = np.ldexp(1.0, shifts + MANTISSA_EXP_OFFSET)
    mant = np.rint(grouped / step[:, None, :])
    mant = np.clip(mant, -8, 7).astype(np.int8).reshape(padded, cols)

    codes = (shifts + CODE_OFFSET).astype(np.uint8)
    tensor_scale = float(np.float32(np.ldexp(global_scale, FUSED_SCALE_EXP)))
    return MxInt4Tensor(
        rows=rows,
        cols=cols,
        group_size=group_size,
        mantissas=mant,
        shift_codes=codes,
        tensor_scale=tensor_scale,
    )


def dequantize_oracle(t: MxInt4Tensor) -> np.ndarray:
    """Reference dequantization: m * 2^code * tensor_scale, exactly.

    All factors are the 4-bit mantissa times powers of two, so the float64
    result carries no rounding. Returns the logical [rows x cols] matrix.
    """
    codes = np.repeat(t.shift_codes.astype(np.int64), t.group_size, axis=0)
    values = t.mantissas.astype(np.float64) * np.ldexp(1.0, codes) * t.tensor_scale
    return values[: t.rows]


def quantize_activation_int8(x: np.ndarray, scale: float) -> Int8Tensor:
    """Symmetric per-tensor INT8 quantization: clamp(rint(x / scale), -128, 127)."""
    if not scale > 0:
        raise NonPositiveScale(f"scale must be > 0, got {scale}")
    arr = np.asarray(x, dtype=np.float64)
    if not np.isfinite(arr).all():
        raise NonFiniteWeight("activation tensor contains NaN or Inf")
    v = np.clip(np.rint(arr / scale), -128, 127).astype(np.int8)
    return Int8Tensor(values=v, scale=float(scale))


def dequantize_int8(t: Int8Tensor) -> np.ndarray:
    return t.values.astype(np.float64) * t.scale


def mxint4_file_bytes(rows: int, cols: int, group_size: int = 16) -> int:
    """Exact on-disk footprint of an exported MXINT4 tensor."""
    padded = -(-rows // group_size) * group_size
    mant_bytes = (padded * cols + 1) // 2
    code_bytes = ((padded // group_size) * cols + 1) // 2
    return WEIGHT_HEADER_BYTES + mant_bytes + code_bytes


def _pack_nibbles(flat: np.ndarray) -> bytes:
    """Pack 4-bit values two per byte, low nibble first (even index low)."""
    nib = (flat.astype(np.int64) & 0xF).astype(np.uint8)
    if nib.size % 2:
        nib = np.concatenate([nib, np.zeros(1, dtype=np.uint8)])
    pairs = nib.reshape(-1, 2)
    return (pairs[:, 0] | (pairs[:, 1] << 4)).tobytes()


def _unpack_nibbles(raw: bytes, count: int, signed: bool) -> np.ndarray:
    data = np.frombuffer(raw, dtype=np.uint8)
    nib = np.empty(data.size * 2, dtype=np.uint8)
    nib[0::2] = data & 0xF
    nib[1::2] = data >> 4
    nib = nib[:count]
    if signed:
        out = nib.astype(np.int8)
        out[out >= 8] -= 16
        return out
    return nib


def export_weights(t: MxInt4Tensor, path: str) -> int:
    """Write a tensor to the MXW4 binary format. Returns bytes written."""
    header = _WEIGHT_HEADER.pack(
        WEIGHT_MAGIC, FORMAT_VERSION, t.rows, t.cols, t.group_size, t.tensor_scale
    )
    payload = header + _pack_nibbles(t.mantissas.ravel()) + _pack_nibbles(
        t.shift_codes.ravel()
    )
    with open(path, "wb") as fh:
        fh.write(payload)
    return len(payload)


def import_weights(path: str) -> MxInt4Tensor:
    """Read a tensor from the MXW4 binary format (lossless round trip)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < WEIGHT_HEADER_BYTES:
        raise TruncatedFile(f"{path}: shorter than the {WEIGHT_HEADER_BYTES}-byte header")
    magic, version, rows, cols, group_size, scale = _WEIGHT_HEADER.unpack(
        raw[:WEIGHT_HEADER_BYTES]
    )
    if magic != WEIGHT_MAGIC:
        raise BadMagic(f"{path}: expected {WEIGHT_MAGIC!r}, found {magic!r}")
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"{path}: unsupported version {version}")

    padded = -(-rows // group_size) * group_size
    n_mant = padded * cols
    n_codes = (padded // group_size) * cols
    mant_bytes = (n_mant + 1) // 2
    code_bytes = (n_codes + 1) // 2
    expected = WEIGHT_HEADER_BYTES + mant_bytes + code_bytes
    if len(raw) < expected:
        raise TruncatedFile(f"{path}: expected {expected} bytes, found {len(raw)}")

    mant = _unpack_nibbles(
        raw[WEIGHT_HEADER_BYTES : WEIGHT_HEADER_BYTES + mant_bytes], n_mant, signed=True
    ).reshape(padded, cols)
    codes = _unpack_nibbles(
        raw[WEIGHT_HEADER_BYTES + mant_bytes : expected], n_codes, signed=False
    ).reshape(padded // group_size, cols)
    if codes.max(initial=0) > SHIFT_MAX + CODE_OFFSET:
        raise InvalidCode(f"{path}: shift code nibble 15 encountered")
    return MxInt4Tensor(
        rows=rows,
        cols=cols,
        group_size=group_size,
        mantissas=mant,
        shift_codes=codes,
        tensor_scale=scale,
    )


_ACT_HEADER = struct.Struct("<4sHB")  # magic, version, ndim


def export_activation(t: Int8Tensor, path: str) -> int:
    """Write an INT8 tensor: magic, version, shape, f32 scale, raw bytes."""
    header = _ACT_HEADER.pack(ACTIVATION_MAGIC, FORMAT_VERSION, t.values.ndim)
    dims = struct.pack(f"<{t.values.ndim}I", *t.values.shape)
    scale = struct.pack("<f", t.scale)
    payload = header + dims + scale + t.values.tobytes()
    with open(path, "wb") as fh:
        fh.write(payload)
    return len(payload)


def import_activation(path: str) -> Int8Tensor:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _ACT_HEADER.size:
        raise TruncatedFile(f"{path}: shorter than the activation header")
    magic, version, ndim = _ACT_HEADER.unpack(raw[: _ACT_HEADER.size])
    if magic != ACTIVATION_MAGIC:
        raise BadMagic(f"{path}: expected {ACTIVATION_MAGIC!r}, found {magic!r}")
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"{path}: unsupported version {version}")
    offset = _ACT_HEADER.size
    if len(raw) < offset + 4 * ndim + 4:
        raise TruncatedFile(f"{path}: header truncated")
    shape = struct.unpack(f"<{ndim}I", raw[offset : offset + 4 * ndim])
    offset += 4 * ndim
    (scale,) = struct.unpack("<f", raw[offset : offset + 4])
    offset += 4
    count = int(np.prod(shape)) if shape else 1
    if len(raw) < offset + count:
        raise TruncatedFile(f"{path}: expected {count} value bytes")
    values = np.frombuffer(raw[offset : offset + count], dtype=np.int8).reshape(shape)
    return Int8Tensor(values=values.copy(), scale=scale)
