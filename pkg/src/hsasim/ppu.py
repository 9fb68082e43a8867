"""Post-processing unit: fused RMSNorm, RoPE embed/update, requantization.

The normalization path never buffers a full normalized vector: the
gamma-scaled stream feeds the next layer's MAC while the inverse RMS is
accumulated in parallel from a handful of scalars and applied as a late
output scale. The RoPE unit keeps per-pair sin/cos values in an angle
memory and advances them one token at a time with the angle-sum identities,
renormalizing periodically to cap drift. All PPU arithmetic is 32-bit real;
the array datapath stays pure integer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeMismatch
from .quant import Int8Tensor

# Elements of the gamma-scaled stream buffered at once. Constant in the
# layer dimension: the norm path holds O(1) scalars, not the full vector.
NORM_STREAM_CHUNK = 64

SILU = "silu"
GELU_TANH = "gelu-tanh"
IDENTITY = "identity"
ACTIVATION_KINDS = (SILU, GELU_TANH, IDENTITY)


@dataclass(frozen=True)
class NormParams:
    """Learned RMSNorm parameters for one normalization site."""

    gamma: np.ndarray
    beta: np.ndarray | None = None
    epsilon: float = 1e-6

    def __post_init__(self) -> None:
        if self.gamma.ndim != 1:
            raise ShapeMismatch("gamma must be a vector")
        if self.beta is not None and self.beta.shape != self.gamma.shape:
            raise ShapeMismatch("beta length must match gamma")
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")

    @property
    def dim(self) -> int:
        return self.gamma.shape[0]


@dataclass
class FusedLayerScale:
    """Late-scale bundle for a matmul that consumes a fused norm.

    The effective output scale is sigma_inv * base_scale; folded_bias is the
    constant W @ beta * base_scale term, precomputed at model-load time.
    """

    base_scale: float
    sigma_inv: float = 1.0
    folded_bias: np.ndarray | None = None

    @property
    def effective_scale(self) -> float:
        return self.sigma_inv * self.base_scale


def sigma_inverse(y: np.ndarray, epsilon: float = 1e-6) -> float:
    """Inverse RMS: 1 / sqrt(mean(y^2) + eps), rounded to float32.

    The square accumulation runs in a wide accumulator (as the hardware's
    square-accumulate tree does); only the result is a 32-bit value. An
    all-zero input returns the finite 1/sqrt(eps).
    """
    arr = np.asarray(y, dtype=np.float64)
    ms = float(np.mean(np.square(arr))) + epsilon
    return float(np.float32(1.0 / np.sqrt(ms)))


def apply_gamma(y: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    """Elementwise learned scale, the only per-element norm work done in-layer."""
    yv = np.asarray(y, dtype=np.float32)
    gv = np.asarray(gamma, dtype=np.float32)
    if yv.shape[-1] != gv.shape[0]:
        raise ShapeMismatch(f"gamma length {gv.shape[0]} != dim {yv.shape[-1]}")
    return yv * gv


def fold_bias(w_next: np.ndarray, beta: np.ndarray | None, base_scale: float) -> np.ndarray | None:
    """Precompute the constant W @ beta * S term (model-load time)."""
    if beta is None or not np.any(beta):
        return None
    return (np.asarray(w_next, dtype=np.float32) @ np.asarray(beta, dtype=np.float32)
            ) * np.float32(base_scale)


def fused_rmsnorm_matmul(
    y_n: np.ndarray,
    norm: NormParams,
    w_next: np.ndarray,
    s_next: float,
    folded_bias: np.ndarray | None = None,
    trace: list | None = None,
) -> np.ndarray:
    """Stream Y*_n = Y_n * gamma into the next matmul while sigma^-1 is
    computed in parallel, then apply sigma^-1 * S as a late output scale.

    Equivalent to W_next @ RMSNorm(Y_n) * S_next but with no buffering of
    the normalized vector: only NORM_STREAM_CHUNK gamma-scaled elements live
    at once. `trace`, when given, records the pipeline stages.
    """
    y = np.asarray(y_n, dtype=np.float32)
    w = np.asarray(w_next, dtype=np.float32)
    if y.ndim != 1:
        raise ShapeMismatch("fused norm consumes one activation vector")
    dim = y.shape[0]
    if norm.dim != dim or w.shape[1] != dim:
        raise ShapeMismatch(
            f"dim mismatch: y {dim}, gamma {norm.dim}, W columns {w.shape[1]}"
        )
    if folded_bias is None:
        folded_bias = fold_bias(w, norm.beta, s_next)

    out_acc = np.zeros(w.shape[0], dtype=np.float32)
    sumsq = 0.0
    if trace is not None:
        trace.append(("norm_buffer_elems", NORM_STREAM_CHUNK))
    for start in range(0, dim, NORM_STREAM_CHUNK):
        stop = min(start + NORM_STREAM_CHUNK, dim)
        chunk = y[start:stop]
        y_star = chunk * norm.gamma[start:stop].astype(np.float32)
        out_acc += w[:, start:stop] @ y_star
        sumsq += float(np.square(chunk.astype(np.float64)).sum())
        if trace is not None:
            trace.append(("stream", start, stop))

    sigma_inv = np.float32(1.0 / np.sqrt(sumsq / dim + norm.epsilon))
    if trace is not None:
        trace.append(("sigma_ready", float(sigma_inv)))
    out = out_acc * (sigma_inv * np.float32(s_next))
    if folded_bias is not None:
        out = out + folded_bias
    if trace is not None:
        trace.append(("apply_scale",))
    return out


def unfused_rmsnorm_matmul(
    y_n: np.ndarray,
    norm: NormParams,
    w_next: np.ndarray,
    s_next: float,
) -> np.ndarray:
    """Reference path: full RMSNorm buffered, then the matmul."""
    y = np.asarray(y_n, dtype=np.float32)
    w = np.asarray(w_next, dtype=np.float32)
    sig = np.float32(sigma_inverse(y, norm.epsilon))
    x = y * sig * norm.gamma.astype(np.float32)
    if norm.beta is not None:
        x = x + norm.beta.astype(np.float32)
    return (w @ x) * np.float32(s_next)


# ── RoPE ─────────────────────────────────────────────────────────────────


@dataclass
class AngleMemory:
    """Per-sequence sin/cos state for d/2 rotation frequencies.

    Owned by a single decode loop; `update` advances token position with the
    angle-sum identities and renormalizes every `renorm_every` steps to keep
    sin^2 + cos^2 pinned to 1 under 32-bit arithmetic.
    """

    head_dim: int
    base: float
    sin_1: np.ndarray
    cos_1: np.ndarray
    sin_m: np.ndarray
    cos_m: np.ndarray
    token_index: int = 0
    renorm_every: int = 256
    _steps_since_renorm: int = field(default=0, repr=False)

    def pythagorean_residual(self) -> float:
        s = self.sin_m.astype(np.float64)
        c = self.cos_m.astype(np.float64)
        return float(np.abs(s * s + c * c - 1.0).max())


def rope_frequencies(head_dim: int, base: float = 10000.0) -> np.ndarray:
    """theta_i = base^(-2(i-1)/d) for i in 1..d/2, monotone decreasing."""
    if head_dim < 2 or head_dim % 2:
        raise ConfigError(f"head_dim must be even and >= 2, got {head_dim}")
    i = np.arange(1, head_dim // 2 + 1, dtype=np.float64)
    return base ** (-2.0 * (i - 1.0) / head_dim)


def init_angle_memory(
    head_dim: int, base: float = 10000.0, renorm_every: int = 256
) -> AngleMemory:
    """Angle memory at token 0: sin = 0, cos = 1, base angles precomputed."""
    theta = rope_frequencies(head_dim, base)
    half = head_dim // 2
    return AngleMemory(
        head_dim=head_dim,
        base=base,
        sin_1=np.sin(theta).astype(np.float32),
        cos_1=np.cos(theta).astype(np.float32),
        sin_m=np.zeros(half, dtype=np.float32),
        cos_m=np.ones(half, dtype=np.float32),
        renorm_every=renorm_every,
    )


def rope_embed(x: np.ndarray, mem: AngleMemory) -> np.ndarray:
    """Rotate adjacent pairs (x[2i], x[2i+1]) by the current token's angles.

    out_even = x_even * cos - x_odd * sin; out_odd = x_odd * cos + x_even * sin.
    Accepts any (..., head_dim) shape; angles broadcast over leading axes.
    """
    xv = np.asarray(x, dtype=np.float32)
    if xv.shape[-1] != mem.head_dim:
        raise ShapeMismatch(f"last axis {xv.shape[-1]} != head_dim {mem.head_dim}")
    x1 = xv[..., 0::2]
    x2 = xv[..., 1::2]
    out = np.empty_like(xv)
    out[..., 0::2] = x1 * mem.cos_m - x2 * mem.sin_m
    out[..., 1::2] = x2 * mem.cos_m + x1 * mem.sin_m
    return out


def rope_update(mem: AngleMemory) -> AngleMemory:
    """Advance the angle memory one token using the angle-sum identities."""
    s, c = mem.sin_m, mem.cos_m
    mem.sin_m = s * mem.cos_1 + mem.sin_1 * c
    mem.cos_m = c * mem.cos_1 - s * mem.sin_1
    mem.token_index += 1
    mem._steps_since_renorm += 1
    if mem.renorm_every and mem._steps_since_renorm >= mem.renorm_every:
        norm = np.sqrt(mem.sin_m * mem.sin_m + mem.cos_m * mem.cos_m)
        mem.sin_m = (mem.sin_m / norm).astype(np.float32)
        mem.cos_m = (mem.cos_m / norm).astype(np.float32)
        mem._steps_since_renorm = 0
    return mem


def rope_angles_direct(
    head_dim: int, positions: np.ndarray, base: float = 10000.0
) -> tuple[np.ndarray, np.ndarray]:
    """Direct per-position angle evaluation (prefill path: positions batch)."""
    theta = rope_frequencies(head_dim, base)
    ang = np.asarray(positions, dtype=np.float64)[..., None] * theta
    return np.sin(ang).astype(np.float32), np.cos(ang).astype(np.float32)


def rope_embed_at(x: np.ndarray, sin: np.ndarray, cos: np.ndarray) -> np.ndarray:
    """Pair rotation with explicitly supplied angles (prefill path)."""
    xv = np.asarray(x, dtype=np.float32)
    x1 = xv[..., 0::2]
    x2 = xv[..., 1::2]
    out = np.empty_like(xv)
    out[..., 0::2] = x1 * cos - x2 * sin
    out[..., 1::2] = x2 * cos + x1 * sin
    return out


# ── Requantization and activations ───────────────────────────────────────


def requantize(acc: np.ndarray, scale: float, out_scale: float = 1.0) -> Int8Tensor:
    """Map 32-bit accumulators back to INT8: clamp(rint(acc * scale), -128, 127).

    Symmetric (no zero point), round-half-to-even, saturating. `out_scale`
    is the dequantization scale the resulting activations carry.
    """
    a = np.asarray(acc, dtype=np.float64)
    v = np.clip(np.rint(a * scale), -128, 127).astype(np.int8)
    return Int8Tensor(values=v, scale=float(out_scale))


def activation(v: np.ndarray, kind: str) -> np.ndarray:
    """Elementwise nonlinearity in 32-bit arithmetic."""
    x = np.asarray(v, dtype=np.float32)
    if kind == IDENTITY:
        return x
    if kind == SILU:
        return x / (np.float32(1.0) + np.exp(-x, dtype=np.float32))
    if kind == GELU_TANH:
        c = np.float32(np.sqrt(2.0 / np.pi))
        inner = c * (x + np.float32(0.044715) * x * x * x)
        return np.float32(0.5) * x * (np.float32(1.0) + np.tanh(inner))
    raise ConfigError(f"unknown activation kind {kind!r}; expected {ACTIVATION_KINDS}")
