"""Minimal dense f32 tensor kernels with centralized allocation accounting.

All kernels are pure functions over immutable inputs. Every Tensor buffer is
registered with the process-wide AllocationMeter so that peak live bytes can
stand in for peak device memory in benchmarks.
"""

from __future__ import annotations

import threading
import weakref

import numpy as np
from scipy.special import erf


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class AllocationMeter:
    """Thread-safe live/peak byte counters for tensor buffers.

    peak_bytes is monotone non-decreasing between reset_peak() calls.
    """

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._live = 0
        self._peak = 0

    @property
    def live_bytes(self) -> int:
        with self._lock:
            return self._live

    @property
    def peak_bytes(self) -> int:
        with self._lock:
            return self._peak

    def allocate(self, nbytes: int) -> None:
        with self._lock:
            self._live += nbytes
            if self._live > self._peak:
                self._peak = self._live

    def release(self, nbytes: int) -> None:
        with self._lock:
            self._live -= nbytes

    def reset_peak(self) -> None:
        """Collapse the high-water mark to the current live total."""
        with self._lock:
            self._peak = self._live


# Process-wide meter; bench resets its peak per measurement window.
METER = AllocationMeter()


class Tensor:
    """Row-major f32 tensor backed by a C-contiguous numpy buffer.

    Scalars are stored with shape (1,). Buffer bytes are charged to the
    central meter on construction and credited back when the Tensor is
    garbage collected.
    """

    __slots__ = ("data", "_finalizer", "__weakref__")

    def __init__(self, values) -> None:
        arr = np.ascontiguousarray(values, dtype=np.float32)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        if arr.size == 0:
            raise ShapeError(f"tensor dimensions must be >= 1, got shape {arr.shape}")
        self.data = arr
        METER.allocate(arr.nbytes)
        self._finalizer = weakref.finalize(self, METER.release, arr.nbytes)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def byte_len(self) -> int:
        return self.data.nbytes

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """C = A @ B for 2-D tensors; inner dimensions must agree."""
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} x {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimension mismatch: {a.shape} x {b.shape}")
    return Tensor(a.data @ b.data)


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis, computed with max-subtraction.

    Internally evaluated in f64 (wide reductions) so the stored f32 rows are
    correctly rounded. NaN inputs propagate to NaN outputs.
    """
    wide = x.data.astype(np.float64)
    shifted = wide - np.max(wide, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return Tensor(e / np.sum(e, axis=-1, keepdims=True))


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float) -> Tensor:
    """Per-row normalization over the last axis with affine output.

    Uses the biased (population) variance.
    """
    mean = np.mean(x.data, axis=-1, keepdims=True)
    var = np.mean((x.data - mean) ** 2, axis=-1, keepdims=True)
    normed = (x.data - mean) / np.sqrt(var + eps)
    return Tensor(normed * gamma.data + beta.data)


def gelu(x: Tensor) -> Tensor:
    """Elementwise 0.5 * x * (1 + erf(x / sqrt(2))), the exact-erf form."""
    return Tensor(0.5 * x.data * (1.0 + erf(x.data / np.sqrt(2.0, dtype=np.float32))))
