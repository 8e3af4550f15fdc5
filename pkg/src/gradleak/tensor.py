"""Dense float64 arrays, seeded randomness and the on-disk tensor format.

Tensors are plain ``numpy.ndarray`` objects with dtype float64 and row-major
layout. Every tensor that enters the system through :func:`read_tensor` or a
generator is validated to be finite. Randomness goes through
:class:`RngHandle`, a thin wrapper around numpy's PCG64 generator, so that a
seed fully determines every experiment.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import DomainError, ShapeError, TensorFormatError

MAGIC = b"GTNSR1\n"

# Name of the PRNG backing RngHandle. Fixed and documented on purpose:
# changing it silently would break reproducibility of recorded experiments.
RNG_ALGORITHM = "pcg64"


def as_tensor(data, shape=None) -> np.ndarray:
    """Coerce ``data`` to a C-contiguous float64 array and validate it.

    Raises ShapeError when a requested ``shape`` disagrees with the element
    count and TensorFormatError when any value is NaN or infinite.
    """
    arr = np.ascontiguousarray(data, dtype=np.float64)
    if shape is not None:
        if int(np.prod(shape)) != arr.size:
            raise ShapeError(f"cannot view {arr.size} values as shape {tuple(shape)}")
        arr = arr.reshape(shape)
    if arr.size and not np.all(np.isfinite(arr)):
        raise TensorFormatError("tensor contains NaN or Inf")
    return arr


def matvec(w: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Matrix-vector product ``w @ x`` with an explicit dimension check."""
    w = np.asarray(w, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if w.ndim != 2 or x.ndim != 1 or w.shape[1] != x.shape[0]:
        raise ShapeError(f"matvec shapes {w.shape} and {x.shape} do not agree")
    return w @ x


def softmax(z: np.ndarray) -> np.ndarray:
    """Numerically stable softmax (max is subtracted before exponentiation).

    Entries of the result are positive and sum to one. Input must be finite
    and at least two entries long.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1 or z.shape[0] < 2:
        raise ShapeError("softmax expects a vector with at least two entries")
    if not np.all(np.isfinite(z)):
        raise DomainError("softmax input must be finite")
    e = np.exp(z - z.max())
    return e / e.sum()


def softmax_rows(z: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax for a 2-D batch of logit vectors."""
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def write_tensor(path, t: np.ndarray) -> None:
    """Serialize a tensor: magic, u32 ndim, u32 dims, little-endian f64 payload."""
    t = as_tensor(t)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", t.ndim))
        for d in t.shape:
            fh.write(struct.pack("<I", d))
        fh.write(t.astype("<f8", copy=False).tobytes(order="C"))


def read_tensor(path) -> np.ndarray:
    """Read a tensor written by :func:`write_tensor`; round-trips bit-exactly."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(MAGIC)] != MAGIC:
        raise TensorFormatError(f"{path}: bad magic bytes")
    off = len(MAGIC)
    if len(blob) < off + 4:
        raise TensorFormatError(f"{path}: truncated header")
    (ndim,) = struct.unpack_from("<I", blob, off)
    off += 4
    if len(blob) < off + 4 * ndim:
        raise TensorFormatError(f"{path}: truncated dimension list")
    dims = struct.unpack_from(f"<{ndim}I", blob, off)
    off += 4 * ndim
    if any(d < 1 for d in dims):
        raise TensorFormatError(f"{path}: zero-sized dimension")
    count = int(np.prod(dims)) if dims else 1
    if len(blob) - off != 8 * count:
        raise TensorFormatError(
            f"{path}: payload holds {(len(blob) - off) // 8} values, expected {count}"
        )
    data = np.frombuffer(blob, dtype="<f8", count=count, offset=off)
    arr = data.astype(np.float64).reshape(dims)
    if arr.size and not np.all(np.isfinite(arr)):
        raise TensorFormatError(f"{path}: non-finite payload")
    return arr


class RngHandle:
    """Seeded PCG64 stream with deterministic child derivation.

    Equal seeds (and equal spawn keys) give bit-identical output streams.
    ``fork()`` derives an independent child stream from the parent's spawn
    counter and ``child(i)`` derives the i-th indexed child, so parallel
    workers can be seeded stably regardless of scheduling order.
    """

    def __init__(self, seed: int, _key: tuple = ()):
        self.seed = int(seed)
        self.spawn_key = tuple(_key)
        self.algorithm = RNG_ALGORITHM
        self._seq = np.random.SeedSequence(entropy=self.seed, spawn_key=self.spawn_key)
        self._gen = np.random.Generator(np.random.PCG64(self._seq))
        self._children = 0

    def fork(self) -> "RngHandle":
        """Next sequential child stream (single-owner, never shared)."""
        child = RngHandle(self.seed, self.spawn_key + (self._children,))
        self._children += 1
        return child

    def child(self, index: int) -> "RngHandle":
        """Indexed child stream, independent of how many forks happened."""
        return RngHandle(self.seed, self.spawn_key + (int(index),))

    # Draw helpers mirror the numpy Generator API we actually use.
    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self._gen.normal(loc, scale, size)

    def laplace(self, loc=0.0, scale=1.0, size=None):
        return self._gen.laplace(loc, scale, size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size)

    def permutation(self, n):
        return self._gen.permutation(n)

    def __repr__(self):
        return f"RngHandle(seed={self.seed}, key={self.spawn_key}, algo={self.algorithm})"
