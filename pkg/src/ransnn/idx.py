"""IDX-format dataset ingestion and batch assembly.

The IDX container (used by the MNIST-family downloads) is: two zero bytes,
a dtype code byte, a dimension-count byte, that many big-endian u32 extents,
then the raw payload. Only unsigned-byte payloads (code 0x08) are supported;
a gzip wrapper is detected by its 0x1f 0x8b prefix and unwrapped
transparently.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .numerics import Rng, SHUFFLE_STREAM


class IdxError(ValueError):
    """Base for malformed or unsupported IDX input."""


class IdxFormatError(IdxError):
    """Header bytes do not form a valid IDX header."""


class IdxUnsupportedDtypeError(IdxError):
    """Valid IDX dtype code, but not one this loader handles."""


class IdxLengthError(IdxError):
    """Payload length disagrees with the header's extents."""


class DatasetError(ValueError):
    """Images/labels that do not assemble into a coherent dataset."""


IDX_U8 = 0x08
# Valid IDX dtype codes; everything except u8 is rejected as unsupported.
_IDX_DTYPE_CODES = {0x08: "u8", 0x09: "i8", 0x0B: "i16", 0x0C: "i32",
                    0x0D: "f32", 0x0E: "f64"}
_GZIP_MAGIC = b"\x1f\x8b"


@dataclass
class IdxTensor:
    """A decoded IDX tensor: dtype code, extents, and the payload array."""

    dtype_code: int
    dims: tuple[int, ...]
    data: np.ndarray  # shaped to dims, uint8

    def to_bytes(self) -> bytes:
        """Re-serialize to the exact IDX byte layout."""
        header = struct.pack(">BBBB", 0, 0, self.dtype_code, len(self.dims))
        header += b"".join(struct.pack(">I", d) for d in self.dims)
        return header + self.data.astype(np.uint8).tobytes()


def parse_idx(data: bytes, gz: bool | None = None) -> IdxTensor:
    """Decode IDX bytes into a tensor.

    gz=None sniffs the gzip prefix; True/False force the interpretation.
    """
    if gz is None:
        gz = data[:2] == _GZIP_MAGIC
    if gz:
        try:
            data = gzip.decompress(data)
        except (OSError, EOFError) as exc:
            raise IdxFormatError(f"bad gzip container: {exc}") from exc
    if len(data) < 4:
        raise IdxFormatError(f"IDX header needs 4 bytes, got {len(data)}")
    zero0, zero1, dtype_code, ndim = struct.unpack(">BBBB", data[:4])
    if zero0 != 0 or zero1 != 0:
        raise IdxFormatError(
            f"bad IDX magic: first two bytes must be zero, got {zero0:#04x} {zero1:#04x}")
    if dtype_code not in _IDX_DTYPE_CODES:
        raise IdxFormatError(f"unknown IDX dtype code {dtype_code:#04x}")
    if dtype_code != IDX_U8:
        raise IdxUnsupportedDtypeError(
            f"IDX dtype {_IDX_DTYPE_CODES[dtype_code]} ({dtype_code:#04x}) is not supported; "
            "only unsigned byte (0x08) payloads are handled")
    if ndim < 1:
        raise IdxFormatError("IDX dimension count must be >= 1")
    header_len = 4 + 4 * ndim
    if len(data) < header_len:
        raise IdxFormatError(
            f"IDX header truncated: need {header_len} bytes for {ndim} extents, got {len(data)}")
    dims = struct.unpack(f">{ndim}I", data[4:header_len])
    expected = 1
    for d in dims:
        expected *= d
    payload = data[header_len:]
    if len(payload) != expected:
        raise IdxLengthError(
            f"IDX payload length {len(payload)} does not match extents {dims} "
            f"(expected {expected} bytes)")
    arr = np.frombuffer(payload, dtype=np.uint8).reshape(dims)
    return IdxTensor(dtype_code=dtype_code, dims=tuple(dims), data=arr)


def read_idx(path) -> IdxTensor:
    """Read an IDX file from disk, unwrapping gzip automatically."""
    return parse_idx(Path(path).read_bytes())


def write_idx(tensor: IdxTensor, path, gz: bool = False) -> None:
    raw = tensor.to_bytes()
    Path(path).write_bytes(gzip.compress(raw) if gz else raw)


@dataclass
class LabeledDataset:
    """Flattened u8 images with integer labels.

    images is (n, pixels) uint8; labels is (n,) int64 with every label in
    [0, num_classes). Immutable by convention once loaded.
    """

    images: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __len__(self) -> int:
        return self.images.shape[0]


def load_dataset(image_path, label_path, num_classes: int) -> LabeledDataset:
    """Assemble a dataset from an IDX image file and an IDX label file.

    Images must be rank 3 ([n, rows, cols]) and are flattened row-major;
    labels must be rank 1 with the same n and values inside [0, num_classes).
    """
    images = read_idx(image_path)
    labels = read_idx(label_path)
    if len(images.dims) != 3:
        raise DatasetError(
            f"image tensor must be rank 3 [n, rows, cols], got dims {images.dims}")
    if len(labels.dims) != 1:
        raise DatasetError(f"label tensor must be rank 1, got dims {labels.dims}")
    n = images.dims[0]
    if labels.dims[0] != n:
        raise DatasetError(
            f"image/label count mismatch: {n} images vs {labels.dims[0]} labels")
    lab = labels.data.astype(np.int64)
    if n and (lab.min() < 0 or lab.max() >= num_classes):
        raise DatasetError(
            f"labels must lie in [0, {num_classes}), found range "
            f"[{lab.min()}, {lab.max()}]")
    flat = images.data.reshape(n, -1)
    return LabeledDataset(images=flat, labels=lab, num_classes=int(num_classes))


@dataclass
class BatchIterator:
    """Fixed-size batches over a seeded sample selection.

    order holds the selected dataset indices (a prefix of a seeded
    permutation); iterating yields one index array per batch. Every selected
    sample appears in exactly one batch and any trailing partial batch was
    dropped at construction.
    """

    batch_size: int
    order: np.ndarray
    num_batches: int = field(init=False)

    def __post_init__(self):
        self.num_batches = len(self.order) // self.batch_size

    def __len__(self) -> int:
        return self.num_batches

    def __iter__(self):
        for b in range(self.num_batches):
            yield self.order[b * self.batch_size:(b + 1) * self.batch_size]


def make_batches(ds: LabeledDataset, batch_size: int, num_batches: int | None,
                 seed: int) -> BatchIterator:
    """Select num_batches full batches from a seeded shuffle of the dataset.

    The permutation is deterministic in the seed, so the same (dataset,
    seed) always yields the same batch composition. num_batches=None takes
    as many full batches as the dataset allows.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    n = len(ds)
    if num_batches is None:
        num_batches = n // batch_size
    if num_batches < 0:
        raise ValueError(f"num_batches must be >= 0, got {num_batches}")
    needed = batch_size * num_batches
    if n < needed:
        raise ValueError(
            f"dataset has {n} samples but {num_batches} batches of "
            f"{batch_size} need {needed}")
    perm = Rng(seed, SHUFFLE_STREAM).permutation(n)
    return BatchIterator(batch_size=batch_size, order=perm[:needed])


def one_hot(label: int, num_classes: int) -> np.ndarray:
    if not 0 <= label < num_classes:
        raise ValueError(f"label {label} out of range [0, {num_classes})")
    vec = np.zeros(num_classes)
    vec[label] = 1.0
    return vec
