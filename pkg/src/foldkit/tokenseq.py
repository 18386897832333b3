"""Token sequences with a size list, plus ``.ftsq`` binary and CSV serialization.

Binary layout (all little-endian)::

    offset  type        field
    0       4 bytes     magic b"FTSQ"
    4       u32         version (1)
    8       u32         n, token count
    12      u32         d, embedding dim
    16      u32         pinned_prefix
    20      u64 * n     sizes
    ...     f64 * n*d   tokens, row-major

CSV is one token per line.  When the first line is the header ``# --sizes``
the last column of every row is the size counter; otherwise sizes are 1.
"""
from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass
from typing import BinaryIO

import numpy as np

from .errors import ArgumentError, FormatError, ShapeError
from .linalg import as_matrix

MAGIC = b"FTSQ"
VERSION = 1
SIZES_HEADER = "# --sizes"
_HEADER = struct.Struct("<4sIIII")


@dataclass(frozen=True, eq=False)
class TokenSequence:
    """``tokens`` is n x d; ``sizes[i]`` counts the original tokens merged into row i.

    The first ``pinned_prefix`` rows (e.g. a class token) never take part in
    reduction.
    """

    tokens: np.ndarray
    sizes: np.ndarray
    pinned_prefix: int = 0

    def __post_init__(self):
        tokens = as_matrix(self.tokens, name="tokens")
        sizes = np.array(self.sizes, dtype=np.int64, copy=True).ravel()
        if sizes.shape[0] != tokens.shape[0]:
            raise ShapeError(f"{sizes.shape[0]} sizes for {tokens.shape[0]} tokens")
        if np.any(sizes < 1):
            raise ArgumentError("every size must be >= 1")
        pinned = int(self.pinned_prefix)
        if not 0 <= pinned <= tokens.shape[0]:
            raise ArgumentError(f"pinned_prefix {pinned} outside [0, {tokens.shape[0]}]")
        tokens.flags.writeable = False
        sizes.flags.writeable = False
        object.__setattr__(self, "tokens", tokens)
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "pinned_prefix", pinned)

    @property
    def n(self) -> int:
        return self.tokens.shape[0]

    @property
    def dim(self) -> int:
        return self.tokens.shape[1]

    @property
    def reducible(self) -> int:
        return self.n - self.pinned_prefix

    def __len__(self) -> int:
        return self.n

    def identical(self, other: "TokenSequence") -> bool:
        """Bit-level equality of tokens, sizes and prefix."""
        return (
            self.pinned_prefix == other.pinned_prefix
            and self.tokens.shape == other.tokens.shape
            and self.tokens.tobytes() == other.tokens.tobytes()
            and np.array_equal(self.sizes, other.sizes)
        )


def new_sequence(tokens, pinned_prefix: int = 0) -> TokenSequence:
    tokens = np.asarray(tokens, dtype=np.float64)
    n = tokens.shape[0] if tokens.ndim == 2 else 0
    return TokenSequence(tokens, np.ones(n, dtype=np.int64), pinned_prefix)


def to_bytes(seq: TokenSequence) -> bytes:
    head = _HEADER.pack(MAGIC, VERSION, seq.n, seq.dim, seq.pinned_prefix)
    return (
        head
        + seq.sizes.astype("<u8").tobytes()
        + seq.tokens.astype("<f8").tobytes(order="C")
    )


def from_bytes(data: bytes) -> TokenSequence:
    if len(data) < _HEADER.size:
        raise FormatError(
            f"truncated header at byte {len(data)}: expected {_HEADER.size} bytes, got {len(data)}"
        )
    magic, version, n, d, pinned = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r} at byte 0, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version} at byte 4, expected {VERSION}")
    expected = _HEADER.size + 8 * n + 8 * n * d
    if len(data) != expected:
        kind = "truncated payload" if len(data) < expected else "trailing bytes"
        raise FormatError(
            f"{kind} at byte {min(len(data), expected)}: expected {expected} bytes, got {len(data)}"
        )
    off = _HEADER.size
    sizes = np.frombuffer(data, dtype="<u8", count=n, offset=off).astype(np.int64)
    off += 8 * n
    tokens = np.frombuffer(data, dtype="<f8", count=n * d, offset=off).astype(np.float64)
    try:
        return TokenSequence(tokens.reshape(n, d), sizes, pinned)
    except (ArgumentError, ValueError) as exc:
        raise FormatError(f"invalid sequence contents: {exc}") from exc


def write_binary(seq: TokenSequence, sink: BinaryIO) -> None:
    sink.write(to_bytes(seq))


def read_binary(source: BinaryIO) -> TokenSequence:
    return from_bytes(source.read())


def save(seq: TokenSequence, path) -> None:
    with open(path, "wb") as fh:
        write_binary(seq, fh)


def load(path) -> TokenSequence:
    with open(path, "rb") as fh:
        return read_binary(fh)


def to_csv(seq: TokenSequence, *, sizes: bool = False) -> str:
    buf = io.StringIO()
    if sizes:
        buf.write(SIZES_HEADER + "\n")
    for row, size in zip(seq.tokens, seq.sizes):
        cells = [repr(float(v)) for v in row]
        if sizes:
            cells.append(str(int(size)))
        buf.write(",".join(cells) + "\n")
    return buf.getvalue()


def from_csv(text: str, pinned_prefix: int = 0) -> TokenSequence:
    lines = text.splitlines()
    has_sizes = bool(lines) and lines[0].strip() == SIZES_HEADER
    rows, sizes = [], []
    width = None
    for lineno, cells in enumerate(csv.reader(lines), start=1):
        if lineno == 1 and has_sizes:
            continue
        if not cells or all(not c.strip() for c in cells):
            continue
        if width is None:
            width = len(cells)
        elif len(cells) != width:
            raise FormatError(f"line {lineno}: expected {width} cells, got {len(cells)}")
        try:
            values = [float(c) for c in cells]
        except ValueError as exc:
            raise FormatError(f"line {lineno}: non-numeric cell ({exc})") from exc
        if has_sizes:
            size = values.pop()
            if size != int(size) or size < 1:
                raise FormatError(f"line {lineno}: size must be a positive integer")
            sizes.append(int(size))
        rows.append(values)
    if not rows or (has_sizes and width < 2):
        raise FormatError("no token rows found")
    tokens = np.array(rows, dtype=np.float64)
    if not has_sizes:
        sizes = [1] * len(rows)
    return TokenSequence(tokens, sizes, pinned_prefix)
