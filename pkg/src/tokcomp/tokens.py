"""Dense token containers and the shape algebra shared by every other module.

Three value types:

* ``TokenGrid``     -- 2D spatial token field (h, w, d) with per-token merged
                       sizes.  Row-major everywhere so heatmaps line up with
                       image patch order.
* ``TokenSequence`` -- flat token list (n, d) with original-position
                       provenance.
* ``ComplexSequence`` -- frequency-domain twin of TokenSequence (re/im parts).

Containers are immutable after construction (arrays are copied in and marked
read-only); every operation here is a pure function returning a new value.

Serialization: the LUVC1 binary grid format and a JSON alternative for tiny
fixtures.  Byte layouts are documented in docs/formats.md.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, ShapeError

LUVC1_MAGIC = b"LUVC"
LUVC1_VERSION = 1


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class TokenGrid:
    """h x w tokens of dimension d, plus merged-token sizes.

    ``sizes[i, j]`` counts how many original tokens were merged into token
    (i, j); it is stored as float but must be integral and >= 1.  The sum of
    sizes is conserved by every merge operation.  Zero-token grids (h*w == 0)
    are allowed: they model complete elimination.
    """

    h: int
    w: int
    d: int
    data: np.ndarray = field(repr=False)
    sizes: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.h < 0 or self.w < 0 or self.d < 1:
            raise ShapeError(f"bad grid dims h={self.h} w={self.w} d={self.d}")
        try:
            data = np.asarray(self.data, dtype=np.float64).reshape(self.h, self.w, self.d)
            sizes = np.asarray(self.sizes, dtype=np.float64).reshape(self.h, self.w)
        except ValueError as e:
            raise ShapeError(f"grid data/sizes do not tile {self.h}x{self.w}x{self.d}: {e}") from e
        if self.h * self.w > 0:
            if np.any(sizes < 1) or np.any(sizes != np.round(sizes)):
                raise ShapeError("sizes must be integral and >= 1")
        object.__setattr__(self, "data", _frozen(data))
        object.__setattr__(self, "sizes", _frozen(sizes))

    @classmethod
    def from_data(cls, data: np.ndarray, sizes: np.ndarray | None = None) -> "TokenGrid":
        data = np.asarray(data, dtype=np.float64)
        if data.ndim != 3:
            raise ShapeError(f"grid data must be (h, w, d), got shape {data.shape}")
        h, w, d = data.shape
        if sizes is None:
            sizes = np.ones((h, w))
        return cls(h, w, d, data, sizes)

    @property
    def n_tokens(self) -> int:
        return self.h * self.w

    def transpose(self) -> "TokenGrid":
        return TokenGrid(self.w, self.h, self.d,
                         self.data.transpose(1, 0, 2), self.sizes.T)


@dataclass(frozen=True)
class TokenSequence:
    """n tokens of dimension d with strictly increasing original indices.

    ``positions[i]`` is token i's index in the sequence it was selected from;
    ``orig_len`` is that sequence's length, kept so concatenation can offset
    positions correctly even after pruning.
    """

    n: int
    d: int
    data: np.ndarray = field(repr=False)
    positions: np.ndarray = field(repr=False)
    orig_len: int = -1  # -1 means "defaults to n"

    def __post_init__(self):
        if self.n < 0 or self.d < 1:
            raise ShapeError(f"bad sequence dims n={self.n} d={self.d}")
        try:
            data = np.asarray(self.data, dtype=np.float64).reshape(self.n, self.d)
            positions = np.asarray(self.positions, dtype=np.int64).reshape(self.n)
        except ValueError as e:
            raise ShapeError(f"sequence data/positions do not fit n={self.n} d={self.d}: {e}") from e
        orig_len = self.orig_len if self.orig_len >= 0 else self.n
        if self.n > 0:
            if np.any(np.diff(positions) <= 0):
                raise ShapeError("positions must be strictly increasing")
            if positions[0] < 0 or positions[-1] >= orig_len:
                raise ShapeError("positions out of range for original length")
        object.__setattr__(self, "data", _frozen(data))
        object.__setattr__(self, "positions", _frozen(positions))
        object.__setattr__(self, "orig_len", orig_len)

    @classmethod
    def from_data(cls, data: np.ndarray, positions: np.ndarray | None = None,
                  orig_len: int = -1) -> "TokenSequence":
        data = np.asarray(data, dtype=np.float64)
        if data.ndim != 2:
            raise ShapeError(f"sequence data must be (n, d), got shape {data.shape}")
        n, d = data.shape
        if positions is None:
            positions = np.arange(n, dtype=np.int64)
        return cls(n, d, data, positions, orig_len)


@dataclass(frozen=True)
class ComplexSequence:
    """n frequency bins by d channels, split into real and imaginary parts."""

    n: int
    d: int
    re: np.ndarray = field(repr=False)
    im: np.ndarray = field(repr=False)

    def __post_init__(self):
        re = np.asarray(self.re, dtype=np.float64).reshape(self.n, self.d)
        im = np.asarray(self.im, dtype=np.float64).reshape(self.n, self.d)
        object.__setattr__(self, "re", _frozen(re))
        object.__setattr__(self, "im", _frozen(im))

    @classmethod
    def from_complex(cls, z: np.ndarray) -> "ComplexSequence":
        z = np.asarray(z, dtype=np.complex128)
        if z.ndim != 2:
            raise ShapeError(f"complex data must be (n, d), got shape {z.shape}")
        return cls(z.shape[0], z.shape[1], z.real, z.imag)

    def as_complex(self) -> np.ndarray:
        return self.re + 1j * self.im


def grid_from_sequence(seq: TokenSequence, h: int, w: int) -> TokenGrid:
    """Row-major reshape of a sequence into an h x w grid, sizes all one."""
    if seq.n != h * w:
        raise ShapeError(f"cannot reshape {seq.n} tokens into {h}x{w}")
    return TokenGrid(h, w, seq.d, seq.data.reshape(h, w, seq.d), np.ones((h, w)))


def sequence_from_grid(grid: TokenGrid) -> TokenSequence:
    """Row-major flatten; positions run 0..h*w-1.  Sizes are not carried."""
    n = grid.n_tokens
    return TokenSequence(n, grid.d, grid.data.reshape(n, grid.d),
                         np.arange(n, dtype=np.int64), n)


def concat_tokens(a: TokenSequence, b: TokenSequence) -> TokenSequence:
    """Tokens of a followed by b; b's positions shift past a's original span."""
    if a.d != b.d:
        raise ShapeError(f"feature dims differ: {a.d} vs {b.d}")
    data = np.concatenate([a.data, b.data], axis=0)
    positions = np.concatenate([a.positions, b.positions + a.orig_len])
    return TokenSequence(a.n + b.n, a.d, data, positions, a.orig_len + b.orig_len)


def split_tokens(seq: TokenSequence, count: int, first_orig_len: int) -> tuple[TokenSequence, TokenSequence]:
    """Inverse of concat_tokens: first `count` tokens vs the rest.

    ``first_orig_len`` is the original span of the first part, used to
    un-offset the second part's positions.
    """
    if not 0 <= count <= seq.n:
        raise ShapeError(f"split point {count} outside 0..{seq.n}")
    a = TokenSequence(count, seq.d, seq.data[:count], seq.positions[:count], first_orig_len)
    b = TokenSequence(seq.n - count, seq.d, seq.data[count:],
                      seq.positions[count:] - first_orig_len,
                      seq.orig_len - first_orig_len)
    return a, b


# ---------------------------------------------------------------------------
# LUVC1 binary grid format and the JSON fixture alternative.

def write_luvc1(grid: TokenGrid, path) -> None:
    """Magic 'LUVC', u8 version, u32le h/w/d, f32le data, f32le sizes."""
    with open(path, "wb") as f:
        f.write(LUVC1_MAGIC)
        f.write(struct.pack("<B", LUVC1_VERSION))
        f.write(struct.pack("<III", grid.h, grid.w, grid.d))
        f.write(grid.data.astype("<f4").tobytes())
        f.write(grid.sizes.astype("<f4").tobytes())


def read_luvc1(path) -> TokenGrid:
    with open(path, "rb") as f:
        blob = f.read()
    return parse_luvc1(blob)


def parse_luvc1(blob: bytes) -> TokenGrid:
    if len(blob) < 17:
        raise FormatError("LUVC1: truncated header")
    if blob[:4] != LUVC1_MAGIC:
        raise FormatError("LUVC1: bad magic")
    version = blob[4]
    if version != LUVC1_VERSION:
        raise FormatError(f"LUVC1: unsupported version {version}")
    h, w, d = struct.unpack_from("<III", blob, 5)
    if d < 1:
        raise FormatError("LUVC1: feature dim must be >= 1")
    expect = 17 + 4 * (h * w * d) + 4 * (h * w)
    if len(blob) != expect:
        raise FormatError(f"LUVC1: expected {expect} bytes, got {len(blob)}")
    data = np.frombuffer(blob, dtype="<f4", count=h * w * d, offset=17)
    sizes = np.frombuffer(blob, dtype="<f4", count=h * w, offset=17 + 4 * h * w * d)
    if not np.all(np.isfinite(data)) or not np.all(np.isfinite(sizes)):
        raise FormatError("LUVC1: non-finite values")
    try:
        return TokenGrid(h, w, d, data.astype(np.float64), sizes.astype(np.float64))
    except ShapeError as e:
        raise FormatError(f"LUVC1: {e}") from e


def write_grid_json(grid: TokenGrid, path) -> None:
    doc = {
        "schema": 1,
        "h": grid.h,
        "w": grid.w,
        "d": grid.d,
        "data": grid.data.reshape(-1).tolist(),
        "sizes": grid.sizes.reshape(-1).tolist(),
    }
    with open(path, "w") as f:
        json.dump(doc, f)


def read_grid_json(path) -> TokenGrid:
    with open(path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise FormatError(f"grid JSON: {e}") from e
    return _grid_from_doc(doc)


def _grid_from_doc(doc) -> TokenGrid:
    if not isinstance(doc, dict) or doc.get("schema") != 1:
        raise FormatError("grid JSON: missing schema marker")
    try:
        h, w, d = int(doc["h"]), int(doc["w"]), int(doc["d"])
        data = np.asarray(doc["data"], dtype=np.float64)
        sizes = np.asarray(doc["sizes"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"grid JSON: {e}") from e
    if data.size != h * w * d or sizes.size != h * w:
        raise FormatError("grid JSON: data/sizes length mismatch")
    try:
        return TokenGrid(h, w, d, data, sizes)
    except ShapeError as e:
        raise FormatError(f"grid JSON: {e}") from e


def load_grid(path) -> TokenGrid:
    """Dispatch on leading bytes: LUVC1 binary or JSON fixture."""
    with open(path, "rb") as f:
        head = f.read(4)
    if head == LUVC1_MAGIC:
        return read_luvc1(path)
    return read_grid_json(path)
