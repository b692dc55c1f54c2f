"""Labeled instance streams: schema, pull-based sources, deterministic seeding.

All randomness in the library flows through numpy's PCG64 bit generator,
seeded through ``numpy.random.SeedSequence`` so that a single 64-bit seed
fully determines every stream and every model initialisation.  PCG64 is a
permuted-congruential (LCG-family) generator with a documented, stable bit
stream, which keeps recorded draw sequences valid across platforms.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, NamedTuple, Optional, Sequence

import numpy as np


class FeatureKind(Enum):
    NUMERIC = "numeric"
    BINARY = "binary"


@dataclass(frozen=True)
class StreamSchema:
    """Shape of the instances a source emits."""

    num_features: int
    feature_kinds: tuple[FeatureKind, ...]
    num_classes: int
    class_names: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        if len(self.feature_kinds) != self.num_features:
            raise ValueError(
                f"feature_kinds has {len(self.feature_kinds)} entries for "
                f"{self.num_features} features"
            )
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.class_names is not None and len(self.class_names) != self.num_classes:
            raise ValueError("class_names length must match num_classes")

    @property
    def binary_indices(self) -> np.ndarray:
        return np.array(
            [i for i, k in enumerate(self.feature_kinds) if k is FeatureKind.BINARY],
            dtype=np.intp,
        )

    @property
    def numeric_indices(self) -> np.ndarray:
        return np.array(
            [i for i, k in enumerate(self.feature_kinds) if k is FeatureKind.NUMERIC],
            dtype=np.intp,
        )


def numeric_schema(num_features: int, num_classes: int) -> StreamSchema:
    return StreamSchema(num_features, (FeatureKind.NUMERIC,) * num_features, num_classes)


def binary_schema(num_features: int, num_classes: int) -> StreamSchema:
    return StreamSchema(num_features, (FeatureKind.BINARY,) * num_features, num_classes)


class Instance(NamedTuple):
    """One labeled stream example.  Binary features are carried as 0.0/1.0."""

    features: np.ndarray
    label: int


def seed_rng(seed: int) -> np.random.Generator:
    """Deterministic generator for ``seed``; identical seeds give identical draws."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def split_rng(seed: int, n_children: int) -> list[np.random.Generator]:
    """Spawn ``n_children`` independent, reproducible child generators."""
    children = np.random.SeedSequence(seed).spawn(n_children)
    return [np.random.Generator(np.random.PCG64(ss)) for ss in children]


class StreamSource:
    """Pull-based labeled stream.

    Subclasses implement :meth:`_generate_block`, which produces the next
    ``n`` instances as arrays; the base class handles buffering so that the
    emitted sequence is independent of how callers chunk their reads.
    Sources are single-consumer and not thread safe.
    """

    #: internal generation block size; fixed so the draw order never depends
    #: on how the stream is consumed
    BLOCK = 1024

    def __init__(self, schema: StreamSchema, length: Optional[int] = None):
        self._schema = schema
        self._length = length
        self._emitted = 0
        self._buf_X: Optional[np.ndarray] = None
        self._buf_y: Optional[np.ndarray] = None
        self._buf_pos = 0

    def schema(self) -> StreamSchema:
        return self._schema

    @property
    def length(self) -> Optional[int]:
        return self._length

    def _generate_block(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def _refill(self) -> bool:
        if self._length is not None:
            remaining = self._length - self._emitted - self._buffered()
            if remaining <= 0:
                return False
            n = min(self.BLOCK, remaining)
        else:
            n = self.BLOCK
        X, y = self._generate_block(n)
        if self._buf_X is not None and self._buf_pos < len(self._buf_y):
            self._buf_X = np.concatenate([self._buf_X[self._buf_pos:], X])
            self._buf_y = np.concatenate([self._buf_y[self._buf_pos:], y])
        else:
            self._buf_X, self._buf_y = X, y
        self._buf_pos = 0
        return True

    def _buffered(self) -> int:
        if self._buf_y is None:
            return 0
        return len(self._buf_y) - self._buf_pos

    def next(self) -> Optional[Instance]:
        """Next instance, or None once the stream is exhausted."""
        if self._buffered() == 0 and not self._refill():
            return None
        i = self._buf_pos
        self._buf_pos += 1
        self._emitted += 1
        return Instance(self._buf_X[i], int(self._buf_y[i]))

    def next_block(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Up to ``n`` instances as ``(X, y)`` arrays (fewer when exhausted)."""
        xs, ys = [], []
        got = 0
        while got < n:
            if self._buffered() == 0 and not self._refill():
                break
            take_n = min(n - got, self._buffered())
            s = slice(self._buf_pos, self._buf_pos + take_n)
            xs.append(self._buf_X[s])
            ys.append(self._buf_y[s])
            self._buf_pos += take_n
            self._emitted += take_n
            got += take_n
        if not xs:
            d = self._schema.num_features
            return np.empty((0, d)), np.empty(0, dtype=np.int64)
        return np.concatenate(xs), np.concatenate(ys)

    def __iter__(self) -> Iterator[Instance]:
        while True:
            inst = self.next()
            if inst is None:
                return
            yield inst


def take(source: StreamSource, n: int) -> list[Instance]:
    """First ``n`` instances of ``source`` (fewer if it runs out)."""
    if n < 0:
        raise ValueError("n must be >= 0")
    out = []
    for _ in range(n):
        inst = source.next()
        if inst is None:
            break
        out.append(inst)
    return out


@dataclass
class ArrayStream(StreamSource):
    """In-memory stream over fixed arrays, emitted in row order."""

    X: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    _schema_v: StreamSchema = field(repr=False)

    def __init__(self, X: np.ndarray, y: np.ndarray, schema: StreamSchema):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        if len(X) != len(y):
            raise ValueError("X and y lengths differ")
        super().__init__(schema, length=len(y))
        self.X, self.y = X, y
        self._cursor = 0

    def _generate_block(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        s = slice(self._cursor, self._cursor + n)
        self._cursor += n
        return self.X[s], self.y[s]


def validate_instance(inst: Instance, schema: StreamSchema) -> None:
    """Raise if ``inst`` does not conform to ``schema``."""
    if inst.features.shape != (schema.num_features,):
        raise ValueError(
            f"instance has {inst.features.shape} features, schema expects "
            f"{schema.num_features}"
        )
    if not 0 <= inst.label < schema.num_classes:
        raise ValueError(f"label {inst.label} outside [0, {schema.num_classes})")


def dump_csv(source: StreamSource, path, limit: Optional[int] = None) -> int:
    """Write ``source`` to CSV with header ``f0..f{d-1},label``; returns rows written."""
    d = source.schema().num_features
    written = 0
    with open(path, "w") as fh:
        fh.write(",".join([f"f{i}" for i in range(d)] + ["label"]) + "\n")
        while True:
            n = 4096 if limit is None else min(4096, limit - written)
            if n <= 0:
                break
            X, y = source.next_block(n)
            if len(y) == 0:
                break
            for row, label in zip(X, y):
                fh.write(",".join(repr(float(v)) for v in row) + f",{int(label)}\n")
            written += len(y)
    return written
