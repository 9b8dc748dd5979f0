"""Flat parameter storage with named segments."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from . import ops


@dataclass(frozen=True)
class Segment:
    name: str
    offset: int
    shape: tuple[int, ...]

    @property
    def size(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64))


class Layout(tuple):
    """Ordered tuple of segments; hashable so it can key caches."""

    @classmethod
    def build(cls, shapes: Iterable[tuple[str, tuple[int, ...]]]) -> "Layout":
        segs, off = [], 0
        for name, shape in shapes:
            seg = Segment(name, off, tuple(int(s) for s in shape))
            segs.append(seg)
            off += seg.size
        names = [s.name for s in segs]
        if len(set(names)) != len(names):
            raise ValueError("duplicate segment names")
        return cls(segs)

    @property
    def size(self) -> int:
        return sum(s.size for s in self)

    def __getitem__(self, key):
        if isinstance(key, str):
            for s in self:
                if s.name == key:
                    return s
            raise KeyError(key)
        return tuple.__getitem__(self, key)

    @property
    def names(self) -> list[str]:
        return [s.name for s in self]


class ParamVector:
    """Flat vector of trainable values plus its segment layout.

    ``values`` is a 1-D numpy array or a tape variable; segment access slices
    and reshapes either transparently.
    """

    __slots__ = ("values", "layout", "_leaves")

    def __init__(self, values, layout: Layout, leaves: dict | None = None) -> None:
        if np.shape(ops.value_of(values)) != (layout.size,):
            raise ValueError(
                f"value length {np.shape(ops.value_of(values))} does not match layout size {layout.size}"
            )
        self.values = values
        self.layout = layout
        # per-segment tape leaves; avoids slicing one flat variable per access
        self._leaves = leaves

    @property
    def traced(self) -> bool:
        return self._leaves is not None or not isinstance(self.values, np.ndarray)

    def __getitem__(self, name: str):
        if self._leaves is not None:
            return self._leaves[name]
        seg = self.layout[name]
        flat = self.values[seg.offset : seg.offset + seg.size]
        return flat.reshape(seg.shape)

    def __len__(self) -> int:
        return self.layout.size

    def with_values(self, values) -> "ParamVector":
        return ParamVector(values, self.layout)

    def copy(self) -> "ParamVector":
        return ParamVector(np.array(ops.value_of(self.values), dtype=np.float64), self.layout)

    def numpy(self) -> np.ndarray:
        return np.asarray(ops.value_of(self.values))

    def segment_array(self, name: str) -> np.ndarray:
        return np.asarray(ops.value_of(self[name]))

    def _compatible(self, other) -> np.ndarray:
        if isinstance(other, ParamVector):
            if other.layout != self.layout:
                raise ValueError("parameter layouts differ")
            return other.numpy()
        return other

    def __add__(self, other):
        return self.with_values(self.numpy() + self._compatible(other))

    def __sub__(self, other):
        return self.with_values(self.numpy() - self._compatible(other))

    def __mul__(self, s):
        return self.with_values(self.numpy() * self._compatible(s))

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_values(-self.numpy())

    def norm(self) -> float:
        return float(np.linalg.norm(self.numpy()))

    def zeros_like(self) -> "ParamVector":
        return self.with_values(np.zeros(self.layout.size))

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ParamVector)
            and other.layout == self.layout
            and np.array_equal(self.numpy(), other.numpy())
        )

    def __repr__(self) -> str:
        return f"ParamVector(size={self.layout.size}, segments={len(self.layout)})"
