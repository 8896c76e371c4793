"""Block-partitioned vectors.

Blocks are contiguous index ranges of a flat float64 vector. Block indices are
0-based in code (``0 .. B-1``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class BlockPartition:
    """Split of ``n`` coordinates into ``B`` contiguous blocks."""

    sizes: tuple[int, ...]
    offsets: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        if not sizes:
            raise ValueError("a partition needs at least one block")
        if any(s < 1 for s in sizes):
            raise ValueError(f"block sizes must be >= 1, got {sizes}")
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "offsets", tuple(np.concatenate([[0], np.cumsum(sizes)]).tolist()))

    @classmethod
    def equal(cls, n: int, n_blocks: int) -> "BlockPartition":
        """Near-equal split; the remainder goes to the leading blocks."""
        if not 1 <= n_blocks <= n:
            raise ValueError(f"need 1 <= n_blocks <= n, got n_blocks={n_blocks}, n={n}")
        base, extra = divmod(n, n_blocks)
        return cls(tuple(base + (1 if b < extra else 0) for b in range(n_blocks)))

    @property
    def n_blocks(self) -> int:
        return len(self.sizes)

    @property
    def total(self) -> int:
        return self.offsets[-1]

    def _check(self, block: int) -> int:
        block = int(block)
        if not 0 <= block < self.n_blocks:
            raise IndexError(f"block index {block} out of range for {self.n_blocks} blocks")
        return block

    def slice(self, block: int) -> slice:
        block = self._check(block)
        return slice(self.offsets[block], self.offsets[block + 1])

    def block_of(self) -> np.ndarray:
        """Block index of every flat coordinate."""
        return np.repeat(np.arange(self.n_blocks), self.sizes)

    def mask(self, blocks: np.ndarray) -> np.ndarray:
        """Boolean ``(len(blocks), n)`` mask, row ``k`` selects block ``blocks[k]``."""
        return self.block_of()[None, :] == np.asarray(blocks)[:, None]


class BlockVector:
    """A flat vector addressable by block."""

    __slots__ = ("data", "partition")

    def __init__(self, data, partition: BlockPartition):
        data = np.asarray(data, dtype=np.float64)
        if data.ndim != 1 or data.shape[0] != partition.total:
            raise ValueError(f"data of shape {data.shape} does not match partition total {partition.total}")
        self.data = data
        self.partition = partition

    def block(self, block: int) -> np.ndarray:
        return self.data[self.partition.slice(block)]

    def set_block(self, block: int, values) -> None:
        sl = self.partition.slice(block)
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (sl.stop - sl.start,):
            raise ValueError(f"block {block} has size {sl.stop - sl.start}, got values of shape {values.shape}")
        self.data[sl] = values

    def blocks(self) -> list[np.ndarray]:
        return [self.block(b) for b in range(self.partition.n_blocks)]

    def copy(self) -> "BlockVector":
        return BlockVector(self.data.copy(), self.partition)

    def __len__(self):
        return self.data.shape[0]

    def __repr__(self):
        return f"BlockVector({self.data!r}, sizes={self.partition.sizes})"


def block_view(v: BlockVector, block: int) -> np.ndarray:
    """Coordinates of block ``block`` of ``v``."""
    return v.block(block)


def spread(v: Sequence[float] | np.ndarray, axis: int | None = None):
    """Max coordinate minus min coordinate.

    With ``axis`` given the spread is taken along that axis, e.g. ``spread(X, axis=0)``
    on an agents-by-coordinates array is the per-coordinate disagreement.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise ValueError("spread of an empty vector is undefined")
    return np.max(v, axis=axis) - np.min(v, axis=axis)
