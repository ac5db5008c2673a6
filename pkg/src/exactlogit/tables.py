"""Integer-lattice primitives: configurations, tables, moves.

Cells are addressed by 1-based coordinate tuples and laid out row-major over
the declared axes, so a table's counts are simply a C-ordered ``int64``
array.  For lifted (logistic) configurations the response layer ``i`` is the
outermost axis.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

_INT64_HEADROOM = 2**62


class ShapeError(ValueError):
    """Raised when a table or move does not match a configuration's cells."""


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=np.int64, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Configuration:
    """Nonnegative integer matrix whose columns are indexed by table cells.

    Attributes:
        matrix: ``(rows, cells)`` integer matrix.
        axes: Axis sizes; ``prod(axes) == cells``.
        weight: Optional integer row vector with ``weight @ matrix == 1``
            column-wise (homogeneity witness).
    """

    matrix: np.ndarray
    axes: tuple[int, ...]
    weight: np.ndarray | None = None

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix)
        if m.ndim != 2:
            raise ShapeError("configuration matrix must be two-dimensional")
        if not np.issubdtype(m.dtype, np.integer) and not np.all(m == np.round(m)):
            raise ValueError("configuration entries must be integers")
        m = _readonly(m)
        if (m < 0).any():
            raise ValueError("configuration entries must be nonnegative")
        axes = tuple(int(a) for a in self.axes)
        if any(a < 1 for a in axes) or math.prod(axes) != m.shape[1]:
            raise ShapeError(f"axes {axes} do not match {m.shape[1]} columns")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "axes", axes)
        if self.weight is not None:
            w = _readonly(self.weight)
            if w.shape != (m.shape[0],) or not np.all(w @ m == 1):
                raise ValueError("weight vector does not witness homogeneity")
            object.__setattr__(self, "weight", w)

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_cells(self) -> int:
        return self.matrix.shape[1]

    @property
    def is_homogeneous(self) -> bool:
        return self.weight is not None

    def position(self, cell: Sequence[int]) -> int:
        """Column position of a 1-based cell index."""
        cell = tuple(cell)
        if len(cell) != len(self.axes) or any(
            not 1 <= c <= a for c, a in zip(cell, self.axes)
        ):
            raise ShapeError(f"cell {cell} outside axes {self.axes}")
        return int(np.ravel_multi_index(tuple(c - 1 for c in cell), self.axes))

    def cell(self, position: int) -> tuple[int, ...]:
        """1-based cell index of a column position."""
        return tuple(int(c) + 1 for c in np.unravel_index(position, self.axes))

    def cells(self) -> list[tuple[int, ...]]:
        return [self.cell(p) for p in range(self.n_cells)]


@dataclass(frozen=True, eq=False)
class Table:
    """Nonnegative integer cell counts, shaped by the axes."""

    counts: np.ndarray

    def __post_init__(self) -> None:
        c = np.asarray(self.counts)
        if c.size and not np.all(c == np.round(c)):
            raise ValueError("table counts must be integers")
        c = _readonly(c)
        if (c < 0).any():
            raise ValueError("table counts must be nonnegative")
        object.__setattr__(self, "counts", c)

    @classmethod
    def from_flat(cls, values: Iterable[int], axes: Sequence[int]) -> Table:
        return cls(np.asarray(list(values), dtype=np.int64).reshape(tuple(axes)))

    @property
    def axes(self) -> tuple[int, ...]:
        return tuple(self.counts.shape)

    @property
    def flat(self) -> np.ndarray:
        return self.counts.reshape(-1)

    def key(self) -> tuple[int, ...]:
        return tuple(int(v) for v in self.flat)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Table):
            return NotImplemented
        return self.axes == other.axes and self.key() == other.key()

    def __hash__(self) -> int:
        return hash((self.axes, self.key()))

    def __repr__(self) -> str:
        return f"Table({self.counts.tolist()})"


@dataclass(frozen=True)
class Move:
    """Sparse integer vector over the cells of a configuration.

    ``cells`` holds sorted flat positions and ``deltas`` the matching nonzero
    entries.
    """

    cells: tuple[int, ...]
    deltas: tuple[int, ...]
    axes: tuple[int, ...]
    degree: int = field(init=False, compare=False)

    def __post_init__(self) -> None:
        if len(self.cells) != len(self.deltas):
            raise ShapeError("cells and deltas differ in length")
        if list(self.cells) != sorted(set(self.cells)):
            raise ValueError("move cells must be strictly increasing")
        if any(d == 0 for d in self.deltas):
            raise ValueError("sparse move entries must be nonzero")
        size = math.prod(self.axes)
        if self.cells and not 0 <= self.cells[-1] < size:
            raise ShapeError(f"move touches a cell outside axes {self.axes}")
        object.__setattr__(self, "degree", sum(d for d in self.deltas if d > 0))

    @classmethod
    def from_dense(cls, values: np.ndarray | Sequence[int], axes: Sequence[int] | None = None) -> Move:
        arr = np.asarray(values, dtype=np.int64)
        axes = tuple(axes) if axes is not None else tuple(arr.shape)
        flat = arr.reshape(-1)
        if flat.size != math.prod(axes):
            raise ShapeError(f"{flat.size} entries do not fill axes {axes}")
        nz = np.flatnonzero(flat)
        return cls(tuple(int(c) for c in nz), tuple(int(flat[c]) for c in nz), axes)

    @classmethod
    def from_cells(cls, entries: Mapping[tuple[int, ...], int], axes: Sequence[int]) -> Move:
        """Build a move from ``{1-based cell: delta}``; zero entries are dropped."""
        axes = tuple(axes)
        acc: dict[int, int] = {}
        for cell, d in entries.items():
            pos = int(np.ravel_multi_index(tuple(c - 1 for c in cell), axes))
            acc[pos] = acc.get(pos, 0) + int(d)
        items = sorted((p, d) for p, d in acc.items() if d != 0)
        return cls(tuple(p for p, _ in items), tuple(d for _, d in items), axes)

    @property
    def negative_degree(self) -> int:
        return -sum(d for d in self.deltas if d < 0)

    @property
    def is_zero(self) -> bool:
        return not self.cells

    def dense(self) -> np.ndarray:
        out = np.zeros(math.prod(self.axes), dtype=np.int64)
        out[list(self.cells)] = self.deltas
        return out.reshape(self.axes)

    def items(self) -> list[tuple[tuple[int, ...], int]]:
        """``(1-based cell, delta)`` pairs in cell order."""
        return [
            (tuple(int(c) + 1 for c in np.unravel_index(p, self.axes)), d)
            for p, d in zip(self.cells, self.deltas)
        ]

    def __neg__(self) -> Move:
        return Move(self.cells, tuple(-d for d in self.deltas), self.axes)

    def canonical(self) -> Move:
        """Sign-normalised copy: the first nonzero cell carries a positive entry."""
        if self.deltas and self.deltas[0] < 0:
            return -self
        return self


def _check_cells(A: Configuration, axes: Sequence[int]) -> None:
    if tuple(axes) != A.axes:
        raise ShapeError(f"axes {tuple(axes)} do not match configuration axes {A.axes}")


def sufficient_statistic(A: Configuration, x: Table | np.ndarray) -> np.ndarray:
    """Return ``A @ x`` as an ``int64`` vector.

    Raises:
        ShapeError: if the table's axes differ from ``A.axes``.
        OverflowError: if the product could exceed 64-bit range.
    """
    counts = x.counts if isinstance(x, Table) else np.asarray(x, dtype=np.int64)
    _check_cells(A, counts.shape)
    flat = counts.reshape(-1)
    bound = int(A.matrix.max(initial=0)) * int(np.abs(flat).sum())
    if bound >= _INT64_HEADROOM:
        raise OverflowError("sufficient statistic exceeds 64-bit range")
    return A.matrix @ flat


def is_move(A: Configuration, z: Move) -> bool:
    _check_cells(A, z.axes)
    if z.is_zero:
        return True
    cols = A.matrix[:, list(z.cells)]
    return bool(np.all(cols @ np.asarray(z.deltas, dtype=np.int64) == 0))


def apply_move(x: Table, z: Move, sign: int = 1) -> Table | None:
    """Return ``x + sign * z``, or ``None`` if any cell would go negative."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    if x.axes != z.axes:
        raise ShapeError(f"table axes {x.axes} differ from move axes {z.axes}")
    flat = x.flat.copy()
    for c, d in zip(z.cells, z.deltas):
        flat[c] += sign * d
        if flat[c] < 0:
            return None
    return Table(flat.reshape(x.axes))


# -- long CSV ---------------------------------------------------------------


def _header(n_axes: int, last: str) -> list[str]:
    return [f"axis{m + 1}" for m in range(n_axes)] + [last]


def table_to_csv(x: Table) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_header(len(x.axes), "count"))
    for pos in np.flatnonzero(x.flat):
        cell = np.unravel_index(pos, x.axes)
        w.writerow([int(c) + 1 for c in cell] + [int(x.flat[pos])])
    return buf.getvalue()


def _read_rows(text: str, last: str) -> tuple[list[str], list[list[int]]]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0][-1].strip() != last:
        raise ValueError(f"expected a header ending in '{last}'")
    return rows[0], [[int(v) for v in r] for r in rows[1:] if r]


def table_from_csv(text: str, axes: Sequence[int]) -> Table:
    header, rows = _read_rows(text, "count")
    axes = tuple(axes)
    if len(header) - 1 != len(axes):
        raise ShapeError(f"CSV has {len(header) - 1} axes, expected {len(axes)}")
    counts = np.zeros(axes, dtype=np.int64)
    for r in rows:
        counts[tuple(c - 1 for c in r[:-1])] = r[-1]
    return Table(counts)


def move_to_csv(z: Move) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_header(len(z.axes), "delta"))
    for cell, d in z.items():
        w.writerow(list(cell) + [d])
    return buf.getvalue()


def move_from_csv(text: str, axes: Sequence[int]) -> Move:
    header, rows = _read_rows(text, "delta")
    if len(header) - 1 != len(axes):
        raise ShapeError(f"CSV has {len(header) - 1} axes, expected {len(axes)}")
    return Move.from_cells({tuple(r[:-1]): r[-1] for r in rows}, axes)
