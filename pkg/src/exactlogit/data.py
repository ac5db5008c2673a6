"""Reading and writing binomial datasets on a ``J x K`` covariate grid.

Grid files hold one ``s/n`` token per cell (successes over trials).  Grid
row ``r`` is level ``j = r`` of the first covariate and grid column ``c`` is
level ``k = c`` of the second.
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .tables import Table

BUILTIN_DATASETS = ("table1", "table2")

_TOKEN = re.compile(r"^(\d+)/(\d+)$")


class ParseError(ValueError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        where = ""
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "") + ": "
        super().__init__(where + message)
        self.line = line
        self.column = column


@dataclass(frozen=True, eq=False)
class Dataset:
    """Successes and trials, both ``(J, K)`` integer grids."""

    successes: np.ndarray
    trials: np.ndarray

    def __post_init__(self) -> None:
        s = np.array(self.successes, dtype=np.int64)
        n = np.array(self.trials, dtype=np.int64)
        if s.ndim != 2 or s.shape != n.shape:
            raise ValueError("successes and trials must be equal-shaped 2-D grids")
        if (s < 0).any() or (s > n).any():
            raise ValueError("need 0 <= successes <= trials in every cell")
        s.setflags(write=False)
        n.setflags(write=False)
        object.__setattr__(self, "successes", s)
        object.__setattr__(self, "trials", n)

    @property
    def J(self) -> int:
        return self.successes.shape[0]

    @property
    def K(self) -> int:
        return self.successes.shape[1]

    @property
    def all_trials_positive(self) -> bool:
        return bool((self.trials > 0).all())

    def to_table(self) -> Table:
        """The ``(2, J, K)`` success/failure table."""
        return Table(np.stack([self.successes, self.trials - self.successes]))

    @classmethod
    def from_table(cls, table: Table) -> Dataset:
        c = table.counts
        return cls(c[0], c[0] + c[1])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return np.array_equal(self.successes, other.successes) and np.array_equal(
            self.trials, other.trials
        )

    def transpose(self) -> Dataset:
        return Dataset(self.successes.T, self.trials.T)


def parse_grid(text: str) -> Dataset:
    """Parse whitespace- or comma-separated ``s/n`` tokens; ``#`` lines are comments."""
    rows: list[list[tuple[int, int]]] = []
    width = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = [t for t in re.split(r"[,\s]+", line) if t]
        row = []
        for col, tok in enumerate(tokens, start=1):
            m = _TOKEN.match(tok)
            if m is None:
                raise ParseError(f"malformed token {tok!r}, expected s/n", lineno, col)
            s, n = int(m.group(1)), int(m.group(2))
            if s > n:
                raise ParseError(f"successes exceed trials in {tok!r}", lineno, col)
            row.append((s, n))
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise ParseError(f"expected {width} cells, found {len(row)}", lineno)
        rows.append(row)
    if not rows:
        raise ParseError("empty grid")
    arr = np.array(rows, dtype=np.int64)
    return Dataset(arr[..., 0], arr[..., 1])


def format_grid(data: Dataset) -> str:
    lines = [
        " ".join(f"{s}/{n}" for s, n in zip(srow, nrow))
        for srow, nrow in zip(data.successes, data.trials)
    ]
    return "\n".join(lines) + "\n"


def parse_long_csv(text: str) -> Dataset:
    """Parse ``j,k,successes,trials`` rows covering every grid cell exactly once."""
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ParseError("empty file") from None
    if header != ["j", "k", "successes", "trials"]:
        raise ParseError(f"header must be j,k,successes,trials, got {','.join(header)}", 1)
    cells: dict[tuple[int, int], tuple[int, int]] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or not "".join(row).strip():
            continue
        if len(row) != 4:
            raise ParseError(f"expected 4 fields, found {len(row)}", lineno)
        try:
            j, k, s, n = (int(v) for v in row)
        except ValueError:
            raise ParseError(f"non-integer field in {row}", lineno) from None
        if j < 1 or k < 1:
            raise ParseError(f"indices are 1-based, got ({j},{k})", lineno)
        if not 0 <= s <= n:
            raise ParseError(f"need 0 <= successes <= trials, got {s}/{n}", lineno)
        if (j, k) in cells:
            raise ParseError(f"duplicate cell ({j},{k})", lineno)
        cells[(j, k)] = (s, n)
    if not cells:
        raise ParseError("no data rows")
    J = max(j for j, _ in cells)
    K = max(k for _, k in cells)
    missing = [(j, k) for j in range(1, J + 1) for k in range(1, K + 1) if (j, k) not in cells]
    if missing:
        raise ParseError(f"missing cells {missing[:5]}{'...' if len(missing) > 5 else ''}")
    s = np.zeros((J, K), dtype=np.int64)
    n = np.zeros((J, K), dtype=np.int64)
    for (j, k), (sv, nv) in cells.items():
        s[j - 1, k - 1], n[j - 1, k - 1] = sv, nv
    return Dataset(s, n)


def format_long_csv(data: Dataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["j", "k", "successes", "trials"])
    for j in range(data.J):
        for k in range(data.K):
            w.writerow([j + 1, k + 1, int(data.successes[j, k]), int(data.trials[j, k])])
    return buf.getvalue()


def load_dataset(name: str) -> Dataset:
    """One of the bundled grids: ``table1`` (heart disease) or ``table2`` (esophageal cancer)."""
    if name not in BUILTIN_DATASETS:
        raise KeyError(f"unknown dataset {name!r}; choose from {BUILTIN_DATASETS}")
    text = resources.files("exactlogit").joinpath("data").joinpath(f"{name}.txt").read_text()
    return parse_grid(text)
