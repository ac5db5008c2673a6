"""Exact fiber enumeration and move-graph connectivity on small instances.

This is the verification instrument for the connectivity results: list every
table with a given sufficient statistic, join tables that differ by a move,
and check that the resulting graph has a single component.
"""

from __future__ import annotations

import itertools
import logging
from collections import deque
from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field

import numpy as np

from .movesets import (
    MoveSet,
    bivariate_lifted_moves,
    bivariate_logit_config,
    bivariate_poisson_config,
    bivariate_unit_moves,
    poisson_moves,
    segre_markov_basis,
    univariate_adjacent_moves,
    univariate_logit_config,
    univariate_poisson_config,
)
from .tables import Configuration, Table

log = logging.getLogger(__name__)

DEFAULT_MAX_FIBER = 10**6


class FiberTooLarge(RuntimeError):
    """Raised when enumeration exceeds the node guard."""

    def __init__(self, statistic: Sequence[int], limit: int):
        self.statistic = tuple(int(v) for v in statistic)
        self.limit = limit
        super().__init__(f"fiber of statistic {self.statistic} exceeds {limit} tables")


@dataclass(frozen=True, eq=False)
class Fiber:
    config: Configuration
    statistic: tuple[int, ...]
    keys: tuple[tuple[int, ...], ...]

    def __len__(self) -> int:
        return len(self.keys)

    def __contains__(self, x: Table) -> bool:
        return x.key() in self._members

    @property
    def _members(self) -> frozenset:
        m = self.__dict__.get("_m")
        if m is None:
            m = frozenset(self.keys)
            object.__setattr__(self, "_m", m)
        return m

    @property
    def tables(self) -> list[Table]:
        return [Table.from_flat(k, self.config.axes) for k in self.keys]


def enumerate_fiber(
    A: Configuration,
    t: Sequence[int],
    bound: int | None = None,
    max_size: int = DEFAULT_MAX_FIBER,
) -> Fiber:
    """All nonnegative integer ``x`` with ``A @ x == t``, in lexicographic order.

    Depth-first over cells in canonical order.  With a homogeneity weight every
    cell contributes exactly one unit of ``weight @ t`` (the total count), so
    each row residual must stay within ``[m * min, m * max]`` of the entries of
    the cells still to be filled, ``m`` being the remaining total.  Without a
    weight an explicit ``bound`` on the total count is required.
    """
    t = np.asarray(t, dtype=np.int64)
    if t.shape != (A.n_rows,):
        raise ValueError(f"statistic has {t.size} entries, configuration has {A.n_rows} rows")
    if A.weight is not None:
        total = int(A.weight @ t)
    elif bound is None:
        raise ValueError("configuration has no homogeneity weight; pass an explicit bound")
    else:
        total = bound
    statistic = tuple(int(v) for v in t)
    if total < 0 or (t < 0).any():
        return Fiber(A, statistic, ())

    M = A.matrix.astype(np.int64)
    n = A.n_cells
    homogeneous = A.weight is not None
    # suffix extrema of each row over cells c..n-1; index n means no cells left
    lo = np.zeros((A.n_rows, n + 1), dtype=np.int64)
    hi = np.zeros((A.n_rows, n + 1), dtype=np.int64)
    for c in range(n - 1, -1, -1):
        lo[:, c] = M[:, c] if c == n - 1 else np.minimum(M[:, c], lo[:, c + 1])
        hi[:, c] = M[:, c] if c == n - 1 else np.maximum(M[:, c], hi[:, c + 1])
    cols = [M[:, c] for c in range(n)]
    out: list[tuple[int, ...]] = []
    x = [0] * n

    def feasible(res: np.ndarray, m: int, c: int) -> bool:
        if (res < 0).any():
            return False
        if c == n:
            return not res.any() and (not homogeneous or m == 0)
        if homogeneous:
            return bool((res >= m * lo[:, c]).all() and (res <= m * hi[:, c]).all())
        return bool((res[hi[:, c] == 0] == 0).all())

    def rec(c: int, res: np.ndarray, m: int) -> None:
        if c == n:
            if not res.any():
                out.append(tuple(x))
                if len(out) > max_size:
                    raise FiberTooLarge(statistic, max_size)
            return
        col = cols[c]
        pos = col > 0
        ub = m
        if pos.any():
            ub = min(ub, int((res[pos] // col[pos]).min()))
        for v in range(ub + 1):
            r2 = res - v * col
            if feasible(r2, m - v, c + 1):
                x[c] = v
                rec(c + 1, r2, m - v)
        x[c] = 0

    if feasible(t.copy(), total, 0):
        rec(0, t.copy(), total)
    return Fiber(A, statistic, tuple(out))


def components(F: Fiber, M: MoveSet | Sequence) -> list[list[tuple[int, ...]]]:
    """Connected components of the move graph on ``F``, each in BFS order.

    Search starts from the lexicographically smallest unvisited table.
    """
    members = F._members
    sparse = [(z.cells, z.deltas) for z in M]
    seen: set[tuple[int, ...]] = set()
    comps = []
    for start in sorted(F.keys):
        if start in seen:
            continue
        seen.add(start)
        comp = [start]
        queue = deque([start])
        while queue:
            x = queue.popleft()
            for cells, deltas in sparse:
                for sign in (1, -1):
                    y = list(x)
                    ok = True
                    for c, d in zip(cells, deltas):
                        y[c] += sign * d
                        if y[c] < 0:
                            ok = False
                            break
                    if not ok:
                        continue
                    y = tuple(y)
                    if y in members and y not in seen:
                        seen.add(y)
                        comp.append(y)
                        queue.append(y)
        comps.append(comp)
    return comps


def is_connected(F: Fiber, M: MoveSet | Sequence) -> bool:
    return len(F) <= 1 or len(components(F, M)) == 1


# -- statistic families ------------------------------------------------------


def _reachable_layer_one(trials: dict, axes_weights) -> set[tuple[int, ...]]:
    """All values of ``sum_c x_c * g(c)`` with ``0 <= x_c <= trials[c]``."""
    states = {tuple(0 for _ in next(iter(axes_weights.values())))}
    for c, n in trials.items():
        g = axes_weights[c]
        states = {tuple(s + v * gi for s, gi in zip(st, g)) for st in states for v in range(n + 1)}
    return states


def positive_marginal_statistics(
    J: int, K: int | None, cap: int
) -> Iterator[tuple[int, ...]]:
    """Logistic-configuration statistics with every trial count in ``1..cap``.

    ``K=None`` gives the univariate configuration.  For each trials grid, every
    achievable value of the layer-1 statistic is emitted, so each fiber is
    nonempty.
    """
    if cap < 1:
        raise ValueError("cap must be at least 1")
    if K is None:
        grid = [(j,) for j in range(1, J + 1)]
        weights = {c: (1, c[0]) for c in grid}
    else:
        grid = [(j, k) for j in range(1, J + 1) for k in range(1, K + 1)]
        weights = {c: (1, c[0], c[1]) for c in grid}
    for trials in itertools.product(range(1, cap + 1), repeat=len(grid)):
        tmap = dict(zip(grid, trials))
        for s in sorted(_reachable_layer_one(tmap, weights)):
            if K is None:
                head = (s[0], s[1])
            else:
                head = (s[0], s[1], s[0], s[2])
            yield head + trials


def _all_poisson_statistics(axes: Sequence[int], n_max: int) -> Iterator[tuple[int, ...]]:
    """Candidate statistics of a (multi)variate Poisson configuration with total ``<= n_max``."""
    for n in range(n_max + 1):
        ranges = [range(n, n * a + 1) for a in axes]
        for sums in itertools.product(*ranges):
            head: tuple[int, ...] = ()
            for s in sums:
                head += (n, s)
            yield head


@dataclass
class VerificationReport:
    theorem: str
    sizes: tuple[int, ...]
    cap: int
    moveset: str
    fibers_checked: int = 0
    tables_checked: int = 0
    largest_fiber: int = 0
    counterexample: Fiber | None = None
    counterexample_components: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.counterexample is None

    def summary(self) -> dict:
        out = {
            "theorem": self.theorem,
            "sizes": list(self.sizes),
            "cap": self.cap,
            "moveset": self.moveset,
            "fibers_checked": self.fibers_checked,
            "tables_checked": self.tables_checked,
            "largest_fiber": self.largest_fiber,
            "connected": self.ok,
        }
        if self.counterexample is not None:
            out["counterexample_statistic"] = list(self.counterexample.statistic)
            out["counterexample_components"] = len(self.counterexample_components)
        return out


THEOREMS = ("prop1", "thm1", "thm2", "thm3", "conj-b02")


def _setup(which: str, sizes: Sequence[int], cap: int):
    if which == "prop1":
        (J,) = sizes
        return univariate_poisson_config(J), poisson_moves(J), _all_poisson_statistics((J,), cap)
    if which == "thm1":
        (J,) = sizes
        return univariate_logit_config(J), univariate_adjacent_moves(J), positive_marginal_statistics(J, None, cap)
    if which == "thm2":
        J, K = sizes
        M = segre_markov_basis(poisson_moves(J), poisson_moves(K), J, K)
        return bivariate_poisson_config(J, K), M, _all_poisson_statistics((J, K), cap)
    if which in ("thm3", "conj-b02"):
        J, K = sizes
        M = bivariate_lifted_moves(J, K) if which == "thm3" else bivariate_unit_moves(J, K)
        return bivariate_logit_config(J, K), M, positive_marginal_statistics(J, K, cap)
    raise ValueError(f"unknown theorem {which!r}; choose from {THEOREMS}")


def verify_connectivity_theorem(
    which: str,
    sizes: Sequence[int],
    cap: int,
    max_fiber: int = DEFAULT_MAX_FIBER,
) -> VerificationReport:
    """Exhaustively check one connectivity statement on small instances.

    ``cap`` bounds the total count for ``prop1``/``thm2`` and the trials per
    cell for ``thm1``/``thm3``/``conj-b02``.  Stops at the first fiber whose
    move graph is disconnected.
    """
    sizes = tuple(int(s) for s in sizes)
    A, M, stats = _setup(which, sizes, cap)
    report = VerificationReport(which, sizes, cap, M.source_tag)
    for t in stats:
        F = enumerate_fiber(A, t, max_size=max_fiber)
        if not len(F):
            continue
        report.fibers_checked += 1
        report.tables_checked += len(F)
        report.largest_fiber = max(report.largest_fiber, len(F))
        if len(F) > 1:
            comps = components(F, M)
            if len(comps) > 1:
                log.warning("%s: fiber %s splits into %d components", which, F.statistic, len(comps))
                report.counterexample = F
                report.counterexample_components = comps
                break
    return report


def fiber_to_csv(F: Fiber) -> str:
    """Long CSV of every table in the fiber, tagged with a ``table`` column."""
    axes = F.config.axes
    lines = [",".join(["table"] + [f"axis{m + 1}" for m in range(len(axes))] + ["count"])]
    for t, key in enumerate(F.keys):
        for pos, v in enumerate(key):
            if v:
                cell = np.unravel_index(pos, axes)
                lines.append(",".join(str(s) for s in [t + 1, *(int(c) + 1 for c in cell), v]))
    return "\n".join(lines) + "\n"
