"""Configurations and explicit move sets for Poisson and logistic regression
with equally spaced covariate levels.

Univariate sets live on the configuration with rows ``(1, ..., 1)`` and
``(1, 2, ..., J)``; logistic sets live on its Lawrence lifting, where every
move is stored as its ``2 x ...`` lifted array (layer 1 carries the move,
layer 2 its negation).
"""

from __future__ import annotations

import itertools
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np

from .tables import Configuration, Move, is_move


@dataclass(frozen=True, eq=False)
class MoveSet:
    """Deduplicated, sign-normalised moves for one configuration.

    Moves are stored unsigned; samplers apply them with a random sign.
    """

    moves: tuple[Move, ...]
    config: Configuration
    source_tag: str

    def __len__(self) -> int:
        return len(self.moves)

    def __iter__(self):
        return iter(self.moves)

    def __getitem__(self, i: int) -> Move:
        return self.moves[i]

    def __contains__(self, z: Move) -> bool:
        return z.canonical() in self._index

    @property
    def _index(self) -> frozenset[Move]:
        idx = self.__dict__.get("_idx")
        if idx is None:
            idx = frozenset(self.moves)
            object.__setattr__(self, "_idx", idx)
        return idx

    def filter(self, keep, source_tag: str) -> MoveSet:
        return MoveSet(tuple(z for z in self.moves if keep(z)), self.config, source_tag)


def make_moveset(
    moves: Iterable[Move], config: Configuration, source_tag: str, validate: bool = True
) -> MoveSet:
    """Canonicalise, drop zero moves and duplicates (up to sign), and sort."""
    seen: set[Move] = set()
    for z in moves:
        if z.is_zero:
            continue
        z = z.canonical()
        if validate and not is_move(config, z):
            raise ValueError(f"{source_tag}: {z.items()} is not a move")
        seen.add(z)
    ordered = sorted(seen, key=lambda z: (z.cells, z.deltas))
    return MoveSet(tuple(ordered), config, source_tag)


def _sum_move(entries: Iterable[tuple[tuple[int, ...], int]], axes: Sequence[int]) -> Move:
    acc: dict[tuple[int, ...], int] = {}
    for cell, d in entries:
        acc[cell] = acc.get(cell, 0) + d
    return Move.from_cells(acc, axes)


# -- configurations ----------------------------------------------------------


def _poisson_config(J: int) -> Configuration:
    matrix = np.vstack([np.ones(J, dtype=np.int64), np.arange(1, J + 1)])
    return Configuration(matrix, (J,), weight=np.array([1, 0]))


def univariate_poisson_config(J: int) -> Configuration:
    """The ``2 x J`` configuration of ``log mu_j = alpha + beta j``."""
    if J < 2:
        raise ValueError(f"need at least two covariate levels, got J={J}")
    return _poisson_config(J)


def lawrence_lifting(A: Configuration) -> Configuration:
    """Block matrix ``[[A, 0], [E, E]]`` with the response layer prepended."""
    n = A.n_cells
    top = np.hstack([A.matrix, np.zeros_like(A.matrix)])
    bottom = np.hstack([np.eye(n, dtype=np.int64), np.eye(n, dtype=np.int64)])
    weight = np.concatenate([np.zeros(A.n_rows, dtype=np.int64), np.ones(n, dtype=np.int64)])
    return Configuration(np.vstack([top, bottom]), (2,) + A.axes, weight=weight)


def segre_product(A: Configuration, B: Configuration) -> Configuration:
    """Configuration over ``J x K`` cells whose column ``(j, k)`` stacks ``a_j`` over ``b_k``.

    Both factors must carry a homogeneity witness; the result does too.
    """
    if A.weight is None or B.weight is None:
        raise ValueError("Segre product needs homogeneous factors")
    nA, nB = A.n_cells, B.n_cells
    top = np.repeat(A.matrix, nB, axis=1)
    bottom = np.tile(B.matrix, (1, nA))
    weight = np.concatenate([A.weight, np.zeros(B.n_rows, dtype=np.int64)])
    return Configuration(np.vstack([top, bottom]), A.axes + B.axes, weight=weight)


def segre_power(configs: Sequence[Configuration]) -> Configuration:
    out = configs[0]
    for c in configs[1:]:
        out = segre_product(out, c)
    return out


def bivariate_poisson_config(J: int, K: int) -> Configuration:
    return segre_product(_poisson_config(J), _poisson_config(K))


def bivariate_logit_config(J: int, K: int) -> Configuration:
    """Lawrence lifting of the bivariate Poisson configuration, axes ``(2, J, K)``."""
    return lawrence_lifting(bivariate_poisson_config(J, K))


def univariate_logit_config(J: int) -> Configuration:
    return lawrence_lifting(_poisson_config(J))


# -- univariate sets -------------------------------------------------------


def _poisson_tuples(J: int):
    for j1 in range(1, J + 1):
        for j2 in range(j1 + 1, J + 1):
            gap = j2 - j1
            for j3 in range(j2, J + 1 - gap):
                yield j1, j2, j3, j3 + gap


def poisson_moves(J: int) -> MoveSet:
    """All ``e_j1 + e_j4 - e_j2 - e_j3`` with ``j1 < j2 <= j3 < j4``, ``j2 - j1 = j4 - j3``."""
    A = univariate_poisson_config(J)
    moves = (
        _sum_move([((j1,), 1), ((j4,), 1), ((j2,), -1), ((j3,), -1)], (J,))
        for j1, j2, j3, j4 in _poisson_tuples(J)
    )
    return make_moveset(moves, A, f"poisson(J={J})")


def lift_move(z: Move) -> Move:
    """Layer 1 carries ``z``, layer 2 carries ``-z``."""
    n = int(np.prod(z.axes))
    cells = z.cells + tuple(n + c for c in z.cells)
    deltas = z.deltas + tuple(-d for d in z.deltas)
    return Move(cells, deltas, (2,) + z.axes)


def lifted_poisson_moves(J: int) -> MoveSet:
    """The univariate Poisson moves lifted to the logistic configuration."""
    base = poisson_moves(J)
    return make_moveset(
        (lift_move(z) for z in base), lawrence_lifting(base.config), f"lifted-poisson(J={J})"
    )


def univariate_adjacent_moves(J: int) -> MoveSet:
    """Lifted moves with unit gap, ``j2 = j1 + 1`` and ``j3 = j4 - 1``."""
    if J < 3:
        raise ValueError(f"adjacent moves need J >= 3, got J={J}")
    A = univariate_poisson_config(J)
    moves = (
        lift_move(_sum_move([((j1,), 1), ((j4,), 1), ((j2,), -1), ((j3,), -1)], (J,)))
        for j1, j2, j3, j4 in _poisson_tuples(J)
        if j2 - j1 == 1
    )
    return make_moveset(moves, lawrence_lifting(A), f"adjacent(J={J})")


# -- Segre products ----------------------------------------------------------


def _sorted_parts(z: Move) -> tuple[list[int], list[int]]:
    """Positive and negative indices of a one-axis move, with multiplicity, sorted."""
    pos: list[int] = []
    neg: list[int] = []
    for (j,), d in z.items():
        (pos if d > 0 else neg).extend([j] * abs(d))
    return pos, neg


def distribute_move(
    z: Move, coords: Sequence, other_axes: Sequence[int], axis: int = 0
) -> Move:
    """Spread a one-axis move over a multiway table.

    The h-th unit of the sorted positive part and the h-th unit of the sorted
    negative part are both placed at coordinate ``coords[h]`` of the remaining
    axes, so every margin over ``axis`` is untouched while the margin along
    ``axis`` reproduces ``z``.

    Args:
        z: Move over a single axis.
        coords: ``deg(z)`` coordinates on the remaining axes; plain ints are
            accepted when there is exactly one remaining axis.
        other_axes: Sizes of the remaining axes, in order.
        axis: Where the move's own axis sits in the output.
    """
    if len(z.axes) != 1:
        raise ValueError("distribute_move expects a move over a single axis")
    if len(coords) != z.degree:
        raise ValueError(f"need {z.degree} coordinates, got {len(coords)}")
    other_axes = tuple(other_axes)
    axes = other_axes[:axis] + z.axes + other_axes[axis:]
    pos, neg = _sorted_parts(z)
    entries = []
    for jp, jn, k in zip(pos, neg, coords):
        k = (k,) if isinstance(k, (int, np.integer)) else tuple(k)
        if len(k) != len(other_axes) or any(not 1 <= c <= a for c, a in zip(k, other_axes)):
            raise ValueError(f"coordinate {k} outside axes {other_axes}")
        entries.append((k[:axis] + (jp,) + k[axis:], 1))
        entries.append((k[:axis] + (jn,) + k[axis:], -1))
    return _sum_move(entries, axes)


def _distributions(z: Move, other_axes: tuple[int, ...], axis: int, coordinates: str = "tuples"):
    points = list(itertools.product(*(range(1, a + 1) for a in other_axes)))
    if coordinates == "tuples":
        choices = itertools.product(points, repeat=z.degree)
    elif coordinates == "multisets":
        choices = itertools.combinations_with_replacement(points, z.degree)
    else:
        raise ValueError(f"coordinates must be 'tuples' or 'multisets', got {coordinates!r}")
    for coords in choices:
        yield distribute_move(z, coords, other_axes, axis)


def _basic_moves(J: int, K: int):
    for j1, j2 in itertools.combinations(range(1, J + 1), 2):
        for k1, k2 in itertools.combinations(range(1, K + 1), 2):
            yield Move.from_cells({(j1, k1): 1, (j2, k2): 1, (j1, k2): -1, (j2, k1): -1}, (J, K))


def segre_markov_basis(
    BA: MoveSet, BB: MoveSet, J: int, K: int, coordinates: str = "tuples"
) -> MoveSet:
    """Markov basis of ``A (x) B`` from Markov bases of the factors.

    Basic ``2 x 2`` moves, plus every distribution of each ``z`` in ``BA``
    over all ``K``-coordinate tuples of length ``deg z`` (and symmetrically for
    ``BB``).  ``coordinates="multisets"`` keeps only one assignment per
    multiset of coordinates (nondecreasing tuples); the dropped assignments
    differ from kept ones by basic moves.
    """
    config = segre_product(BA.config, BB.config)
    if config.axes != (J, K):
        raise ValueError(f"factor bases have axes {config.axes}, expected {(J, K)}")

    def gen():
        yield from _basic_moves(J, K)
        for z in BA:
            yield from _distributions(z, (K,), 0, coordinates)
        for z in BB:
            yield from _distributions(z, (J,), 1, coordinates)

    return make_moveset(gen(), config, f"segre(J={J},K={K})")


def _independence_moves(axes: tuple[int, ...]):
    """Square-free degree-two moves of the complete independence model."""
    m = len(axes)
    cells = list(itertools.product(*(range(1, a + 1) for a in axes)))
    for u, v in itertools.combinations(cells, 2):
        diff = [a for a in range(m) if u[a] != v[a]]
        if len(diff) < 2:
            continue
        # swapping a nonempty proper subset of the differing coordinates
        for r in range(1, len(diff)):
            for swap in itertools.combinations(diff, r):
                u2 = tuple(v[a] if a in swap else u[a] for a in range(m))
                v2 = tuple(u[a] if a in swap else v[a] for a in range(m))
                yield Move.from_cells({u: 1, v: 1, u2: -1, v2: -1}, axes)


def multiway_segre_basis(
    bases: Sequence[MoveSet], axes: Sequence[int], coordinates: str = "tuples"
) -> MoveSet:
    """Markov basis of an m-fold Segre product from bases of the factors."""
    axes = tuple(axes)
    if len(bases) != len(axes) or len(axes) < 2:
        raise ValueError("need one basis per axis and at least two axes")
    config = segre_power([b.config for b in bases])
    if config.axes != axes:
        raise ValueError(f"factor bases have axes {config.axes}, expected {axes}")

    def gen():
        yield from _independence_moves(axes)
        for a, basis in enumerate(bases):
            rest = axes[:a] + axes[a + 1 :]
            for z in basis:
                yield from _distributions(z, rest, a, coordinates)

    return make_moveset(gen(), config, f"segre{axes}")


# -- bivariate logistic sets -------------------------------------------------


def _lifted_quadruple_moves(J: int, K: int, steps: Iterable[tuple[int, int]]):
    """``e_p1 - e_p2 - e_p3 + e_p4`` with ``p1 - p2 = p3 - p4 = d`` for each step ``d``."""
    axes = (2, J, K)
    n = J * K
    for dj, dk in steps:
        if dj == 0 and dk == 0:
            continue
        # flat layer-1 positions of cells p whose shift p + d stays on the grid
        valid = [
            (j - 1) * K + (k - 1)
            for j in range(1, J + 1)
            for k in range(1, K + 1)
            if 1 <= j + dj <= J and 1 <= k + dk <= K
        ]
        shift = dj * K + dk
        for p2, p4 in itertools.combinations(valid, 2):
            layer: dict[int, int] = {}
            for p, d in ((p2 + shift, 1), (p2, -1), (p4 + shift, -1), (p4, 1)):
                layer[p] = layer.get(p, 0) + d
            items = sorted((p, d) for p, d in layer.items() if d)
            cells = tuple(p for p, _ in items) + tuple(n + p for p, _ in items)
            deltas = tuple(d for _, d in items) + tuple(-d for _, d in items)
            yield Move(cells, deltas, axes)


def _check_bivariate(J: int, K: int) -> None:
    if J < 1 or K < 1 or J * K < 3:
        raise ValueError(f"bivariate sets need J, K >= 1 and J*K >= 3, got {(J, K)}")


def bivariate_lifted_moves(J: int, K: int) -> MoveSet:
    """All lifted ``e_p1 - e_p2 - e_p3 + e_p4`` with ``p1 - p2 = p3 - p4``.

    Coinciding cells merge into coefficients of magnitude two; quadruples that
    cancel to zero are discarded.
    """
    _check_bivariate(J, K)
    steps = [(dj, dk) for dj in range(-(J - 1), J) for dk in range(-(K - 1), K)]
    return make_moveset(
        _lifted_quadruple_moves(J, K, steps), bivariate_logit_config(J, K), f"bivariate(J={J},K={K})"
    )


UNIT_STEPS = [(dj, dk) for dj in (-1, 0, 1) for dk in (-1, 0, 1) if (dj, dk) != (0, 0)]


def bivariate_unit_moves(J: int, K: int) -> MoveSet:
    """Members of :func:`bivariate_lifted_moves` whose common difference is a unit step."""
    _check_bivariate(J, K)
    return make_moveset(
        _lifted_quadruple_moves(J, K, UNIT_STEPS), bivariate_logit_config(J, K), f"unit(J={J},K={K})"
    )


def layer_one(z: Move) -> np.ndarray:
    """The success layer of a lifted move as a dense array."""
    return z.dense()[0]
