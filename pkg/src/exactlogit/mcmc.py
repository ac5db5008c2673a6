"""Metropolis walks over fibers and Monte Carlo p-values.

The target on a fiber is the conditional null law: proportional to
``prod_c 1 / x_c!`` for Poisson tables and to ``prod_jk C(x_+jk, x_1jk)``
for success/failure tables.  On a Lawrence fiber the trial totals are fixed,
so both targets give the same acceptance ratio.

Random numbers come from numpy's ``Generator`` with the PCG64 bit generator,
seeded by :class:`ChainConfig.seed`.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Iterator
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .movesets import MoveSet, lifted_poisson_moves, univariate_adjacent_moves
from .tables import Table

POISSON = "poisson_factorial"
BINOMIAL = "binomial_coefficient"
WEIGHT_KINDS = (POISSON, BINOMIAL)

PVALUE_SLACK = 1e-9
_BLOCK = 1 << 14


@dataclass(frozen=True)
class ChainConfig:
    burn_in: int = 50_000
    samples: int = 100_000
    seed: int = 0
    thin: int = 1

    def __post_init__(self) -> None:
        if self.burn_in < 0 or self.samples < 1 or self.thin < 1:
            raise ValueError("need burn_in >= 0, samples >= 1, thin >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")

    def rng(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.seed))


def log_weight(x: Table | np.ndarray, kind: str) -> float:
    """Unnormalised log target of a table."""
    counts = np.asarray(x.counts if isinstance(x, Table) else x, dtype=float)
    if kind == POISSON:
        return float(-gammaln(counts + 1).sum())
    if kind == BINOMIAL:
        if counts.shape[0] != 2:
            raise ValueError("binomial weight needs a success/failure layer axis")
        s, f = counts[0], counts[1]
        return float((gammaln(s + f + 1) - gammaln(s + 1) - gammaln(f + 1)).sum())
    raise ValueError(f"unknown weight kind {kind!r}; choose from {WEIGHT_KINDS}")


class _LogFactorial:
    """``log n!`` from a table, falling back to ``lgamma`` past its end."""

    def __init__(self, size: int):
        self.table = gammaln(np.arange(size + 1) + 1.0).tolist()

    def __call__(self, n: int) -> float:
        return self.table[n] if n < len(self.table) else math.lgamma(n + 1)


class FiberWalk:
    """Stateful Metropolis walk; the state is a flat list of counts.

    Proposals pick a move uniformly and a sign uniformly.  Proposals that
    would create a negative count are rejected and still count as a step.
    Binomial weights only differ from Poisson weights by a function of the
    trial totals, which moves of a lifted configuration preserve, so both
    kinds share the factorial-difference acceptance ratio; for binomial
    weights the move set must therefore be a lifted one.
    """

    def __init__(self, x0: Table, moves: MoveSet, kind: str, rng: np.random.Generator):
        if not len(moves):
            raise ValueError("cannot walk with an empty move set")
        if kind not in WEIGHT_KINDS:
            raise ValueError(f"unknown weight kind {kind!r}")
        if kind == BINOMIAL and x0.axes[0] != 2:
            raise ValueError("binomial weight needs a success/failure layer axis")
        self.axes = x0.axes
        self.state = [int(v) for v in x0.flat]
        self.moves = [(z.cells, z.deltas) for z in moves]
        self.kind = kind
        self.rng = rng
        self.lfact = _LogFactorial(max(sum(self.state), 1))
        self.steps = 0
        self.accepted = 0
        self._buf_i = 0
        self._refill()

    def _refill(self) -> None:
        self._idx = self.rng.integers(0, len(self.moves), _BLOCK).tolist()
        self._sgn = self.rng.integers(0, 2, _BLOCK).tolist()
        self._logu = np.log(self.rng.random(_BLOCK)).tolist()
        self._buf_i = 0

    def step(self) -> bool:
        """Advance one step; return whether the state changed."""
        if self._buf_i == _BLOCK:
            self._refill()
        i = self._buf_i
        self._buf_i += 1
        self.steps += 1
        cells, deltas = self.moves[self._idx[i]]
        sign = 1 if self._sgn[i] else -1
        x = self.state
        lf = self.lfact
        diff = 0.0
        for c, d in zip(cells, deltas):
            v = x[c] + sign * d
            if v < 0:
                return False
            diff += lf(x[c]) - lf(v)
        if diff < 0 and self._logu[i] >= diff:
            return False
        for c, d in zip(cells, deltas):
            x[c] += sign * d
        self.accepted += 1
        return True

    def table(self) -> Table:
        return Table.from_flat(self.state, self.axes)


def metropolis_step(x: Table, moves: MoveSet, kind: str, rng: np.random.Generator) -> Table:
    """One Metropolis transition from ``x``; always returns a table in the same fiber."""
    if not len(moves):
        raise ValueError("cannot walk with an empty move set")
    z = moves[int(rng.integers(len(moves)))]
    sign = 1 if rng.integers(2) else -1
    log_u = math.log(rng.random())
    flat = x.flat.copy()
    for c, d in zip(z.cells, z.deltas):
        flat[c] += sign * d
        if flat[c] < 0:
            return x
    proposal = Table(flat.reshape(x.axes))
    if log_u < log_weight(proposal, kind) - log_weight(x, kind):
        return proposal
    return x


def iter_chain(x0: Table, moves: MoveSet, kind: str, cfg: ChainConfig) -> Iterator[tuple[Table | None, FiberWalk]]:
    """Yield ``cfg.samples`` retained states after burn-in.

    Each item is ``(table, walk)``; ``table`` is ``None`` when the state has
    not changed since the previous retained draw, so callers can reuse cached
    statistics.
    """
    walk = FiberWalk(x0, moves, kind, cfg.rng())
    for _ in range(cfg.burn_in):
        walk.step()
    changed = True
    for _ in range(cfg.samples):
        for _ in range(cfg.thin):
            changed |= walk.step()
        yield (walk.table() if changed else None), walk
        changed = False


def run_chain(
    x0: Table,
    moves: MoveSet,
    kind: str,
    stat: Callable[[Table], float],
    cfg: ChainConfig,
) -> np.ndarray:
    """Statistic values at the retained draws of a seeded Metropolis chain."""
    out = np.empty(cfg.samples)
    value = math.nan
    for i, (table, _) in enumerate(iter_chain(x0, moves, kind, cfg)):
        if table is not None:
            value = stat(table)
        out[i] = value
    return out


def estimate_pvalue(samples, observed: float) -> float:
    """Fraction of draws at or above the observed value (with ``1e-9`` slack)."""
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ValueError("no samples")
    return float(np.count_nonzero(samples >= observed - PVALUE_SLACK) / samples.size)


def histogram(samples, bin_width: float = 0.5) -> list[tuple[float, int]]:
    """Fixed-width bins ``[left, left + width)`` spanning the samples, empty bins included."""
    if bin_width <= 0:
        raise ValueError("bin width must be positive")
    samples = np.asarray(samples, dtype=float)
    idx = np.floor(samples / bin_width).astype(np.int64)
    lo, hi = int(idx.min()), int(idx.max())
    counts = np.bincount(idx - lo, minlength=hi - lo + 1)
    return [(float((lo + b) * bin_width), int(c)) for b, c in enumerate(counts)]


# -- submodel nulls ----------------------------------------------------------

ALPHA_ZERO = "alpha_zero"
BETA_ZERO = "beta_zero"


def _reduced_moves(n_levels: int, moveset: str) -> MoveSet | None:
    if n_levels < 3:
        # fibers of the univariate model with fewer than three levels are single points
        return None
    if moveset == "unit":
        return univariate_adjacent_moves(n_levels)
    if moveset == "full":
        return lifted_poisson_moves(n_levels)
    raise ValueError(f"moveset must be 'full' or 'unit', got {moveset!r}")


def iter_submodel_null(
    x: Table, which: str, cfg: ChainConfig, moveset: str = "unit"
) -> Iterator[Table]:
    """Draw from the conditional null of ``alpha = 0`` or ``beta = 0``.

    For ``beta_zero`` the row totals ``(x_1j+, x_2j+)`` follow a univariate
    logistic chain; each retained row total is then spread across ``k`` by a
    multivariate hypergeometric draw with the fixed trials ``x_+jk`` as urn
    sizes.  ``alpha_zero`` is the same with the roles of ``j`` and ``k``
    swapped.  Yields ``cfg.samples`` tables.
    """
    counts = x.counts
    if counts.ndim != 3 or counts.shape[0] != 2:
        raise ValueError(f"expected a (2, J, K) table, got shape {counts.shape}")
    trials = counts[0] + counts[1]
    if (trials <= 0).any():
        raise ValueError("every covariate combination needs at least one trial")
    if which == BETA_ZERO:
        urns = trials
        succ = counts[0]
    elif which == ALPHA_ZERO:
        urns = trials.T
        succ = counts[0].T
    else:
        raise ValueError(f"which must be {ALPHA_ZERO!r} or {BETA_ZERO!r}")
    rows = urns.sum(axis=1)
    reduced = Table(np.stack([succ.sum(axis=1), rows - succ.sum(axis=1)]))
    moves = _reduced_moves(len(rows), moveset)
    rng = cfg.rng()
    if moves is None:
        walk_states = ((reduced, None) for _ in range(cfg.samples))
    else:
        # independent child streams for the reduced chain and the allocations
        chain_seed, alloc_seed = np.random.SeedSequence(cfg.seed).spawn(2)
        sub_cfg = ChainConfig(cfg.burn_in, cfg.samples, int(chain_seed.generate_state(1, np.uint64)[0]), cfg.thin)
        rng = np.random.Generator(np.random.PCG64(alloc_seed))
        walk_states = iter_chain(reduced, moves, BINOMIAL, sub_cfg)
    current = reduced
    for table, _ in walk_states:
        if table is not None:
            current = table
        layer1 = np.stack([
            rng.multivariate_hypergeometric(urns[r], int(current.counts[0, r]))
            for r in range(len(rows))
        ])
        if which == ALPHA_ZERO:
            layer1 = layer1.T
        yield Table(np.stack([layer1, trials - layer1]))


def sample_submodel_null(x: Table, which: str, cfg: ChainConfig, moveset: str = "unit") -> Table:
    """The last of ``cfg.samples`` null draws (see :func:`iter_submodel_null`)."""
    last = x
    for last in iter_submodel_null(x, which, cfg, moveset):
        pass
    return last
