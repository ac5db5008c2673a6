"""Exact conditional likelihood-ratio tests for the bivariate logit model.

``goodness_of_fit`` tests ``mu + alpha j + beta k`` against the additive
(ANOVA) logit model by walking the fiber of the observed table with the
bivariate lifted moves (``full``) or their unit-step subset (``unit``).
``alpha`` and ``beta`` test one linear coefficient against zero by sampling
the submodel null through the univariate reduction.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .data import Dataset
from .glm import FiberLR, ModelSpec, chisq_upper_tail, degrees_of_freedom
from .mcmc import (
    ALPHA_ZERO,
    BETA_ZERO,
    BINOMIAL,
    ChainConfig,
    estimate_pvalue,
    histogram,
    iter_chain,
    iter_submodel_null,
)
from .movesets import bivariate_lifted_moves, bivariate_unit_moves

TESTS = ("goodness_of_fit", "alpha", "beta")
MOVESETS = ("full", "unit")

_MODELS = {
    # test -> (null kind, alternative kind, statistic name)
    "goodness_of_fit": ("linear_bivariate", "anova", "L0"),
    "alpha": ("linear_k_only", "linear_bivariate", "L_alpha"),
    "beta": ("linear_j_only", "linear_bivariate", "L_beta"),
}


class NumericFailure(RuntimeError):
    """The observed-table fit did not converge."""


@dataclass
class TestReport:
    __test__ = False  # not a pytest class

    test: str
    statistic: str
    observed: float
    df: int
    asymptotic_p: float
    exact_p: float
    samples: int
    burn_in: int
    thin: int
    seeds: list[int]
    moveset: str
    moveset_size: int
    J: int
    K: int
    acceptance_rate: float | None
    flagged_fits: int
    bin_width: float
    histogram: list[tuple[float, int]] = field(default_factory=list)
    draws: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "version": __version__,
            "test": self.test,
            "statistic": self.statistic,
            "observed": self.observed,
            "df": self.df,
            "asymptotic_p": self.asymptotic_p,
            "exact_p": self.exact_p,
            "samples": self.samples,
            "burn_in": self.burn_in,
            "thin": self.thin,
            "seeds": list(self.seeds),
            "moveset": self.moveset,
            "moveset_size": self.moveset_size,
            "J": self.J,
            "K": self.K,
            "acceptance_rate": self.acceptance_rate,
            "flagged_fits": self.flagged_fits,
            "bin_width": self.bin_width,
            "histogram": [[left, count] for left, count in self.histogram],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def histogram_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bin_left", "count"])
        for left, count in self.histogram:
            w.writerow([repr(left), count])
        return buf.getvalue()


def _chain_seeds(seed: int, chains: int) -> list[int]:
    if chains == 1:
        return [seed]
    children = np.random.SeedSequence(seed).spawn(chains)
    return [int(c.generate_state(1, np.uint64)[0]) for c in children]


def run_exact_test(
    data: Dataset,
    test: str = "goodness_of_fit",
    moveset: str = "full",
    cfg: ChainConfig | None = None,
    chains: int = 1,
    bin_width: float = 0.5,
) -> TestReport:
    """Run one exact conditional LR test and summarise it.

    With ``chains > 1`` independent chains are seeded from child seeds of
    ``cfg.seed`` and their draws concatenated in seed order.

    Raises:
        ValueError: unknown test or move set, or a cell with zero trials.
        NumericFailure: the observed table's fits do not converge.
    """
    cfg = cfg or ChainConfig()
    if test not in TESTS:
        raise ValueError(f"unknown test {test!r}; choose from {TESTS}")
    if moveset not in MOVESETS:
        raise ValueError(f"unknown move set {moveset!r}; choose from {MOVESETS}")
    if not data.all_trials_positive:
        raise ValueError("exact tests need positive trials in every cell")
    J, K = data.J, data.K
    null_kind, alt_kind, name = _MODELS[test]
    null, alt = ModelSpec(null_kind, J, K), ModelSpec(alt_kind, J, K)
    x0 = data.to_table()
    try:
        stat = FiberLR(null, alt, x0)
    except ArithmeticError as err:
        raise NumericFailure(f"observed fit failed: {err}") from err

    seeds = _chain_seeds(cfg.seed, chains)
    draws = []
    steps = accepted = 0
    size = 0
    for seed in seeds:
        sub = ChainConfig(cfg.burn_in, cfg.samples, seed, cfg.thin)
        out = np.empty(cfg.samples)
        value = math.nan
        if test == "goodness_of_fit":
            moves = bivariate_lifted_moves(J, K) if moveset == "full" else bivariate_unit_moves(J, K)
            size = len(moves)
            walk = None
            for i, (table, walk) in enumerate(iter_chain(x0, moves, BINOMIAL, sub)):
                if table is not None:
                    value = stat(table)
                out[i] = value
            steps += walk.steps
            accepted += walk.accepted
        else:
            which = ALPHA_ZERO if test == "alpha" else BETA_ZERO
            for i, table in enumerate(iter_submodel_null(x0, which, sub, moveset)):
                out[i] = stat(table)
        draws.append(out)
    samples = np.concatenate(draws)
    df = degrees_of_freedom(null, alt)
    return TestReport(
        test=test,
        statistic=name,
        observed=stat.observed,
        df=df,
        asymptotic_p=chisq_upper_tail(stat.observed, df),
        exact_p=estimate_pvalue(samples, stat.observed),
        samples=int(samples.size),
        burn_in=cfg.burn_in,
        thin=cfg.thin,
        seeds=seeds,
        moveset=moveset,
        moveset_size=size,
        J=J,
        K=K,
        acceptance_rate=accepted / steps if steps else None,
        flagged_fits=stat.flagged,
        bin_width=bin_width,
        histogram=histogram(samples, bin_width),
        draws=samples,
    )


def emit_report(report: TestReport, out_dir: str | Path, stem: str = "report", trace: bool = False) -> list[Path]:
    """Write ``<stem>.json`` and ``<stem>_hist.csv`` (and optionally the trace)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / f"{stem}.json", out / f"{stem}_hist.csv"]
    try:
        paths[0].write_text(report.to_json())
        paths[1].write_text(report.histogram_csv())
        if trace and report.draws is not None:
            p = out / f"{stem}_trace.csv"
            p.write_text(report.statistic + "\n" + "".join(f"{v!r}\n" for v in report.draws.tolist()))
            paths.append(p)
    except OSError as err:
        raise OSError(f"could not write report to {err.filename or out}: {err.strerror}") from err
    return paths
