"""Binomial logit models on a ``J x K`` covariate grid.

Levels are scored by their indices ``1..J`` and ``1..K``.  Fitting is plain
Newton-Raphson with step halving; no external optimizer is involved.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import expit, gammaln, log1p

from .tables import Table

log = logging.getLogger(__name__)

MODEL_KINDS = ("linear_bivariate", "anova", "linear_j_only", "linear_k_only", "intercept_only")

# kind -> kinds nested inside it (itself included)
_SUBMODELS = {
    "intercept_only": {"intercept_only"},
    "linear_j_only": {"linear_j_only", "intercept_only"},
    "linear_k_only": {"linear_k_only", "intercept_only"},
    "linear_bivariate": {"linear_bivariate", "linear_j_only", "linear_k_only", "intercept_only"},
    "anova": set(MODEL_KINDS),
}

GRAD_TOL = 1e-8
LL_RTOL = 1e-12
SEPARATION_BOUND = 30.0


class NonConvergenceError(ArithmeticError):
    """Fit diverged (separation) or ran out of iterations.

    ``best`` holds the highest-likelihood iterate reached.
    """

    def __init__(self, message: str, best: FitResult):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    J: int
    K: int

    def __post_init__(self) -> None:
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; choose from {MODEL_KINDS}")
        if self.J < 1 or self.K < 1:
            raise ValueError("axis sizes must be positive")

    @property
    def n_params(self) -> int:
        return {
            "linear_bivariate": 3,
            "anova": 1 + (self.J - 1) + (self.K - 1),
            "linear_j_only": 2,
            "linear_k_only": 2,
            "intercept_only": 1,
        }[self.kind]

    @cached_property
    def design(self) -> np.ndarray:
        """``(J*K, n_params)`` design matrix in row-major ``(j, k)`` cell order."""
        jj, kk = np.meshgrid(np.arange(1, self.J + 1), np.arange(1, self.K + 1), indexing="ij")
        j, k = jj.ravel().astype(float), kk.ravel().astype(float)
        one = np.ones_like(j)
        if self.kind == "intercept_only":
            cols = [one]
        elif self.kind == "linear_j_only":
            cols = [one, j]
        elif self.kind == "linear_k_only":
            cols = [one, k]
        elif self.kind == "linear_bivariate":
            cols = [one, j, k]
        else:
            # sum-to-zero effects: the last level carries minus the others
            cols = [one]
            for level in range(1, self.J):
                cols.append((j == level) - (j == self.J).astype(float))
            for level in range(1, self.K):
                cols.append((k == level) - (k == self.K).astype(float))
        return np.column_stack(cols)

    def nests(self, other: ModelSpec) -> bool:
        """True if ``other`` is a submodel of this one on the same grid."""
        return (self.J, self.K) == (other.J, other.K) and other.kind in _SUBMODELS[self.kind]


@dataclass(frozen=True)
class FitResult:
    spec: ModelSpec
    coefficients: np.ndarray
    log_likelihood: float
    converged: bool
    iterations: int
    max_gradient: float

    def to_dict(self) -> dict:
        return {
            "model": self.spec.kind,
            "coefficients": [float(c) for c in self.coefficients],
            "log_likelihood": float(self.log_likelihood),
            "converged": self.converged,
            "iterations": self.iterations,
            "max_gradient": float(self.max_gradient),
        }


def split_table(table: Table | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Flattened successes and trials from a ``(2, J, K)`` table."""
    counts = table.counts if isinstance(table, Table) else np.asarray(table)
    if counts.ndim != 3 or counts.shape[0] != 2:
        raise ValueError(f"expected a (2, J, K) table, got shape {counts.shape}")
    s = counts[0].reshape(-1).astype(float)
    return s, s + counts[1].reshape(-1)


def _log_binom(n: np.ndarray, s: np.ndarray) -> float:
    return float(np.sum(gammaln(n + 1) - gammaln(s + 1) - gammaln(n - s + 1)))


def kernel_log_likelihood(X: np.ndarray, s: np.ndarray, n: np.ndarray, beta: np.ndarray) -> float:
    """Binomial log-likelihood without the ``log C(n, s)`` term."""
    eta = X @ beta
    # log(1 + e^eta) computed stably
    softplus = np.where(eta > 0, eta + log1p(np.exp(-np.abs(eta))), log1p(np.exp(-np.abs(eta))))
    return float(s @ eta - n @ softplus)


def score(X: np.ndarray, s: np.ndarray, n: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Gradient of the log-likelihood with respect to the coefficients."""
    return X.T @ (s - n * expit(X @ beta))


def _newton(X, s, n, beta, max_iter):
    """Yield ``(beta, ll, relative_ll_change)`` after each damped Newton step."""
    ll = kernel_log_likelihood(X, s, n, beta)
    for _ in range(max_iter):
        p = expit(X @ beta)
        grad = X.T @ (s - n * p)
        w = n * p * (1.0 - p)
        H = X.T @ (X * w[:, None])
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, grad, rcond=None)[0]
        t = 1.0
        for _ in range(21):
            cand = beta + t * step
            ll_new = kernel_log_likelihood(X, s, n, cand)
            if ll_new >= ll - LL_RTOL * abs(ll):
                break
            t *= 0.5
        else:
            cand, ll_new = beta, ll
        change = abs(ll_new - ll) / max(abs(ll), 1.0)
        beta, ll = cand, ll_new
        yield beta, ll, change


def fit_logit(
    table: Table | np.ndarray,
    spec: ModelSpec,
    init: np.ndarray | None = None,
    max_iter: int = 200,
) -> FitResult:
    """Maximum-likelihood fit of a logit model by Newton-Raphson.

    Converged when ``max |gradient| <= 1e-8`` and the relative
    log-likelihood change of the last step is ``<= 1e-12``.

    Raises:
        ValueError: a cell has zero trials or the table shape is wrong.
        NonConvergenceError: a coefficient exceeds 30 in magnitude
            (separation) or ``max_iter`` is exhausted.
    """
    s, n = split_table(table)
    if s.size != spec.J * spec.K:
        raise ValueError(f"table has {s.size} cells, model expects {spec.J}x{spec.K}")
    if (n <= 0).any():
        raise ValueError("every covariate combination needs at least one trial")
    X = spec.design
    beta = np.zeros(spec.n_params) if init is None else np.array(init, dtype=float)
    const = _log_binom(n, s)

    def result(b, ll, converged, it):
        g = score(X, s, n, b)
        return FitResult(spec, b, ll + const, converged, it, float(np.abs(g).max()))

    best = (beta, kernel_log_likelihood(X, s, n, beta))
    it = 0
    for it, (beta, ll, change) in enumerate(_newton(X, s, n, beta, max_iter), start=1):
        best = (beta, ll)
        if np.abs(beta).max() > SEPARATION_BOUND:
            raise NonConvergenceError(
                f"{spec.kind}: coefficient magnitude exceeds {SEPARATION_BOUND} (separation)",
                result(beta, ll, False, it),
            )
        if change <= LL_RTOL and np.abs(score(X, s, n, beta)).max() <= GRAD_TOL:
            return result(beta, ll, True, it)
    raise NonConvergenceError(f"{spec.kind}: no convergence in {max_iter} iterations", result(*best, False, it))


def lr_statistic(null: FitResult, alt: FitResult) -> float:
    """``2 (ll_alt - ll_null)``, floored at zero for tiny negative round-off."""
    if not alt.spec.nests(null.spec):
        raise ValueError(f"{null.spec.kind} is not nested in {alt.spec.kind}")
    value = 2.0 * (alt.log_likelihood - null.log_likelihood)
    if value < -1e-8:
        raise ArithmeticError(f"negative LR statistic {value:.3g}; alternative fit is not optimal")
    return max(value, 0.0)


def degrees_of_freedom(null: ModelSpec, alt: ModelSpec) -> int:
    if not alt.nests(null):
        raise ValueError(f"{null.kind} is not nested in {alt.kind}")
    return alt.n_params - null.n_params


class FiberLR:
    """LR statistic evaluated on tables of one fiber.

    Both fits are warm-started from the observed table's estimates.  With
    ``fixed_null`` the null fit is computed once: when the fiber fixes the
    null model's sufficient statistics its kernel log-likelihood is the same
    on every table, so only the ``log C(n, s)`` term needs re-evaluation
    and it cancels.  Fits that diverge inside the chain contribute the
    best iterate and are counted in ``flagged``.
    """

    def __init__(self, null: ModelSpec, alt: ModelSpec, observed: Table | np.ndarray, fixed_null: bool = True):
        if not alt.nests(null):
            raise ValueError(f"{null.kind} is not nested in {alt.kind}")
        self.null, self.alt = null, alt
        self.null_fit = fit_logit(observed, null)
        self.alt_fit = fit_logit(observed, alt)
        self.observed = lr_statistic(self.null_fit, self.alt_fit)
        self.fixed_null = fixed_null
        s, n = split_table(observed)
        self._null_kernel = kernel_log_likelihood(null.design, s, n, self.null_fit.coefficients)
        self.flagged = 0

    def _kernel(self, spec: ModelSpec, init: np.ndarray, table) -> float:
        try:
            fit = fit_logit(table, spec, init=init)
        except NonConvergenceError as err:
            self.flagged += 1
            log.debug("flagged non-convergent %s fit: %s", spec.kind, err)
            fit = err.best
        s, n = split_table(table)
        return fit.log_likelihood - _log_binom(n, s)

    def __call__(self, table: Table | np.ndarray) -> float:
        alt = self._kernel(self.alt, self.alt_fit.coefficients, table)
        if self.fixed_null:
            null = self._null_kernel
        else:
            null = self._kernel(self.null, self.null_fit.coefficients, table)
        return max(2.0 * (alt - null), 0.0)


def lr_over_fiber(null: ModelSpec, alt: ModelSpec, table: Table | np.ndarray) -> float:
    """One-off LR statistic on a table, tolerating divergent fits."""
    return FiberLR(null, alt, table, fixed_null=False)(table)


# -- chi-square tail ---------------------------------------------------------


def _lower_series(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x) by its power series."""
    term = total = 1.0 / a
    ap = a
    for _ in range(10_000):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * 1e-17:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _upper_fraction(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x) by modified Lentz continued fraction."""
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 10_000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        d = tiny if abs(d) < tiny else d
        c = b + an / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def regularized_upper_gamma(a: float, x: float) -> float:
    if a <= 0:
        raise ValueError("shape must be positive")
    if x < 0:
        raise ValueError("argument must be nonnegative")
    if x == 0:
        return 1.0
    if x < a + 1.0:
        return max(0.0, 1.0 - _lower_series(a, x))
    return min(1.0, _upper_fraction(a, x))


def chisq_upper_tail(x: float, df: int) -> float:
    """``P(chi2_df >= x)``."""
    if df < 1:
        raise ValueError("degrees of freedom must be positive")
    if x < 0:
        raise ValueError(f"chi-square statistic must be nonnegative, got {x}")
    return regularized_upper_gamma(df / 2.0, x / 2.0)
