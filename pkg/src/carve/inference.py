"""
Post-selection inference for selected regression coefficients.

Four procedures are provided for each selected feature ``j``:

``posi``
    selection and inference on the same rows; truncated-normal pivot.
``split``
    selection on block A, classical z-pivot on block B.
``carve``
    selection on block A; the estimator averages the truncated A-block
    refit and the untruncated B-block refit with weights ``n_A/n`` and
    ``n_B/n`` and follows an SNTN law.
``naive``
    classical z-pivot on the rows used for selection (invalid baseline).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import selection as sel
from .dists import norm_cdf, norm_sf, tnorm_ci, tnorm_pvalue, _tail_pvalue
from .errors import ConfigError, RankError
from .sntn import SntnInputs, canonicalize, sntn_ci, sntn_pvalue, z_interval

ALGORITHMS = ("lasso", "marginal_screen", "sample_mean")
METHODS = ("posi", "split", "carve", "naive")
CV_FOLDS = 5


@dataclass(frozen=True)
class DataSplit:
    idx_A: np.ndarray
    idx_B: np.ndarray
    seed: int

    @property
    def n_A(self) -> int:
        return int(self.idx_A.size)

    @property
    def n_B(self) -> int:
        return int(self.idx_B.size)

    @property
    def n(self) -> int:
        return self.n_A + self.n_B


@dataclass
class CarveConfig:
    """Settings for one inference run.

    ``lam_frac`` (Lasso, penalty as a fraction of ``lambda_max``) and ``k``
    (marginal screening) are mutually exclusive; ``threshold`` is used by the
    sample-mean rule. ``tail=None`` picks two-sided for regression and
    right-sided for the sample mean.
    """

    frac_b: float = 0.15
    alpha: float = 0.1
    sigma2: float | str = 1.0
    algorithm: str = "lasso"
    lam_frac: float | None = None
    k: int | None = None
    threshold: float = 1.0
    tail: str | None = None

    def __post_init__(self):
        if not 0 < self.frac_b < 1:
            raise ConfigError(f"frac_b must lie in (0, 1), got {self.frac_b}")
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        if isinstance(self.sigma2, str):
            if self.sigma2 != "estimate":
                raise ConfigError(f"sigma2 must be positive or 'estimate', got {self.sigma2!r}")
        elif not self.sigma2 > 0:
            raise ConfigError(f"sigma2 must be positive, got {self.sigma2}")
        if self.algorithm == "lasso":
            if self.lam_frac is None and self.k is None:
                self.lam_frac = 0.725
            if self.k is not None:
                raise ConfigError("k is a marginal-screening setting; the Lasso takes lam_frac")
            if not 0 < self.lam_frac <= 1:
                raise ConfigError(f"lam_frac must lie in (0, 1], got {self.lam_frac}")
        elif self.algorithm == "marginal_screen":
            if self.k is None and self.lam_frac is None:
                self.k = 10
            if self.lam_frac is not None:
                raise ConfigError("lam_frac is a Lasso setting; marginal screening takes k")
            if int(self.k) != self.k or self.k < 1:
                raise ConfigError(f"k must be a positive integer, got {self.k}")
        elif self.lam_frac is not None or self.k is not None:
            raise ConfigError("the sample-mean rule takes neither lam_frac nor k")
        if self.tail is None:
            self.tail = "right" if self.algorithm == "sample_mean" else "two-sided"
        if self.tail not in ("left", "right", "two-sided"):
            raise ConfigError(f"unknown tail {self.tail!r}")


@dataclass
class CarveResult:
    feature: int
    method: str
    estimate: float
    pvalue: float
    ci_lo: float
    ci_hi: float
    v_minus: float = -math.inf
    v_plus: float = math.inf
    rho: float = math.nan
    beta_split: float = math.nan
    beta_posi: float = math.nan
    beta_carve: float = math.nan

    @property
    def ci(self) -> tuple[float, float]:
        return self.ci_lo, self.ci_hi

    def covers(self, value: float) -> bool:
        return self.ci_lo <= value <= self.ci_hi


CSV_COLUMNS = ("feature", "method", "estimate", "pvalue", "ci_lo", "ci_hi", "v_minus", "v_plus", "rho")


def split_data(n: int, frac_b: float, seed: int) -> DataSplit:
    """Random partition with ``n_B = round(frac_b * n)`` (halves round up)."""
    if not 0 < frac_b < 1:
        raise ConfigError(f"frac_b must lie in (0, 1), got {frac_b}")
    n_b = int(math.floor(frac_b * n + 0.5))
    if n_b < 1 or n - n_b < 1:
        raise ConfigError(f"split of n={n} at frac_b={frac_b} leaves an empty block")
    perm = np.random.default_rng(seed).permutation(n)
    return DataSplit(idx_A=np.sort(perm[n_b:]), idx_B=np.sort(perm[:n_b]), seed=seed)


# ---------------------------------------------------------------------------
# selection dispatch

def select(X, y, config: CarveConfig):
    """Run the configured selection rule; returns ``(outcome, event)``."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if config.algorithm == "lasso":
        lam = config.lam_frac * sel.lambda_max(X, y)
        outcome = sel.lasso_select(X, y, lam)
        return outcome, sel.lasso_event(X, y, lam, outcome)
    if config.algorithm == "marginal_screen":
        return sel.marginal_screen_event(X, y, int(config.k))
    return _sample_mean_select(X, y, config.threshold)


def _sample_mean_select(X, y, threshold):
    if X.shape[1] != 1 or not np.allclose(X, 1.0):
        raise ConfigError("the sample-mean rule needs a single all-ones design column")
    n = y.size
    chosen = bool(y.mean() > threshold)
    M = np.array([0]) if chosen else np.array([], dtype=int)
    outcome = sel.SelectionOutcome(M=M, signs=np.ones(M.size), eta=sel.contrast_rows(X, M))
    return outcome, sel.sample_mean_event(n, 1, threshold, selected=[chosen])


# ---------------------------------------------------------------------------
# procedures

def _z_result(j, method, est, sd, alpha, tail):
    lo, hi = z_interval(est, sd, alpha)
    left, right = float(norm_cdf(est, 0.0, sd * sd)), float(norm_sf(est, 0.0, sd * sd))
    return CarveResult(feature=int(j), method=method, estimate=float(est),
                       pvalue=_tail_pvalue(left, right, tail), ci_lo=lo, ci_hi=hi)


def _ols_z(X, y, M, sigma2, alpha, method, tail):
    M = np.asarray(M, dtype=int)
    eta = sel.contrast_rows(X, M)
    est = eta @ np.asarray(y, dtype=float)
    sd = np.sqrt(sigma2 * np.sum(eta**2, axis=1))
    return [_z_result(j, method, est[i], sd[i], alpha, tail) for i, j in enumerate(M)]


def split_inference(X_B, y_B, M_A, sigma2, alpha, tail="two-sided"):
    """Classical z-tests for the refit of ``M_A`` on the held-out block."""
    return _ols_z(X_B, y_B, M_A, sigma2, alpha, "split", tail)


def naive_ols_inference(X_A, y_A, M_A, sigma2, alpha, tail="two-sided"):
    """Classical z-tests on the selection rows, ignoring selection."""
    return _ols_z(X_A, y_A, M_A, sigma2, alpha, "naive", tail)


def posi_inference(X_A, y_A, outcome: sel.SelectionOutcome, event: sel.PolyhedralEvent,
                   sigma2, alpha, tail="two-sided"):
    """Truncated-normal pivots for each selected coefficient."""
    y_A = np.asarray(y_A, dtype=float)
    out = []
    for i, j in enumerate(outcome.M):
        eta = outcome.eta[i]
        bounds = sel.truncation_bounds(event, eta, sigma2, y_A)
        est = float(eta @ y_A)
        var = sigma2 * float(eta @ eta)
        est_in = min(max(est, bounds.v_minus), bounds.v_plus)
        p = tnorm_pvalue(est_in, 0.0, var, bounds.v_minus, bounds.v_plus, tail)
        lo, hi = tnorm_ci(est_in, var, bounds.v_minus, bounds.v_plus, alpha)
        out.append(CarveResult(feature=int(j), method="posi", estimate=est, pvalue=p, ci_lo=lo, ci_hi=hi,
                               v_minus=bounds.v_minus, v_plus=bounds.v_plus, beta_posi=est))
    return out


def carve_components(X, y, split: DataSplit, outcome: sel.SelectionOutcome, event: sel.PolyhedralEvent,
                     sigma2: float):
    """SNTN templates (``mu1 = mu2 = 0``) and observed pieces for each selected feature.

    Yields ``(j, template, beta_posi, beta_split)``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    XA, yA = X[split.idx_A], y[split.idx_A]
    XB, yB = X[split.idx_B], y[split.idx_B]
    M = outcome.M
    if split.n_B <= M.size:
        raise RankError(f"inference block has {split.n_B} rows for {M.size} selected features")
    eta_B = sel.contrast_rows(XB, M)
    c1, c2 = split.n_B / split.n, split.n_A / split.n
    for i, j in enumerate(M):
        eta_A = outcome.eta[i]
        bounds = sel.truncation_bounds(event, eta_A, sigma2, yA)
        beta_posi = float(eta_A @ yA)
        beta_split = float(eta_B[i] @ yB)
        tmpl = SntnInputs(mu1=0.0, tau1_2=sigma2 * float(eta_B[i] @ eta_B[i]),
                          mu2=0.0, tau2_2=sigma2 * float(eta_A @ eta_A),
                          a=bounds.v_minus, b=bounds.v_plus, c1=c1, c2=c2)
        yield int(j), tmpl, beta_posi, beta_split


def carve_inference(X, y, split: DataSplit, config: CarveConfig, sigma2: float | None = None,
                    selected=None):
    """Data-carving inference for every feature selected on block A.

    ``selected`` may carry a precomputed ``(outcome, event)`` for block A.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    s2 = _resolve_sigma2(X, y, config, sigma2)
    if selected is None:
        selected = select(X[split.idx_A], y[split.idx_A], config)
    outcome, event = selected
    c1, c2 = split.n_B / split.n, split.n_A / split.n
    out = []
    for j, tmpl, b_posi, b_split in carve_components(X, y, split, outcome, event, s2):
        est = c2 * b_posi + c1 * b_split
        canon = canonicalize(tmpl)
        p = sntn_pvalue(est, canon, config.tail)
        lo, hi = sntn_ci(est, tmpl, config.alpha)
        out.append(CarveResult(feature=j, method="carve", estimate=est, pvalue=p, ci_lo=lo, ci_hi=hi,
                               v_minus=tmpl.a, v_plus=tmpl.b, rho=float(canon.rho),
                               beta_split=b_split, beta_posi=b_posi, beta_carve=est))
    return out


def _resolve_sigma2(X, y, config, sigma2):
    if sigma2 is not None:
        return float(sigma2)
    if config.sigma2 == "estimate":
        return estimate_sigma2_cv(X, y)
    return float(config.sigma2)


# ---------------------------------------------------------------------------
# noise variance

def estimate_sigma2_cv(X, y, n_lambdas: int = 30, seed: int = 0) -> float:
    """``RSS / (n - |M|)`` of the OLS refit on the support of a 5-fold-CV Lasso.

    The penalty grid is log-spaced from ``lambda_max`` down to ``1e-3 lambda_max``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = y.size
    lmax = sel.lambda_max(X, y)
    grid = lmax * np.logspace(0, -3, n_lambdas)
    folds = np.random.default_rng(seed).permutation(n) % CV_FOLDS
    err = np.zeros(n_lambdas)
    for f in range(CV_FOLDS):
        tr, te = folds != f, folds == f
        beta = None
        for i, lam in enumerate(grid):
            beta = sel.lasso_fit(X[tr], y[tr], lam, beta0=beta)
            r = y[te] - X[te] @ beta
            err[i] += r @ r
    best = grid[int(np.argmin(err))]
    M = np.flatnonzero(sel.lasso_fit(X, y, best))
    if M.size:
        coef = np.linalg.lstsq(X[:, M], y, rcond=None)[0]
        resid = y - X[:, M] @ coef
    else:
        resid = y
    dof = n - M.size
    if dof < 1:
        raise RankError("CV-selected support leaves no residual degrees of freedom")
    return float(resid @ resid / dof)


# ---------------------------------------------------------------------------
# end-to-end

@dataclass
class Analysis:
    results: list[CarveResult]
    sigma2: float
    split: DataSplit
    selected_A: np.ndarray
    selected_full: np.ndarray
    meta: dict = field(default_factory=dict)


def analyze(X, y, config: CarveConfig, seed: int = 0, sigma2: float | None = None) -> Analysis:
    """All four procedures on one dataset.

    Selection runs once on block A of a seeded split; PoSI and naive infer on
    block A, split on block B and carve on both. ``selected_full`` records
    what the same rule picks on all rows, for reference.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    s2 = _resolve_sigma2(X, y, config, sigma2)
    split = split_data(y.size, config.frac_b, seed)
    full_outcome, _ = select(X, y, config)
    XA, yA = X[split.idx_A], y[split.idx_A]
    outcome, event = select(XA, yA, config)
    M = outcome.M
    results = []
    if M.size:
        results += posi_inference(XA, yA, outcome, event, s2, config.alpha, config.tail)
        results += split_inference(X[split.idx_B], y[split.idx_B], M, s2, config.alpha, config.tail)
        results += carve_inference(X, y, split, config, sigma2=s2, selected=(outcome, event))
        results += naive_ols_inference(XA, yA, M, s2, config.alpha, config.tail)
    meta = {"sigma2": s2, "sigma2_source": "estimate" if config.sigma2 == "estimate" and sigma2 is None else "given",
            "n_A": split.n_A, "n_B": split.n_B, "seed": seed}
    return Analysis(results=results, sigma2=s2, split=split, selected_A=M,
                    selected_full=full_outcome.M, meta=meta)
