"""
Simulation studies and the real-data analysis.

* :func:`power_sample_mean` - analytic power of carving, splitting and PoSI
  for the thresholded sample mean, with a Monte Carlo spot check.
* :func:`run_hdr_grid` - the high-dimensional regression grid (type-I,
  type-II, precision and coverage with Clopper-Pearson bands).
* :func:`analyze_diabetes` - full-sample PoSI versus carving on the diabetes
  data.
"""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import brentq
from scipy.stats import beta as beta_dist

from . import selection as sel
from .dists import norm_cdf, norm_ppf, tnorm_cdf, tnorm_cdf_scalar, tnorm_ppf, tnorm_rvs
from .errors import (BracketError, CarveError, ConfigError, ConvergenceError, IngestionError,
                     TruncationMassError)
from .inference import (CarveConfig, carve_inference, estimate_sigma2_cv, naive_ols_inference,
                        posi_inference, select, split_data, split_inference)
from .rootfind import HALF_WIDTH_FACTOR, bisect_root, find_bracket, solve_root
from .sntn import SntnInputs, sntn_cdf, sntn_ppf

RUN_SEED_STRIDE = 1_000_003
# critical values are solved well below the default root tolerance so that
# analytic power differences are not swamped by root error
CRIT_TOL = 1e-13
HDR_METHODS = ("carve", "posi", "split", "naive")
METRICS = ("type1", "type2", "precision", "coverage")
DESK_SNR = (-1.0, 0.0, 1.0)
FULL_SNR = (-1.0, -2 / 3, -1 / 3, 0.0, 1 / 3, 2 / 3, 1.0)
FRAC_GRID = (0.15, 0.20, 0.25)
DIABETES_FEATURES = ("age", "sex", "bmi", "bp", "s1", "s2", "s3", "s4", "s5", "s6")
LAMBDA_READINGS = ("unit_norm", "frac", "literal")


def clopper_pearson(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    """Exact binomial interval for ``k`` successes in ``n`` trials."""
    if n == 0:
        return 0.0, 1.0
    a = 1.0 - level
    lo = 0.0 if k == 0 else float(beta_dist.ppf(a / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(beta_dist.ppf(1 - a / 2, k + 1, n - k))
    return lo, hi


# ---------------------------------------------------------------------------
# sample mean

@dataclass
class PowerRow:
    n_a: int
    mu: float
    carve: float
    split: float
    posi: float
    crit_carve: float


def _carve_template(n, n_a, sigma2, mu, threshold):
    n_b = n - n_a
    return SntnInputs(mu1=mu, tau1_2=sigma2 / n_b, mu2=mu, tau2_2=sigma2 / n_a,
                      a=threshold, b=math.inf, c1=n_b / n, c2=n_a / n)


def power_sample_mean(n: int = 100, n_a_grid=None, sigma2: float = 4.0, alpha: float = 0.1,
                      mu_grid=None, threshold: float = 1.0) -> list[PowerRow]:
    """One-sided power at level ``alpha`` for ``H0: mu <= 0``.

    Carving rejects when ``(n_B/n) ybar_B + (n_A/n) ybar_A`` exceeds the
    ``1 - alpha`` quantile of its null SNTN law; splitting runs a z-test on
    ``ybar_B`` alone; PoSI uses all ``n`` rows with the truncated-normal
    null. Power is ``1 - F_mu(c_alpha)``; at ``mu = 0`` it is ``alpha`` by
    construction of the critical value. Cells whose truncation mass
    underflows come back as NaN.
    """
    if n_a_grid is None:
        n_a_grid = range(1, n)
    if mu_grid is None:
        mu_grid = np.linspace(0.0, 2.0, 21)
    if not 0 < alpha < 1:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    z = float(norm_ppf(1 - alpha))
    sd_full = math.sqrt(sigma2 / n)
    crit_posi = float(tnorm_ppf(1 - alpha, 0.0, sigma2 / n, threshold, math.inf))
    rows = []
    for n_a in n_a_grid:
        if not 1 <= n_a < n:
            raise ConfigError(f"n_a must lie in [1, n), got {n_a}")
        n_b = n - n_a
        try:
            crit = sntn_ppf(1 - alpha, _carve_template(n, n_a, sigma2, 0.0, threshold), tol=CRIT_TOL)
        except CarveError:
            crit = math.nan
        for mu in mu_grid:
            mu = float(mu)
            if mu == 0.0:
                rows.append(PowerRow(n_a, mu, alpha, alpha, alpha, crit))
                continue
            try:
                carve = 1.0 - float(sntn_cdf(crit, _carve_template(n, n_a, sigma2, mu, threshold)))
            except (TruncationMassError, ValueError):
                carve = math.nan
            split = 1.0 - float(norm_cdf(z - mu * math.sqrt(n_b / sigma2)))
            try:
                posi = 1.0 - float(tnorm_cdf(crit_posi, mu, sd_full**2, threshold, math.inf))
            except TruncationMassError:
                posi = math.nan
            rows.append(PowerRow(n_a, mu, carve, split, posi, crit))
    return rows


def binomial_se(p: float, draws: int) -> float:
    """Standard error of a Monte Carlo frequency whose true value is ``p``."""
    return math.sqrt(p * (1.0 - p) / draws)


def mc_power_sample_mean(n, n_a, sigma2, alpha, mu, threshold=1.0, draws=1_000_000, seed=0) -> float:
    """Monte Carlo rejection rate of the carving test.

    ``ybar_A`` is drawn from its selected law ``TN(mu, sigma2/n_A, threshold, inf)``
    and ``ybar_B`` from ``N(mu, sigma2/n_B)``.
    """
    rng = np.random.default_rng(seed)
    n_b = n - n_a
    crit = sntn_ppf(1 - alpha, _carve_template(n, n_a, sigma2, 0.0, threshold), tol=CRIT_TOL)
    ya = tnorm_rvs(mu, sigma2 / n_a, threshold, math.inf, n=draws, seed=rng)
    yb = rng.normal(mu, math.sqrt(sigma2 / n_b), size=draws)
    stat = (n_b / n) * yb + (n_a / n) * ya
    return float(np.mean(stat > crit))


# ---------------------------------------------------------------------------
# high-dimensional regression grid

@dataclass
class SimConfig:
    n: int = 100
    p: int = 150
    s: int = 5
    sigma2: float = 1.0
    alpha: float = 0.1
    snr_grid: tuple = DESK_SNR
    frac_grid: tuple = FRAC_GRID
    n_sims: int = 100
    base_seed: int = 1
    algorithm: str = "lasso"
    lam_frac: float = 0.725
    k: int = 10
    workers: int = 1

    def __post_init__(self):
        if self.algorithm == "screen":
            self.algorithm = "marginal_screen"
        if self.algorithm not in ("lasso", "marginal_screen"):
            raise ConfigError(f"algorithm must be lasso or marginal_screen, got {self.algorithm!r}")
        if not 1 <= self.s <= min(self.n, self.p):
            raise ConfigError(f"need 1 <= s <= min(n, p), got s={self.s}")
        if any(not 0 < f < 1 for f in self.frac_grid):
            raise ConfigError("all fractions must lie in (0, 1)")
        if self.n_sims < 1:
            raise ConfigError("n_sims must be >= 1")
        if not self.sigma2 > 0 or not 0 < self.alpha < 1:
            raise ConfigError("need sigma2 > 0 and alpha in (0, 1)")
        self.snr_grid = tuple(float(v) for v in self.snr_grid)
        self.frac_grid = tuple(float(v) for v in self.frac_grid)

    def carve_config(self, frac_b: float) -> CarveConfig:
        if self.algorithm == "lasso":
            return CarveConfig(frac_b=frac_b, alpha=self.alpha, sigma2=self.sigma2,
                               algorithm="lasso", lam_frac=self.lam_frac)
        return CarveConfig(frac_b=frac_b, alpha=self.alpha, sigma2=self.sigma2,
                           algorithm="marginal_screen", k=self.k)


@dataclass
class SimRecord:
    """Aggregated rate for one (snr, frac_b, method, metric) cell.

    ``run`` is the number of simulation runs folded into the cell;
    ``successes``/``trials`` are the binomial counts behind ``value``.
    """

    snr: float
    frac_b: float
    run: int
    method: str
    metric: str
    value: float
    ci_lo: float
    ci_hi: float
    successes: int = 0
    trials: int = 0


@dataclass
class RunCounts:
    """Per-method hypothesis counts from one simulated dataset."""

    null_tested: int = 0
    null_rejected: int = 0
    true_tested: int = 0
    true_rejected: int = 0
    selected: int = 0
    true_selected: int = 0
    ci_total: int = 0
    ci_covered: int = 0
    failed: int = 0

    def add(self, other: "RunCounts") -> None:
        for k, v in asdict(other).items():
            setattr(self, k, getattr(self, k) + v)


def snr_coefficient(snr_log10: float, sigma2: float, s: int) -> float:
    """Common value ``c`` of the ``s`` nonzero coefficients with ``c^2 s / sigma2 = 10^snr``."""
    return math.sqrt(10.0**snr_log10 * sigma2 / s)


def simulate_hdr_data(cfg: SimConfig, snr_log10: float, seed: int):
    rng = np.random.default_rng(seed)
    X = sel.standardize(rng.standard_normal((cfg.n, cfg.p)))
    beta = np.zeros(cfg.p)
    beta[: cfg.s] = snr_coefficient(snr_log10, cfg.sigma2, cfg.s)
    y = X @ beta + rng.normal(0.0, math.sqrt(cfg.sigma2), cfg.n)
    return X, y, beta


def _tally(results, beta, alpha, counts: RunCounts, selected_M):
    truth = beta != 0
    counts.selected += len(selected_M)
    counts.true_selected += int(np.sum(truth[np.asarray(selected_M, dtype=int)]))
    for r in results:
        reject = r.pvalue < alpha
        if truth[r.feature]:
            counts.true_tested += 1
            counts.true_rejected += int(reject)
        else:
            counts.null_tested += 1
            counts.null_rejected += int(reject)
        counts.ci_total += 1
        counts.ci_covered += int(r.covers(beta[r.feature]))


def hdr_run(cfg: SimConfig, snr_log10: float, frac_b: float, run: int) -> dict[str, RunCounts]:
    """All four methods on one simulated dataset, selecting on block A.

    The null for feature ``j`` is ``beta_j = 0`` for the data-generating
    coefficients; with independent Gaussian columns these are also the
    population targets of every submodel.
    """
    seed = cfg.base_seed + RUN_SEED_STRIDE * run
    X, y, beta = simulate_hdr_data(cfg, snr_log10, seed)
    ccfg = cfg.carve_config(frac_b)
    out = {m: RunCounts() for m in HDR_METHODS}
    a = ccfg.alpha

    split = split_data(cfg.n, frac_b, seed + 1)
    XA, yA = X[split.idx_A], y[split.idx_A]
    XB, yB = X[split.idx_B], y[split.idx_B]
    outcome_A, event_A = select(XA, yA, ccfg)
    M = outcome_A.M
    # every method tests the block-A selection; they differ only in the rows used for inference
    procs = {
        "posi": lambda: posi_inference(XA, yA, outcome_A, event_A, cfg.sigma2, a),
        "split": lambda: split_inference(XB, yB, M, cfg.sigma2, a),
        "carve": lambda: carve_inference(X, y, split, ccfg, sigma2=cfg.sigma2, selected=(outcome_A, event_A)),
        "naive": lambda: naive_ols_inference(XA, yA, M, cfg.sigma2, a),
    }
    for name, fn in procs.items():
        try:
            res = fn() if M.size else []
            _tally(res, beta, a, out[name], M)
        except CarveError:
            out[name].failed += 1
    return out


def _cell_task(args):
    cfg, snr, frac, run = args
    return hdr_run(cfg, snr, frac, run)


def hdr_counts(cfg: SimConfig):
    """Summed :class:`RunCounts` per ``(snr, frac_b, method)``.

    Replicates may run on a process pool; the fold is always in run order.
    """
    tasks = [(cfg, snr, frac, run) for snr in cfg.snr_grid for frac in cfg.frac_grid
             for run in range(cfg.n_sims)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            per_run = list(pool.map(_cell_task, tasks, chunksize=8))
    else:
        per_run = [_cell_task(t) for t in tasks]
    totals = {}
    for (_, snr, frac, _), counts in zip(tasks, per_run):
        for m, c in counts.items():
            totals.setdefault((snr, frac, m), RunCounts()).add(c)
    return totals


def _rate_record(snr, frac, runs, method, metric, k, n, level=0.95):
    value = k / n if n else math.nan
    lo, hi = clopper_pearson(k, n, level)
    return SimRecord(snr=snr, frac_b=frac, run=runs, method=method, metric=metric,
                     value=value, ci_lo=lo, ci_hi=hi, successes=k, trials=n)


def run_hdr_grid(cfg: SimConfig) -> list[SimRecord]:
    """Aggregate the grid into rate records with Clopper-Pearson 95% bands.

    type1: rejected / tested among null features. type2: not rejected /
    tested among true features (conditional on being selected).
    precision: true selected / selected. coverage: intervals containing the
    true coefficient / intervals. Runs with no selection add no trials.
    """
    totals = hdr_counts(cfg)
    records = []
    for (snr, frac, m), c in totals.items():
        cells = {
            "type1": (c.null_rejected, c.null_tested),
            "type2": (c.true_tested - c.true_rejected, c.true_tested),
            "precision": (c.true_selected, c.selected),
            "coverage": (c.ci_covered, c.ci_total),
        }
        for metric in METRICS:
            k, n = cells[metric]
            records.append(_rate_record(snr, frac, cfg.n_sims, m, metric, k, n))
    return records


# ---------------------------------------------------------------------------
# diabetes

def read_table_csv(path, required_columns=None):
    """Read a numeric CSV with a header row; NaN or empty cells raise with their rows."""
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise IngestionError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    if required_columns is not None:
        missing = [c for c in required_columns if c not in header]
        if missing:
            raise IngestionError(f"{path} lacks columns {missing}")
    data = np.full((len(rows) - 1, len(header)), np.nan)
    bad = []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            bad.append(i)
            continue
        try:
            vals = [float(v) for v in row]
        except ValueError:
            bad.append(i)
            continue
        if any(math.isnan(v) for v in vals):
            bad.append(i)
            continue
        data[i - 2] = vals
    if bad:
        shown = ", ".join(map(str, bad[:10])) + (" ..." if len(bad) > 10 else "")
        raise IngestionError(f"{path}: {len(bad)} malformed or missing rows (lines {shown})")
    return header, data


def load_diabetes_csv(path):
    """Standardized ``X`` (442 x 10), centered ``y`` and the feature names."""
    header, data = read_table_csv(path, required_columns=DIABETES_FEATURES)
    target = "target" if "target" in header else header[-1]
    X = data[:, [header.index(c) for c in DIABETES_FEATURES]]
    y = data[:, header.index(target)]
    Xs, yc = sel.standardize(X, y)
    return Xs, yc, list(DIABETES_FEATURES)


def diabetes_penalty(X, y, lam: float, reading: str = "unit_norm") -> float:
    """Translate the nominal penalty into this package's unit-variance convention.

    ``unit_norm``: ``lam`` applies to columns scaled to unit Euclidean norm,
    which is ``lam * sqrt(n)`` here. ``frac``: ``lam * lambda_max``.
    ``literal``: ``lam`` as is.
    """
    if reading == "unit_norm":
        return lam * math.sqrt(X.shape[0])
    if reading == "frac":
        return lam * sel.lambda_max(X, y)
    if reading == "literal":
        return lam
    raise ConfigError(f"unknown penalty reading {reading!r}; expected one of {LAMBDA_READINGS}")


@dataclass
class DiabetesRow:
    feature: str
    method: str
    frac_b: float
    estimate: float
    pvalue: float
    ci_lo: float
    ci_hi: float
    significant: bool


@dataclass
class DiabetesResult:
    rows: list[DiabetesRow]
    sigma2: float
    penalty: float
    reading: str
    selected_full: list[str]
    meta: dict = field(default_factory=dict)


def analyze_diabetes(data_path, lam: float = 0.25, frac_grid=FRAC_GRID, alpha: float = 0.1,
                     seed: int = 7, reading: str = "unit_norm", sigma2=None) -> DiabetesResult:
    """Full-sample PoSI and carving at each inference fraction.

    ``sigma2`` defaults to the 5-fold-CV Lasso refit estimate on all rows.
    Each fraction uses its own split seeded by ``seed``.
    """
    X, y, names = load_diabetes_csv(data_path)
    penalty = diabetes_penalty(X, y, lam, reading)
    s2 = estimate_sigma2_cv(X, y, seed=seed) if sigma2 is None else float(sigma2)
    rows = []

    def add(results, method, frac):
        for r in results:
            rows.append(DiabetesRow(feature=names[r.feature], method=method, frac_b=frac, estimate=r.estimate,
                                    pvalue=r.pvalue, ci_lo=r.ci_lo, ci_hi=r.ci_hi,
                                    significant=not (r.ci_lo <= 0.0 <= r.ci_hi)))

    outcome = sel.lasso_select(X, y, penalty)
    event = sel.lasso_event(X, y, penalty, outcome)
    add(posi_inference(X, y, outcome, event, s2, alpha), "posi", 0.0)
    for frac in frac_grid:
        split = split_data(y.size, frac, seed)
        XA, yA = X[split.idx_A], y[split.idx_A]
        pen_A = diabetes_penalty(XA, yA, lam, reading)
        out_A = sel.lasso_select(XA, yA, pen_A)
        ev_A = sel.lasso_event(XA, yA, pen_A, out_A)
        cfg = CarveConfig(frac_b=frac, alpha=alpha, sigma2=s2, algorithm="lasso", lam_frac=1.0)
        add(carve_inference(X, y, split, cfg, sigma2=s2, selected=(out_A, ev_A)), "carve", frac)
    return DiabetesResult(rows=rows, sigma2=s2, penalty=penalty, reading=reading,
                          selected_full=[names[j] for j in outcome.M],
                          meta={"sigma2_source": "cv5_lasso_refit" if sigma2 is None else "given",
                                "seed": seed, "lam": lam, "alpha": alpha})


# ---------------------------------------------------------------------------
# root-finder benchmark

ROOT_METHODS = ("hybrid", "bisection", "brentq")


@dataclass
class RootBenchRow:
    method: str
    n_roots: int
    total_seconds: float
    cum_abs_residual: float
    n_failures: int


def random_tn_problems(count: int, seed: int = 0):
    """``count`` truncated-normal CI problems ``(x_obs, sigma2, a, b)``.

    Mixes two-sided, left-open and right-open intervals; ``x_obs`` is drawn
    from the truncated law at a random mean so that it sits anywhere from
    the centre to deep in a tail.
    """
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        sigma2 = float(rng.uniform(0.25, 4.0))
        a = float(rng.normal(0.0, 2.0))
        b = a + float(rng.exponential(2.0)) + 0.05
        kind = i % 3
        if kind == 1:
            b = math.inf
        elif kind == 2:
            a, b = -math.inf, a
        mu = float(rng.normal(0.0, 3.0))
        lo, hi = (a if math.isfinite(a) else b - 10.0), (b if math.isfinite(b) else a + 10.0)
        try:
            x = float(tnorm_rvs(mu, sigma2, a, b, n=1, seed=rng)[0])
        except TruncationMassError:
            x = 0.5 * (lo + hi)
        x = min(max(x, np.nextafter(a, math.inf)), np.nextafter(b, -math.inf))
        out.append((x, sigma2, a, b))
    return out


def bench_rootfind(count: int = 1050, alpha: float = 0.05, seed: int = 0, tol: float = 1e-8,
                   methods=ROOT_METHODS) -> tuple[list[RootBenchRow], dict]:
    """Solve both CI roots of ``count`` truncated-normal problems with each method.

    ``hybrid`` is :func:`carve.rootfind.solve_root`, ``bisection`` the plain
    bracketed reference and ``brentq`` SciPy's solver on the same bracket.
    Residuals are ``|F_mu(x_obs) - target|`` at the returned root.
    """
    problems = random_tn_problems(count, seed)

    def run_brentq(f, target, x0, scale):
        def g(x):
            return f(x) - target
        g0 = g(x0)
        if abs(g0) <= tol:
            return x0
        lo, hi, _, _ = find_bracket(g, x0, g0, HALF_WIDTH_FACTOR * scale)
        return brentq(g, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)

    solvers = {
        "hybrid": lambda f, t, x0, sc: solve_root(f, t, x0, scale=sc, tol=tol),
        "bisection": lambda f, t, x0, sc: bisect_root(f, t, x0, scale=sc, tol=tol, max_iter=2000),
        "brentq": run_brentq,
    }
    rows, residuals = [], {}
    for name in methods:
        total_t = 0.0
        res_sum = 0.0
        fails = 0
        res_list = []
        for x, s2, a, b in problems:
            def f(mu, x=x, s2=s2, a=a, b=b):
                return tnorm_cdf_scalar(x, mu, s2, a, b)
            for target in (1 - alpha / 2, alpha / 2):
                t0 = time.perf_counter()
                try:
                    root = solvers[name](f, target, x, math.sqrt(s2))
                except (BracketError, ConvergenceError, ValueError, RuntimeError):
                    total_t += time.perf_counter() - t0
                    fails += 1
                    continue
                total_t += time.perf_counter() - t0
                r = abs(f(root) - target)
                res_sum += r
                res_list.append(r)
        rows.append(RootBenchRow(name, 2 * len(problems), total_t, float(res_sum), fails))
        residuals[name] = np.array(res_list)
    return rows, residuals
