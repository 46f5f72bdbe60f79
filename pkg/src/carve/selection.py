"""
Selection algorithms and their polyhedral selection events ``{A y <= b}``.

Three selection rules are supported: the Lasso at a fixed penalty, top-k
marginal screening, and per-coordinate sample-mean thresholding. Each rule
comes with the affine constraints on the response that reproduce its
outcome, and :func:`truncation_bounds` turns such an event plus a contrast
direction into the truncation interval of ``eta' y``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, ConsistencyError, ConvergenceError, IngestionError, RankError

EVENT_TOL = 1e-9


@dataclass
class PolyhedralEvent:
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.b = np.asarray(self.b, dtype=float).ravel()
        if self.A.shape[0] != self.b.size:
            raise ConfigError(f"A has {self.A.shape[0]} rows but b has {self.b.size} entries")

    def slack(self, y):
        """``b - A y``; nonnegative entries mean the constraint holds."""
        return self.b - self.A @ np.asarray(y, dtype=float)

    def contains(self, y, tol: float = EVENT_TOL) -> bool:
        return bool(np.all(self.slack(y) >= -tol))

    def contains_many(self, Y, tol: float = EVENT_TOL) -> np.ndarray:
        """Membership for each column of ``Y`` (shape ``n x draws``)."""
        return np.all(self.A @ Y <= self.b[:, None] + tol, axis=0)

    def to_csv(self, directory) -> tuple[Path, Path]:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        pa, pb = d / "A.csv", d / "b.csv"
        np.savetxt(pa, self.A, delimiter=",", fmt="%.17g")
        np.savetxt(pb, self.b, delimiter=",", fmt="%.17g")
        return pa, pb

    @classmethod
    def from_csv(cls, directory) -> "PolyhedralEvent":
        d = Path(directory)
        return cls(np.loadtxt(d / "A.csv", delimiter=",", ndmin=2), np.loadtxt(d / "b.csv", delimiter=",", ndmin=1))


@dataclass
class SelectionOutcome:
    """Selected columns ``M`` (ascending), their signs and contrast rows.

    ``eta`` has one row per selected feature: row ``i`` is
    ``[(X_M' X_M)^{-1} X_M']_{i:}`` so that ``eta @ y`` is the refit OLS.
    """

    M: np.ndarray
    signs: np.ndarray
    eta: np.ndarray

    @property
    def size(self) -> int:
        return int(self.M.size)

    def key(self) -> tuple:
        return tuple(self.M.tolist()), tuple(np.sign(self.signs).astype(int).tolist())


@dataclass(frozen=True)
class TruncationBounds:
    v_minus: float
    v_plus: float


def standardize(X, y=None):
    """Center columns of ``X`` and scale them so that ``||x_j|| / sqrt(n) = 1``; center ``y``."""
    X = np.asarray(X, dtype=float)
    Xc = X - X.mean(axis=0)
    scale = np.sqrt(np.mean(Xc**2, axis=0))
    if np.any(scale == 0):
        raise RankError("constant column cannot be standardized")
    Xs = Xc / scale
    if y is None:
        return Xs
    y = np.asarray(y, dtype=float)
    return Xs, y - y.mean()


def read_matrix_csv(path) -> np.ndarray:
    """Numeric CSV as a 2-D array (row-major); a non-numeric first row is taken as a header."""
    path = Path(path)
    with path.open() as fh:
        first = fh.readline()
    try:
        [float(v) for v in first.strip().split(",")]
        skip = 0
    except ValueError:
        skip = 1
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2)
    except ValueError as exc:
        raise IngestionError(f"{path}: {exc}") from exc
    bad = np.flatnonzero(~np.all(np.isfinite(data), axis=1))
    if bad.size:
        raise IngestionError(f"{path}: non-finite cells in data rows {(bad + 1).tolist()[:10]}")
    return data


def contrast_rows(X, M):
    """``(X_M' X_M)^{-1} X_M'`` with a rank check."""
    XM = np.asarray(X, dtype=float)[:, M]
    if XM.shape[1] == 0:
        return np.zeros((0, XM.shape[0]))
    if XM.shape[0] < XM.shape[1] or np.linalg.matrix_rank(XM) < XM.shape[1]:
        raise RankError(f"X_M ({XM.shape[0]}x{XM.shape[1]}) is not full column rank")
    return np.linalg.solve(XM.T @ XM, XM.T)


# ---------------------------------------------------------------------------
# Lasso

def lambda_max(X, y) -> float:
    """Smallest penalty giving the all-zero Lasso solution, ``max_j |x_j' y| / n``."""
    X = np.asarray(X, dtype=float)
    return float(np.max(np.abs(X.T @ np.asarray(y, dtype=float))) / X.shape[0])


def _soft(z, t):
    return math.copysign(max(abs(z) - t, 0.0), z)


def lasso_objective(X, y, beta, lam):
    n = X.shape[0]
    r = y - X @ beta
    return float(r @ r / (2 * n) + lam * np.sum(np.abs(beta)))


def lasso_fit(X, y, lam, tol: float = 1e-10, max_sweeps: int = 100_000, beta0=None):
    """Minimize ``||y - X b||^2 / (2n) + lam ||b||_1`` by cyclic coordinate descent.

    Works on the Gram matrix, alternating a full sweep (which may change the
    active set) with sweeps over the current active set until the largest
    coefficient change falls below ``tol``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if not lam > 0:
        raise ConfigError(f"lam must be positive, got {lam}")
    n, p = X.shape
    G = X.T @ X / n
    diag = np.diag(G).copy()
    if np.any(diag <= 0):
        raise RankError("design has an all-zero column")
    beta = np.zeros(p) if beta0 is None else np.array(beta0, dtype=float)
    grad = X.T @ y / n - G @ beta  # x_j'(y - X b) / n

    def sweep(idx):
        biggest = 0.0
        for j in idx:
            bj = beta[j]
            new = _soft(grad[j] + diag[j] * bj, lam) / diag[j]
            d = new - bj
            if d != 0.0:
                beta[j] = new
                grad[:] -= G[:, j] * d
                biggest = max(biggest, abs(d))
        return biggest

    everything = range(p)
    for _ in range(max_sweeps):
        change = sweep(everything)
        if change < tol:
            return beta
        active = np.flatnonzero(beta).tolist()
        for _ in range(max_sweeps):
            if sweep(active) < tol:
                break
    raise ConvergenceError(f"coordinate descent did not converge in {max_sweeps} sweeps")


def lasso_select(X, y, lam, beta=None) -> SelectionOutcome:
    X = np.asarray(X, dtype=float)
    if beta is None:
        beta = lasso_fit(X, y, lam)
    M = np.flatnonzero(beta)
    signs = np.sign(beta[M])
    return SelectionOutcome(M=M, signs=signs, eta=contrast_rows(X, M))


def lasso_event(X, y, lam, outcome: SelectionOutcome) -> PolyhedralEvent:
    """Selection-and-sign event of the fixed-penalty Lasso.

    Active block (``M``, signs ``s``):
    ``-diag(s) (X_M'X_M)^{-1} X_M' y <= -n lam diag(s) (X_M'X_M)^{-1} s``.
    Inactive block: ``+-X_{-M}'(I - P_M) y <= n lam (1 -+ X_{-M}' X_M (X_M'X_M)^{-1} s)``.
    """
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    M, s = outcome.M, outcome.signs
    inactive = np.setdiff1d(np.arange(p), M)
    nl = n * lam
    if M.size == 0:
        Xi = X
        A = np.vstack([Xi.T, -Xi.T])
        b = np.full(2 * p, nl)
        return PolyhedralEvent(A, b)
    XM = X[:, M]
    gram_inv = np.linalg.inv(XM.T @ XM)
    pinv = gram_inv @ XM.T
    A1 = -np.diag(s) @ pinv
    b1 = -nl * np.diag(s) @ gram_inv @ s
    if inactive.size == 0:
        return PolyhedralEvent(A1, b1)
    Xi = X[:, inactive]
    resid_proj = np.eye(n) - XM @ pinv
    A0 = Xi.T @ resid_proj
    irrep = Xi.T @ pinv.T @ s
    A = np.vstack([A1, A0, -A0])
    b = np.concatenate([b1, nl * (1 - irrep), nl * (1 + irrep)])
    return PolyhedralEvent(A, b)


# ---------------------------------------------------------------------------
# marginal screening

def marginal_screen(X, y, k):
    """Top-``k`` features by ``|x_j' y|`` (ties to the lowest index) and their signs."""
    X = np.asarray(X, dtype=float)
    p = X.shape[1]
    if not 1 <= k <= p:
        raise ConfigError(f"need 1 <= k <= p={p}, got k={k}")
    score = X.T @ np.asarray(y, dtype=float)
    order = np.lexsort((np.arange(p), -np.abs(score)))
    M = np.sort(order[:k])
    signs = np.where(score[M] >= 0, 1.0, -1.0)
    return M, signs


def marginal_screen_event(X, y, k):
    """Outcome and event for top-``k`` marginal screening.

    For each selected ``j`` with sign ``s_j`` and each unselected ``l`` the
    event requires ``+-x_l' y <= s_j x_j' y``; sign rows ``-s_j x_j' y <= 0``
    are always included (they matter when ``k = p``).
    """
    X = np.asarray(X, dtype=float)
    p = X.shape[1]
    M, signs = marginal_screen(X, y, k)
    unselected = np.setdiff1d(np.arange(p), M)
    rows = [-(signs[:, None] * X[:, M].T)]
    if unselected.size:
        sx = signs[:, None] * X[:, M].T  # k x n
        xl = X[:, unselected].T  # (p-k) x n
        plus = (xl[None, :, :] - sx[:, None, :]).reshape(-1, X.shape[0])
        minus = (-xl[None, :, :] - sx[:, None, :]).reshape(-1, X.shape[0])
        rows += [plus, minus]
    A = np.vstack(rows)
    event = PolyhedralEvent(A, np.zeros(A.shape[0]))
    outcome = SelectionOutcome(M=M, signs=signs, eta=contrast_rows(X, M))
    return outcome, event


# ---------------------------------------------------------------------------
# sample means

def sample_mean_event(n: int, p: int, threshold: float = 1.0, selected=None) -> PolyhedralEvent:
    """Event ``{mean(y_j) > threshold}`` for ``p`` coordinates of ``n`` draws each.

    ``y`` is stacked coordinate by coordinate (entries ``j*n .. j*n+n-1``
    belong to coordinate ``j``). Row ``j`` holds ``-1/n`` on its block and
    ``b_j = -threshold``. Coordinates flagged ``False`` in ``selected`` get the
    reversed constraint ``mean(y_j) <= threshold``.
    """
    if n < 1 or p < 1:
        raise ConfigError("n and p must be >= 1")
    A = np.zeros((p, n * p))
    for j in range(p):
        A[j, j * n:(j + 1) * n] = -1.0 / n
    b = np.full(p, -float(threshold))
    if selected is not None:
        flip = ~np.asarray(selected, dtype=bool)
        A[flip] *= -1
        b[flip] *= -1
    return PolyhedralEvent(A, b)


# ---------------------------------------------------------------------------
# polyhedral lemma

def truncation_bounds(event: PolyhedralEvent, eta, sigma2: float, y) -> TruncationBounds:
    """Interval ``[V-, V+]`` for ``eta' y`` given the event, holding the
    component of ``y`` orthogonal to ``eta`` fixed (covariance ``sigma2 I``).
    """
    eta = np.asarray(eta, dtype=float)
    y = np.asarray(y, dtype=float)
    nn = float(eta @ eta)
    if not nn > 0:
        raise ConfigError("eta must be nonzero")
    c = (sigma2 * eta) / (sigma2 * nn)
    t = float(eta @ y)
    z = y - c * t
    Ac = event.A @ c
    resid = event.b - event.A @ z
    scale = np.max(np.abs(event.A), axis=1) * np.max(np.abs(c)) if c.size else np.ones_like(Ac)
    tiny = np.abs(Ac) <= 1e-14 * np.maximum(scale, 1e-300)
    neg = (Ac < 0) & ~tiny
    pos = (Ac > 0) & ~tiny
    v_minus = float(np.max(resid[neg] / Ac[neg])) if np.any(neg) else -math.inf
    v_plus = float(np.min(resid[pos] / Ac[pos])) if np.any(pos) else math.inf
    if not v_minus < v_plus:
        raise ConsistencyError(f"inverted truncation bounds V-={v_minus:.6g} >= V+={v_plus:.6g}")
    slop = 1e-7 * max(1.0, abs(t))
    if t < v_minus - slop or t > v_plus + slop:
        raise ConsistencyError(f"eta'y={t:.6g} lies outside [{v_minus:.6g}, {v_plus:.6g}]; y is not in the event")
    return TruncationBounds(v_minus, v_plus)
