"""
Scalar root finding for monotone objectives.

Every quantile and confidence-interval computation in the package reduces to
finding ``x`` with ``f(x) = target`` for a continuous monotone ``f``. The
solver expands a symmetric bracket around a starting point, then runs a
secant iteration that falls back to bisection whenever a secant step would
leave the bracket or stops shrinking it fast enough.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import BracketError, ConfigError, ConvergenceError

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 200
MAX_DOUBLINGS = 60
HALF_WIDTH_FACTOR = 10.0


@dataclass(frozen=True)
class RootProblem:
    """Find ``x`` with ``objective(x) == target`` starting near ``x0``."""

    objective: Callable[[float], float]
    target: float
    x0: float = 0.0
    scale: float = 1.0
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER

    def __post_init__(self):
        if not self.tol > 0:
            raise ConfigError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ConfigError(f"max_iter must be >= 1, got {self.max_iter}")
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ConfigError(f"scale must be positive and finite, got {self.scale}")

    def solve(self) -> float:
        return solve_root(self.objective, self.target, self.x0, scale=self.scale,
                          tol=self.tol, max_iter=self.max_iter)


def _eval(g, x):
    v = float(g(x))
    if math.isnan(v):
        raise ConvergenceError(f"objective returned NaN at x={x!r}", best=x)
    return v


def find_bracket(g: Callable[[float], float], x0: float, g0: float, half_width: float):
    """Expand ``[x0 - w, x0 + w]`` geometrically until ``g`` changes sign.

    Returns ``(lo, hi, g_lo, g_hi)`` with ``g_lo * g_hi <= 0``. If both
    halves change sign (possible only for non-monotone ``g``) the half whose
    linearly interpolated root lies nearer ``x0`` wins.
    """
    w = half_width
    lo = hi = x0
    for _ in range(MAX_DOUBLINGS + 1):
        lo, hi = x0 - w, x0 + w
        g_lo, g_hi = _eval(g, lo), _eval(g, hi)
        left, right = g_lo * g0 <= 0, g0 * g_hi <= 0
        if left and right:
            # distance to the interpolated root is w |g0| / (|g0| + |g_end|)
            left = abs(g_lo) >= abs(g_hi)
            right = not left
        if left:
            return lo, x0, g_lo, g0
        if right:
            return x0, hi, g0, g_hi
        w *= 2.0
    raise BracketError(
        f"no sign change within {MAX_DOUBLINGS} doublings around x0={x0!r}",
        bracket=(lo, hi),
    )


def solve_root(
    objective: Callable[[float], float],
    target: float,
    x0: float = 0.0,
    *,
    scale: float = 1.0,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    bracket: tuple[float, float] | None = None,
) -> float:
    """Solve ``objective(x) = target`` for a monotone objective.

    Parameters
    ----------
    objective : callable
        Continuous, monotone (either direction) scalar function.
    target : float
        Value to hit.
    x0 : float
        Starting point; the initial bracket is ``x0 +/- 10 * scale``.
    scale : float
        Characteristic length of the problem.
    tol : float
        Convergence is declared when ``|objective(x) - target| <= tol``.
    max_iter : int
        Iteration cap for the secant/bisection phase.
    bracket : (float, float), optional
        Skip expansion and use this bracket directly (must straddle the root).

    Returns
    -------
    float
        A point whose residual does not exceed ``tol``.

    Raises
    ------
    BracketError
        If no sign change is found after 60 doublings of the half-width.
    ConvergenceError
        If ``max_iter`` is exhausted or the bracket collapses to machine
        precision with a residual above ``tol``. ``best`` holds the best iterate.
    """
    def g(x):
        return objective(x) - target

    if bracket is None:
        x0 = float(x0)
        g0 = _eval(g, x0)
        if abs(g0) <= tol:
            return x0
        a, b, ga, gb = find_bracket(g, x0, g0, HALF_WIDTH_FACTOR * scale)
    else:
        a, b = map(float, bracket)
        ga, gb = _eval(g, a), _eval(g, b)
        if ga * gb > 0:
            raise BracketError("supplied bracket does not straddle the root", bracket=(a, b))

    best_x, best_g = (a, ga) if abs(ga) <= abs(gb) else (b, gb)
    if abs(best_g) <= tol:
        return best_x

    # secant runs on the two most recent iterates; the bracket [a, b] always
    # keeps a sign change
    x_prev, g_prev = a, ga
    x_cur, g_cur = b, gb
    width_2_ago = width_1_ago = math.inf
    for _ in range(max_iter):
        width = abs(b - a)
        use_bisect = width > 0.5 * width_2_ago
        x_new = math.nan
        if not use_bisect and g_cur != g_prev:
            x_new = x_cur - g_cur * (x_cur - x_prev) / (g_cur - g_prev)
        lo_, hi_ = min(a, b), max(a, b)
        if use_bisect or not (lo_ < x_new < hi_):
            x_new = 0.5 * (a + b)
        width_2_ago, width_1_ago = width_1_ago, width

        g_new = _eval(g, x_new)
        # ties go to the later iterate, which sits in the tighter bracket
        if abs(g_new) <= abs(best_g):
            best_x, best_g = x_new, g_new
        if abs(g_new) <= tol:
            return x_new

        if ga * g_new <= 0:
            b, gb = x_new, g_new
        else:
            a, ga = x_new, g_new
        x_prev, g_prev, x_cur, g_cur = x_cur, g_cur, x_new, g_new

        if abs(b - a) <= 4 * np.finfo(float).eps * max(abs(a), abs(b), 1.0):
            raise ConvergenceError(
                f"bracket collapsed at x={best_x!r} with residual {abs(best_g):.3g} > tol={tol:.3g}",
                best=best_x, residual=abs(best_g),
            )
    raise ConvergenceError(
        f"max_iter={max_iter} exhausted; best residual {abs(best_g):.3g}",
        best=best_x, residual=abs(best_g),
    )


def bisect_root(objective, target, x0=0.0, *, scale=1.0, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """Plain bracketed bisection; the reference method for the root benchmark."""
    def g(x):
        return objective(x) - target

    x0 = float(x0)
    g0 = _eval(g, x0)
    if abs(g0) <= tol:
        return x0
    a, b, ga, gb = find_bracket(g, x0, g0, HALF_WIDTH_FACTOR * scale)
    for _ in range(max_iter):
        m = 0.5 * (a + b)
        gm = _eval(g, m)
        if abs(gm) <= tol:
            return m
        if ga * gm <= 0:
            b, gb = m, gm
        else:
            a, ga = m, gm
    m = 0.5 * (a + b)
    raise ConvergenceError("bisection did not converge", best=m, residual=abs(_eval(g, m)))


@dataclass
class BatchSolution:
    """Roots in input order; failed entries are NaN and listed in ``errors``."""

    roots: np.ndarray
    errors: dict[int, Exception]

    @property
    def ok(self) -> bool:
        return not self.errors


def _solve_one(problem: RootProblem):
    try:
        return problem.solve(), None
    except (BracketError, ConvergenceError) as exc:
        return math.nan, exc


def solve_batch(problems: Sequence[RootProblem], parallel: bool = False,
                max_workers: int | None = None) -> BatchSolution:
    """Solve many independent problems, collecting per-element failures.

    Results are merged in input order, so the parallel path returns exactly
    what the sequential path does.
    """
    if parallel and len(problems) > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            out = list(pool.map(_solve_one, problems))
    else:
        out = [_solve_one(p) for p in problems]
    roots = np.array([r for r, _ in out], dtype=float)
    errors = {i: e for i, (_, e) in enumerate(out) if e is not None}
    return BatchSolution(roots=roots, errors=errors)
