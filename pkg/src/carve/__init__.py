"""Exact post-selection inference by data carving.

The carving estimator averages a truncated-normal estimate from the rows
used for selection with an ordinary estimate from held-out rows; its law is
the SNTN distribution (sum of a normal and a truncated normal), whose CDF
reduces to two bivariate normal CDFs.
"""

from __future__ import annotations

from .bvn import BvnMethod, BvnQuery, bvn_cdf, owens_t
from .dists import (tnorm_cdf, tnorm_ci, tnorm_pdf, tnorm_ppf, tnorm_pvalue, tnorm_rvs, tnorm_sf)
from .errors import (BracketError, CarveError, ConfigError, ConsistencyError, ConvergenceError, DomainError,
                     IngestionError, RankError, TruncationMassError)
from .inference import (CarveConfig, CarveResult, DataSplit, analyze, carve_inference, naive_ols_inference,
                        posi_inference, split_data, split_inference)
from .rootfind import RootProblem, solve_batch, solve_root
from .selection import (PolyhedralEvent, SelectionOutcome, TruncationBounds, lasso_event, lasso_fit,
                        marginal_screen_event, sample_mean_event, truncation_bounds)
from .sntn import SntnInputs, canonicalize, sntn_cdf, sntn_ci, sntn_pdf, sntn_ppf, sntn_pvalue, sntn_sf

__version__ = "0.1.0"
