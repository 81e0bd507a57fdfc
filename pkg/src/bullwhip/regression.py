"""Regressions run on simulated panels.

Long-form pandas frames go in, coefficient bundles come out.  The
specifications mirror what the rest of the package produces: growth rates
regressed on demand shocks, on shocks interacted with position bins, on the
model-implied shock pair (direct exposure plus the inventory-weighted
combination), and on the full triple-interaction design.  Only naive
homoskedastic standard errors are reported; coefficients, not inference,
are the objects the simulations pin down.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
import pandas as pd
import scipy.linalg

__all__ = [
    "BinnedResult",
    "ModelConsistentResult",
    "RankError",
    "RegressionResult",
    "binned_regression",
    "demean",
    "model_consistent_regression",
    "ols",
    "saturated_regression",
]

#: multiple of machine epsilon below which a pivoted-QR diagonal entry is
#: treated as numerically zero (rank detection).
RANK_RTOL = 1e-10

#: tolerance for the normal-equations orthogonality check.
ORTHOGONALITY_TOL = 1e-8


class RankError(ValueError):
    """Design matrix is rank deficient; carries the offending column names."""

    def __init__(self, columns: Sequence[str]):
        self.columns = tuple(columns)
        super().__init__(
            "design matrix is rank deficient; collinear columns: "
            + ", ".join(self.columns)
        )


@dataclass(frozen=True)
class RegressionResult:
    """OLS fit: coefficients, naive SEs, residual variance, R², n."""

    names: tuple[str, ...]
    coef: np.ndarray
    se: np.ndarray
    resid_var: float
    r2: float
    nobs: int

    def __getitem__(self, name: str) -> float:
        return float(self.coef[self.names.index(name)])


def demean(
    panel: pd.DataFrame,
    columns: Sequence[str],
    by: Union[str, Sequence[str]],
) -> pd.DataFrame:
    """Within transformation: subtract group means of ``columns`` over ``by``.

    Idempotent, and the transformed columns have group means of exactly
    zero up to accumulation error.  Rows in singleton groups carry no
    within variation and come back as zeros; a warning counts them.
    """
    keys = [by] if isinstance(by, str) else list(by)
    missing = [k for k in keys if k not in panel.columns]
    if missing:
        raise KeyError(f"fixed-effect keys not in panel: {missing}")
    cols = list(columns)
    out = panel.copy()
    grouped = out.groupby(keys, sort=False)
    out[cols] = out[cols] - grouped[cols].transform("mean")
    n_single = int((grouped.size() == 1).sum())
    if n_single:
        warnings.warn(
            f"{n_single} singleton group(s) were zeroed by demeaning",
            UserWarning,
            stacklevel=2,
        )
    return out


def ols(
    y: np.ndarray,
    X: np.ndarray,
    names: Sequence[str] | None = None,
) -> RegressionResult:
    """Least squares via pivoted QR.

    Raises :class:`RankError` naming the dependent columns when the design
    is rank deficient.  After solving, the normal-equations orthogonality
    ``max |X'e|`` is verified against a scaled tolerance; a violation means
    the solve itself went numerically wrong and raises ``RuntimeError``.
    """
    y = np.asarray(y, dtype=float).ravel()
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, k = X.shape
    if y.shape[0] != n:
        raise ValueError(f"y has {y.shape[0]} rows, X has {n}")
    if n <= k:
        raise ValueError(f"need more observations ({n}) than regressors ({k})")
    if names is None:
        names = tuple(f"x{j}" for j in range(k))
    else:
        names = tuple(names)
        if len(names) != k:
            raise ValueError("one name per column required")

    q, r, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = max(n, k) * np.finfo(float).eps * (diag[0] if diag.size else 0.0)
    tol = max(tol, RANK_RTOL * (diag[0] if diag.size else 0.0))
    rank = int((diag > tol).sum())
    if rank < k:
        raise RankError([names[j] for j in piv[rank:]])

    beta_piv = scipy.linalg.solve_triangular(r, q.T @ y)
    beta = np.empty(k)
    beta[piv] = beta_piv

    resid = y - X @ beta
    ssr = float(resid @ resid)
    resid_var = ssr / (n - k)

    # (X'X)^-1 = R^-1 R^-T in pivoted order.
    r_inv = scipy.linalg.solve_triangular(r, np.eye(k))
    xtx_inv_piv = r_inv @ r_inv.T
    se = np.empty(k)
    se[piv] = np.sqrt(resid_var * np.diag(xtx_inv_piv))

    sst = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ssr / sst if sst > 0 else (1.0 if ssr == 0 else 0.0)

    gradient = np.abs(X.T @ resid).max()
    scale = max(1.0, float(np.abs(X.T @ y).max()))
    if gradient > ORTHOGONALITY_TOL * scale:
        raise RuntimeError(
            f"normal equations violated: max |X'e| = {gradient:.3e} "
            f"exceeds {ORTHOGONALITY_TOL:.0e} * {scale:.3e}"
        )

    return RegressionResult(
        names=names,
        coef=beta,
        se=se,
        resid_var=resid_var,
        r2=r2,
        nobs=n,
    )


@dataclass(frozen=True)
class BinnedResult:
    """Per-bin shock loadings from :func:`binned_regression`."""

    intervals: tuple[tuple[float, float], ...]
    coef: np.ndarray
    counts: tuple[int, ...]
    result: RegressionResult

    def labels(self) -> tuple[str, ...]:
        out = []
        for lo, hi in self.intervals:
            top = "inf" if np.isinf(hi) else f"{hi:g}"
            out.append(f"[{lo:g},{top})")
        return tuple(out)


def _merge_empty_bins(
    intervals: list[list[float]], counts: list[int]
) -> tuple[list[list[float]], list[int]]:
    # Merge each empty interval into its upper neighbour; an empty top
    # interval folds downward instead.
    merged_any = False
    while True:
        try:
            j = counts.index(0)
        except ValueError:
            break
        merged_any = True
        if j + 1 < len(intervals):
            intervals[j + 1][0] = intervals[j][0]
            counts[j + 1] += counts[j]
        else:
            intervals[j - 1][1] = intervals[j][1]
            counts[j - 1] += counts[j]
        del intervals[j], counts[j]
    if merged_any:
        warnings.warn("empty position bins were merged", UserWarning, stacklevel=3)
    return intervals, counts


def binned_regression(
    panel: pd.DataFrame,
    *,
    outcome: str = "growth",
    shock: str = "eta",
    position: str = "upstreamness",
    unit: str = "sector_id",
    edges: Sequence[float] = (1.0, 2.0, 3.0, 4.0, 5.0, 6.0),
) -> BinnedResult:
    """Regress growth on the shock interacted with position bins.

    Bins are left-closed intervals between consecutive ``edges`` with the
    top bin open-ended, and the outcome and every interaction column are
    demeaned by ``unit`` before the fit (within estimator).  Empty bins
    merge upward with a warning rather than failing.
    """
    if len(edges) < 2:
        raise ValueError("need at least two bin edges")
    edges = sorted(float(e) for e in edges)
    u = panel[position].to_numpy(dtype=float)
    if np.any(u < edges[0]):
        raise ValueError(
            f"position values below the first bin edge {edges[0]:g}; "
            "lower the edges to cover the data"
        )

    intervals = [[edges[i], edges[i + 1]] for i in range(len(edges) - 1)]
    intervals.append([edges[-1], np.inf])
    counts = [int(((u >= lo) & (u < hi)).sum()) for lo, hi in intervals]
    intervals, counts = _merge_empty_bins(intervals, counts)

    work = panel[[unit, outcome, shock]].copy()
    inter_cols = []
    for lo, hi in intervals:
        col = f"{shock}_bin_{lo:g}"
        mask = (u >= lo) & (u < hi)
        work[col] = work[shock].to_numpy() * mask
        inter_cols.append(col)

    within = demean(work, [outcome] + inter_cols, by=unit)
    fit = ols(
        within[outcome].to_numpy(),
        within[inter_cols].to_numpy(),
        names=inter_cols,
    )
    return BinnedResult(
        intervals=tuple((lo, hi) for lo, hi in intervals),
        coef=fit.coef,
        counts=tuple(counts),
        result=fit,
    )


@dataclass(frozen=True)
class ModelConsistentResult:
    """The (delta1, delta2) pair and the implied alpha*rho product."""

    delta1: float
    delta2: float
    implied_alpha_rho: float
    scaled_by_alpha: bool
    result: RegressionResult


def model_consistent_regression(
    panel: pd.DataFrame,
    *,
    outcome: str = "growth",
    shock: str = "eta_hat",
    inventory: str = "upsilon",
    alpha: Union[str, float] = "alpha",
    scale_by_alpha: bool = True,
    include_const: bool = True,
) -> ModelConsistentResult:
    """Fit growth on the direct shock and the inventory-weighted shock.

    With ``scale_by_alpha`` the second regressor is ``alpha * upsilon`` as
    displayed, so on exact model data ``delta2`` recovers the demand
    persistence and ``delta2 * alpha`` the amplification product; without
    it the regressor is ``upsilon`` alone and ``delta2`` is the product
    directly.  Both the raw pair and the implied product are reported.

    ``alpha`` may be a column name or a scalar applied to every row.
    All-zero alpha leaves the inventory loading unidentified and raises;
    so does collinearity between the two shock columns, which typically
    means the panel was simulated with a single destination.
    """
    eta = panel[shock].to_numpy(dtype=float)
    ups = panel[inventory].to_numpy(dtype=float)
    if isinstance(alpha, str):
        a = panel[alpha].to_numpy(dtype=float)
    else:
        a = np.full(eta.shape, float(alpha))
    if np.all(a == 0):
        raise ValueError(
            "alpha is zero on every row; the inventory regressor vanishes "
            "and delta2 is unidentified"
        )

    second = a * ups if scale_by_alpha else ups
    cols = [eta, second]
    names = [shock, f"alpha_x_{inventory}" if scale_by_alpha else inventory]
    if include_const:
        cols.insert(0, np.ones_like(eta))
        names.insert(0, "const")
    try:
        fit = ols(panel[outcome].to_numpy(dtype=float), np.column_stack(cols), names)
    except RankError as exc:
        raise ValueError(
            "direct and inventory-weighted shocks are collinear "
            f"({', '.join(exc.columns)}); single-destination panels cannot "
            "separate them, simulate with multiple destinations"
        ) from exc

    delta1 = fit[shock]
    delta2 = fit[names[-1]]
    mean_alpha = float(a.mean())
    implied = delta2 * mean_alpha if scale_by_alpha else delta2
    return ModelConsistentResult(
        delta1=delta1,
        delta2=delta2,
        implied_alpha_rho=implied,
        scaled_by_alpha=scale_by_alpha,
        result=fit,
    )


def saturated_regression(
    panel: pd.DataFrame,
    *,
    outcome: str = "growth",
    shock: str = "eta_hat",
    position: str = "upstreamness",
    alpha: str = "alpha",
    include_const: bool = True,
) -> RegressionResult:
    """Full interaction design: shock, shock*U, shock*alpha, shock*U*alpha.

    Identification needs genuine cross-sectional variation in alpha; with a
    homogeneous alpha the alpha interactions are scalar multiples of the
    first two columns and the rank check trips.
    """
    eta = panel[shock].to_numpy(dtype=float)
    u = panel[position].to_numpy(dtype=float)
    a = panel[alpha].to_numpy(dtype=float)
    cols = [eta, eta * u, eta * a, eta * u * a]
    names = [shock, f"{shock}_x_U", f"{shock}_x_alpha", f"{shock}_x_U_x_alpha"]
    if include_const:
        cols.insert(0, np.ones_like(eta))
        names.insert(0, "const")
    try:
        return ols(panel[outcome].to_numpy(dtype=float), np.column_stack(cols), names)
    except RankError as exc:
        if np.ptp(a) == 0:
            raise RankError(exc.columns) from ValueError(
                "alpha is homogeneous, so the alpha interactions duplicate "
                "the base columns"
            )
        raise
