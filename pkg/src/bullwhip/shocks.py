"""Stochastic demand, destination shifters, and shift-share industry shocks.

Demand per destination follows a stationary AR(1) around a steady level,
with innovations equicorrelated across destinations.  Draws are keyed by
(seed, path, destination) so that changing the network, the inventory rule,
or the correlation parameter never consumes anyone else's randomness; paired
counterfactuals therefore see literally identical demand histories.
"""

from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass

import numpy as np

from bullwhip.metrics import (
    OmegaParams,
    exposure_shares,
    upstreamness,
    weighted_shock,
)
from bullwhip.tables import NetworkModel, Sector

_MASK64 = (1 << 64) - 1
_REDRAW_BIT = 1 << 62
# A path that cannot produce positive demand in this many redraws of one
# innovation column has a badly scaled process; give up loudly.
MAX_REDRAWS = 1000


def substream(seed: int, word: int) -> np.random.Generator:
    """Independent counter-based stream for one (seed, word) pair."""
    # int() guards against numpy integers, whose & would overflow on the mask
    key = np.array([int(seed) & _MASK64, int(word) & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class DemandProcess:
    """AR(1) demand levels per destination.

    ``varrho`` is the common pairwise correlation of innovations across
    destinations; it must exceed ``-1/(J-1)`` for the covariance to be
    positive definite and may equal 1 (a single common factor).
    """

    dbar: np.ndarray
    rho: float
    sigma: np.ndarray
    varrho: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        dbar = np.array(self.dbar, dtype=float)
        sigma = np.array(self.sigma, dtype=float)
        dbar.setflags(write=False)
        sigma.setflags(write=False)
        object.__setattr__(self, "dbar", dbar)
        object.__setattr__(self, "sigma", sigma)
        if dbar.ndim != 1 or np.any(dbar <= 0):
            raise ValueError("dbar must be a vector of positive levels")
        if sigma.shape != dbar.shape or np.any(sigma < 0):
            raise ValueError("sigma must match dbar and be nonnegative")
        if not 0.0 <= self.rho < 1.0:
            raise ValueError("rho must lie in [0, 1) for a stationary process")
        j = dbar.size
        lo = -1.0 / (j - 1) if j > 1 else 0.0
        if j > 1 and not lo < self.varrho <= 1.0:
            raise ValueError(f"varrho must lie in ({lo}, 1], got {self.varrho}")

    @property
    def n_destinations(self) -> int:
        return self.dbar.size


def build_covariance(sigma: np.ndarray, varrho: float) -> np.ndarray:
    """Equicorrelated innovation covariance: ``varrho * sigma_j * sigma_k``
    off the diagonal, ``sigma_j**2`` on it."""
    sigma = np.asarray(sigma, dtype=float)
    j = sigma.size
    if j > 1 and not -1.0 / (j - 1) <= varrho <= 1.0:
        raise ValueError(f"varrho={varrho} is not a valid equicorrelation for J={j}")
    cov = varrho * np.outer(sigma, sigma)
    np.fill_diagonal(cov, sigma**2)
    return cov


def _mixer(j: int, varrho: float) -> np.ndarray | None:
    """Cholesky factor of the equicorrelation matrix; None means the
    degenerate common-factor case ``varrho == 1``."""
    if j == 1:
        return np.ones((1, 1))
    if varrho == 1.0:
        return None
    corr = np.full((j, j), varrho)
    np.fill_diagonal(corr, 1.0)
    return np.linalg.cholesky(corr)


def _correlate(z: np.ndarray, mixer: np.ndarray | None, sigma: np.ndarray) -> np.ndarray:
    if mixer is None:
        return sigma[None, :] * z[:, [0]]
    return (z @ mixer.T) * sigma[None, :]


def draw_demand(process: DemandProcess, T: int, n_paths: int) -> np.ndarray:
    """Simulate demand levels, shape ``(n_paths, J, T)``.

    Paths start at the steady level.  Whenever a step would push any
    destination's demand to zero or below, the whole innovation column for
    that period is redrawn (preserving cross-destination correlation); the
    total number of redraws is reported through a warning.
    """
    if T < 1:
        raise ValueError("T must be at least 1")
    j = process.n_destinations
    mixer = _mixer(j, process.varrho)
    z = np.empty((n_paths, j, max(T - 1, 0)))
    for p in range(n_paths):
        for d in range(j):
            z[p, d, :] = substream(process.seed, (p << 32) | d).standard_normal(T - 1)

    demand = np.empty((n_paths, j, T))
    demand[:, :, 0] = process.dbar
    redraw_gens: dict[tuple[int, int], np.random.Generator] = {}

    def fresh_column(p: int) -> np.ndarray:
        col = np.empty(j)
        for d in range(j):
            gen = redraw_gens.get((p, d))
            if gen is None:
                gen = substream(process.seed, _REDRAW_BIT | (p << 32) | d)
                redraw_gens[(p, d)] = gen
            col[d] = gen.standard_normal()
        return col

    total_redraws = 0
    pull = (1.0 - process.rho) * process.dbar
    for t in range(1, T):
        u = _correlate(z[:, :, t - 1], mixer, process.sigma)
        cand = pull[None, :] + process.rho * demand[:, :, t - 1] + u
        for p in np.flatnonzero((cand <= 0.0).any(axis=1)):
            for _ in range(MAX_REDRAWS):
                u_p = _correlate(fresh_column(p)[None, :], mixer, process.sigma)[0]
                cand[p] = pull + process.rho * demand[p, :, t - 1] + u_p
                total_redraws += 1
                if np.all(cand[p] > 0.0):
                    break
            else:
                raise RuntimeError(
                    f"path {p}, period {t}: could not draw positive demand in "
                    f"{MAX_REDRAWS} redraws; sigma is too large for dbar"
                )
        demand[:, :, t] = cand
    if total_redraws:
        warnings.warn(
            f"redrew {total_redraws} innovation column(s) to keep demand positive",
            stacklevel=2,
        )
    return demand


@dataclass(frozen=True)
class ShockPanel:
    """Demand levels and per-destination growth shocks for a batch of paths.

    ``eta[p, d, t]`` is the growth shock between periods ``t`` and ``t + 1``
    of path ``p``; arithmetic growth by default, log growth on request.
    """

    demand: np.ndarray  # (P, J, T)
    eta: np.ndarray  # (P, J, T-1)
    growth: str = "arithmetic"

    @classmethod
    def from_demand(cls, demand: np.ndarray, growth: str = "arithmetic") -> "ShockPanel":
        demand = np.asarray(demand, dtype=float)
        if growth == "arithmetic":
            eta = demand[:, :, 1:] / demand[:, :, :-1] - 1.0
        elif growth == "log":
            eta = np.log(demand[:, :, 1:]) - np.log(demand[:, :, :-1])
        else:
            raise ValueError(f"unknown growth convention {growth!r}")
        return cls(demand=demand, eta=eta, growth=growth)

    @classmethod
    def from_process(
        cls,
        process: DemandProcess,
        T: int,
        n_paths: int,
        growth: str = "arithmetic",
    ) -> "ShockPanel":
        return cls.from_demand(draw_demand(process, T, n_paths), growth)

    @property
    def n_paths(self) -> int:
        return self.demand.shape[0]

    def industry(self, model: NetworkModel) -> np.ndarray:
        """Exposure-weighted industry shocks, shape ``(P, N, T-1)``."""
        xi = exposure_shares(model)
        return np.einsum("nj,pjt->pnt", xi, self.eta)

    def weighted(self, model: NetworkModel, params: OmegaParams) -> np.ndarray:
        """Position-weighted shocks (inventory-adjusted), shape ``(P, N, T-1)``."""
        p, j, t1 = self.eta.shape
        flat = np.moveaxis(self.eta, 1, 0).reshape(j, p * t1)
        out = weighted_shock(model, params, flat)
        return np.moveaxis(out.reshape(-1, p, t1), 0, 1)


@dataclass(frozen=True)
class ConsumptionPanel:
    """Log final-consumption flows by sector, destination, and period."""

    sectors: tuple[Sector, ...]
    destinations: tuple[str, ...]
    log_flows: np.ndarray  # (N, J, T)

    def __post_init__(self) -> None:
        lf = np.array(self.log_flows, dtype=float)
        lf.setflags(write=False)
        object.__setattr__(self, "log_flows", lf)
        n, j = len(self.sectors), len(self.destinations)
        if lf.ndim != 3 or lf.shape[:2] != (n, j):
            raise ValueError(f"log_flows must be ({n}, {j}, T), got {lf.shape}")

    def growth(self) -> np.ndarray:
        """Log growth of flows, shape ``(N, J, T-1)``."""
        return np.diff(self.log_flows, axis=2)


def synthesize_consumption_panel(
    eta: np.ndarray,
    n_countries: int,
    n_industries: int,
    noise_sigma: float = 0.02,
    seed: int = 0,
) -> ConsumptionPanel:
    """Consumption flows whose log growth is a destination shifter plus noise.

    ``eta`` has shape ``(J, T-1)`` and holds the true shifters.  Sectors are
    laid out on a country-by-industry grid so leave-out estimation has donors
    on both margins.
    """
    eta = np.asarray(eta, dtype=float)
    if eta.ndim != 2:
        raise ValueError("eta must be (J, T-1)")
    if n_countries < 2 or n_industries < 2:
        raise ValueError("need at least two countries and two industries")
    j, t1 = eta.shape
    n = n_countries * n_industries
    rng = substream(seed, 0)
    base = np.log(rng.uniform(0.5, 2.0, size=(n, j)))
    noise = rng.normal(0.0, noise_sigma, size=(n, j, t1))
    log_flows = np.empty((n, j, t1 + 1))
    log_flows[:, :, 0] = base
    log_flows[:, :, 1:] = base[:, :, None] + np.cumsum(eta[None, :, :] + noise, axis=2)
    sectors = tuple(
        Sector(f"c{c + 1}_i{i + 1}", f"c{c + 1}", f"i{i + 1}")
        for c in range(n_countries)
        for i in range(n_industries)
    )
    destinations = tuple(f"dest_{d + 1}" for d in range(j))
    return ConsumptionPanel(sectors=sectors, destinations=destinations, log_flows=log_flows)


def estimate_shifters(panel: ConsumptionPanel) -> np.ndarray:
    """Leave-out destination shifters, shape ``(N, J, T-1)``.

    The estimate for sector ``i`` averages consumption growth over donor
    sectors sharing neither ``i``'s country nor its industry, so it is exactly
    invariant to anything that happens to ``i``'s own flows (or to flows of
    sectors on either of its margins).
    """
    growth = panel.growth()
    countries = np.array([s.country for s in panel.sectors])
    industries = np.array([s.industry for s in panel.sectors])
    n = len(panel.sectors)
    out = np.empty_like(growth)
    for i in range(n):
        donors = (countries != countries[i]) & (industries != industries[i])
        if not donors.any():
            raise ValueError(
                f"sector {panel.sectors[i].sector_id!r} has no leave-out donors"
            )
        out[i] = growth[donors].mean(axis=0)
    return out


def shift_share(xi: np.ndarray, eta_hat: np.ndarray) -> np.ndarray:
    """Exposure-weighted shifters per sector, shape ``(N, T-1)``.

    ``xi`` holds base-period exposure shares (N, J); ``eta_hat`` may be common
    across sectors (J, T-1) or sector-specific (N, J, T-1).
    """
    xi = np.asarray(xi, dtype=float)
    eta_hat = np.asarray(eta_hat, dtype=float)
    if eta_hat.ndim == 2:
        return xi @ eta_hat
    return np.einsum("nj,njt->nt", xi, eta_hat)


@dataclass(frozen=True)
class CalibrationResult:
    varrho: float
    slope: float
    target: float
    iterations: int


def industry_volatility_slope(
    model: NetworkModel,
    process: DemandProcess,
    T: int,
    n_paths: int,
    cross_sectional: bool = False,
) -> float:
    """Slope of per-sector industry-shock volatility on upstreamness.

    Default pools every (path, period) observation per sector; the
    cross-sectional variant measures dispersion across paths period by period
    and averages.
    """
    panel = ShockPanel.from_process(process, T, n_paths)
    eta_ind = panel.industry(model)  # (P, N, T-1)
    if cross_sectional:
        sd = eta_ind.std(axis=0, ddof=1).mean(axis=1)
    else:
        pooled = np.moveaxis(eta_ind, 1, 0).reshape(eta_ind.shape[1], -1)
        sd = pooled.std(axis=1, ddof=1)
    u = upstreamness(model)
    keep = np.isfinite(sd) & np.isfinite(u)
    uc = u[keep] - u[keep].mean()
    denom = float(uc @ uc)
    if denom == 0.0:
        raise ValueError("upstreamness has no variation; slope is undefined")
    return float(uc @ sd[keep]) / denom


def calibrate_varrho(
    model: NetworkModel,
    process: DemandProcess,
    target_slope: float,
    T: int = 100,
    n_paths: int = 200,
    tol: float = 5e-4,
    max_iter: int = 30,
    cross_sectional: bool = False,
) -> CalibrationResult:
    """Bisect the innovation correlation to hit a volatility-upstreamness slope.

    Every evaluation reuses the same seed, so the objective is a deterministic
    function of ``varrho`` and bisection is well posed.  Raises if the target
    is not bracketed on [0, 0.99].
    """

    def f(varrho: float) -> float:
        p = dataclasses.replace(process, varrho=varrho)
        return industry_volatility_slope(model, p, T, n_paths, cross_sectional)

    lo, hi = 0.0, 0.99
    f_lo, f_hi = f(lo) - target_slope, f(hi) - target_slope
    for point, value in ((lo, f_lo), (hi, f_hi)):
        if abs(value) < tol:
            return CalibrationResult(point, value + target_slope, target_slope, 0)
    if np.sign(f_lo) == np.sign(f_hi):
        raise ValueError(
            f"target slope {target_slope} not bracketed: "
            f"slope({lo})={f_lo + target_slope:.6f}, slope({hi})={f_hi + target_slope:.6f}"
        )
    mid, f_mid = lo, f_lo
    for it in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        f_mid = f(mid) - target_slope
        if abs(f_mid) < tol:
            return CalibrationResult(mid, f_mid + target_slope, target_slope, it)
        if np.sign(f_mid) == np.sign(f_lo):
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
    warnings.warn(
        f"calibration stopped after {max_iter} iterations with "
        f"|slope - target| = {abs(f_mid):.2e}",
        stacklevel=2,
    )
    return CalibrationResult(mid, f_mid + target_slope, target_slope, max_iter)
