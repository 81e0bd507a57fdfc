"""Output dynamics under inventory rules, on chains and on full networks.

The chain simulator handles arbitrary (possibly nonlinear) stage-level
inventory rules under certainty-equivalent forecasting.  The network
propagator is the linear-rule closed form; it is exact period by period, not
an approximation, because a linear rule commutes with expectations.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from bullwhip.metrics import OmegaParams, exposure_shares, weighted_shock
from bullwhip.shocks import DemandProcess, build_covariance
from bullwhip.tables import NetworkModel, Sector

# A stage rule maps the forecast of next period's demand to the desired
# end-of-period stock; it must be vectorized over its argument.
InventoryFn = Callable[[np.ndarray], np.ndarray]


def linear_inventory(alpha: float) -> InventoryFn:
    """The benchmark rule: hold ``alpha`` times expected next-period demand."""

    def rule(x: np.ndarray) -> np.ndarray:
        return alpha * np.asarray(x, dtype=float)

    return rule


@dataclass
class ChainState:
    """Carried state of a supply chain between periods.

    ``prev_forecast[n]`` is stage ``n``'s one-step demand forecast from the
    previous period, which pins down the stock it is currently holding.
    """

    dbar: float
    rho: float
    inventory_fns: tuple[InventoryFn, ...]
    prev_forecast: np.ndarray  # (P, n_stages)

    @classmethod
    def steady(
        cls,
        dbar: float,
        rho: float,
        inventory_fns: Sequence[InventoryFn],
        n_paths: int = 1,
    ) -> "ChainState":
        fns = tuple(inventory_fns)
        return cls(
            dbar=float(dbar),
            rho=float(rho),
            inventory_fns=fns,
            prev_forecast=np.full((n_paths, len(fns)), float(dbar)),
        )

    def step(self, demand: np.ndarray) -> np.ndarray:
        """Advance one period; returns stage outputs, shape ``(P, n_stages)``.

        Each stage treats its customer's order stream as demand and forms
        forecasts by pushing the AR(1) forecast of final demand through the
        downstream stages' rules (certainty equivalence).  Stage 0 faces final
        demand directly.
        """
        n_stages = len(self.inventory_fns)
        paths = np.atleast_1d(np.asarray(demand, dtype=float))
        rk = self.rho ** np.arange(n_stages + 2)
        # m[p, k] = expected final demand k periods ahead on path p
        m = (1.0 - rk)[None, :] * self.dbar + rk[None, :] * paths[:, None]
        outputs = np.empty((paths.size, n_stages))
        new_prev = np.empty_like(self.prev_forecast)
        for n, fn in enumerate(self.inventory_fns):
            new_prev[:, n] = m[:, 1]
            outputs[:, n] = m[:, 0] + fn(m[:, 1]) - fn(self.prev_forecast[:, n])
            if n < n_stages - 1:
                fm = fn(m)
                upstream = m[:, 1:-1] + fm[:, 2:] - fm[:, 1:-1]
                m = np.concatenate([outputs[:, [n]], upstream], axis=1)
        self.prev_forecast = new_prev
        return outputs


def simulate_chain(
    demand: np.ndarray,
    dbar: float,
    rho: float,
    inventory_fns: Sequence[InventoryFn],
) -> np.ndarray:
    """Run a chain over demand paths.

    ``demand`` is ``(T,)`` or ``(P, T)``; the result adds a stage axis:
    ``(n_stages, T)`` or ``(P, n_stages, T)``.  Stage 0 sells to final demand
    and each higher stage supplies the one below it.  Paths start from the
    steady state.
    """
    demand = np.asarray(demand, dtype=float)
    squeeze = demand.ndim == 1
    paths = demand[None, :] if squeeze else demand
    n_paths, T = paths.shape
    state = ChainState.steady(dbar, rho, inventory_fns, n_paths)
    out = np.empty((n_paths, len(state.inventory_fns), T))
    for t in range(T):
        out[:, :, t] = state.step(paths[:, t])
    return out[0] if squeeze else out


@dataclass(frozen=True)
class AmplificationReport:
    """Stage-by-stage demand sensitivity of a chain at the steady state."""

    stage_slopes: np.ndarray  # I'_n at the steady forecast
    increments: np.ndarray  # added sensitivity from each stage
    profile: np.ndarray  # d output_n / d final demand
    amplifies: bool


def amplification_check(
    inventory_fns: Sequence[InventoryFn],
    rho: float,
    dbar: float,
    h: float = 1e-6,
) -> AmplificationReport:
    """Differentiate each stage rule at the steady state and build the
    sensitivity profile.

    Sensitivity grows stage over stage exactly when every rule responds
    positively to forecasts but less than ``1 / (1 - rho)``; outside that band
    a stage dampens or destabilizes the cascade.
    """
    step = h * max(1.0, abs(dbar))
    slopes = np.array(
        [float(fn(dbar + step) - fn(dbar - step)) / (2.0 * step) for fn in inventory_fns]
    )
    damp = 1.0 + (rho - 1.0) * slopes
    increments = rho * slopes * np.concatenate(([1.0], np.cumprod(damp[:-1])))
    profile = 1.0 + np.cumsum(increments)
    upper = np.inf if rho == 1.0 else 1.0 / (1.0 - rho)
    amplifies = bool(
        np.all(slopes >= 0.0) and np.any(slopes > 0.0) and np.all(slopes < upper)
    )
    return AmplificationReport(
        stage_slopes=slopes, increments=increments, profile=profile, amplifies=amplifies
    )


@dataclass(frozen=True)
class OutputPanel:
    """Sector outputs along simulated paths.

    ``growth`` is arithmetic period growth ``Y_t / Y_{t-1} - 1``; sectors
    with zero steady output carry NaN throughout.
    """

    outputs: np.ndarray  # (P, N, T)
    growth: np.ndarray  # (P, N, T-1)

    @classmethod
    def from_outputs(cls, outputs: np.ndarray) -> "OutputPanel":
        outputs = np.asarray(outputs, dtype=float)
        with np.errstate(invalid="ignore", divide="ignore"):
            growth = outputs[:, :, 1:] / outputs[:, :, :-1] - 1.0
        return cls(outputs=outputs, growth=growth)

    @property
    def n_paths(self) -> int:
        return self.outputs.shape[0]

    def volatility(self, burn: int = 0) -> np.ndarray:
        """Per-sector growth volatility pooled over paths and periods."""
        g = self.growth[:, :, burn:]
        pooled = np.moveaxis(g, 1, 0).reshape(g.shape[1], -1)
        return pooled.std(axis=1, ddof=1)


def _inventory_coefficients(model: NetworkModel, params: OmegaParams) -> np.ndarray:
    """The (N, J) matrix multiplying demand changes in the linear closed form.

    Equals ``alpha * rho * sum_n (sum_{i<=n} omega**i) A**n B``; evaluated by
    resolvent solves, with the boundary ``omega == 1`` handled by its limit.
    """
    n = model.n_sectors
    eye = np.eye(n)
    omega = params.omega
    ar = params.alpha * params.rho
    if ar == 0.0:
        return np.zeros((n, model.n_destinations))
    lu = lu_factor(eye - model.A)
    lb = lu_solve(lu, model.B)
    if omega == 1.0:
        return ar * lu_solve(lu, lb)
    rb = np.linalg.solve(eye - omega * model.A, model.B)
    return ar * (lb - omega * rb) / (1.0 - omega)


def network_output(
    model: NetworkModel, params: OmegaParams, demand: np.ndarray
) -> OutputPanel:
    """Propagate demand paths through the network under the linear rule.

    ``demand`` is ``(J, T)`` or ``(P, J, T)`` levels; the panel always carries
    a path axis.  Paths are assumed to start at their first column (use the
    steady level there for a steady-state start).  Output is exact: every
    sector's production equals final sales plus its customers' input
    purchases plus the change in stocks held against forecast orders.
    """
    demand = np.asarray(demand, dtype=float)
    d = demand[None, :, :] if demand.ndim == 2 else demand
    if d.shape[1] != model.n_destinations:
        raise ValueError(
            f"demand has {d.shape[1]} destinations, model has {model.n_destinations}"
        )
    n = model.n_sectors
    lb = np.linalg.solve(np.eye(n) - model.A, model.B)
    coef = _inventory_coefficients(model, params)
    base = np.einsum("nj,pjt->pnt", lb, d)
    delta = np.concatenate([np.zeros_like(d[:, :, :1]), np.diff(d, axis=2)], axis=2)
    outputs = base + np.einsum("nj,pjt->pnt", coef, delta)
    return OutputPanel.from_outputs(outputs)


def growth_approx(
    model: NetworkModel, params: OmegaParams, eta: np.ndarray
) -> np.ndarray:
    """Predicted output growth for one step from the steady state.

    Sums destination shocks weighted by exposure and by the position-dependent
    elasticity: ``sum_j xi * (1 + alpha * rho * ucal) * eta``.  Accepts
    ``eta`` of shape ``(J,)`` or ``(J, T)``.
    """
    xi = exposure_shares(model)
    direct = xi @ np.asarray(eta, dtype=float)
    ar = params.alpha * params.rho
    if ar == 0.0:
        return direct
    return direct + ar * weighted_shock(model, params, eta)


def analytic_variance(
    model: NetworkModel, params: OmegaParams, process: DemandProcess
) -> np.ndarray:
    """Variance of one-step output growth from the steady state, in closed form.

    The loading of sector ``r`` on destination ``j``'s growth shock is
    ``(1 + alpha * rho * ucal[r, j]) * xi[r, j]``; the variance is the full
    quadratic form in the growth-shock covariance, so correlated destinations
    are handled exactly.
    """
    from bullwhip.metrics import inventory_upstreamness

    xi = exposure_shares(model)
    ucal, _ = inventory_upstreamness(model, params)
    loading = (1.0 + params.alpha * params.rho * np.nan_to_num(ucal, nan=0.0)) * xi
    growth_cov = build_covariance(process.sigma / process.dbar, process.varrho)
    return np.einsum("nj,jk,nk->n", loading, growth_cov, loading)


def hetero_coefficients(
    model: NetworkModel, alpha: np.ndarray, rho: float, tol: float = 1e-12
) -> np.ndarray:
    """Demand-change loadings under sector-specific stock targets, shape (N, J).

    Accumulates the stage recursion until stage contributions fall below
    ``tol``; acyclic networks terminate exactly.  With a common ``alpha``
    this reproduces the homogeneous closed form.
    """
    alpha = np.asarray(alpha, dtype=float)
    n = model.n_sectors
    if alpha.shape != (n,):
        raise ValueError(f"alpha must be ({n},)")
    if np.any(alpha < 0) or np.any(alpha * (1.0 - rho) >= 1.0):
        raise ValueError("need 0 <= alpha < 1/(1-rho) for every sector")
    omega = 1.0 + alpha * (rho - 1.0)
    p = model.B.copy()
    q = rho * alpha[:, None] * model.B
    total = q.copy()
    # Stage contributions decay at least geometrically once A**n does.
    for _ in range(100_000):
        p = model.A @ p
        q = rho * alpha[:, None] * p + omega[:, None] * (model.A @ q)
        total += q
        if np.max(np.abs(q)) < tol and np.max(np.abs(p)) < tol:
            return total
    raise RuntimeError("stage recursion did not converge; check alpha and the network")


def hetero_output(
    model: NetworkModel, alpha: np.ndarray, rho: float, demand: np.ndarray
) -> OutputPanel:
    """Network propagation with sector-specific stock targets.

    Same conventions as :func:`network_output`; the panel always carries a
    path axis.
    """
    demand = np.asarray(demand, dtype=float)
    d = demand[None, :, :] if demand.ndim == 2 else demand
    n = model.n_sectors
    lb = np.linalg.solve(np.eye(n) - model.A, model.B)
    coef = hetero_coefficients(model, alpha, rho)
    base = np.einsum("nj,pjt->pnt", lb, d)
    delta = np.concatenate([np.zeros_like(d[:, :, :1]), np.diff(d, axis=2)], axis=2)
    outputs = base + np.einsum("nj,pjt->pnt", coef, delta)
    return OutputPanel.from_outputs(outputs)


def fragment(model: NetworkModel, sector: int | str) -> NetworkModel:
    """Split one production stage in two, leaving total requirements intact.

    The named sector keeps its sales but now buys a single composite input
    from a new pass-through sector, which inherits the original input recipe
    and sells nothing else.  Every original supplier of the split sector
    moves one stage further from final demand.  Splitting a sector with no
    intermediate inputs yields a degenerate zero-output pass-through and
    leaves everyone else untouched.
    """
    if isinstance(sector, str):
        ids = [s.sector_id for s in model.sectors]
        try:
            i = ids.index(sector)
        except ValueError:
            raise ValueError(f"no sector with id {sector!r}") from None
    else:
        i = int(sector)
    n = model.n_sectors
    gamma = model.A[:, i].sum()
    a = np.zeros((n + 1, n + 1))
    a[:n, :n] = model.A
    a[:n, n] = model.A[:, i]  # the pass-through buys what the sector bought
    a[:n, i] = 0.0
    a[n, i] = gamma  # the sector now buys one composite input
    b = np.vstack([model.B, np.zeros((1, model.n_destinations))])
    old = model.sectors[i]
    new_sector = Sector(f"{old.sector_id}_up", old.country, old.industry)
    return NetworkModel(
        sectors=model.sectors + (new_sector,),
        destinations=model.destinations,
        A=a,
        B=b,
        dbar=model.dbar,
        nilpotent=model.nilpotent,
    )
