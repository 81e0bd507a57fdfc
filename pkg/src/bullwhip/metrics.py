"""Network position statistics.

Everything here is static: given a requirement matrix and final-demand
structure, compute total requirements, chain-position measures, exposure
shares, and the inventory-adjusted positions that govern how demand shocks
are amplified on their way upstream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from bullwhip.tables import IOTable, NetworkModel


@dataclass(frozen=True)
class OmegaParams:
    """Inventory-rule parameters.

    ``alpha`` is the target stock per unit of next-period expected sales and
    ``rho`` the persistence of demand.  The induced decay ``omega = 1 +
    alpha * (rho - 1)`` must lie in ``(0, 1]``, which bounds ``alpha`` by
    ``1 / (1 - rho)``.
    """

    alpha: float
    rho: float

    def __post_init__(self) -> None:
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [0, 1]")
        if self.alpha * (1.0 - self.rho) >= 1.0:
            raise ValueError(
                f"alpha={self.alpha} too large for rho={self.rho}: "
                "1 + alpha*(rho-1) must stay positive"
            )

    @property
    def omega(self) -> float:
        return 1.0 + self.alpha * (self.rho - 1.0)


def leontief(model: NetworkModel) -> np.ndarray:
    """Total requirements ``inv(I - A)``."""
    n = model.n_sectors
    return np.linalg.solve(np.eye(n) - model.A, np.eye(n))


def steady_output(model: NetworkModel) -> np.ndarray:
    """Gross output supporting steady final demand."""
    n = model.n_sectors
    return np.linalg.solve(np.eye(n) - model.A, model.B @ model.dbar)


def steady_table(model: NetworkModel) -> IOTable:
    """Flow table implied by the model at its steady state.

    Sales split by the input shares at steady output, so the table clears
    by construction and rebuilding a network from it round-trips."""
    output = steady_output(model)
    return IOTable(
        sectors=model.sectors,
        destinations=model.destinations,
        Z=model.A * output[None, :],
        F=model.B * model.dbar[None, :],
        Y=output,
    )


def _flow_shares(source: IOTable | NetworkModel) -> tuple[np.ndarray, np.ndarray]:
    """Supplier-normalized flow shares ``Z[r, s] / Y[r]`` and a validity mask.

    Zero-output sectors carry no information about chain position; their rows
    and columns are zeroed here and their statistics come out NaN.
    """
    if isinstance(source, IOTable):
        y = source.Y
        flows = source.Z
    else:
        y = steady_output(source)
        flows = source.A * y[None, :]  # Z[r, s] = A[r, s] * Y[s]
    valid = y > 0
    safe = np.where(valid, y, 1.0)
    delta = flows / safe[:, None]
    delta[~valid, :] = 0.0
    delta[:, ~valid] = 0.0
    return delta, valid


def upstreamness(source: IOTable | NetworkModel) -> np.ndarray:
    """Average distance to final use.

    Solves ``U = 1 + delta @ U`` where ``delta`` holds each supplier's sales
    shares; a sector selling only to final demand scores exactly 1.
    """
    delta, valid = _flow_shares(source)
    n = delta.shape[0]
    u = np.linalg.solve(np.eye(n) - delta, np.ones(n))
    u[~valid] = np.nan
    return u


def downstreamness(source: IOTable | NetworkModel) -> np.ndarray:
    """Average distance to primary inputs.

    The mirror recursion of :func:`upstreamness`: ``D = 1 + delta.T @ D``, so
    a sector buying no intermediates scores exactly 1.
    """
    delta, valid = _flow_shares(source)
    n = delta.shape[0]
    d = np.linalg.solve(np.eye(n) - delta.T, np.ones(n))
    d[~valid] = np.nan
    return d


def exposure_shares(model: NetworkModel) -> np.ndarray:
    """Share of each sector's output ultimately absorbed by each destination.

    Rows sum to one for every sector with positive steady output.
    """
    n = model.n_sectors
    lb = np.linalg.solve(np.eye(n) - model.A, model.B)
    flows = lb * model.dbar[None, :]
    y = flows.sum(axis=1)
    valid = y > 0
    xi = flows / np.where(valid, y, 1.0)[:, None]
    xi[~valid, :] = np.nan
    return xi


def hhi(xi: np.ndarray) -> np.ndarray:
    """Herfindahl concentration of exposure rows; 1/J (diversified) to 1."""
    xi = np.asarray(xi, dtype=float)
    return (xi**2).sum(axis=-1)


def inventory_upstreamness(
    model: NetworkModel, params: OmegaParams
) -> tuple[np.ndarray, np.ndarray]:
    """Inventory-adjusted upstreamness, per destination and demand-weighted.

    Returns ``(ucal, ucal_avg)`` where ``ucal[r, j]`` weights each supply
    stage toward destination ``j`` by the geometric decay ``omega**stage``
    instead of counting stages equally, normalized so a pure final seller
    scores 1.  At ``omega == 1`` the measure coincides with bilateral
    upstreamness, computed here by its limit form so the code path stays
    total.
    """
    n = model.n_sectors
    omega = params.omega
    lu = lu_factor(np.eye(n) - model.A)
    lb = lu_solve(lu, model.B)
    with np.errstate(invalid="ignore", divide="ignore"):
        if omega == 1.0:
            llb = lu_solve(lu, lb)
            ucal = llb / lb
        else:
            rb = np.linalg.solve(np.eye(n) - omega * model.A, model.B)
            ucal = (1.0 - omega * (rb / lb)) / (1.0 - omega)
    ucal = np.where(lb > 0, ucal, np.nan)
    xi = exposure_shares(model)
    weighted = np.where((xi > 0) & np.isfinite(ucal), xi * ucal, 0.0)
    ucal_avg = weighted.sum(axis=1)
    ucal_avg[np.isnan(xi).any(axis=1)] = np.nan
    return ucal, ucal_avg


def weighted_shock(
    model: NetworkModel, params: OmegaParams, eta: np.ndarray
) -> np.ndarray:
    """Exposure- and position-weighted demand shock per sector.

    Computes ``sum_j ucal[r, j] * xi[r, j] * eta[j]`` without forming the
    per-destination sum, via the same resolvent that defines ``ucal``.
    Accepts ``eta`` of shape ``(J,)`` or ``(J, T)``.
    """
    eta = np.asarray(eta, dtype=float)
    squeeze = eta.ndim == 1
    if squeeze:
        eta = eta[:, None]
    if eta.shape[0] != model.n_destinations:
        raise ValueError(
            f"eta has {eta.shape[0]} destinations, model has {model.n_destinations}"
        )
    n = model.n_sectors
    omega = params.omega
    weighted_demand = model.B * model.dbar[None, :]
    y = np.linalg.solve(np.eye(n) - model.A, weighted_demand.sum(axis=1))
    valid = y > 0
    safe = np.where(valid, y, 1.0)
    if omega == 1.0:
        # No closed form at the boundary: fall back to the explicit sum.
        ucal, _ = inventory_upstreamness(model, params)
        xi = exposure_shares(model)
        contrib = np.where(
            np.isfinite(ucal), np.nan_to_num(ucal * xi, nan=0.0), 0.0
        )
        out = contrib @ eta
    else:
        shocked = weighted_demand @ eta  # (N, T)
        resolvent = np.linalg.solve(np.eye(n) - omega * model.A, shocked)
        direct = np.linalg.solve(np.eye(n) - model.A, shocked)
        out = (direct - omega * resolvent) / (1.0 - omega) / safe[:, None]
    out[~valid, :] = np.nan
    return out[:, 0] if squeeze else out


def discretize(
    model: NetworkModel,
    a_cut: float,
    eta: np.ndarray,
    eta_star: float,
    eta_starstar: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Threshold the network and the shocks for coarse, sign-based checks.

    Edges become 1 where the requirement share reaches ``a_cut``.  Shocks at
    or below ``eta_star`` become -1, at or above ``eta_starstar`` become 0,
    and the band in between is marked missing (NaN).
    """
    if not eta_star < 0.0 < eta_starstar:
        raise ValueError("need eta_star < 0 < eta_starstar")
    edges = (model.A >= a_cut).astype(float)
    eta = np.asarray(eta, dtype=float)
    shocks = np.full(eta.shape, np.nan)
    shocks[eta <= eta_star] = -1.0
    shocks[eta >= eta_starstar] = 0.0
    return edges, shocks


@dataclass(frozen=True)
class PositionMetrics:
    """All per-sector position statistics for one model, computed together."""

    model: NetworkModel
    params: OmegaParams | None
    L: np.ndarray
    Y: np.ndarray
    U: np.ndarray
    D: np.ndarray
    xi: np.ndarray
    hhi: np.ndarray
    ucal: np.ndarray | None
    ucal_avg: np.ndarray | None

    @classmethod
    def compute(
        cls, model: NetworkModel, params: OmegaParams | None = None
    ) -> "PositionMetrics":
        L = leontief(model)
        flows = (L @ model.B) * model.dbar[None, :]
        Y = flows.sum(axis=1)
        valid = Y > 0
        xi = flows / np.where(valid, Y, 1.0)[:, None]
        xi[~valid, :] = np.nan
        if params is None:
            ucal, ucal_avg = None, None
        else:
            ucal, ucal_avg = inventory_upstreamness(model, params)
        return cls(
            model=model,
            params=params,
            L=L,
            Y=Y,
            U=upstreamness(model),
            D=downstreamness(model),
            xi=xi,
            hhi=hhi(xi),
            ucal=ucal,
            ucal_avg=ucal_avg,
        )

    def to_frame(self):
        """Per-sector table (pandas) for reports and the CLI."""
        import pandas as pd

        data = {
            "sector_id": [s.sector_id for s in self.model.sectors],
            "country": [s.country for s in self.model.sectors],
            "industry": [s.industry for s in self.model.sectors],
            "Y": self.Y,
            "upstreamness": self.U,
            "downstreamness": self.D,
            "hhi": self.hhi,
        }
        for j, dest in enumerate(self.model.destinations):
            data[f"xi_{dest}"] = self.xi[:, j]
        if self.ucal is not None:
            for j, dest in enumerate(self.model.destinations):
                data[f"ucal_{dest}"] = self.ucal[:, j]
            data["ucal_avg"] = self.ucal_avg
            assert self.params is not None
            data["elasticity"] = 1.0 + self.params.alpha * self.params.rho * np.asarray(
                self.ucal_avg
            )
        return pd.DataFrame(data)
