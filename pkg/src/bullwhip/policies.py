"""Micro inventory policies: closed forms and dynamic-programming solvers.

Four models live here.  The LQ policy and its production-smoothing and
productivity-shock extensions are closed forms.  The breakdown model (hold
stock against the risk that production halts) and the time-to-sell model
(sell at most the stock on hand plus a fraction of current production) are
solved by value iteration on discretized grids and then simulated.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.stats import norm

from bullwhip.shocks import substream


@dataclass(frozen=True)
class LQParams:
    """Parameters of the linear-quadratic inventory problem.

    ``alpha`` is the stock target per unit of expected sales, ``delta`` the
    quadratic miss penalty, ``theta`` the slope of convex production costs
    (the smoothing motive), ``tau`` a linear holding cost.  ``c`` and ``tau``
    shift the policy's intercept but never its demand sensitivity.
    """

    alpha: float
    delta: float = 1.0
    beta: float = 0.95
    c: float = 0.0
    theta: float = 0.0
    tau: float = 0.0
    rho: float = 0.7

    def __post_init__(self) -> None:
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if not 0.0 < self.beta <= 1.0:
            raise ValueError("beta must lie in (0, 1]")
        if self.c < 0 or self.theta < 0 or self.tau < 0:
            raise ValueError("c, theta, tau must be nonnegative")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [0, 1]")


def lq_policy(params: LQParams, expected_sales: np.ndarray) -> np.ndarray:
    """Optimal stock given expected next-period sales.

    ``max{(beta - 1) * c / delta + alpha * E[sales'], 0}``: a kinked linear
    rule whose slope above the kink is exactly ``alpha``.
    """
    expected_sales = np.asarray(expected_sales, dtype=float)
    level = (params.beta - 1.0) * params.c / params.delta + params.alpha * expected_sales
    return np.maximum(level, 0.0)


def smoothing_derivative(params: LQParams) -> float:
    """Demand sensitivity of the stock under convex production costs.

    Solves the smoothing trade-off in closed form.  With ``theta = 0`` the
    sensitivity is ``alpha * rho``; as the smoothing motive strengthens the
    producer increasingly uses the stock as a buffer, and the sign flips to
    countercyclical once ``theta`` exceeds ``delta * alpha * rho /
    (1 - beta * rho)``.

    Raises:
        ValueError: if either geometric series behind the closed form
            diverges (names the offending quantity).
    """
    a, d, b, th, r = params.alpha, params.delta, params.beta, params.theta, params.rho
    scale = 1.0 / (th * (1.0 + b) + d)
    q_sq = scale**2 * th**2 * b
    q_mix = scale * th * r * b
    if q_sq >= 1.0:
        raise ValueError(f"forecast-feedback series diverges: B^2 theta^2 beta = {q_sq}")
    if q_mix >= 1.0:
        raise ValueError(f"persistence series diverges: B theta rho beta = {q_mix}")
    drive = d * a * r - th * (1.0 - b * r)
    return (scale * drive / (1.0 - q_mix)) * (1.0 - 2.0 * q_sq) / (1.0 - q_sq)


def smoothing_sign_change(params: LQParams) -> float:
    """The ``theta`` at which the stock turns countercyclical, holding the
    other parameters fixed."""
    if params.rho == 0 or params.alpha == 0:
        raise ValueError("no sign change without a demand-tracking motive")
    return params.delta * params.alpha * params.rho / (1.0 - params.beta * params.rho)


def productivity_policy(
    alpha: float,
    beta: float,
    delta: float,
    rho_zeta: float,
    zeta: float,
    expected_demand: float,
) -> tuple[float, float]:
    """Stock level and its sensitivity to a persistent marginal-cost shock.

    Returns ``(level, d level / d zeta)``.  Costlier production today versus
    its discounted expected continuation lowers the stock:
    ``d I / d zeta = (beta * rho_zeta - 1) / delta <= 0``.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    if not 0.0 <= rho_zeta <= 1.0:
        raise ValueError("rho_zeta must lie in [0, 1]")
    level = alpha * expected_demand + (beta * rho_zeta - 1.0) * zeta / delta
    return level, (beta * rho_zeta - 1.0) / delta


def tauchen(
    n: int, rho: float, sigma: float, mu: float = 0.0, span: float = 3.0
) -> tuple[np.ndarray, np.ndarray]:
    """Discretize an AR(1) level process onto ``n`` states.

    The grid covers ``mu`` plus/minus ``span`` unconditional standard
    deviations; transition mass is assigned by splitting at grid midpoints.
    A deterministic process (``sigma=0``) collapses to the single point
    ``mu`` and must be asked for with ``n=1``.
    """
    if n < 1:
        raise ValueError("need at least one state")
    if n == 1:
        return np.array([mu]), np.array([[1.0]])
    if sigma <= 0:
        raise ValueError("sigma=0 admits only a single state; pass n=1")
    sd = sigma / np.sqrt(1.0 - rho**2)
    grid = np.linspace(mu - span * sd, mu + span * sd, n)
    step = grid[1] - grid[0]
    trans = np.empty((n, n))
    for i in range(n):
        cond_mean = mu * (1.0 - rho) + rho * grid[i]
        upper = norm.cdf((grid + step / 2.0 - cond_mean) / sigma)
        lower = norm.cdf((grid - step / 2.0 - cond_mean) / sigma)
        trans[i] = upper - lower
        trans[i, 0] = upper[0]
        trans[i, -1] = 1.0 - lower[-1]
    rowsum = trans.sum(axis=1)
    assert np.allclose(rowsum, 1.0, atol=1e-12), "transition rows must sum to 1"
    return grid, trans


@dataclass(frozen=True)
class BreakdownProblem:
    """Hold stock because production randomly halts for one period.

    While operating, the producer meets demand ``q(A) = A`` and chooses the
    stock to carry; with probability ``chi`` next period's production breaks
    down, in which case sales come out of the stock and operation resumes the
    period after with certainty.
    """

    a_grid: np.ndarray
    transition: np.ndarray
    i_grid: np.ndarray
    p: float = 3.0
    c: float = 0.3
    beta: float = 0.95
    chi: float = 0.1

    def __post_init__(self) -> None:
        a = np.array(self.a_grid, dtype=float)
        t = np.array(self.transition, dtype=float)
        i = np.array(self.i_grid, dtype=float)
        for arr in (a, t, i):
            arr.setflags(write=False)
        object.__setattr__(self, "a_grid", a)
        object.__setattr__(self, "transition", t)
        object.__setattr__(self, "i_grid", i)
        if np.any(np.diff(a) <= 0) or np.any(np.diff(i) <= 0):
            raise ValueError("grids must be strictly increasing")
        if t.shape != (a.size, a.size) or not np.allclose(t.sum(axis=1), 1.0, atol=1e-12):
            raise ValueError("transition must be square with unit row sums")
        if not 0.0 <= self.chi <= 1.0:
            raise ValueError("chi must lie in [0, 1]")
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1) for contraction")

    @classmethod
    def standard(
        cls,
        n_a: int = 15,
        n_i: int = 50,
        dbar: float = 1.0,
        rho: float = 0.5,
        sigma: float = 0.05,
        i_max: float | None = None,
        **kwargs,
    ) -> "BreakdownProblem":
        """Grids sized so the stock range covers the ergodic set without
        reaching the forced-dumping corner (where the nonnegative-production
        floor, which falls in demand, would dominate the policy)."""
        a_grid, trans = tauchen(n_a, rho, sigma, mu=dbar)
        if a_grid[0] <= 0:
            raise ValueError("demand grid reaches zero; shrink sigma or raise dbar")
        top = 1.3 * a_grid[-1] if i_max is None else i_max
        return cls(a_grid=a_grid, transition=trans, i_grid=np.linspace(0.0, top, n_i), **kwargs)


@dataclass(frozen=True)
class TimeToSellProblem:
    """Sell at most the stock on hand plus a fraction ``chi`` of today's
    production; unmet demand costs a stock-out penalty ``b`` per event.

    Production is chosen knowing last period's demand state but not today's.
    """

    s_grid: np.ndarray
    q_grid: np.ndarray
    eps_grid: np.ndarray  # demand levels
    transition: np.ndarray
    p: float = 3.0
    c: float = 0.3
    beta: float = 0.95
    chi: float = 0.5
    b: float = 10.0

    def __post_init__(self) -> None:
        s = np.array(self.s_grid, dtype=float)
        q = np.array(self.q_grid, dtype=float)
        e = np.array(self.eps_grid, dtype=float)
        t = np.array(self.transition, dtype=float)
        for arr in (s, q, e, t):
            arr.setflags(write=False)
        object.__setattr__(self, "s_grid", s)
        object.__setattr__(self, "q_grid", q)
        object.__setattr__(self, "eps_grid", e)
        object.__setattr__(self, "transition", t)
        for name, arr in (("s_grid", s), ("q_grid", q), ("eps_grid", e)):
            if np.any(np.diff(arr) <= 0):
                raise ValueError(f"{name} must be strictly increasing")
        if t.shape != (e.size, e.size) or not np.allclose(t.sum(axis=1), 1.0, atol=1e-12):
            raise ValueError("transition must be square with unit row sums")
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1) for contraction")
        if not 0.0 <= self.chi <= 1.0:
            raise ValueError("chi must lie in [0, 1]")

    @classmethod
    def standard(
        cls,
        n_s: int = 61,
        n_q: int = 81,
        n_eps: int = 15,
        dbar: float = 1.0,
        rho: float = 0.9,
        sigma: float = 0.1,
        s_max: float = 3.0,
        q_max: float = 2.0,
        **kwargs,
    ) -> "TimeToSellProblem":
        eps_grid, trans = tauchen(n_eps, rho, sigma, mu=dbar)
        if eps_grid[0] <= 0:
            raise ValueError("demand grid reaches zero; shrink sigma or raise dbar")
        return cls(
            s_grid=np.linspace(0.0, s_max, n_s),
            q_grid=np.linspace(0.0, q_max, n_q),
            eps_grid=eps_grid,
            transition=trans,
            **kwargs,
        )


VFIProblem = Union[BreakdownProblem, TimeToSellProblem]


@dataclass(frozen=True)
class PolicySolution:
    """Converged value function and policy on the problem's grids."""

    problem: VFIProblem
    value: np.ndarray
    policy: np.ndarray  # chosen stock (breakdown) or production (time-to-sell)
    iterations: int
    residual: float
    moments: dict | None = None


def _interp_weights(points: np.ndarray, grid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Clamped linear-interpolation indices and left weights on ``grid``."""
    idx = np.clip(np.searchsorted(grid, points) - 1, 0, grid.size - 2)
    width = grid[idx + 1] - grid[idx]
    w_left = np.clip((grid[idx + 1] - points) / width, 0.0, 1.0)
    return idx, w_left


def solve_breakdown_vfi(
    prob: BreakdownProblem, tol: float = 1e-9, max_iter: int = 20_000
) -> PolicySolution:
    """Value iteration for the breakdown model.

    Only the operating-state value function is iterated; the breakdown-state
    value follows from it in one step because production resumes with
    certainty.  Convergence is sup-norm ``tol`` on the operating value.
    """
    a, i_grid, trans = prob.a_grid, prob.i_grid, prob.transition
    n_a, n_i = a.size, i_grid.size
    q = a  # demand met while operating
    # Stock left after a breakdown period, and where it lands on the grid.
    left = np.maximum(i_grid[:, None] - q[None, :], 0.0)  # (n_i, n_a)
    idx, w = _interp_weights(left.ravel(), i_grid)
    idx = idx.reshape(n_i, n_a)
    w = w.reshape(n_i, n_a)
    bad_sales = np.minimum(q[None, :], i_grid[:, None])  # (n_i, n_a)

    # Production y = q + I' - I must be nonnegative: mask infeasible choices.
    feasible = (q[None, :, None] + i_grid[None, None, :] - i_grid[:, None, None]) >= -1e-12
    flow = prob.p * q[None, :, None] - prob.c * np.maximum(
        q[None, :, None] + i_grid[None, None, :] - i_grid[:, None, None], 0.0
    )
    flow = np.where(feasible, flow, -np.inf)  # (n_i, n_a, n_i')

    v_good = np.zeros((n_i, n_a))
    policy_idx = np.zeros((n_i, n_a), dtype=int)
    for it in range(1, max_iter + 1):
        # V^G evaluated at the post-breakdown stock, for every resumption state
        rows = v_good[idx]  # (n_i, n_a, n_a'')
        rows_up = v_good[idx + 1]
        after = w[:, :, None] * rows + (1.0 - w)[:, :, None] * rows_up
        v_bad = prob.p * bad_sales + prob.beta * np.einsum("am,iam->ia", trans, after)
        blend = prob.chi * v_bad + (1.0 - prob.chi) * v_good  # (n_i', n_a')
        ev = blend @ trans.T  # (n_i', n_a): expectation over A'|A
        total = flow + prob.beta * ev.T[None, :, :]
        policy_idx = total.argmax(axis=2)
        v_new = np.take_along_axis(total, policy_idx[:, :, None], axis=2)[:, :, 0]
        gap = float(np.max(np.abs(v_new - v_good)))
        v_good = v_new
        if gap < tol:
            return PolicySolution(
                problem=prob,
                value=v_good,
                policy=i_grid[policy_idx],
                iterations=it,
                residual=gap,
            )
    raise RuntimeError(
        f"breakdown value iteration missed tol={tol} after {max_iter} "
        f"iterations (residual {gap:.3e})"
    )


def solve_timetosell(
    prob: TimeToSellProblem, tol: float = 1e-7, max_iter: int = 20_000
) -> PolicySolution:
    """Value iteration for the time-to-sell model.

    The state is (stock, last demand level); production is chosen before
    demand realizes.  All expectations are exact sums over the discretized
    demand grid; next-period stock lands off-grid and is linearly
    interpolated.
    """
    s, qg, y, trans = prob.s_grid, prob.q_grid, prob.eps_grid, prob.transition
    n_s, n_q, n_e = s.size, qg.size, y.size
    cap = s[:, None] + prob.chi * qg[None, :]  # (n_s, n_q) sale cap
    sales = np.minimum(cap[:, :, None], y[None, None, :])  # (n_s, n_q, n_e)
    stockout = (y[None, None, :] > cap[:, :, None]).astype(float)
    s_next = s[:, None, None] + qg[None, :, None] - sales  # (n_s, n_q, n_e)
    clipped = np.clip(s_next, s[0], s[-1])
    idx, w = _interp_weights(clipped.ravel(), s)
    idx = idx.reshape(n_s, n_q, n_e)
    w = w.reshape(n_s, n_q, n_e)

    # Flow payoff, by last-period state j: -c q + p E[sales] - b Pr(stockout)
    e_sales = np.einsum("jm,sqm->sqj", trans, sales)
    e_out = np.einsum("jm,sqm->sqj", trans, stockout)
    reward = -prob.c * qg[None, :, None] + prob.p * e_sales - prob.b * e_out

    v = np.zeros((n_s, n_e))
    policy_idx = np.zeros((n_s, n_e), dtype=int)
    for it in range(1, max_iter + 1):
        v_interp = w * v[idx, np.arange(n_e)] + (1.0 - w) * v[idx + 1, np.arange(n_e)]
        ev = np.einsum("jm,sqm->sqj", trans, v_interp)
        total = reward + prob.beta * ev
        policy_idx = total.argmax(axis=1)  # over q, per (s, j)
        v_new = np.take_along_axis(total, policy_idx[:, None, :], axis=1)[:, 0, :]
        gap = float(np.max(np.abs(v_new - v)))
        v = v_new
        if gap < tol:
            return PolicySolution(
                problem=prob,
                value=v,
                policy=qg[policy_idx],
                iterations=it,
                residual=gap,
            )
    raise RuntimeError(
        f"time-to-sell value iteration missed tol={tol} after {max_iter} "
        f"iterations (residual {gap:.3e})"
    )


def _markov_paths(
    trans: np.ndarray, T: int, n_paths: int, seed: int, start: int
) -> np.ndarray:
    """Simulate state indices, shape (n_paths, T), one stream per path."""
    cum = np.cumsum(trans, axis=1)
    u = np.empty((n_paths, T))
    for p in range(n_paths):
        u[p] = substream(seed, (p << 1) | 1).random(T)
    out = np.empty((n_paths, T), dtype=int)
    state = np.full(n_paths, start)
    for t in range(T):
        state = (u[:, t, None] > cum[state]).sum(axis=1)
        out[:, t] = state
    return out


def _moment_block(
    inventory: np.ndarray, sales: np.ndarray, production: np.ndarray, demand: np.ndarray
) -> dict:
    """The level/volatility moment set for one aggregation frequency.

    Per-path statistics are averaged across paths; the stock ratio ``alpha``
    is the per-path mean stock over mean sales.
    """

    def _corr(x: np.ndarray, z: np.ndarray) -> float:
        xc = x - x.mean(axis=1, keepdims=True)
        zc = z - z.mean(axis=1, keepdims=True)
        num = (xc * zc).mean(axis=1)
        den = x.std(axis=1) * z.std(axis=1)
        ok = den > 0
        return float((num[ok] / den[ok]).mean()) if ok.any() else float("nan")

    alpha = inventory.mean(axis=1) / sales.mean(axis=1)
    sd_sales = sales.std(axis=1)
    sd_prod = production.std(axis=1)
    sd_dem = demand.std(axis=1)
    ok = sd_dem > 0
    return {
        "alpha_mean": float(alpha.mean()),
        "alpha_min": float(alpha.min()),
        "alpha_max": float(alpha.max()),
        "corr_inventory_demand": _corr(inventory, demand),
        "corr_inventory_sales": _corr(inventory, sales),
        "vol_sales_ratio": float((sd_sales[ok] / sd_dem[ok]).mean()) if ok.any() else float("nan"),
        "vol_production_ratio": float((sd_prod[ok] / sd_dem[ok]).mean()) if ok.any() else float("nan"),
    }


def _aggregate_annual(x: np.ndarray, how: str) -> np.ndarray:
    """Fold months into years: flows are summed, stocks sampled at year end."""
    p, t = x.shape
    years = t // 12
    x = x[:, : years * 12].reshape(p, years, 12)
    return x.sum(axis=2) if how == "flow" else x[:, :, -1]


def simulate_policy(
    solution: PolicySolution,
    n_paths: int = 2000,
    T: int = 960,
    burnin: int = 240,
    seed: int = 0,
) -> dict:
    """Simulate a converged policy and compute its moment set.

    Returns monthly and annual blocks plus bookkeeping.  States that leave
    the stock grid are clamped and counted; more than 0.1% clamped visits is
    an error because the moments would reflect the grid, not the policy.
    """
    prob = solution.problem
    if T <= burnin:
        raise ValueError("need T > burnin")
    y = prob.eps_grid if isinstance(prob, TimeToSellProblem) else prob.a_grid
    trans = prob.transition
    start = int(np.argmin(np.abs(y - y.mean())))
    states = _markov_paths(trans, T, n_paths, seed, start)

    clamped = 0
    if isinstance(prob, TimeToSellProblem):
        s_grid = prob.s_grid
        inv = np.zeros(n_paths)
        inventory = np.empty((n_paths, T))
        sales = np.empty((n_paths, T))
        production = np.empty((n_paths, T))
        prev_state = np.full(n_paths, start)
        for t in range(T):
            q = np.empty(n_paths)
            for j in np.unique(prev_state):
                sel = prev_state == j
                q[sel] = np.interp(inv[sel], s_grid, solution.policy[:, j])
            demand_t = y[states[:, t]]
            sold = np.minimum(inv + prob.chi * q, demand_t)
            inv = inv + q - sold
            over = inv > s_grid[-1]
            clamped += int(over.sum())
            inv = np.minimum(inv, s_grid[-1])
            inventory[:, t] = inv
            sales[:, t] = sold
            production[:, t] = q
            prev_state = states[:, t]
        demand = y[states]
    else:
        i_grid = prob.i_grid
        coins = np.empty((n_paths, T))
        for p in range(n_paths):
            coins[p] = substream(seed, (p << 1)).random(T)
        inv = np.zeros(n_paths)
        inventory = np.empty((n_paths, T))
        sales = np.empty((n_paths, T))
        production = np.empty((n_paths, T))
        prev_down = np.zeros(n_paths, dtype=bool)
        for t in range(T):
            demand_t = y[states[:, t]]
            # Breakdowns never repeat back to back: after one, production
            # resumes with certainty.
            down = (coins[:, t] < prob.chi) & ~prev_down
            sold = np.where(down, np.minimum(demand_t, inv), demand_t)
            target = np.empty(n_paths)
            for j in np.unique(states[:, t]):
                sel = states[:, t] == j
                target[sel] = np.interp(inv[sel], i_grid, solution.policy[:, j])
            new_inv = np.where(down, inv - sold, target)
            production[:, t] = np.where(down, 0.0, sold + new_inv - inv)
            inv = new_inv
            inventory[:, t] = inv
            sales[:, t] = sold
            prev_down = down
        demand = y[states]

    keep = slice(burnin, T)
    monthly = _moment_block(
        inventory[:, keep], sales[:, keep], production[:, keep], demand[:, keep]
    )
    annual = _moment_block(
        _aggregate_annual(inventory[:, keep], "stock"),
        _aggregate_annual(sales[:, keep], "flow"),
        _aggregate_annual(production[:, keep], "flow"),
        _aggregate_annual(demand[:, keep], "flow"),
    )
    visits = n_paths * T
    if clamped > 0.001 * visits:
        raise RuntimeError(
            f"{clamped} of {visits} visits clamped at the stock grid edge; "
            "widen the grid"
        )
    return {
        "monthly": monthly,
        "annual": annual,
        "clamped_visits": clamped,
        "n_paths": n_paths,
        "periods_used": T - burnin,
    }


def _problem_payload(problem: VFIProblem) -> tuple[str, dict]:
    if isinstance(problem, BreakdownProblem):
        return "breakdown", {
            "a_grid": problem.a_grid.tolist(),
            "transition": problem.transition.tolist(),
            "i_grid": problem.i_grid.tolist(),
            "p": problem.p,
            "c": problem.c,
            "beta": problem.beta,
            "chi": problem.chi,
        }
    if isinstance(problem, TimeToSellProblem):
        return "timetosell", {
            "s_grid": problem.s_grid.tolist(),
            "q_grid": problem.q_grid.tolist(),
            "eps_grid": problem.eps_grid.tolist(),
            "transition": problem.transition.tolist(),
            "p": problem.p,
            "c": problem.c,
            "beta": problem.beta,
            "chi": problem.chi,
            "b": problem.b,
        }
    raise TypeError(f"cannot serialize problem of type {type(problem).__name__}")


def save_policy_solution(solution: PolicySolution, path) -> None:
    """Write a solved policy to a self-contained CSV.

    The header comments carry the problem definition as JSON, so
    :func:`load_policy_solution` can rebuild the exact problem; the body
    lists value and policy per state with full-precision floats.
    """
    import csv as _csv
    import json as _json

    kind, payload = _problem_payload(solution.problem)
    if kind == "breakdown":
        row_grid, col_grid = solution.problem.i_grid, solution.problem.a_grid
        row_name, col_name = "stock", "demand_state"
    else:
        row_grid, col_grid = solution.problem.s_grid, solution.problem.eps_grid
        row_name, col_name = "stock", "demand_state"

    with open(path, "w", newline="") as handle:
        handle.write("# bullwhip-policy-solution\n")
        handle.write(f"# kind: {kind}\n")
        handle.write(f"# iterations: {solution.iterations}\n")
        handle.write(f"# residual: {solution.residual!r}\n")
        handle.write(f"# problem: {_json.dumps(payload)}\n")
        writer = _csv.writer(handle)
        writer.writerow(
            ["row_index", "col_index", row_name, col_name, "value", "policy"]
        )
        for i in range(row_grid.size):
            for j in range(col_grid.size):
                writer.writerow(
                    [
                        i,
                        j,
                        repr(float(row_grid[i])),
                        repr(float(col_grid[j])),
                        repr(float(solution.value[i, j])),
                        repr(float(solution.policy[i, j])),
                    ]
                )


def load_policy_solution(path) -> PolicySolution:
    """Rebuild a :class:`PolicySolution` written by :func:`save_policy_solution`."""
    import csv as _csv
    import json as _json

    header: dict[str, str] = {}
    body_lines: list[str] = []
    with open(path, newline="") as handle:
        for line in handle:
            if line.startswith("#"):
                text = line[1:].strip()
                if ":" in text:
                    key, _, value = text.partition(":")
                    header[key.strip()] = value.strip()
            else:
                body_lines.append(line)
    kind = header.get("kind")
    if kind not in ("breakdown", "timetosell"):
        raise ValueError(
            f"unsupported or missing solution kind {kind!r}; only value-iteration "
            "policies round-trip through files"
        )
    payload = _json.loads(header["problem"])
    problem: VFIProblem
    if kind == "breakdown":
        problem = BreakdownProblem(**payload)
        shape = (problem.i_grid.size, problem.a_grid.size)
    else:
        problem = TimeToSellProblem(**payload)
        shape = (problem.s_grid.size, problem.eps_grid.size)

    value = np.full(shape, np.nan)
    policy = np.full(shape, np.nan)
    reader = _csv.DictReader(body_lines)
    for row in reader:
        i, j = int(row["row_index"]), int(row["col_index"])
        value[i, j] = float(row["value"])
        policy[i, j] = float(row["policy"])
    if np.any(np.isnan(value)) or np.any(np.isnan(policy)):
        raise ValueError("solution body does not cover the full state grid")
    return PolicySolution(
        problem=problem,
        value=value,
        policy=policy,
        iterations=int(header.get("iterations", 0)),
        residual=float(header.get("residual", "nan")),
    )
