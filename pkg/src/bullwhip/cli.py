"""Command-line entry points.

Every command reads and writes plain files: CSV for tables and panels,
JSON for configs, coefficients, and manifests.  Reports that carry figure
data also render PNGs unless ``--no-figures`` is passed.
"""

from __future__ import annotations

import json
from pathlib import Path

import click
import numpy as np
import pandas as pd

from .metrics import OmegaParams, PositionMetrics
from .policies import (
    BreakdownProblem,
    LQParams,
    TimeToSellProblem,
    load_policy_solution,
    lq_policy,
    save_policy_solution,
    simulate_policy,
    smoothing_derivative,
    smoothing_sign_change,
    solve_breakdown_vfi,
    solve_timetosell,
)
from .regression import (
    binned_regression,
    model_consistent_regression,
    saturated_regression,
)
from .scenarios import (
    REFERENCE_MOMENTS,
    figure_data,
    load_model,
    moment_table,
    pipeline,
    render_binned_figure,
    scenario_from_config,
    simulate_scenario,
)
from .shocks import DemandProcess, draw_demand
from .tables import model_to_dict


@click.group()
@click.option("--threads", default=1, show_default=True, help="Worker threads for simulation batches.")
@click.option("--seed", default=None, type=int, help="Override the seed from configs and defaults.")
@click.pass_context
def main(ctx: click.Context, threads: int, seed: int | None) -> None:
    """Production-network positions, demand shocks, and inventory dynamics."""
    ctx.ensure_object(dict)
    ctx.obj["threads"] = threads
    ctx.obj["seed"] = seed


def _read_json(path: str) -> dict:
    return json.loads(Path(path).read_text())


def _effective_seed(ctx: click.Context, fallback: int) -> int:
    override = ctx.obj.get("seed")
    return fallback if override is None else override


@main.command()
@click.option("--in", "table_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--alpha", default=0.4, show_default=True)
@click.option("--rho", default=0.7, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--emit-xi", "xi_path", type=click.Path(dir_okay=False), default=None,
              help="Also write the sector-by-destination exposure share matrix.")
@click.option("--emit-model", "model_path", type=click.Path(dir_okay=False), default=None,
              help="Also write a JSON echo of the parsed network.")
def metrics(table_path: str, alpha: float, rho: float, out_path: str,
            xi_path: str | None, model_path: str | None) -> None:
    """Per-sector position metrics from an input-output table."""
    model = load_model(table_path)
    computed = PositionMetrics.compute(model, OmegaParams(alpha=alpha, rho=rho))
    frame = computed.to_frame()
    frame.to_csv(out_path, index=False)
    if xi_path is not None:
        xi = pd.DataFrame(
            computed.xi,
            columns=[f"xi_{d}" for d in model.destinations],
        )
        xi.insert(0, "sector_id", [s.sector_id for s in model.sectors])
        xi.to_csv(xi_path, index=False)
    if model_path is not None:
        Path(model_path).write_text(json.dumps(model_to_dict(model), indent=2) + "\n")
    click.echo(f"wrote {out_path} ({len(frame)} sectors)")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="JSON with dbar[], rho, sigma[], varrho, T, n_paths, seed.")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.pass_context
def shocks(ctx: click.Context, config_path: str, out_path: str) -> None:
    """Draw correlated demand paths and write them long-form."""
    cfg = _read_json(config_path)
    process = DemandProcess(
        dbar=np.asarray(cfg["dbar"], dtype=float),
        rho=cfg["rho"],
        sigma=np.asarray(cfg["sigma"], dtype=float),
        varrho=cfg.get("varrho", 0.0),
        seed=_effective_seed(ctx, cfg.get("seed", 0)),
    )
    paths = draw_demand(process, cfg["T"], n_paths=cfg.get("n_paths", 1))
    n_paths, j, t = paths.shape
    frame = pd.DataFrame(
        {
            "sim": np.repeat(np.arange(n_paths), j * t),
            "destination": np.tile(np.repeat(np.arange(1, j + 1), t), n_paths),
            "period": np.tile(np.arange(t), n_paths * j),
            "demand": paths.ravel(),
        }
    )
    frame.to_csv(out_path, index=False)
    click.echo(f"wrote {out_path} ({n_paths} paths, {j} destinations, {t} periods)")


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--alpha", default=0.4, show_default=True)
@click.option("--rho", default=0.7, show_default=True)
@click.option("--paths", default=100, show_default=True)
@click.option("--t", "--T", "periods", default=100, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--sigma", type=float, multiple=True,
              help="Innovation sd per destination; repeat for each one.")
@click.option("--sigma-target", default=0.05, show_default=True,
              help="Target sd of demand growth when --sigma is not given.")
@click.option("--varrho", default=0.0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.pass_context
def simulate(ctx: click.Context, model_path: str, alpha: float, rho: float,
             paths: int, periods: int, seed: int, sigma: tuple[float, ...],
             sigma_target: float, varrho: float, out_path: str) -> None:
    """Simulate network output paths and write the regression panel."""
    from .scenarios import Scenario

    scenario = Scenario(
        network=model_path,
        alpha=alpha,
        rho=rho,
        varrho=varrho,
        sigma=list(sigma) if sigma else None,
        sigma_target=None if sigma else sigma_target,
        T=periods,
        n_sims=paths,
        seed=_effective_seed(ctx, seed),
    )
    run = simulate_scenario(scenario, threads=ctx.obj["threads"])
    panel = run.panel()
    if out_path.endswith(".parquet"):
        try:
            panel.to_parquet(out_path)
        except ImportError as exc:
            raise click.UsageError(
                "no parquet engine installed; write a .csv instead"
            ) from exc
    else:
        panel.to_csv(out_path, index=False)
    click.echo(f"wrote {out_path} ({len(panel)} rows)")


@main.group()
def policy() -> None:
    """Solve and simulate the micro inventory models."""


@policy.command("solve")
@click.option("--model", "kind", required=True,
              type=click.Choice(["breakdown", "timetosell", "lq", "smoothing"]))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="JSON overrides for the model's parameters and grids.")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def policy_solve(kind: str, config_path: str | None, out_path: str) -> None:
    """Solve one inventory model and write its policy."""
    cfg = _read_json(config_path) if config_path else {}
    if kind in ("breakdown", "timetosell"):
        tol = cfg.pop("tol", None)
        max_iter = cfg.pop("max_iter", None)
        solver_args = {}
        if tol is not None:
            solver_args["tol"] = tol
        if max_iter is not None:
            solver_args["max_iter"] = max_iter
        if kind == "breakdown":
            solution = solve_breakdown_vfi(BreakdownProblem.standard(**cfg), **solver_args)
        else:
            solution = solve_timetosell(TimeToSellProblem.standard(**cfg), **solver_args)
        save_policy_solution(solution, out_path)
        click.echo(
            f"{kind}: converged in {solution.iterations} iterations "
            f"(residual {solution.residual:.2e}); wrote {out_path}"
        )
        return

    if kind == "lq":
        grid_cfg = cfg.pop("demand_grid", {})
        params = LQParams(**cfg) if cfg else LQParams(alpha=0.4)
        lo = grid_cfg.get("min", 0.0)
        hi = grid_cfg.get("max", 2.0)
        n = grid_cfg.get("n", 101)
        demand = np.linspace(lo, hi, n)
        frame = pd.DataFrame({"expected_sales": demand, "stock": lq_policy(params, demand)})
        frame.to_csv(out_path, index=False)
        click.echo(f"lq: wrote {out_path} (slope above kink = {params.alpha})")
        return

    params = LQParams(**cfg) if cfg else LQParams(alpha=0.4, theta=0.5)
    frame = pd.DataFrame(
        [
            {
                "alpha": params.alpha,
                "rho": params.rho,
                "beta": params.beta,
                "delta": params.delta,
                "theta": params.theta,
                "derivative": smoothing_derivative(params),
                "sign_change_theta": smoothing_sign_change(params),
            }
        ]
    )
    frame.to_csv(out_path, index=False)
    click.echo(f"smoothing: wrote {out_path}")


@policy.command("simulate")
@click.option("--solution", "solution_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--paths", default=2000, show_default=True)
@click.option("--t", "--T", "periods", default=960, show_default=True)
@click.option("--burnin", default=240, show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None,
              help="Write the moment set as JSON; otherwise print it.")
@click.pass_context
def policy_simulate(ctx: click.Context, solution_path: str, paths: int,
                    periods: int, burnin: int, out_path: str | None) -> None:
    """Simulate a solved policy and report its moments."""
    solution = load_policy_solution(solution_path)
    moments = simulate_policy(
        solution,
        n_paths=paths,
        T=periods,
        burnin=burnin,
        seed=_effective_seed(ctx, 0),
    )
    text = json.dumps(moments, indent=2)
    if out_path is not None:
        Path(out_path).write_text(text + "\n")
        click.echo(f"wrote {out_path}")
    else:
        click.echo(text)


@main.command()
@click.option("--panel", "panel_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--spec", required=True,
              type=click.Choice(["binned", "model-consistent", "saturated"]))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def estimate(panel_path: str, spec: str, out_path: str) -> None:
    """Run one regression specification on a simulated panel."""
    panel = pd.read_csv(panel_path)
    shock = "eta_hat" if "eta_hat" in panel.columns else "eta"
    if spec == "binned":
        fit = binned_regression(panel, shock=shock)
        payload = {
            "bins": list(fit.labels()),
            "coef": fit.coef.tolist(),
            "se": fit.result.se.tolist(),
            "counts": list(fit.counts),
            "r2": fit.result.r2,
            "nobs": fit.result.nobs,
        }
    elif spec == "model-consistent":
        fit = model_consistent_regression(panel, shock=shock)
        payload = {
            "delta1": fit.delta1,
            "delta2": fit.delta2,
            "implied_alpha_rho": fit.implied_alpha_rho,
            "se": dict(zip(fit.result.names, fit.result.se.tolist())),
            "r2": fit.result.r2,
            "nobs": fit.result.nobs,
        }
    else:
        fit = saturated_regression(panel, shock=shock)
        payload = {
            "names": list(fit.names),
            "coef": fit.coef.tolist(),
            "se": fit.se.tolist(),
            "r2": fit.r2,
            "nobs": fit.nobs,
        }
    Path(out_path).write_text(json.dumps(payload, indent=2) + "\n")
    click.echo(f"wrote {out_path}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out-dir", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--no-figures", is_flag=True, default=False)
@click.pass_context
def counterfactual(ctx: click.Context, config_path: str, out_dir: str, no_figures: bool) -> None:
    """Run a baseline/counterfactual comparison and write the moment table."""
    cfg = _read_json(config_path)
    if ctx.obj["seed"] is not None:
        cfg = {**cfg, "seed": ctx.obj["seed"]}
    scenario = scenario_from_config(cfg, Path(config_path).resolve().parent)
    run = simulate_scenario(scenario, threads=ctx.obj["threads"])
    table = moment_table([run.report()])
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "moments.csv").write_text(table.render_csv(reference=REFERENCE_MOMENTS))
    (out / "moments.txt").write_text(table.render_text(reference=REFERENCE_MOMENTS))
    if not no_figures:
        series = [("baseline", figure_data(run.panel("baseline")))]
        if run.cf_outputs is not None:
            series.append(("counterfactual", figure_data(run.panel("counterfactual"))))
        render_binned_figure(series, out / "figure_binned.png")
    click.echo(table.render_text())


@main.command(name="pipeline")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out-dir", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--no-figures", is_flag=True, default=False)
@click.pass_context
def pipeline_command(ctx: click.Context, config_path: str, out_dir: str, no_figures: bool) -> None:
    """Run the full scenario pipeline and write artifacts plus a manifest."""
    manifest = pipeline(
        config_path,
        out_dir,
        threads=ctx.obj["threads"],
        figures=not no_figures,
        seed=ctx.obj["seed"],
    )
    if manifest["status"] != "ok":
        click.echo(
            f"failed at stage {manifest['failure_stage']}: {manifest['error']}",
            err=True,
        )
        raise SystemExit(1)
    click.echo(f"ok: artifacts in {out_dir}")


if __name__ == "__main__":
    main()
