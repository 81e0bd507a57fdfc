"""Scenario orchestration.

A :class:`Scenario` names a network (file path, synthetic spec, or built
model), inventory and demand parameters, and an optional counterfactual:
either a second network to swap in, a fragmentation of one sector, or a
rescaled inventory share.  Both legs of a comparison consume the same
demand draws, so reported differences isolate the structural change; with
an identity counterfactual the legs are bit-identical.

The module also renders moment tables (CSV and aligned text carry the same
formatted values), per-bin regression summaries ready for plotting, and a
``pipeline`` driver that writes every artifact plus a manifest with
content hashes.
"""

from __future__ import annotations

import hashlib
import json
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np
import pandas as pd

from . import __version__
from .dynamics import OutputPanel, fragment, network_output
from .metrics import OmegaParams, PositionMetrics, exposure_shares, upstreamness
from .regression import binned_regression, model_consistent_regression
from .shocks import DemandProcess, ShockPanel, draw_demand
from .tables import (
    NetworkModel,
    SyntheticSpec,
    build_network,
    inventory_correct,
    load_io_table,
    model_to_dict,
    synthesize,
)

__all__ = [
    "DEFAULT_BIN_EDGES",
    "REFERENCE_AMPLIFICATION",
    "REFERENCE_MOMENTS",
    "FigureData",
    "LegMoments",
    "MomentReport",
    "MomentTable",
    "Scenario",
    "ScenarioRun",
    "collapse_to_single",
    "figure_data",
    "load_model",
    "moment_table",
    "pipeline",
    "scenario_from_config",
    "render_binned_figure",
    "run_scenario",
    "simulate_scenario",
]

DEFAULT_BIN_EDGES = (1.0, 2.0, 3.0, 4.0, 5.0, 6.0)

#: log demand growth smaller than this is excluded from elasticity medians
ELASTICITY_DENOM_FLOOR = 1e-12

#: Published moments for the world input-output data these tools were built
#: around (baseline leg, 2000 network).  Synthetic runs cannot reproduce them
#: because the underlying tables are proprietary, so renderers only attach
#: them as a reference annotation; nothing in the package asserts against
#: these numbers.
REFERENCE_MOMENTS = {
    "sigma_eta": 0.13,
    "sigma_y": 0.173,
    "median_elasticity": 1.34,
}

#: Published output-to-demand relative volatility at an inventory-to-sales
#: ratio of 0.4.  Annotation only, same caveat as :data:`REFERENCE_MOMENTS`.
REFERENCE_AMPLIFICATION = 1.26

ModelSource = Union[str, Path, NetworkModel]


def load_model(source: ModelSource) -> NetworkModel:
    if isinstance(source, NetworkModel):
        return source
    table = load_io_table(source)
    if table.delta_n is not None:
        table = inventory_correct(table)
    return build_network(table)


def collapse_to_single(model: NetworkModel) -> NetworkModel:
    """Fold all destinations into one.

    Expenditure weights become the destination-size-weighted row sums of
    the share matrix, which preserves steady-state output exactly; total
    steady demand is the sum over destinations.
    """
    weights = model.B @ model.dbar
    total = float(model.dbar.sum())
    return NetworkModel(
        sectors=model.sectors,
        destinations=("all",),
        A=model.A,
        B=(weights / total)[:, None],
        dbar=np.array([total]),
        nilpotent=model.nilpotent,
    )


@dataclass(frozen=True)
class Scenario:
    """One Monte Carlo comparison: a network, parameters, and an optional
    structural change.

    ``sigma`` gives innovation standard deviations directly; alternatively
    ``sigma_target`` is the stationary standard deviation of per-industry
    demand growth, from which innovation scales follow as
    ``target * dbar * sqrt((1 + rho) / 2)``.  Exactly one must be set.
    """

    network: ModelSource
    counterfactual_network: ModelSource | None = None
    fragment_sector: int | str | None = None
    alpha: float = 0.4
    alpha_scale: float = 1.0
    rho: float = 0.7
    varrho: float = 0.0
    sigma: Sequence[float] | float | None = None
    sigma_target: float | None = None
    T: int = 100
    n_sims: int = 100
    seed: int = 0
    mode: str = "multi-destination"
    name: str = "scenario"

    def __post_init__(self) -> None:
        if self.mode not in ("multi-destination", "single-destination"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if (self.sigma is None) == (self.sigma_target is None):
            raise ValueError("set exactly one of sigma and sigma_target")
        if self.counterfactual_network is not None and self.fragment_sector is not None:
            raise ValueError("give either a counterfactual network or a sector to fragment")
        if self.T < 2:
            raise ValueError("need at least two periods")
        if self.n_sims < 1:
            raise ValueError("need at least one simulation")
        if self.alpha_scale <= 0:
            raise ValueError("alpha scale must be positive")
        # both parameter sets must be admissible, scaled leg included
        self.params()
        self.params(scaled=True)

    def params(self, scaled: bool = False) -> OmegaParams:
        alpha = self.alpha * self.alpha_scale if scaled else self.alpha
        return OmegaParams(alpha=alpha, rho=self.rho)

    @property
    def has_counterfactual(self) -> bool:
        return (
            self.counterfactual_network is not None
            or self.fragment_sector is not None
            or self.alpha_scale != 1.0
        )


def _innovation_scales(scenario: Scenario, model: NetworkModel) -> np.ndarray:
    j = len(model.destinations)
    if scenario.sigma_target is not None:
        return scenario.sigma_target * model.dbar * np.sqrt((1.0 + scenario.rho) / 2.0)
    sigma = np.atleast_1d(np.asarray(scenario.sigma, dtype=float))
    if sigma.size == 1:
        return np.full(j, sigma[0])
    if sigma.size != j:
        raise ValueError(f"sigma has {sigma.size} entries for {j} destination(s)")
    return sigma


@dataclass(frozen=True)
class LegMoments:
    """Pooled volatility and pass-through moments for one leg of a run."""

    sigma_eta: float
    sigma_y: float
    median_elasticity: float


@dataclass(frozen=True)
class MomentReport:
    name: str
    n_sims: int
    baseline: LegMoments
    counterfactual: LegMoments | None


@dataclass(frozen=True)
class ScenarioRun:
    """Raw simulation bundle behind a report: models, parameters, shared
    demand draws, and per-leg output paths."""

    scenario: Scenario
    model: NetworkModel
    params: OmegaParams
    demand: np.ndarray
    outputs: OutputPanel
    cf_model: NetworkModel | None
    cf_params: OmegaParams | None
    cf_outputs: OutputPanel | None

    def _leg(self, leg: str) -> tuple[NetworkModel, OmegaParams, OutputPanel]:
        if leg == "baseline":
            return self.model, self.params, self.outputs
        if leg == "counterfactual":
            if self.cf_outputs is None:
                raise ValueError("run has no counterfactual leg")
            return self.cf_model, self.cf_params, self.cf_outputs
        raise ValueError(f"unknown leg {leg!r}")

    def moments(self, leg: str = "baseline") -> LegMoments:
        model, _, outputs = self._leg(leg)
        xi = exposure_shares(model)
        # zero-output sectors have no position or growth; keep them out of
        # the pooled moments entirely
        alive = np.isfinite(xi).all(axis=1)
        dlog_demand = _log_growth(self.demand)
        eta_ind = np.einsum("nj,pjt->pnt", xi[alive], dlog_demand)
        dlog_y = _log_growth(outputs.outputs[:, alive, :])
        ratio = np.where(
            np.abs(eta_ind) > ELASTICITY_DENOM_FLOOR, dlog_y / eta_ind, np.nan
        )
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            per_sim = np.nanmedian(ratio.reshape(ratio.shape[0], -1), axis=1)
        return LegMoments(
            sigma_eta=float(np.nanstd(eta_ind)),
            sigma_y=float(np.nanstd(dlog_y)),
            median_elasticity=float(np.nanmean(per_sim)),
        )

    def report(self) -> MomentReport:
        cf = self.moments("counterfactual") if self.cf_outputs is not None else None
        return MomentReport(
            name=self.scenario.name,
            n_sims=self.scenario.n_sims,
            baseline=self.moments("baseline"),
            counterfactual=cf,
        )

    def panel(self, leg: str = "baseline") -> pd.DataFrame:
        """Long-form per-sim regression panel with arithmetic growth, the
        exposure-weighted industry shock, and the inventory-weighted shock.

        Zero-output sectors carry no flows, so their position and growth
        are undefined; their rows are dropped here rather than polluting
        the fits with NaN.

        Output levels move with the change in demand, so over a full path
        the inventory regressor is the first difference of the weighted
        shock; paths start at the steady state, which pins the initial
        lag at zero.  One step from the steady state the difference and
        the level coincide."""
        model, params, outputs = self._leg(leg)
        shock_panel = ShockPanel.from_demand(self.demand)
        eta_ind = shock_panel.industry(model)
        ups_level = shock_panel.weighted(model, params)
        ups = np.concatenate(
            [ups_level[..., :1], np.diff(ups_level, axis=-1)], axis=-1
        )
        growth = outputs.growth
        n_paths, n, t_growth = growth.shape
        sector_ids = [s.sector_id for s in model.sectors]
        frame = pd.DataFrame(
            {
                "sim": np.repeat(np.arange(n_paths), n * t_growth),
                "sector_id": np.tile(np.repeat(sector_ids, t_growth), n_paths),
                "period": np.tile(np.arange(1, t_growth + 1), n_paths * n),
                "upstreamness": np.tile(np.repeat(upstreamness(model), t_growth), n_paths),
                "alpha": params.alpha,
                "growth": growth.ravel(),
                "eta_hat": eta_ind.ravel(),
                "upsilon": ups.ravel(),
            }
        )
        value_cols = ["upstreamness", "growth", "eta_hat", "upsilon"]
        keep = np.isfinite(frame[value_cols].to_numpy()).all(axis=1)
        return frame[keep].reset_index(drop=True)


def _log_growth(levels: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        grown = np.diff(np.log(levels), axis=-1)
    if not np.all(np.isfinite(grown)):
        warnings.warn(
            "nonpositive simulated levels; log growth contains NaN",
            RuntimeWarning,
            stacklevel=3,
        )
    return grown


def _batched_output(
    model: NetworkModel, params: OmegaParams, demand: np.ndarray, threads: int
) -> OutputPanel:
    if threads <= 1 or demand.shape[0] == 1:
        return network_output(model, params, demand)
    chunks = np.array_split(np.arange(demand.shape[0]), min(threads, demand.shape[0]))
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(
            pool.map(lambda idx: network_output(model, params, demand[idx]).outputs, chunks)
        )
    return OutputPanel.from_outputs(np.concatenate(parts, axis=0))


def simulate_scenario(scenario: Scenario, threads: int = 1) -> ScenarioRun:
    """Draw demand once, run every leg on the shared paths."""
    model = load_model(scenario.network)
    if scenario.mode == "single-destination":
        model = collapse_to_single(model)

    cf_model = None
    if scenario.counterfactual_network is not None:
        cf_model = load_model(scenario.counterfactual_network)
        if scenario.mode == "single-destination":
            cf_model = collapse_to_single(cf_model)
        base_ids = tuple(s.sector_id for s in model.sectors)
        cf_ids = tuple(s.sector_id for s in cf_model.sectors)
        if base_ids != cf_ids:
            raise ValueError(
                "counterfactual network has a different sector set; swaps "
                "require matching sectors"
            )
        if len(cf_model.destinations) != len(model.destinations):
            raise ValueError("counterfactual network has a different destination count")
    elif scenario.fragment_sector is not None:
        cf_model = fragment(model, scenario.fragment_sector)
    elif scenario.alpha_scale != 1.0:
        cf_model = model

    process = DemandProcess(
        dbar=model.dbar,
        rho=scenario.rho,
        sigma=_innovation_scales(scenario, model),
        varrho=scenario.varrho,
        seed=scenario.seed,
    )
    demand = draw_demand(process, scenario.T, n_paths=scenario.n_sims)

    params = scenario.params()
    outputs = _batched_output(model, params, demand, threads)
    cf_params = cf_outputs = None
    if cf_model is not None:
        cf_params = scenario.params(scaled=True)
        cf_outputs = _batched_output(cf_model, cf_params, demand, threads)

    return ScenarioRun(
        scenario=scenario,
        model=model,
        params=params,
        demand=demand,
        outputs=outputs,
        cf_model=cf_model,
        cf_params=cf_params,
        cf_outputs=cf_outputs,
    )


def run_scenario(scenario: Scenario, threads: int = 1) -> MomentReport:
    return simulate_scenario(scenario, threads=threads).report()


@dataclass(frozen=True)
class MomentTable:
    """Rendered moment comparison; CSV and text carry the same numbers."""

    rows: tuple[dict, ...]

    _COLUMNS = ("scenario", "leg", "sigma_eta", "sigma_y", "median_elasticity")

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame(list(self.rows), columns=list(self._COLUMNS))

    @staticmethod
    def _fmt(value: float) -> str:
        return f"{value:.6g}"

    @staticmethod
    def _reference_note(reference: dict) -> str:
        pairs = " ".join(f"{k}={MomentTable._fmt(v)}" for k, v in reference.items())
        return f"reference (published, external data, not asserted): {pairs}"

    def render_csv(self, reference: dict | None = None) -> str:
        lines = [",".join(self._COLUMNS)]
        for row in self.rows:
            lines.append(
                ",".join(
                    [row["scenario"], row["leg"]]
                    + [self._fmt(row[c]) for c in self._COLUMNS[2:]]
                )
            )
        if reference:
            lines.append("# " + self._reference_note(reference))
        return "\n".join(lines) + "\n"

    def render_text(self, reference: dict | None = None) -> str:
        header = list(self._COLUMNS)
        body = [
            [row["scenario"], row["leg"]] + [self._fmt(row[c]) for c in header[2:]]
            for row in self.rows
        ]
        widths = [
            max(len(header[i]), *(len(r[i]) for r in body)) if body else len(header[i])
            for i in range(len(header))
        ]
        def line(cells):
            return "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
        out = [line(header), line(["-" * w for w in widths])]
        out.extend(line(r) for r in body)
        if reference:
            out.append(self._reference_note(reference))
        return "\n".join(out) + "\n"


def moment_table(reports: Sequence[MomentReport]) -> MomentTable:
    if not reports:
        raise ValueError("no reports to tabulate")
    rows = []
    for report in reports:
        legs = [("baseline", report.baseline)]
        if report.counterfactual is not None:
            legs.append(("counterfactual", report.counterfactual))
        for leg, moments in legs:
            rows.append(
                {
                    "scenario": report.name,
                    "leg": leg,
                    "sigma_eta": moments.sigma_eta,
                    "sigma_y": moments.sigma_y,
                    "median_elasticity": moments.median_elasticity,
                }
            )
    return MomentTable(rows=tuple(rows))


@dataclass(frozen=True)
class FigureData:
    """Per-bin loadings averaged across sims, with a one-sd band."""

    intervals: tuple[tuple[float, float], ...]
    labels: tuple[str, ...]
    mean: np.ndarray
    sd: np.ndarray
    n_sims: int

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "bin": list(self.labels),
                "bin_low": [lo for lo, _ in self.intervals],
                "coef_mean": self.mean,
                "coef_sd": self.sd,
            }
        )


def figure_data(
    panel: pd.DataFrame,
    edges: Sequence[float] = DEFAULT_BIN_EDGES,
    *,
    outcome: str = "growth",
    shock: str = "eta_hat",
    position: str = "upstreamness",
    unit: str = "sector_id",
    sim: str = "sim",
) -> FigureData:
    """Run the binned regression sim by sim and summarize the loadings.

    A single sim yields a zero-width band.  Sims share the sector set, so
    empty-bin merging resolves to the same layout in every sim; one
    summary warning replaces the per-sim repeats.
    """
    if len(panel) == 0:
        raise ValueError("empty panel")
    coefs = []
    intervals = labels = None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        for _, sub in panel.groupby(sim, sort=True):
            fit = binned_regression(
                sub, outcome=outcome, shock=shock, position=position, unit=unit, edges=edges
            )
            if intervals is None:
                intervals, labels = fit.intervals, fit.labels()
            elif fit.intervals != intervals:
                raise ValueError(
                    "bin layout differs across sims; pass explicit edges "
                    "that are non-empty for every sim"
                )
            coefs.append(fit.coef)
    if len(intervals) < len(edges):
        warnings.warn("empty position bins were merged", UserWarning, stacklevel=2)
    stack = np.vstack(coefs)
    return FigureData(
        intervals=intervals,
        labels=labels,
        mean=stack.mean(axis=0),
        sd=stack.std(axis=0),
        n_sims=stack.shape[0],
    )


def render_binned_figure(
    series: Sequence[tuple[str, FigureData]],
    path: str | Path,
    title: str = "Shock pass-through by network position",
) -> None:
    """Write a PNG of per-bin loadings with shaded one-sd bands."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for label, data in series:
        x = np.arange(len(data.labels))
        lo = data.mean - data.sd
        hi = data.mean + data.sd
        ax.fill_between(x, lo, hi, alpha=0.25)
        ax.plot(x, data.mean, marker="o", label=label)
        ax.set_xticks(x)
        ax.set_xticklabels(data.labels)
    ax.set_xlabel("upstreamness bin")
    ax.set_ylabel("shock loading")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150, metadata={"Software": "bullwhip"})
    plt.close(fig)


def _resolve_network(entry, base_dir: Path) -> ModelSource:
    if isinstance(entry, str):
        path = Path(entry)
        return path if path.is_absolute() else base_dir / path
    if isinstance(entry, dict) and "synthetic" in entry:
        return synthesize(SyntheticSpec(**entry["synthetic"]))
    raise ValueError("network entry must be a path or {'synthetic': {...}}")


def scenario_from_config(config: dict, base_dir: Path) -> Scenario:
    if "network" not in config:
        raise ValueError("config is missing 'network'")
    kwargs = {
        "network": _resolve_network(config["network"], base_dir),
        "name": config.get("name", "scenario"),
    }
    cf = config.get("counterfactual")
    if cf:
        unknown = set(cf) - {"network", "fragment", "alpha_scale"}
        if unknown:
            raise ValueError(
                f"unknown counterfactual key(s) {sorted(unknown)}; "
                "expected network, fragment, or alpha_scale"
            )
        if "network" in cf:
            kwargs["counterfactual_network"] = _resolve_network(cf["network"], base_dir)
        if "fragment" in cf:
            kwargs["fragment_sector"] = cf["fragment"]
        kwargs["alpha_scale"] = cf.get("alpha_scale", 1.0)
    sigma = config.get("sigma")
    if isinstance(sigma, dict):
        kwargs["sigma_target"] = sigma["calibrated"]
    elif sigma is not None:
        kwargs["sigma"] = sigma
    else:
        kwargs["sigma_target"] = 0.05
    for key in ("alpha", "rho", "varrho", "T", "n_sims", "seed", "mode"):
        if key in config:
            kwargs[key] = config[key]
    return Scenario(**kwargs)


def _versions() -> dict:
    import matplotlib
    import scipy

    return {
        "python": sys.version.split()[0],
        "bullwhip": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pandas": pd.__version__,
        "matplotlib": matplotlib.__version__,
    }


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(65536), b""):
            digest.update(block)
    return digest.hexdigest()


def pipeline(
    config: Union[str, Path, dict],
    out_dir: Union[str, Path],
    threads: int = 1,
    figures: bool = True,
    seed: int | None = None,
) -> dict:
    """Run a full scenario end to end and write artifacts plus a manifest.

    Every stage is timed; on failure the partial artifacts stay in place
    and the manifest records which stage broke.  The returned manifest is
    also written as ``manifest.json``.  Data artifacts are deterministic
    given the config; only the manifest timings vary between reruns.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest: dict = {
        "status": "ok",
        "failure_stage": None,
        "error": None,
        "threads": threads,
        "versions": _versions(),
        "timings": {},
        "files": {},
    }
    written: list[Path] = []

    def emit(name: str, text: str) -> Path:
        path = out / name
        path.write_text(text)
        written.append(path)
        return path

    stage = "config"
    clock = time.perf_counter()
    try:
        if isinstance(config, (str, Path)):
            base_dir = Path(config).resolve().parent
            config = json.loads(Path(config).read_text())
        else:
            base_dir = Path.cwd()
        if seed is not None:
            config = {**config, "seed": seed}
        scenario = scenario_from_config(config, base_dir)
        manifest["scenario"] = scenario.name
        manifest["seed"] = scenario.seed
        manifest["timings"][stage] = time.perf_counter() - clock

        stage = "load"
        clock = time.perf_counter()
        model = load_model(scenario.network)
        emit("model.json", json.dumps(model_to_dict(model), indent=2) + "\n")
        manifest["timings"][stage] = time.perf_counter() - clock

        stage = "metrics"
        clock = time.perf_counter()
        metrics = PositionMetrics.compute(model, scenario.params())
        frame = metrics.to_frame()
        emit("metrics.csv", frame.to_csv(index=False))
        manifest["timings"][stage] = time.perf_counter() - clock

        stage = "simulate"
        clock = time.perf_counter()
        run = simulate_scenario(scenario, threads=threads)
        legs = ["baseline"]
        if run.cf_outputs is not None:
            legs.append("counterfactual")
        panels = {leg: run.panel(leg) for leg in legs}
        combined = pd.concat(
            [panel.assign(leg=leg) for leg, panel in panels.items()],
            ignore_index=True,
        )
        emit("panel.csv", combined.to_csv(index=False))
        manifest["timings"][stage] = time.perf_counter() - clock

        stage = "estimate"
        clock = time.perf_counter()
        edges = tuple(config.get("bins", DEFAULT_BIN_EDGES))
        coefficients: dict = {}
        figure_series: list[tuple[str, FigureData]] = []
        for leg in legs:
            entry: dict = {}
            leg_params = run.params if leg == "baseline" else run.cf_params
            if leg_params.alpha > 0 and len(run.model.destinations) > 1:
                fit = model_consistent_regression(panels[leg])
                entry["model_consistent"] = {
                    "delta1": fit.delta1,
                    "delta2": fit.delta2,
                    "implied_alpha_rho": fit.implied_alpha_rho,
                }
            else:
                entry["model_consistent"] = None
            data = figure_data(panels[leg], edges=edges)
            figure_series.append((leg, data))
            entry["binned"] = {
                "bins": list(data.labels),
                "coef_mean": data.mean.tolist(),
                "coef_sd": data.sd.tolist(),
            }
            coefficients[leg] = entry
        emit("coefficients.json", json.dumps(coefficients, indent=2) + "\n")
        manifest["timings"][stage] = time.perf_counter() - clock

        stage = "report"
        clock = time.perf_counter()
        table = moment_table([run.report()])
        emit("moments.csv", table.render_csv(reference=REFERENCE_MOMENTS))
        emit("moments.txt", table.render_text(reference=REFERENCE_MOMENTS))
        manifest["timings"][stage] = time.perf_counter() - clock

        if figures:
            stage = "figures"
            clock = time.perf_counter()
            figure_path = out / "figure_binned.png"
            render_binned_figure(figure_series, figure_path)
            written.append(figure_path)
            emit(
                "figure_binned.csv",
                pd.concat(
                    [d.frame().assign(leg=leg) for leg, d in figure_series],
                    ignore_index=True,
                ).to_csv(index=False),
            )
            manifest["timings"][stage] = time.perf_counter() - clock
    except Exception as exc:  # noqa: BLE001 - manifest must record any failure
        manifest["status"] = "failed"
        manifest["failure_stage"] = stage
        manifest["error"] = str(exc)

    manifest["files"] = {p.name: _sha256(p) for p in written}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest
