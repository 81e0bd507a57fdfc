"""Inventory amplification in production networks.

Library layout:

- :mod:`bullwhip.tables`     input-output tables, validation, synthesis
- :mod:`bullwhip.metrics`    network position statistics
- :mod:`bullwhip.shocks`     stochastic demand, shifters, shift-share shocks
- :mod:`bullwhip.dynamics`   chain and network output propagation
- :mod:`bullwhip.policies`   micro inventory-policy solvers
- :mod:`bullwhip.regression` fixed effects, OLS, and the estimating equations
- :mod:`bullwhip.scenarios`  Monte Carlo scenario runner and moment tables
- :mod:`bullwhip.cli`        command-line interface
"""

__version__ = "0.1.0"

from bullwhip.tables import (
    IOTable,
    NetworkModel,
    SyntheticSpec,
    build_network,
    inventory_correct,
    load_io_table,
    save_io_table,
    synthesize,
)
from bullwhip.metrics import (
    OmegaParams,
    PositionMetrics,
    downstreamness,
    exposure_shares,
    hhi,
    inventory_upstreamness,
    leontief,
    steady_output,
    steady_table,
    upstreamness,
    weighted_shock,
)
from bullwhip.shocks import (
    DemandProcess,
    ShockPanel,
    calibrate_varrho,
    draw_demand,
)
from bullwhip.dynamics import (
    amplification_check,
    fragment,
    network_output,
    simulate_chain,
)
from bullwhip.scenarios import (
    Scenario,
    moment_table,
    pipeline,
    run_scenario,
)

__all__ = [
    "DemandProcess",
    "IOTable",
    "NetworkModel",
    "OmegaParams",
    "PositionMetrics",
    "Scenario",
    "ShockPanel",
    "SyntheticSpec",
    "amplification_check",
    "build_network",
    "calibrate_varrho",
    "downstreamness",
    "draw_demand",
    "exposure_shares",
    "fragment",
    "hhi",
    "inventory_correct",
    "inventory_upstreamness",
    "leontief",
    "load_io_table",
    "moment_table",
    "network_output",
    "pipeline",
    "run_scenario",
    "save_io_table",
    "simulate_chain",
    "steady_output",
    "steady_table",
    "synthesize",
    "upstreamness",
    "weighted_shock",
]
