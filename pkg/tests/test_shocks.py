from __future__ import annotations

import dataclasses

import numpy as np
import pytest

from bullwhip.metrics import (
    OmegaParams,
    exposure_shares,
    inventory_upstreamness,
    upstreamness,
)
from bullwhip.shocks import (
    ConsumptionPanel,
    DemandProcess,
    ShockPanel,
    build_covariance,
    calibrate_varrho,
    draw_demand,
    estimate_shifters,
    industry_volatility_slope,
    shift_share,
    substream,
    synthesize_consumption_panel,
)
from bullwhip.tables import SyntheticSpec, synthesize


def _process(model, sigma_frac=0.05, varrho=0.0, rho=0.7, seed=0) -> DemandProcess:
    return DemandProcess(
        dbar=model.dbar, rho=rho, sigma=sigma_frac * model.dbar, varrho=varrho, seed=seed
    )


def test_covariance_by_hand():
    cov = build_covariance(np.array([1.0, 2.0]), 0.5)
    np.testing.assert_allclose(cov, [[1.0, 1.0], [1.0, 4.0]])


@pytest.mark.parametrize("varrho", [0.0, 0.3, 0.9, 1.0])
def test_covariance_is_positive_semidefinite(varrho):
    cov = build_covariance(np.linspace(0.5, 2.0, 6), varrho)
    assert np.linalg.eigvalsh(cov).min() >= -1e-12


def test_equicorrelation_below_feasibility_is_rejected():
    with pytest.raises(ValueError, match="varrho"):
        DemandProcess(
            dbar=np.ones(3), rho=0.5, sigma=np.ones(3) * 0.1, varrho=-0.9
        )


def test_substreams_are_deterministic_and_distinct():
    a = substream(42, 7).standard_normal(4)
    b = substream(42, 7).standard_normal(4)
    c = substream(42, 8).standard_normal(4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_demand_paths_start_at_the_mean_and_are_seeded(random_model):
    proc = _process(random_model, seed=3)
    d = draw_demand(proc, T=6, n_paths=5)
    assert d.shape == (5, len(random_model.dbar), 6)
    np.testing.assert_array_equal(d[:, :, 0], np.broadcast_to(random_model.dbar, d[:, :, 0].shape))
    np.testing.assert_array_equal(d, draw_demand(proc, T=6, n_paths=5))
    assert not np.array_equal(d, draw_demand(dataclasses.replace(proc, seed=4), 6, 5))


def test_leading_paths_do_not_depend_on_batch_size(random_model):
    proc = _process(random_model)
    few = draw_demand(proc, T=8, n_paths=3)
    many = draw_demand(proc, T=8, n_paths=10)
    np.testing.assert_array_equal(few, many[:3])


def test_stationary_dispersion_matches_the_ar1_formula(random_model):
    proc = _process(random_model, sigma_frac=0.04, rho=0.6, seed=1)
    d = draw_demand(proc, T=400, n_paths=200)
    burn = 50
    sd = d[:, :, burn:].std(axis=(0, 2))
    target = 0.04 * random_model.dbar / np.sqrt(1.0 - 0.6**2)
    np.testing.assert_allclose(sd, target, rtol=0.05)


def test_perfectly_correlated_shocks_move_destinations_together(random_model):
    proc = _process(random_model, varrho=1.0, seed=2)
    d = draw_demand(proc, T=50, n_paths=4)
    scaled = (d - random_model.dbar[None, :, None]) / (0.05 * random_model.dbar)[None, :, None]
    for j in range(1, scaled.shape[1]):
        np.testing.assert_allclose(scaled[:, j], scaled[:, 0], atol=1e-10)


def test_negative_level_draws_are_redrawn_with_a_warning(random_model):
    proc = _process(random_model, sigma_frac=0.8, seed=0)
    with pytest.warns(UserWarning, match="redrew"):
        d = draw_demand(proc, T=30, n_paths=20)
    assert np.all(d > 0)


def test_hopeless_positivity_raises_after_the_redraw_budget():
    # every destination must come out positive at once, which a wildly
    # mis-scaled sigma makes a coin flip per destination: 2^-60 per attempt
    j = 60
    proc = DemandProcess(
        dbar=np.full(j, 1e-9), rho=0.0, sigma=np.full(j, 50.0), varrho=0.0, seed=0
    )
    with pytest.raises(RuntimeError, match="redraws"):
        draw_demand(proc, T=5, n_paths=2)


def test_growth_conventions_match_their_definitions(random_model):
    d = draw_demand(_process(random_model), T=10, n_paths=3)
    arith = ShockPanel.from_demand(d, growth="arithmetic")
    np.testing.assert_allclose(arith.eta, d[:, :, 1:] / d[:, :, :-1] - 1.0, rtol=1e-12)
    logg = ShockPanel.from_demand(d, growth="log")
    np.testing.assert_allclose(logg.eta, np.diff(np.log(d), axis=2), rtol=1e-12)
    with pytest.raises(ValueError, match="growth convention"):
        ShockPanel.from_demand(d, growth="geometric")


def test_industry_shock_is_the_exposure_weighted_sum(random_model):
    panel = ShockPanel.from_process(_process(random_model), T=6, n_paths=2)
    xi = exposure_shares(random_model)
    got = panel.industry(random_model)
    for p in range(2):
        for t in range(5):
            brute = xi @ panel.eta[p, :, t]
            np.testing.assert_allclose(got[p, :, t], brute, rtol=1e-10)


def test_weighted_shock_panel_route_agrees_with_metrics(random_model, params):
    panel = ShockPanel.from_process(_process(random_model), T=6, n_paths=2)
    ucal, _ = inventory_upstreamness(random_model, params)
    xi = exposure_shares(random_model)
    got = panel.weighted(random_model, params)
    brute = np.einsum("rj,rj,pjt->prt", ucal, xi, panel.eta)
    np.testing.assert_allclose(got, brute, rtol=1e-10)


def test_shift_share_is_a_plain_contraction():
    xi = np.array([[0.3, 0.7], [1.0, 0.0]])
    eta = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_allclose(shift_share(xi, eta), xi @ eta)


def test_shifter_estimates_recover_the_truth_without_noise():
    rng = np.random.default_rng(5)
    eta = rng.normal(0.0, 0.1, size=(3, 12))
    panel = synthesize_consumption_panel(eta, n_countries=4, n_industries=5, noise_sigma=0.0)
    est = estimate_shifters(panel)
    assert est.shape == (20, 3, 12)
    np.testing.assert_allclose(est, np.broadcast_to(eta, est.shape), atol=1e-12)


def test_shifter_estimates_average_out_moderate_noise():
    rng = np.random.default_rng(6)
    eta = rng.normal(0.0, 0.1, size=(3, 12))
    panel = synthesize_consumption_panel(
        eta, n_countries=6, n_industries=6, noise_sigma=0.02, seed=1
    )
    est = estimate_shifters(panel)
    err = est - np.broadcast_to(eta, est.shape)
    # 25 donors cut the noise sd by a factor 5
    assert np.abs(err).mean() < 3 * 0.02 / 5


def test_shifter_estimates_ignore_own_and_same_margin_flows():
    rng = np.random.default_rng(7)
    eta = rng.normal(0.0, 0.1, size=(2, 8))
    panel = synthesize_consumption_panel(eta, n_countries=4, n_industries=4, noise_sigma=0.01)
    base = estimate_shifters(panel)
    # corrupt every flow that shares sector 0's country or industry
    tainted = panel.log_flows.copy()
    own = panel.sectors[0]
    for i, sec in enumerate(panel.sectors):
        if sec.country == own.country or sec.industry == own.industry:
            tainted[i] += rng.normal(0.0, 5.0, size=tainted[i].shape)
    other = estimate_shifters(
        ConsumptionPanel(sectors=panel.sectors, destinations=panel.destinations, log_flows=tainted)
    )
    np.testing.assert_array_equal(other[0], base[0])


def test_shifter_estimation_needs_donors():
    eta = np.zeros((1, 4))
    with pytest.raises(ValueError, match="two countries and two industries"):
        estimate_shifters(
            synthesize_consumption_panel(eta, n_countries=1, n_industries=1)
        )


def test_iid_destination_shocks_diversify_upstream(random_model):
    # far-from-consumers sectors pool more destinations, so their
    # shift-share shocks are smoother when destinations are independent
    proc = _process(random_model, varrho=0.0, seed=3)
    slope = industry_volatility_slope(random_model, proc, T=200, n_paths=100)
    assert slope < 0


def test_common_shocks_flatten_the_volatility_profile(random_model):
    proc = _process(random_model, varrho=1.0, seed=3)
    slope = industry_volatility_slope(random_model, proc, T=200, n_paths=100)
    assert abs(slope) < 1e-4


def test_slope_requires_position_variation(chain2_model):
    flat = synthesize(SyntheticSpec(n_sectors=1, topology="line"))
    proc = DemandProcess(dbar=flat.dbar, rho=0.5, sigma=0.05 * flat.dbar)
    with pytest.raises(ValueError, match="no variation"):
        industry_volatility_slope(flat, proc, T=20, n_paths=10)


def test_calibration_recovers_a_synthetic_target(random_model):
    proc = _process(random_model, seed=8)
    truth = dataclasses.replace(proc, varrho=0.35)
    target = industry_volatility_slope(random_model, truth, T=120, n_paths=80)
    result = calibrate_varrho(random_model, proc, target, T=120, n_paths=80)
    assert abs(result.slope - target) <= 5e-4
    assert result.iterations <= 30
    assert 0.0 <= result.varrho <= 0.99


def test_calibration_reports_an_unbracketable_target(random_model):
    proc = _process(random_model, seed=8)
    with pytest.raises(ValueError, match="not bracketed"):
        calibrate_varrho(random_model, proc, 0.5, T=60, n_paths=40)
