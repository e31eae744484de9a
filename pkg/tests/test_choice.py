import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from capchoice import (
    ChoiceObservation,
    ChoiceSet,
    Dispersion,
    EstimationError,
    Link,
    ShadowPriceVector,
    build_network,
    choice_probabilities,
    estimate_theta,
    grad_theta,
    grad_w,
    log_likelihood,
    logsum_consumer_surplus,
    make_route,
    representative_utility,
    zero_prices,
)
from capchoice.simulate import drive_bike_scenario, simulate

from conftest import THETA_PAPER, random_choice_instance, weighted_two_path_obs


def brute_force_loglik(observations, theta, w, network):
    """Straight-line reimplementation used as the likelihood oracle."""
    total = 0.0
    for obs in observations:
        utilities = []
        for route in obs.choice_set.routes:
            v = 0.0
            for a in route.links:
                link = network.link(a)
                v -= theta.theta[link.mode] * (link.cost + w.prices.get(a, 0.0))
            utilities.append(v)
        denom = sum(math.exp(v) for v in utilities)
        total += obs.weight * math.log(math.exp(utilities[obs.chosen]) / denom)
    return total


def test_representative_utility_worked_values(two_path):
    net, cs, theta = two_path
    path1, path2 = cs.routes
    w = ShadowPriceVector(1, {"drive-": 2.68})
    assert representative_utility(path1, theta, w, net) == pytest.approx(-2.95754)
    assert representative_utility(path2, theta, zero_prices(), net) == pytest.approx(-3.1675)
    zero_theta = Dispersion({m: 0.0 for m in theta.theta})
    assert representative_utility(path1, zero_theta, w, net) == 0.0


def test_choice_probabilities_paper_values(two_path):
    net, cs, theta = two_path
    p = choice_probabilities(cs, theta, ShadowPriceVector(1, {"drive-": 2.68}), net)
    assert p[0] == pytest.approx(0.55, abs=0.005)
    p2 = choice_probabilities(cs, theta, ShadowPriceVector(1, {"drive-": 0.03}), net)
    assert p2[0] == pytest.approx(0.61, abs=0.005)


def test_identical_routes_uniform_probabilities():
    net = build_network(
        ["o", "m0", "m1", "m2", "d"],
        [Link(f"u{k}", "o", f"m{k}", 0, 4.0) for k in range(3)]
        + [Link(f"v{k}", f"m{k}", "d", 0, 6.0) for k in range(3)],
    )
    cs = ChoiceSet(("o", "d"), tuple(
        make_route(net, ("o", "d"), [f"u{k}", f"v{k}"]) for k in range(3)
    ))
    p = choice_probabilities(cs, Dispersion({0: 0.3}), zero_prices(), net)
    assert np.allclose(p, 1.0 / 3.0, atol=1e-15)


def test_log_likelihood_simple_values(two_path):
    net, cs, theta = two_path
    even = Dispersion({m: 0.0 for m in theta.theta})
    obs = [ChoiceObservation(1, cs, 0)]
    assert log_likelihood(obs, even, zero_prices(), net) == pytest.approx(math.log(0.5))
    obs3 = [ChoiceObservation(1, cs, 0, weight=3.0)]
    assert log_likelihood(obs3, even, zero_prices(), net) == pytest.approx(3 * math.log(0.5))


def test_log_likelihood_matches_brute_force_oracle(two_path):
    net, _, theta = two_path
    sc = drive_bike_scenario(noise_sigma=0.0, seed=3, intervals=1,
                             demand={("1", "4"): 100, ("4", "1"): 100})
    res = simulate(sc)
    observations = res.observations()
    w = ShadowPriceVector(1, {"drive-": 1.5, "pick-": 0.7})
    fast = log_likelihood(observations, theta, w, sc.network)
    slow = brute_force_loglik(observations, theta, w, sc.network)
    assert fast == pytest.approx(slow, rel=1e-12)


def test_singleton_choice_sets_contribute_zero(two_path):
    net, cs, theta = two_path
    single = ChoiceSet(("1", "4"), (cs.routes[0],))
    obs = [ChoiceObservation(1, single, 0, weight=5.0)]
    assert log_likelihood(obs, theta, zero_prices(), net) == 0.0


def test_grad_symmetric_instance_is_zero():
    net = build_network(
        ["o", "m0", "m1", "d"],
        [Link(f"u{k}", "o", f"m{k}", 0, 5.0) for k in range(2)]
        + [Link(f"v{k}", f"m{k}", "d", 0, 5.0) for k in range(2)],
    )
    cs = ChoiceSet(("o", "d"), tuple(
        make_route(net, ("o", "d"), [f"u{k}", f"v{k}"]) for k in range(2)
    ))
    obs = [ChoiceObservation(1, cs, 0), ChoiceObservation(1, cs, 1)]
    for theta_val in (0.05, 0.3, 2.0):
        g = grad_theta(obs, Dispersion({0: theta_val}), zero_prices(), net)
        assert g[0] == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("seed", range(12))
def test_gradients_match_finite_differences(seed):
    net, cs, theta, w, observations = random_choice_instance(seed)
    h = 1e-5

    g_theta = grad_theta(observations, theta, w, net)
    for m, g in g_theta.items():
        up = dict(theta.theta)
        dn = dict(theta.theta)
        up[m] += h
        dn[m] -= h
        fd = (
            log_likelihood(observations, Dispersion(up), w, net)
            - log_likelihood(observations, Dispersion(dn), w, net)
        ) / (2 * h)
        assert g == pytest.approx(fd, rel=1e-5, abs=1e-8)

    g_w = grad_w(observations, theta, w, net)
    assert set(g_w) == set(w.prices)
    for a, g in g_w.items():
        up = dict(w.prices)
        dn = dict(w.prices)
        up[a] += h
        dn[a] = max(dn[a] - h, 0.0)
        step = up[a] - dn[a]
        fd = (
            log_likelihood(observations, theta, ShadowPriceVector(1, up), net)
            - log_likelihood(observations, theta, ShadowPriceVector(1, dn), net)
        ) / step
        assert g == pytest.approx(fd, rel=1e-5, abs=1e-8)


def test_grad_w_absent_off_requested_links(two_path):
    net, cs, theta = two_path
    obs = weighted_two_path_obs(cs, 10, 5)
    g = grad_w(obs, theta, zero_prices(), net, links=["drive-"])
    assert set(g) == {"drive-"}


def test_estimate_theta_recovers_truth(two_path):
    net, _, _ = two_path
    sc = drive_bike_scenario(noise_sigma=0.0, seed=42, intervals=100, reset_capacities=True)
    res = simulate(sc)
    obs = res.observations(od=("1", "4"))
    assert sum(o.weight for o in obs) == 10_000
    theta_hat, report = estimate_theta(obs, net, tie_modes=True)
    assert report.converged
    assert abs(theta_hat.theta[0] - THETA_PAPER) <= 0.01


def test_estimate_theta_perfect_separation_caps(two_path):
    net, cs, _ = two_path
    obs = [ChoiceObservation(1, cs, 0, weight=50.0)]
    with pytest.warns(UserWarning, match="capped"):
        theta_hat, report = estimate_theta(obs, net, tie_modes=True, theta_max=1e3)
    assert theta_hat.theta[0] == pytest.approx(1e3)
    assert any("capped" in msg for msg in report.warnings)


def test_estimate_theta_rejects_singletons(two_path):
    net, cs, _ = two_path
    single = ChoiceSet(("1", "4"), (cs.routes[0],))
    obs = [ChoiceObservation(1, single, 0)]
    with pytest.raises(EstimationError, match="flat"):
        estimate_theta(obs, net)


def test_estimate_theta_per_mode(two_path):
    net, cs, theta_true = two_path
    sc = drive_bike_scenario(noise_sigma=0.0, seed=8, intervals=30, reset_capacities=True)
    res = simulate(sc)
    theta_hat, report = estimate_theta(res.observations(), net, tie_modes=False)
    assert report.converged
    assert set(theta_hat.theta) <= {m.index for m in net.modes}


def test_logsum_single_route(two_path):
    net, cs, _ = two_path
    single = ChoiceSet(("1", "4"), (cs.routes[0],))
    theta = Dispersion.tied(0.1, [m.index for m in net.modes])
    v = representative_utility(cs.routes[0], theta, zero_prices(), net)
    assert logsum_consumer_surplus(single, theta, zero_prices(), net) == pytest.approx(v)


def test_logsum_prices_never_raise_surplus(two_path):
    net, cs, theta = two_path
    base = logsum_consumer_surplus(cs, theta, zero_prices(), net)
    rng = np.random.default_rng(2)
    for _ in range(20):
        w = ShadowPriceVector(1, {"drive-": float(rng.uniform(0, 8)),
                                  "pick-": float(rng.uniform(0, 8))})
        assert logsum_consumer_surplus(cs, theta, w, net) <= base + 1e-12


def test_logsum_delta_cs_demand_drop_positive(two_path):
    # prices falling from 2.68 to 0.03 raises consumer surplus
    net, cs, theta = two_path
    high = logsum_consumer_surplus(cs, theta, ShadowPriceVector(1, {"drive-": 2.68}), net,
                                   normalize=True, ref_mode=0)
    low = logsum_consumer_surplus(cs, theta, ShadowPriceVector(2, {"drive-": 0.03}), net,
                                  normalize=True, ref_mode=0)
    hand = (math.log(math.exp(-THETA_PAPER * 30.03) + math.exp(-THETA_PAPER * 35))
            - math.log(math.exp(-THETA_PAPER * 32.68) + math.exp(-THETA_PAPER * 35))
            ) / THETA_PAPER
    assert low - high == pytest.approx(hand, rel=1e-12)
    assert low - high > 0


@given(st.integers(0, 30))
def test_probability_simplex(seed):
    net, cs, theta, w, _ = random_choice_instance(seed)
    p = choice_probabilities(cs, theta, w, net)
    assert np.all(p >= 0)
    assert abs(float(np.sum(p)) - 1.0) <= 1e-12


@given(st.integers(0, 30), st.floats(-50, 50, allow_nan=False))
def test_translation_invariance_single_mode(seed, shift):
    rng = np.random.default_rng(seed)
    n_routes = int(rng.integers(2, 5))
    costs = rng.uniform(1, 30, size=(n_routes, 2))
    nodes = ["o", "d"] + [f"m{k}" for k in range(n_routes)]

    def build(extra):
        links = []
        for k in range(n_routes):
            links.append(Link(f"u{k}", "o", f"m{k}", 0, max(costs[k, 0] + extra, 0.0)))
            links.append(Link(f"v{k}", f"m{k}", "d", 0, costs[k, 1]))
        net = build_network(nodes, links)
        cs = ChoiceSet(("o", "d"), tuple(
            make_route(net, ("o", "d"), [f"u{k}", f"v{k}"]) for k in range(n_routes)
        ))
        return net, cs

    shift = abs(shift)
    theta = Dispersion({0: 0.2})
    net0, cs0 = build(0.0)
    net1, cs1 = build(shift)
    p0 = choice_probabilities(cs0, theta, zero_prices(), net0)
    p1 = choice_probabilities(cs1, theta, zero_prices(), net1)
    assert np.allclose(p0, p1, atol=1e-12)


def test_price_increase_strictly_lowers_own_probability(two_path):
    net, cs, theta = two_path
    p0 = choice_probabilities(cs, theta, ShadowPriceVector(1, {"drive-": 1.0}), net)
    p1 = choice_probabilities(cs, theta, ShadowPriceVector(1, {"drive-": 2.0}), net)
    assert p1[0] < p0[0]


@pytest.mark.parametrize("seed", range(8))
def test_concavity_along_random_segments(seed):
    net, cs, theta, w, observations = random_choice_instance(seed)
    rng = np.random.default_rng(seed + 1000)

    def ll_theta(tvec):
        return log_likelihood(
            observations, Dispersion(dict(zip(sorted(theta.theta), tvec))), w, net
        )

    dims = len(theta.theta)
    a = rng.uniform(0.01, 1.0, dims)
    b = rng.uniform(0.01, 1.0, dims)
    mid = 0.5 * (a + b)
    assert ll_theta(mid) >= 0.5 * (ll_theta(a) + ll_theta(b)) - 1e-10

    if w.prices:
        links = sorted(w.prices)

        def ll_w(wvec):
            return log_likelihood(
                observations, theta, ShadowPriceVector(1, dict(zip(links, wvec))), net
            )

        wa = rng.uniform(0.0, 6.0, len(links))
        wb = rng.uniform(0.0, 6.0, len(links))
        wmid = 0.5 * (wa + wb)
        assert ll_w(wmid) >= 0.5 * (ll_w(wa) + ll_w(wb)) - 1e-10
