import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from capchoice import (
    CapacityVector,
    ChoiceObservation,
    ChoiceSet,
    EvaluationError,
    ShadowPriceVector,
    compare_models,
    match_score,
    nrmsd,
    per_link_model,
    standard_variants,
    surplus_monitor,
    zero_prices,
)
from capchoice.evaluate import flag_cost_ratio
from capchoice.online import IntervalResult, StepDiagnostics
from capchoice.simulate import DRIVE_BIKE_BETA, drive_bike_scenario, simulate

from conftest import THETA_PAPER


def test_nrmsd_zero_for_perfect_fit():
    assert nrmsd([1.0, 5.0, 3.0], [1.0, 5.0, 3.0]) == 0.0


def test_nrmsd_hand_value():
    # RMSD 1 over range 10 -> 10%
    assert nrmsd([0.0, 10.0], [1.0, 9.0]) == pytest.approx(10.0)


def test_nrmsd_errors():
    with pytest.raises(EvaluationError, match="length"):
        nrmsd([1.0, 2.0], [1.0])
    with pytest.raises(EvaluationError, match="two points"):
        nrmsd([1.0], [1.0])
    with pytest.raises(EvaluationError, match="constant"):
        nrmsd([4.0, 4.0, 4.0], [1.0, 2.0, 3.0])
    with pytest.raises(EvaluationError, match="normalizer"):
        nrmsd([0.0, 1.0], [0.0, 1.0], normalizer="median")


@given(st.floats(0.1, 1e6), st.integers(0, 50))
def test_nrmsd_scale_invariance(alpha, seed):
    rng = np.random.default_rng(seed)
    obs = rng.uniform(0, 100, 10)
    est = obs + rng.normal(0, 5, 10)
    obs[0], obs[1] = 0.0, 100.0  # guarantee a nonzero range
    base = nrmsd(obs, est)
    scaled = nrmsd(alpha * obs, alpha * est)
    assert scaled == pytest.approx(base, rel=1e-9)


def _mock_obs(cs, chosen, weight=1.0):
    return ChoiceObservation(1, cs, chosen, weight)


def test_match_score_three_of_four(two_path):
    net, cs, theta = two_path
    preds = [[0.7, 0.3], [0.7, 0.3], [0.3, 0.7], [0.7, 0.3]]
    obs = [_mock_obs(cs, 0), _mock_obs(cs, 0), _mock_obs(cs, 1), _mock_obs(cs, 1)]
    series = match_score(preds, obs)
    assert series[-1] == pytest.approx(75.0)
    assert series[0] == pytest.approx(100.0)


def test_match_score_singletons_always_match(two_path):
    net, cs, theta = two_path
    single = ChoiceSet(("1", "4"), (cs.routes[0],))
    obs = [ChoiceObservation(1, single, 0) for _ in range(5)]
    series = match_score([[1.0]] * 5, obs)
    assert np.all(series == 100.0)


def test_match_score_window_and_bounds(two_path):
    net, cs, _ = two_path
    rng = np.random.default_rng(0)
    preds, obs = [], []
    for _ in range(30):
        p = rng.dirichlet([1, 1])
        preds.append(list(p))
        obs.append(_mock_obs(cs, int(rng.integers(0, 2)), float(rng.integers(1, 4))))
    full = match_score(preds, obs)
    windowed = match_score(preds, obs, window=len(obs))
    assert np.all((0.0 <= full) & (full <= 100.0))
    assert windowed[-1] == pytest.approx(full[-1])
    with pytest.raises(EvaluationError, match="empty"):
        match_score([], [])


def test_match_score_weights_count_as_repetitions(two_path):
    net, cs, _ = two_path
    preds = [[0.7, 0.3], [0.3, 0.7]]
    obs = [_mock_obs(cs, 0, weight=3.0), _mock_obs(cs, 0, weight=1.0)]
    series = match_score(preds, obs)
    assert series[-1] == pytest.approx(75.0)


def test_standard_variants_spec():
    m1, m2, m3, m4 = standard_variants(0.1)
    assert (m1.theta, m1.capacity_policy, m1.per_interval_theta) == (0.1, "none", False)
    assert m2.capacity_policy == "constant"
    assert m3.capacity_policy == "congestible"
    assert (m4.capacity_policy, m4.per_interval_theta) == ("congestible", True)


@pytest.fixture(scope="module")
def congested_comparison():
    sc = drive_bike_scenario(
        noise_sigma=1.0, seed=5, intervals=30, reset_capacities=False,
        demand={("1", "4"): 105, ("4", "1"): 40},
        u_initial={"drive-": 45.0, "pick-": 200.0, "drop-": 200.0,
                   "pick+": 200.0, "drop+": 200.0},
    )
    res = simulate(sc)
    model = per_link_model(sc.network, DRIVE_BIKE_BETA)
    report = compare_models(
        standard_variants(0.1), res.records, sc.network, sc.choice_sets,
        sc.u_initial, efficiency=model, constant_capacity=sc.u_initial,
    )
    return sc, res, report


def test_congested_m3_beats_m1(congested_comparison):
    _, _, report = congested_comparison
    scores = report.final_scores()
    assert scores["M3"] >= scores["M1"]
    assert scores["M3"] - scores["M1"] > 2.0  # decisively, not by luck


def test_m4_close_to_m3(congested_comparison):
    _, _, report = congested_comparison
    scores = report.final_scores()
    assert abs(scores["M4"] - scores["M3"]) < 5.0


def test_uncongested_collapse_m1_m2_m3():
    sc = drive_bike_scenario(noise_sigma=0.0, seed=5, intervals=20,
                             reset_capacities=True)
    res = simulate(sc)
    model = per_link_model(sc.network, DRIVE_BIKE_BETA)
    report = compare_models(
        standard_variants(0.1), res.records, sc.network, sc.choice_sets,
        sc.u_initial, efficiency=model, constant_capacity=sc.u_initial,
    )
    scores = report.final_scores()
    assert abs(scores["M1"] - scores["M2"]) <= 0.5
    assert abs(scores["M1"] - scores["M3"]) <= 0.5


def test_compare_models_prerequisites():
    sc = drive_bike_scenario(intervals=5)
    res = simulate(sc)
    with pytest.raises(EvaluationError, match="efficiency"):
        compare_models(standard_variants(0.1), res.records, sc.network,
                       sc.choice_sets, sc.u_initial, efficiency=None,
                       constant_capacity=sc.u_initial)
    with pytest.raises(EvaluationError, match="rated"):
        compare_models(standard_variants(0.1), res.records, sc.network,
                       sc.choice_sets, sc.u_initial,
                       efficiency=per_link_model(sc.network, DRIVE_BIKE_BETA),
                       constant_capacity=None)


def _result(net, t, prices):
    caps = {a: 50.0 for a in net.capacitated_links()}
    return IntervalResult(
        t=t,
        u_hat=CapacityVector(t, caps, "forecast"),
        binding=frozenset(prices),
        w_hat=ShadowPriceVector(t, prices),
        predicted_shares={},
        realized=(),
        diagnostics=StepDiagnostics(0.0, 0, True, (), "current"),
    )


def test_surplus_monitor_zero_prices_baseline(two_path, sec4_sets):
    net, cs, theta = two_path
    rows = surplus_monitor([_result(net, 1, {})], sec4_sets, theta, net)
    for row in rows:
        assert row["effective_cost"] == pytest.approx(row["base_cost"])
        assert row["delta_cs"] == pytest.approx(0.0)


def test_surplus_monitor_hand_trace(two_path, sec4_sets):
    net, cs, theta = two_path
    prices = [{"drive-": 2.68}, {"drive-": 0.03}, {}]
    results = [_result(net, t + 1, p) for t, p in enumerate(prices)]
    rows = surplus_monitor(results, {("1", "4"): cs}, theta, net)
    by_t = {}
    for row in rows:
        by_t.setdefault(row["t"], []).append(row)

    def hand_cs(w):
        high = math.log(
            math.exp(-THETA_PAPER * (30 + w)) + math.exp(-THETA_PAPER * 35)
        )
        base = math.log(math.exp(-THETA_PAPER * 30) + math.exp(-THETA_PAPER * 35))
        return (high - base) / THETA_PAPER

    assert by_t[1][0]["delta_cs"] == pytest.approx(hand_cs(2.68), rel=1e-12)
    assert by_t[2][0]["delta_cs"] == pytest.approx(hand_cs(0.03), rel=1e-12)
    assert by_t[3][0]["delta_cs"] == 0.0
    assert by_t[1][0]["effective_cost"] == pytest.approx(32.68)
    assert by_t[1][1]["effective_cost"] == pytest.approx(35.0)
    for t in (1, 2, 3):
        for row in by_t[t]:
            assert row["delta_cs"] <= 1e-12


def test_surplus_monitor_flags_cost_doubling(two_path, sec4_sets):
    net, cs, theta = two_path
    rows = surplus_monitor([_result(net, 1, {"drive-": 31.0})], {("1", "4"): cs},
                           theta, net)
    flagged = flag_cost_ratio(rows, threshold=2.0)
    assert len(flagged) == 1
    assert flagged[0]["route"] == 0
    assert flagged[0]["effective_cost"] / flagged[0]["base_cost"] >= 2.0


def test_surplus_monitor_unknown_filter(two_path, sec4_sets):
    net, cs, theta = two_path
    with pytest.raises(EvaluationError, match="unknown OD"):
        surplus_monitor([_result(net, 1, {})], sec4_sets, theta, net,
                        route_filter=[("9", "9")])


def test_delta_cs_nonpositive_for_nonnegative_prices(two_path, sec4_sets):
    net, cs, theta = two_path
    rng = np.random.default_rng(4)
    results = []
    for t in range(1, 11):
        prices = {a: float(rng.uniform(0, 10)) for a in
                  rng.choice(net.capacitated_links(), size=2, replace=False)}
        results.append(_result(net, t, prices))
    rows = surplus_monitor(results, sec4_sets, theta, net)
    assert all(row["delta_cs"] <= 1e-12 for row in rows)
