"""Fit metrics and the four-variant model comparison harness.

NRMSD scores capacity fits (RMSD over the observed range, as a
percentage); the match score is the running share of observations whose
highest-probability predicted alternative equals the chosen one.  The
comparison harness replays an interval stream under the four standard
variants: cost-only MNL, shadow prices from a constant capacity, shadow
prices from congestible capacity forecasts, and the latter with the
dispersion parameter re-estimated each interval.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .capacity import CapacityVector, EfficiencyModel, FlowSnapshot, binding_set, forecast_capacity
from .choice import (
    ChoiceObservation,
    Dispersion,
    EstimationError,
    choice_probabilities,
    estimate_theta,
    logsum_consumer_surplus,
    zero_prices,
)
from .network import ChoiceSet, Network
from .online import IntervalRecord, IntervalResult, OnlineConfig, estimate_shadow_prices


class EvaluationError(ValueError):
    """Metric inputs are malformed for the requested computation."""


def nrmsd(
    observed: Sequence[float],
    estimated: Sequence[float],
    normalizer: str = "range",
) -> float:
    """Normalized root-mean-square deviation, in percent.

    The RMSD is divided by the observed range (or mean, when configured)
    and scaled by 100.  A constant observed series has no range and is
    rejected.
    """
    obs = np.asarray(observed, dtype=float)
    est = np.asarray(estimated, dtype=float)
    if obs.shape != est.shape:
        raise EvaluationError("observed and estimated series differ in length")
    if obs.size < 2:
        raise EvaluationError("need at least two points")
    rmsd = float(np.sqrt(np.mean((obs - est) ** 2)))
    if normalizer == "range":
        denom = float(np.max(obs) - np.min(obs))
    elif normalizer == "mean":
        denom = float(np.mean(obs))
    else:
        raise EvaluationError(f"unknown normalizer {normalizer!r}")
    if denom == 0.0:
        raise EvaluationError("observed series is constant; normalizer is zero")
    return rmsd / denom * 100.0


def match_score(
    predictions: Sequence[Sequence[float]],
    observations: Sequence[ChoiceObservation],
    window: int | None = None,
) -> np.ndarray:
    """Moving-average match score, in percent, one value per observation.

    A prediction matches when the chosen alternative attains the maximum
    predicted probability; observation weights count as repetitions.  The
    default window is cumulative (running mean); a finite window averages
    over the trailing ``window`` observations.
    """
    if len(predictions) != len(observations):
        raise EvaluationError("predictions and observations differ in length")
    if not observations:
        raise EvaluationError("empty input")
    matches = np.empty(len(observations))
    weights = np.empty(len(observations))
    for i, (p, obs) in enumerate(zip(predictions, observations)):
        p = np.asarray(p, dtype=float)
        matches[i] = 1.0 if p[obs.chosen] >= np.max(p) else 0.0
        weights[i] = obs.weight
    wm = matches * weights
    if window is None:
        series = np.cumsum(wm) / np.cumsum(weights)
    else:
        if window < 1:
            raise EvaluationError("window must be >= 1")
        series = np.empty(len(observations))
        for i in range(len(observations)):
            lo = max(0, i - window + 1)
            series[i] = wm[lo : i + 1].sum() / weights[lo : i + 1].sum()
    return series * 100.0


@dataclass(frozen=True)
class ModelVariant:
    """One comparison scenario: a dispersion policy plus a capacity policy."""

    id: str
    theta: float
    per_interval_theta: bool
    capacity_policy: str

    def __post_init__(self):
        if self.capacity_policy not in ("none", "constant", "congestible"):
            raise EvaluationError(f"unknown capacity policy {self.capacity_policy!r}")


def standard_variants(theta: float = 0.1) -> tuple[ModelVariant, ...]:
    return (
        ModelVariant("M1", theta, False, "none"),
        ModelVariant("M2", theta, False, "constant"),
        ModelVariant("M3", theta, False, "congestible"),
        ModelVariant("M4", theta, True, "congestible"),
    )


@dataclass
class VariantOutcome:
    variant: ModelVariant
    interval_scores: list[tuple[int, float, float]]  # (t, cumulative score, cumulative loglik)
    final_score: float
    log_likelihood: float


@dataclass
class ComparisonReport:
    outcomes: dict[str, VariantOutcome]

    def final_scores(self) -> dict[str, float]:
        return {vid: out.final_score for vid, out in self.outcomes.items()}


def _interval_theta(base, observations, w, network, config):
    """Alternating re-estimation of a tied theta with the interval's prices."""
    try:
        theta, _ = estimate_theta(
            observations,
            network,
            w=w,
            tie_modes=True,
            theta0=next(iter(base.theta.values())),
            tol=config.tol,
            max_iter=config.max_iter,
        )
        return theta
    except EstimationError:
        return base


def compare_models(
    variants: Sequence[ModelVariant],
    stream: Sequence[IntervalRecord],
    network: Network,
    choice_sets: Mapping[tuple[str, str], ChoiceSet],
    u_initial: CapacityVector,
    efficiency: EfficiencyModel | None = None,
    constant_capacity: CapacityVector | None = None,
    config: OnlineConfig = OnlineConfig(),
    outer_rounds: int = 2,
) -> ComparisonReport:
    """Replay the stream under each variant and score its predictions.

    The constant-capacity variant derives binding sets from the rated
    capacities; congestible variants forecast from the previous
    interval's observed capacities.  The per-interval-theta variant
    alternates theta and shadow-price maximization for ``outer_rounds``
    rounds each interval.
    """
    for variant in variants:
        if variant.capacity_policy == "constant" and constant_capacity is None:
            raise EvaluationError(f"{variant.id} requires constant (rated) capacities")
        if variant.capacity_policy == "congestible" and efficiency is None:
            raise EvaluationError(f"{variant.id} requires a fitted efficiency model")

    outcomes: dict[str, VariantOutcome] = {}
    all_modes = [m.index for m in network.modes]
    for variant in variants:
        base_theta = Dispersion.tied(variant.theta, all_modes)
        u_prev = u_initial
        x_prev = FlowSnapshot(u_initial.interval, {})
        matches: list[float] = []
        weights: list[float] = []
        interval_scores: list[tuple[int, float, float]] = []
        loglik = 0.0
        for record in stream:
            t = record.t
            x_hat = FlowSnapshot(t, dict(x_prev.flows))
            if variant.capacity_policy == "none":
                binding: frozenset[str] = frozenset()
            elif variant.capacity_policy == "constant":
                u_hat = CapacityVector(t, dict(constant_capacity.capacities), "forecast")
                binding = binding_set(x_hat, u_hat, config.epsilon_binding)
            else:
                u_hat = forecast_capacity(u_prev, x_hat, efficiency, network)
                binding = binding_set(x_hat, u_hat, config.epsilon_binding)

            obs = list(record.observations)
            theta = base_theta
            w = zero_prices(t)
            if binding and obs:
                if variant.per_interval_theta:
                    for _ in range(outer_rounds):
                        w, _ = estimate_shadow_prices(
                            obs, theta, binding, network, interval=t,
                            lambda_reg=config.lambda_reg, tol=config.tol,
                            max_iter=config.max_iter,
                        )
                        theta = _interval_theta(theta, obs, w, network, config)
                    w, _ = estimate_shadow_prices(
                        obs, theta, binding, network, interval=t,
                        lambda_reg=config.lambda_reg, tol=config.tol,
                        max_iter=config.max_iter,
                    )
                else:
                    w, _ = estimate_shadow_prices(
                        obs, theta, binding, network, interval=t,
                        lambda_reg=config.lambda_reg, tol=config.tol,
                        max_iter=config.max_iter,
                    )
            elif variant.per_interval_theta and obs:
                theta = _interval_theta(theta, obs, w, network, config)

            prob_cache: dict[int, np.ndarray] = {}
            for o in obs:
                key = id(o.choice_set)
                p = prob_cache.get(key)
                if p is None:
                    p = choice_probabilities(o.choice_set, theta, w, network)
                    prob_cache[key] = p
                matches.append(1.0 if p[o.chosen] >= np.max(p) else 0.0)
                weights.append(o.weight)
                loglik += o.weight * float(np.log(p[o.chosen]))
            if weights:
                score = 100.0 * float(np.dot(matches, weights) / np.sum(weights))
                interval_scores.append((t, score, loglik))
            u_prev = record.capacities
            x_prev = record.flows
        final = interval_scores[-1][1] if interval_scores else float("nan")
        outcomes[variant.id] = VariantOutcome(variant, interval_scores, final, loglik)
    return ComparisonReport(outcomes)


def surplus_monitor(
    results: Sequence[IntervalResult],
    choice_sets: Mapping[tuple[str, str], ChoiceSet],
    theta: Dispersion,
    network: Network,
    route_filter: Sequence[tuple[str, str]] | None = None,
    ref_mode: int = 0,
) -> list[dict]:
    """Per-interval effective route costs and OD consumer-surplus deltas.

    Effective cost adds the theta-weighted shadow prices (in reference
    mode cost units) to the base generalized cost; delta_cs is the logsum
    difference against the zero-price baseline, also in cost units, and
    is nonpositive whenever prices are nonnegative.
    """
    if route_filter is not None:
        unknown = [od for od in route_filter if od not in choice_sets]
        if unknown:
            raise EvaluationError(f"unknown OD(s) in route filter: {unknown}")
        ods = list(route_filter)
    else:
        ods = sorted(choice_sets)
    ref = theta.for_mode(ref_mode)
    if ref <= 0:
        raise EvaluationError(f"reference theta for mode {ref_mode} must be positive")
    rows = []
    for res in results:
        w = res.w_hat
        for od in ods:
            cs = choice_sets[od]
            base_ls = logsum_consumer_surplus(cs, theta, zero_prices(res.t), network)
            priced_ls = logsum_consumer_surplus(cs, theta, w, network)
            delta_cs = (priced_ls - base_ls) / ref
            for k, rt in enumerate(cs.routes):
                base_cost = 0.0
                effective = 0.0
                for a in rt.links:
                    lk = network.link(a)
                    scale = theta.for_mode(lk.mode) / ref
                    base_cost += scale * lk.cost
                    effective += scale * (lk.cost + w.price(a))
                rows.append({
                    "t": res.t,
                    "od": f"{od[0]}->{od[1]}",
                    "route": k,
                    "base_cost": base_cost,
                    "effective_cost": effective,
                    "delta_cs": delta_cs,
                })
    return rows


def flag_cost_ratio(rows: Sequence[Mapping], threshold: float = 2.0) -> list[dict]:
    """Rows whose effective cost reaches ``threshold`` times the base cost."""
    flagged = []
    for row in rows:
        if row["base_cost"] > 0 and row["effective_cost"] / row["base_cost"] >= threshold:
            flagged.append(dict(row))
    return flagged
