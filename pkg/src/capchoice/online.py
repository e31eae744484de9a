"""Per-interval online learning: capacity forecasts, shadow prices, shares.

Each interval the loop forecasts capacities from the previous interval's
flows (myopic proxy x_hat_t = x_{t-1}), derives the binding link set,
estimates nonnegative shadow prices on it by constrained maximum
likelihood, and predicts route shares under the frozen offline
dispersion parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .capacity import (
    CapacityVector,
    EfficiencyModel,
    FlowSnapshot,
    binding_set,
    forecast_capacity,
)
from .choice import (
    ChoiceObservation,
    Dispersion,
    EstimationReport,
    ShadowPriceVector,
    _Likelihood,
    choice_probabilities,
)
from .network import ChoiceSet, Network
from .optimize import projected_ascent

OBSERVATION_LAGS = ("current", "lagged")


class OnlineError(ValueError):
    """The online loop received an inconsistent interval stream."""


@dataclass(frozen=True)
class OnlineConfig:
    """Knobs of the online phase; defaults follow the estimation contract."""

    epsilon_binding: float = 1e-6
    lambda_reg: float = 1e-8
    tol: float = 1e-8
    max_iter: int = 10_000
    observation_lag: str = "current"

    def __post_init__(self):
        if self.observation_lag not in OBSERVATION_LAGS:
            raise ValueError(f"observation_lag must be one of {OBSERVATION_LAGS}")


@dataclass(frozen=True)
class IntervalRecord:
    """Observed bundle for one interval: flows, post-interval capacities, choices."""

    t: int
    flows: FlowSnapshot
    capacities: CapacityVector
    observations: tuple[ChoiceObservation, ...] = ()


@dataclass(frozen=True)
class StepDiagnostics:
    log_likelihood: float
    iterations: int
    converged: bool
    flat_links: tuple[str, ...]
    observation_lag: str


@dataclass(frozen=True)
class IntervalResult:
    t: int
    u_hat: CapacityVector
    binding: frozenset[str]
    w_hat: ShadowPriceVector
    predicted_shares: dict[tuple[str, str], tuple[float, ...]]
    realized: tuple[ChoiceObservation, ...]
    diagnostics: StepDiagnostics


@dataclass(frozen=True)
class OnlineState:
    """Loop state; offline parameters stay frozen during the online phase."""

    interval: int
    theta_hat: Dispersion
    efficiency: EfficiencyModel
    u_prev: CapacityVector
    x_prev: FlowSnapshot
    w_hat: ShadowPriceVector
    history: tuple[IntervalResult, ...] = ()


def initial_state(
    theta_hat: Dispersion,
    efficiency: EfficiencyModel,
    u_initial: CapacityVector,
    x_initial: FlowSnapshot | None = None,
) -> OnlineState:
    if x_initial is None:
        x_initial = FlowSnapshot(u_initial.interval, {})
    return OnlineState(
        interval=u_initial.interval,
        theta_hat=theta_hat,
        efficiency=efficiency,
        u_prev=u_initial,
        x_prev=x_initial,
        w_hat=ShadowPriceVector(u_initial.interval, {}),
    )


def estimate_shadow_prices(
    observations: Sequence[ChoiceObservation],
    theta_hat: Dispersion,
    binding: frozenset[str] | Sequence[str],
    network: Network,
    interval: int = 0,
    lambda_reg: float = 1e-8,
    tol: float = 1e-8,
    max_iter: int = 10_000,
) -> tuple[ShadowPriceVector, EstimationReport]:
    """Constrained MLE of shadow prices on the binding set.

    Prices are fixed at zero off the binding set; on it the concave
    log-likelihood is maximized over w >= 0 with a tiny L2 tie-breaker
    (lambda * ||w||^2) selecting the minimum-norm maximizer when the
    optimum is a face.  Binding links touched by no observation stay at
    zero and are reported as flat.
    """
    links = tuple(sorted(binding))
    if not links:
        return (
            ShadowPriceVector(interval, {}),
            EstimationReport(0.0, 0, 0.0, True, ()),
        )
    lik = _Likelihood(observations, network, w_links=links) if observations else None
    touched = lik.touched_links() if lik is not None else frozenset()
    flat = tuple(a for a in links if a not in touched)
    if lik is None or not touched:
        report = EstimationReport(0.0, 0, 0.0, True, ("no observations touch the binding set",))
        return ShadowPriceVector(interval, {a: 0.0 for a in links}), report

    theta_vec = lik._theta_vec(theta_hat)
    raw_value, raw_value_grad = lik.w_problem(theta_vec)

    def value(wv):
        return raw_value(wv) - lambda_reg * float(wv @ wv)

    def value_grad(wv):
        f, g = raw_value_grad(wv)
        return f - lambda_reg * float(wv @ wv), g - 2.0 * lambda_reg * wv

    res = projected_ascent(value, value_grad, np.zeros(len(links)),
                           lower=0.0, upper=None, tol=tol, max_iter=max_iter)
    prices = {a: float(max(res.x[j], 0.0)) for j, a in enumerate(links)}
    notes = []
    if flat:
        notes.append(f"flat likelihood on binding link(s) {list(flat)}")
    if not res.converged:
        notes.append(f"not converged after {res.iterations} iterations")
    report = EstimationReport(
        log_likelihood=res.value,
        iterations=res.iterations,
        grad_norm=res.grad_norm,
        converged=res.converged,
        warnings=tuple(notes),
    )
    return ShadowPriceVector(interval, prices), report


def predict_route_shares(
    choice_sets: Mapping[tuple[str, str], ChoiceSet],
    theta_hat: Dispersion,
    w_hat: ShadowPriceVector,
    network: Network,
) -> dict[tuple[str, str], tuple[float, ...]]:
    """Per-OD MNL route shares under the current shadow prices."""
    return {
        od: tuple(float(p) for p in choice_probabilities(cs, theta_hat, w_hat, network))
        for od, cs in choice_sets.items()
    }


def online_step(
    state: OnlineState,
    realized_prev: IntervalRecord,
    observations_t: Sequence[ChoiceObservation],
    network: Network,
    choice_sets: Mapping[tuple[str, str], ChoiceSet],
    config: OnlineConfig = OnlineConfig(),
) -> tuple[IntervalResult, OnlineState]:
    """Advance the online loop by one interval.

    ``realized_prev`` carries the observed flows and capacities of
    interval t-1; the capacity forecast uses the myopic flow proxy
    x_hat_t = x_{t-1}.  ``observations_t`` are the choices used for the
    shadow-price likelihood (the caller selects current or lagged ones).
    """
    if realized_prev.t != state.interval:
        raise OnlineError(
            f"expected realized data for interval {state.interval}, got {realized_prev.t}"
        )
    for a in network.capacitated_links():
        if a not in realized_prev.capacities.capacities:
            raise OnlineError(
                f"interval {realized_prev.t}: missing observed capacity for link {a!r}"
            )
    t = state.interval + 1
    x_hat = FlowSnapshot(t, dict(realized_prev.flows.flows))
    u_hat = forecast_capacity(realized_prev.capacities, x_hat, state.efficiency, network)
    binding = binding_set(x_hat, u_hat, config.epsilon_binding)
    w_hat, report = estimate_shadow_prices(
        tuple(observations_t),
        state.theta_hat,
        binding,
        network,
        interval=t,
        lambda_reg=config.lambda_reg,
        tol=config.tol,
        max_iter=config.max_iter,
    )
    shares = predict_route_shares(choice_sets, state.theta_hat, w_hat, network)
    touched: set[str] = set()
    for obs in observations_t:
        for rt in obs.choice_set.routes:
            touched.update(rt.links)
    flat = tuple(a for a in sorted(binding) if a not in touched)
    result = IntervalResult(
        t=t,
        u_hat=u_hat,
        binding=binding,
        w_hat=w_hat,
        predicted_shares=shares,
        realized=tuple(observations_t),
        diagnostics=StepDiagnostics(
            log_likelihood=report.log_likelihood,
            iterations=report.iterations,
            converged=report.converged,
            flat_links=flat,
            observation_lag=config.observation_lag,
        ),
    )
    new_state = replace(
        state,
        interval=t,
        u_prev=realized_prev.capacities,
        x_prev=realized_prev.flows,
        w_hat=w_hat,
        history=state.history + (result,),
    )
    return result, new_state


def run_online(
    theta_hat: Dispersion,
    efficiency: EfficiencyModel,
    u_initial: CapacityVector,
    stream: Sequence[IntervalRecord],
    network: Network,
    choice_sets: Mapping[tuple[str, str], ChoiceSet],
    config: OnlineConfig = OnlineConfig(),
) -> tuple[list[IntervalResult], OnlineState]:
    """Fold the online step over an ordered interval stream.

    The stream must be gap-free and start right after ``u_initial``'s
    interval.  Each record yields one result; realized observations are
    attached to the result they were scored against.
    """
    state = initial_state(theta_hat, efficiency, u_initial)
    prev = IntervalRecord(
        t=u_initial.interval,
        flows=state.x_prev,
        capacities=u_initial,
        observations=(),
    )
    results: list[IntervalResult] = []
    for pos, record in enumerate(stream):
        if record.t != prev.t + 1:
            raise OnlineError(
                f"out-of-order interval at position {pos}: got t={record.t}, "
                f"expected {prev.t + 1}"
            )
        obs = record.observations if config.observation_lag == "current" else prev.observations
        result, state = online_step(state, prev, obs, network, choice_sets, config)
        if config.observation_lag == "lagged":
            result = replace(result, realized=record.observations)
            state = replace(state, history=state.history[:-1] + (result,))
        results.append(result)
        prev = record
    return results, state
