"""Seeded synthetic-data generation for the verification experiments.

Two presets are provided: a four-link two-node closed network
(``fig2_closed``) and a two-corridor drive/bike network
(``sec4_drive_bike``) whose five capacity channels follow the
directional inbound/outbound structure used for the coefficient
recovery experiments.  Travelers sample Gumbel-perturbed route
utilities and divert to the best feasible alternative when a capacity
is exhausted mid-interval; capacities evolve by the linear efficiency
dynamics plus truncated Gaussian disturbances.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping

import numpy as np

from .capacity import (
    CapacityVector,
    EfficiencyModel,
    FlowSnapshot,
    _predict_delta,
    per_link_model,
)
from .choice import ChoiceObservation, Dispersion, zero_prices, choice_probabilities
from .network import ChoiceSet, Link, Mode, Network, build_network, make_route
from .online import IntervalRecord

# Coefficient pairs (inbound, outbound) recovered in the drive/bike
# verification experiment, keyed by capacity link of the preset below.
DRIVE_BIKE_BETA = {
    "drive-": (0.5526, 0.6636),
    "pick-": (0.3959, 0.2964),
    "drop-": (0.5020, 0.3759),
    "pick+": (0.2029, 0.2710),
    "drop+": (0.3570, 0.2673),
}


class SimulationError(ValueError):
    """Scenario configuration cannot be simulated."""


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to run one seeded scenario."""

    network: Network
    choice_sets: Mapping[tuple[str, str], ChoiceSet]
    theta_true: Dispersion
    efficiency_true: EfficiencyModel
    demand: Mapping[tuple[str, str], tuple[int, ...]]
    u_initial: CapacityVector
    noise_sigma: Mapping[str, float]
    seed: int
    intervals: int
    reset_capacities: bool = False
    label: str = "custom"


@dataclass(frozen=True)
class SimulationResult:
    config: ScenarioConfig
    records: tuple[IntervalRecord, ...]
    cost_only_shares: dict[tuple[str, str], tuple[float, ...]]
    diversions: tuple[tuple[int, str], ...]
    dropped: dict[tuple[int, tuple[str, str]], int]

    def fit_records(self):
        """(u_prev, flows, u_observed) triples for the efficiency regression."""
        out = []
        for i, rec in enumerate(self.records):
            if i == 0 or self.config.reset_capacities:
                prev = self.config.u_initial.capacities
            else:
                prev = self.records[i - 1].capacities.capacities
            out.append((dict(prev), rec.flows, dict(rec.capacities.capacities)))
        return out

    def observations(self, od=None):
        obs = []
        for rec in self.records:
            for o in rec.observations:
                if od is None or o.choice_set.od == od:
                    obs.append(o)
        return obs


def _normalize_demand(demand, intervals):
    out = {}
    for od, d in demand.items():
        if isinstance(d, (int, float)):
            out[od] = tuple(int(d) for _ in range(intervals))
        else:
            d = tuple(int(v) for v in d)
            if len(d) != intervals:
                raise SimulationError(
                    f"demand series for OD {od} has {len(d)} entries, expected {intervals}"
                )
            out[od] = d
    return out


def fig2_network() -> Network:
    """Two nodes, four corridor links; each corridor is one mode."""
    links = [
        Link("a", "1", "2", mode=1, cost=30.0, capacity_channel="vehicle"),
        Link("b", "1", "2", mode=2, cost=35.0, capacity_channel="vehicle"),
        Link("c", "2", "1", mode=1, cost=30.0, capacity_channel="space"),
        Link("d", "2", "1", mode=2, cost=35.0, capacity_channel="space"),
    ]
    modes = (Mode(0, "walk"), Mode(1, "corridor1"), Mode(2, "corridor2"))
    return build_network(["1", "2"], links, modes)


def fig2_scenario(
    theta: float = 0.0905,
    beta: Mapping[str, tuple[float, float]] | None = None,
    demand: Mapping[tuple[str, str], object] | None = None,
    u_initial: Mapping[str, float] | None = None,
    noise_sigma: float = 0.0,
    seed: int = 0,
    intervals: int = 100,
    reset_capacities: bool = True,
) -> ScenarioConfig:
    net = fig2_network()
    sets = {
        ("1", "2"): ChoiceSet(("1", "2"), (
            make_route(net, ("1", "2"), ["a"]),
            make_route(net, ("1", "2"), ["b"]),
        )),
        ("2", "1"): ChoiceSet(("2", "1"), (
            make_route(net, ("2", "1"), ["c"]),
            make_route(net, ("2", "1"), ["d"]),
        )),
    }
    if beta is None:
        beta = {a: (0.5, 0.5) for a in "abcd"}
    if demand is None:
        demand = {("1", "2"): 100, ("2", "1"): 100}
    if u_initial is None:
        u_initial = {a: 500.0 for a in "abcd"}
    return ScenarioConfig(
        network=net,
        choice_sets=sets,
        theta_true=Dispersion.tied(theta, [m.index for m in net.modes]),
        efficiency_true=per_link_model(net, beta),
        demand=_normalize_demand(demand, intervals),
        u_initial=CapacityVector(0, dict(u_initial)),
        noise_sigma={a: float(noise_sigma) for a in "abcd"},
        seed=seed,
        intervals=intervals,
        reset_capacities=reset_capacities,
        label="fig2_closed",
    )


def drive_bike_network() -> Network:
    """Two corridors between an origin and a destination, both directions.

    The drive corridor parks at a facility with a space capacity; the bike
    corridor passes pickup (vehicle) and drop-off (space) station links.
    Ride connectors carry their own uncapacitated mode so the bike-mode
    incidence pairs each station link with the opposing-direction flow.
    """
    nodes = ["1", "2", "3", "4", "1b", "3b"]
    links = [
        # minus direction: origin 1 -> destination 4
        Link("drive-", "1", "2", mode=1, cost=25.0, capacity_channel="space"),
        Link("walkpark-", "2", "4", mode=0, cost=5.0),
        Link("pick-", "1", "1b", mode=2, cost=2.0, capacity_channel="vehicle"),
        Link("ride-", "1b", "3b", mode=3, cost=30.0),
        Link("drop-", "3b", "3", mode=2, cost=2.0, capacity_channel="space"),
        Link("walkend-", "3", "4", mode=0, cost=1.0),
        # plus direction: 4 -> 1
        Link("walkpark+", "4", "2", mode=0, cost=5.0),
        Link("drive+", "2", "1", mode=1, cost=25.0),
        Link("walkend+", "4", "3", mode=0, cost=1.0),
        Link("pick+", "3", "3b", mode=2, cost=2.0, capacity_channel="vehicle"),
        Link("ride+", "3b", "1b", mode=3, cost=30.0),
        Link("drop+", "1b", "1", mode=2, cost=2.0, capacity_channel="space"),
    ]
    modes = (Mode(0, "walk"), Mode(1, "drive"), Mode(2, "bike"), Mode(3, "ride"))
    return build_network(nodes, links, modes)


def drive_bike_choice_sets(net: Network) -> dict[tuple[str, str], ChoiceSet]:
    minus = ChoiceSet(("1", "4"), (
        make_route(net, ("1", "4"), ["drive-", "walkpark-"]),            # cost 30
        make_route(net, ("1", "4"), ["pick-", "ride-", "drop-", "walkend-"]),  # cost 35
    ))
    plus = ChoiceSet(("4", "1"), (
        make_route(net, ("4", "1"), ["walkpark+", "drive+"]),
        make_route(net, ("4", "1"), ["walkend+", "pick+", "ride+", "drop+"]),
    ))
    return {("1", "4"): minus, ("4", "1"): plus}


def drive_bike_scenario(
    theta: float = 0.0905,
    beta: Mapping[str, tuple[float, float]] | None = None,
    demand: Mapping[tuple[str, str], object] | None = None,
    u_initial: Mapping[str, float] | None = None,
    noise_sigma: Mapping[str, float] | float = 0.0,
    seed: int = 0,
    intervals: int = 100,
    reset_capacities: bool = True,
) -> ScenarioConfig:
    net = drive_bike_network()
    sets = drive_bike_choice_sets(net)
    if beta is None:
        beta = DRIVE_BIKE_BETA
    if demand is None:
        demand = {("1", "4"): 100, ("4", "1"): 100}
    caps = net.capacitated_links()
    if u_initial is None:
        u_initial = {a: 200.0 for a in caps}
    if isinstance(noise_sigma, (int, float)):
        noise_sigma = {a: float(noise_sigma) for a in caps}
    return ScenarioConfig(
        network=net,
        choice_sets=sets,
        theta_true=Dispersion.tied(theta, [m.index for m in net.modes]),
        efficiency_true=per_link_model(net, beta),
        demand=_normalize_demand(demand, intervals),
        u_initial=CapacityVector(0, dict(u_initial)),
        noise_sigma=dict(noise_sigma),
        seed=seed,
        intervals=intervals,
        reset_capacities=reset_capacities,
        label="sec4_drive_bike",
    )


PRESETS = {
    "fig2_closed": fig2_scenario,
    "sec4_drive_bike": drive_bike_scenario,
}


def demand_shift_scenario(
    base: ScenarioConfig, new_demand: Mapping[tuple[str, str], object]
) -> ScenarioConfig:
    """Clone a scenario with replaced demand for existing OD pairs."""
    for od in new_demand:
        if od not in base.demand:
            raise SimulationError(f"unknown OD {od} in demand shift")
    merged = dict(base.demand)
    merged.update(_normalize_demand(new_demand, base.intervals))
    return replace(base, demand=merged)


def simulate(config: ScenarioConfig) -> SimulationResult:
    """Run one seeded scenario and emit per-interval records.

    Travelers are processed in a seeded random order across ODs; a
    traveler whose sampled best route has an exhausted capacity takes the
    best feasible alternative, and is dropped (and logged) if none
    remains.  Observed capacities follow the efficiency dynamics plus a
    Gaussian disturbance truncated so that flow never exceeds capacity.
    """
    if config.intervals < 1:
        raise SimulationError("intervals must be >= 1")
    for od, series in config.demand.items():
        if od not in config.choice_sets:
            raise SimulationError(f"demand references OD {od} without a choice set")
        if any(d <= 0 for d in series):
            raise SimulationError(f"demand for OD {od} must be positive in every interval")

    net = config.network
    caps = net.capacitated_links()
    for a in caps:
        if a not in config.u_initial.capacities:
            raise SimulationError(f"u_initial missing capacitated link {a!r}")

    rng = np.random.default_rng(config.seed)
    ods = sorted(config.demand)
    base_v = {}
    cap_links_per_route = {}
    shares = {}
    w0 = zero_prices()
    for od in ods:
        cs = config.choice_sets[od]
        probs = choice_probabilities(cs, config.theta_true, w0, net)
        shares[od] = tuple(float(p) for p in probs)
        v = []
        for rt in cs.routes:
            v.append(
                -sum(
                    config.theta_true.for_mode(net.link(a).mode) * net.link(a).cost
                    for a in rt.links
                )
            )
        base_v[od] = np.array(v)
        cap_links_per_route[od] = [
            tuple(a for a in rt.links if net.link(a).capacitated) for rt in cs.routes
        ]

    records = []
    diversions: list[tuple[int, str]] = []
    dropped: dict[tuple[int, tuple[str, str]], int] = {}
    u_state = dict(config.u_initial.capacities)

    for t in range(1, config.intervals + 1):
        u_start = dict(config.u_initial.capacities) if config.reset_capacities else dict(u_state)
        remaining = dict(u_start)
        travelers = []
        for od in ods:
            travelers.extend([od] * config.demand[od][t - 1])
        rng.shuffle(travelers)

        flows: dict[str, float] = {}
        chosen: dict[tuple[str, str], np.ndarray] = {
            od: np.zeros(len(config.choice_sets[od].routes), dtype=int) for od in ods
        }
        diverted_links: set[str] = set()
        for od in travelers:
            cs = config.choice_sets[od]
            scores = base_v[od] + rng.gumbel(0.0, 1.0, len(cs.routes))
            served = False
            for k in np.argsort(-scores, kind="stable"):
                blocked = [
                    a for a in cap_links_per_route[od][k] if remaining[a] < 1.0
                ]
                if blocked:
                    diverted_links.update(blocked)
                    continue
                for a in cap_links_per_route[od][k]:
                    remaining[a] -= 1.0
                for a in cs.routes[k].links:
                    flows[a] = flows.get(a, 0.0) + 1.0
                chosen[od][k] += 1
                served = True
                break
            if not served:
                dropped[(t, od)] = dropped.get((t, od), 0) + 1

        x_t = FlowSnapshot(t, flows)
        u_t = {}
        for a in caps:
            det = u_start[a] + _predict_delta(config.efficiency_true, net, a, x_t)
            sig = float(config.noise_sigma.get(a, 0.0))
            gamma = float(rng.normal(0.0, sig)) if sig > 0 else 0.0
            u_t[a] = max(det + gamma, x_t.flow(a), 0.0)
        for a in sorted(diverted_links):
            diversions.append((t, a))

        observations = []
        for od in ods:
            cs = config.choice_sets[od]
            for k, count in enumerate(chosen[od]):
                if count > 0:
                    observations.append(
                        ChoiceObservation(t, cs, int(k), weight=float(count))
                    )
        records.append(
            IntervalRecord(
                t=t,
                flows=x_t,
                capacities=CapacityVector(t, u_t, "observed_time_average"),
                observations=tuple(observations),
            )
        )
        u_state = u_t

    return SimulationResult(
        config=config,
        records=tuple(records),
        cost_only_shares=shares,
        diversions=tuple(diversions),
        dropped=dropped,
    )
